/**
 * ESPT tensor container: encode/decode dense row-major tensors.
 *
 * Layout (all fields little-endian):
 *
 *     magic   4 bytes   "ESPT"
 *     version u32       currently 1
 *     dtype   u8        0 = f32, 1 = f16
 *     rank    u8        number of dimensions, >= 1
 *     dims    rank*u64  dimension sizes, each >= 1
 *     data    raw element bytes, row-major
 *
 * A 2x2 f32 tensor therefore occupies 4 + 4 + 1 + 1 + 16 + 16 = 42 bytes.
 * This exporter emits f32 tensors only; the decoder accepts f32 and rejects
 * everything else with a descriptive error so corrupt or foreign files fail
 * loudly rather than silently producing garbage.
 */

import * as fs from 'node:fs';

export const ESPT_MAGIC = 'ESPT';
export const ESPT_VERSION = 1;
export const DTYPE_F32 = 0;

const HEADER_FIXED = 10; // magic + version + dtype + rank

/** A decoded dense tensor. */
export interface Tensor {
    shape: number[];
    data: Float32Array;
}

function elementCount(shape: number[]): number {
    return shape.reduce((acc, d) => acc * d, 1);
}

/**
 * Encode a dense f32 tensor into ESPT bytes.
 *
 * Rejects empty shapes, non-positive dimensions, shape/data length
 * mismatches and non-finite elements (the primary consumer refuses
 * non-finite payloads, so catching them at write time gives a much better
 * error than a failed import later).
 */
export function encodeTensor(shape: number[], data: Float32Array): Uint8Array {
    if (shape.length < 1) {
        throw new Error('tensor rank must be >= 1');
    }
    for (const d of shape) {
        if (!Number.isInteger(d) || d < 1) {
            throw new Error(`dimension sizes must be positive integers, got [${shape.join(', ')}]`);
        }
    }
    const count = elementCount(shape);
    if (count !== data.length) {
        throw new Error(`shape [${shape.join(', ')}] implies ${count} elements, got ${data.length}`);
    }
    for (let i = 0; i < data.length; i++) {
        if (!Number.isFinite(data[i])) {
            throw new Error(`non-finite element at flat index ${i}`);
        }
    }

    const totalBytes = HEADER_FIXED + 8 * shape.length + 4 * count;
    const buffer = new ArrayBuffer(totalBytes);
    const view = new DataView(buffer);
    const bytes = new Uint8Array(buffer);

    for (let i = 0; i < 4; i++) bytes[i] = ESPT_MAGIC.charCodeAt(i);
    view.setUint32(4, ESPT_VERSION, true);
    view.setUint8(8, DTYPE_F32);
    view.setUint8(9, shape.length);
    let offset = HEADER_FIXED;
    for (const d of shape) {
        view.setBigUint64(offset, BigInt(d), true);
        offset += 8;
    }
    for (let i = 0; i < count; i++) {
        view.setFloat32(offset + 4 * i, data[i], true);
    }
    return bytes;
}

/** Decode ESPT bytes back into shape + f32 data. Inverse of encodeTensor. */
export function decodeTensor(raw: Uint8Array): Tensor {
    if (raw.length < HEADER_FIXED) {
        throw new Error(`header truncated: expected at least ${HEADER_FIXED} bytes, got ${raw.length}`);
    }
    const view = new DataView(raw.buffer, raw.byteOffset, raw.byteLength);
    const magic = String.fromCharCode(raw[0], raw[1], raw[2], raw[3]);
    if (magic !== ESPT_MAGIC) {
        throw new Error(`bad magic ${JSON.stringify(magic)}, expected ${JSON.stringify(ESPT_MAGIC)}`);
    }
    const version = view.getUint32(4, true);
    if (version !== ESPT_VERSION) {
        throw new Error(`unsupported version ${version}`);
    }
    const dtype = view.getUint8(8);
    if (dtype !== DTYPE_F32) {
        throw new Error(`unsupported dtype code ${dtype}, this reader handles f32 (code 0) only`);
    }
    const rank = view.getUint8(9);
    if (rank < 1) {
        throw new Error(`rank must be >= 1, got ${rank}`);
    }
    if (raw.length < HEADER_FIXED + 8 * rank) {
        throw new Error(`dims truncated: expected ${HEADER_FIXED + 8 * rank} header bytes, got ${raw.length}`);
    }
    const shape: number[] = [];
    let offset = HEADER_FIXED;
    for (let i = 0; i < rank; i++) {
        const dim = view.getBigUint64(offset, true);
        offset += 8;
        if (dim < 1n || dim > BigInt(Number.MAX_SAFE_INTEGER)) {
            throw new Error(`dimension ${i} out of range: ${dim}`);
        }
        shape.push(Number(dim));
    }
    const count = elementCount(shape);
    const expected = offset + 4 * count;
    if (raw.length !== expected) {
        throw new Error(`expected ${expected} bytes, got ${raw.length}`);
    }
    const data = new Float32Array(count);
    for (let i = 0; i < count; i++) {
        data[i] = view.getFloat32(offset + 4 * i, true);
    }
    return { shape, data };
}

/** Encode and write one tensor file. */
export function writeTensorFile(path: string, shape: number[], data: Float32Array): void {
    fs.writeFileSync(path, encodeTensor(shape, data));
}

/** Read and decode one tensor file. */
export function readTensorFile(path: string): Tensor {
    return decodeTensor(new Uint8Array(fs.readFileSync(path)));
}
