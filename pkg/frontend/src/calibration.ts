/**
 * Calibration text sources and sequence slicing.
 *
 * The default source is a small original prose sample bundled with the
 * package, so exports are fully reproducible offline. A local text file can
 * be substituted, and when network access is available a generic web-text
 * shard can be fetched instead — but nothing in the default path touches
 * the network.
 */

import * as fs from 'node:fs';
import { fileURLToPath } from 'node:url';

/** Absolute path of the bundled calibration sample. */
export function bundledCalibrationPath(): string {
    return fileURLToPath(new URL('../assets/calibration.txt', import.meta.url));
}

/** Load calibration text from a file, or the bundled sample when null. */
export function loadCalibrationText(path: string | null): string {
    const target = path ?? bundledCalibrationPath();
    const text = fs.readFileSync(target, 'utf-8');
    if (text.length === 0) {
        throw new Error(`calibration text ${target} is empty`);
    }
    return text;
}

/**
 * Fetch a web-text shard for calibration. Requires network access; the
 * error message says so explicitly because the default offline path never
 * gets here.
 */
export async function fetchCalibrationText(url: string): Promise<string> {
    let response: Response;
    try {
        response = await fetch(url);
    } catch (err) {
        throw new Error(`cannot fetch calibration corpus from ${url} (offline?): ${err}`);
    }
    if (!response.ok) {
        throw new Error(`calibration corpus fetch failed: ${response.status} ${response.statusText}`);
    }
    const text = await response.text();
    if (text.length === 0) {
        throw new Error(`calibration corpus at ${url} is empty`);
    }
    return text;
}

/**
 * Slice text into `count` byte sequences of exactly `seqLen` tokens.
 *
 * Tokenisation is byte-level (UTF-8), so any text works without a
 * vocabulary file. When the text is shorter than count * seqLen the slicer
 * wraps around to the start — deterministic, and harmless for calibration
 * fixtures where repeated sequences simply repeat activation rows.
 */
export function makeSequences(text: string, seqLen: number, count: number): Uint8Array[] {
    if (count < 1) {
        throw new Error(`sequence count must be >= 1, got ${count}`);
    }
    if (seqLen < 1) {
        throw new Error(`sequence length must be >= 1, got ${seqLen}`);
    }
    const bytes = new TextEncoder().encode(text);
    if (bytes.length < seqLen) {
        throw new Error(`calibration text has ${bytes.length} bytes, need at least ${seqLen}`);
    }
    const sequences: Uint8Array[] = [];
    let cursor = 0;
    for (let i = 0; i < count; i++) {
        if (cursor + seqLen > bytes.length) cursor = 0;
        sequences.push(bytes.slice(cursor, cursor + seqLen));
        cursor += seqLen;
    }
    return sequences;
}
