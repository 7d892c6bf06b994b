/**
 * A deterministic toy transformer checkpoint with activation capture.
 *
 * The model is a byte-level, 2-block, pre-norm transformer that is small
 * enough to run its forward pass in pure TypeScript in milliseconds, yet
 * structurally faithful: fused qkv projection, causal multi-head attention,
 * GELU feed-forward, residual stream, final norm and an untied output head.
 *
 * Weights are sampled from a seeded generator, so a (seed, config) pair
 * identifies the checkpoint completely. During the forward pass every
 * linear layer records the activations *entering* it — one row per token —
 * which is exactly what importance metrics downstream need: the input
 * distribution each weight column actually multiplies.
 */

import { gaussian, mulberry32 } from './prng.js';
import { Mat, add, causalAttention, gelu, layerNorm, matmulT, zeros } from './tensor.js';

/** Architecture of the built-in toy checkpoint. */
export interface ModelConfig {
    vocabSize: number;
    dModel: number;
    nHeads: number;
    dFf: number;
    nLayers: number;
    /** Maximum (and fixed calibration) sequence length. */
    seqLen: number;
}

export const TOY_CONFIG: ModelConfig = {
    vocabSize: 256,
    dModel: 32,
    nHeads: 2,
    dFf: 64,
    nLayers: 2,
    seqLen: 64,
};

/**
 * One named parameter of the model, as seen by the exporter.
 *
 * Linear layers carry a 2-D weight [outFeatures, inFeatures] and a capture
 * list that accumulates one input row per processed token. Norm gains are
 * 1-D and have no capture — they are listed so that name filters can match
 * them and the exporter can report the skip explicitly.
 */
export interface LayerEntry {
    id: string;
    shape: number[];
    data: Float32Array;
    /** Captured input rows, one Float32Array of length inFeatures per token. */
    capture: Float32Array[] | null;
}

/** A constructed model: config, embeddings and the ordered layer registry. */
export interface ToyModel {
    config: ModelConfig;
    tokEmb: Mat;
    posEmb: Mat;
    layers: LayerEntry[];
    /** Lookup from layer id to registry entry. */
    byId: Map<string, LayerEntry>;
}

function initMat(rows: number, cols: number, next: () => number, scale: number): Mat {
    const m = zeros(rows, cols);
    for (let i = 0; i < m.data.length; i++) m.data[i] = next() * scale;
    return m;
}

function linearEntry(id: string, rows: number, cols: number, next: () => number, scale: number): LayerEntry {
    const w = initMat(rows, cols, next, scale);
    return { id, shape: [rows, cols], data: w.data, capture: [] };
}

function gainEntry(id: string, size: number): LayerEntry {
    const data = new Float32Array(size);
    data.fill(1.0);
    return { id, shape: [size], data, capture: null };
}

/**
 * Build the toy checkpoint from a seed.
 *
 * All weights are gaussian with standard deviation 0.08 except the norm
 * gains (initialised to one); a fixed draw order makes the construction a
 * pure function of the seed.
 */
export function buildModel(seed: number, config: ModelConfig = TOY_CONFIG): ToyModel {
    const next = gaussian(mulberry32(seed));
    const scale = 0.08;
    const { vocabSize, dModel, dFf, nLayers, seqLen } = config;

    const tokEmb = initMat(vocabSize, dModel, next, scale);
    const posEmb = initMat(seqLen, dModel, next, scale);

    const layers: LayerEntry[] = [];
    for (let i = 0; i < nLayers; i++) {
        layers.push(gainEntry(`h${i}.ln1`, dModel));
        layers.push(linearEntry(`h${i}.attn.qkv`, 3 * dModel, dModel, next, scale));
        layers.push(linearEntry(`h${i}.attn.out`, dModel, dModel, next, scale));
        layers.push(gainEntry(`h${i}.ln2`, dModel));
        layers.push(linearEntry(`h${i}.ffn.in`, dFf, dModel, next, scale));
        layers.push(linearEntry(`h${i}.ffn.out`, dModel, dFf, next, scale));
    }
    layers.push(gainEntry('ln_f', dModel));
    layers.push(linearEntry('lm_head', vocabSize, dModel, next, scale));

    const byId = new Map(layers.map((entry) => [entry.id, entry]));
    return { config, tokEmb, posEmb, layers, byId };
}

function captureRows(entry: LayerEntry, x: Mat): void {
    const rows = entry.capture;
    if (rows === null) throw new Error(`${entry.id}: not a capturing layer`);
    for (let t = 0; t < x.rows; t++) {
        rows.push(x.data.slice(t * x.cols, (t + 1) * x.cols));
    }
}

function asMat(entry: LayerEntry): Mat {
    if (entry.shape.length !== 2) throw new Error(`${entry.id}: expected a 2-D weight`);
    return { rows: entry.shape[0], cols: entry.shape[1], data: entry.data };
}

/** Apply one linear layer, recording its input rows first. */
function linear(model: ToyModel, id: string, x: Mat): Mat {
    const entry = model.byId.get(id);
    if (entry === undefined) throw new Error(`unknown layer ${id}`);
    captureRows(entry, x);
    return matmulT(x, asMat(entry));
}

function gain(model: ToyModel, id: string): Float32Array {
    const entry = model.byId.get(id);
    if (entry === undefined) throw new Error(`unknown layer ${id}`);
    return entry.data;
}

/**
 * Run one byte sequence through the model, accumulating captures.
 *
 * Returns the final logits [seq, vocabSize]; callers exporting activations
 * only need the side effect, but producing the logits keeps the pass honest
 * end to end.
 */
export function forward(model: ToyModel, tokens: Uint8Array): Mat {
    const { dModel, nHeads, nLayers, seqLen, vocabSize } = model.config;
    if (tokens.length < 1 || tokens.length > seqLen) {
        throw new Error(`sequence length must be in [1, ${seqLen}], got ${tokens.length}`);
    }

    let x = zeros(tokens.length, dModel);
    for (let t = 0; t < tokens.length; t++) {
        const tok = tokens[t] * dModel;
        const pos = t * dModel;
        for (let k = 0; k < dModel; k++) {
            x.data[t * dModel + k] = model.tokEmb.data[tok + k] + model.posEmb.data[pos + k];
        }
    }

    for (let i = 0; i < nLayers; i++) {
        const normed = layerNorm(x, gain(model, `h${i}.ln1`));
        const qkv = linear(model, `h${i}.attn.qkv`, normed);
        const context = causalAttention(qkv, dModel, nHeads);
        x = add(x, linear(model, `h${i}.attn.out`, context));

        const normed2 = layerNorm(x, gain(model, `h${i}.ln2`));
        const hidden = gelu(linear(model, `h${i}.ffn.in`, normed2));
        x = add(x, linear(model, `h${i}.ffn.out`, hidden));
    }

    const final = layerNorm(x, gain(model, 'ln_f'));
    const logits = linear(model, 'lm_head', final);
    if (logits.rows !== tokens.length || logits.cols !== vocabSize) {
        throw new Error(`logits came out ${logits.rows}x${logits.cols}`);
    }
    return logits;
}
