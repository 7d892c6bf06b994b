/**
 * Minimal f32 matrix kernel for the toy forward pass.
 *
 * Matrices are dense row-major Float32Arrays. Dot products accumulate in
 * f64 (plain JS numbers) and round to f32 on store, which keeps results
 * reproducible: for fixed inputs every op here is a pure function with no
 * data-dependent ordering.
 */

/** Dense row-major f32 matrix. */
export interface Mat {
    rows: number;
    cols: number;
    data: Float32Array;
}

export function zeros(rows: number, cols: number): Mat {
    return { rows, cols, data: new Float32Array(rows * cols) };
}

/**
 * y = x * W^T for a weight stored as [outFeatures, inFeatures].
 *
 * This is the linear-layer convention used throughout: row t of the output
 * is W applied to row t of the input.
 */
export function matmulT(x: Mat, w: Mat): Mat {
    if (x.cols !== w.cols) {
        throw new Error(`matmulT: input has ${x.cols} columns but weight expects ${w.cols}`);
    }
    const out = zeros(x.rows, w.rows);
    for (let t = 0; t < x.rows; t++) {
        const xRow = t * x.cols;
        for (let o = 0; o < w.rows; o++) {
            const wRow = o * w.cols;
            let acc = 0;
            for (let k = 0; k < x.cols; k++) {
                acc += x.data[xRow + k] * w.data[wRow + k];
            }
            out.data[t * w.rows + o] = acc;
        }
    }
    return out;
}

/** Row-wise layer normalisation with a learned gain (no bias, eps 1e-5). */
export function layerNorm(x: Mat, gain: Float32Array): Mat {
    if (gain.length !== x.cols) {
        throw new Error(`layerNorm: gain has ${gain.length} entries for ${x.cols} columns`);
    }
    const out = zeros(x.rows, x.cols);
    for (let t = 0; t < x.rows; t++) {
        const row = t * x.cols;
        let mean = 0;
        for (let k = 0; k < x.cols; k++) mean += x.data[row + k];
        mean /= x.cols;
        let variance = 0;
        for (let k = 0; k < x.cols; k++) {
            const d = x.data[row + k] - mean;
            variance += d * d;
        }
        variance /= x.cols;
        const inv = 1.0 / Math.sqrt(variance + 1e-5);
        for (let k = 0; k < x.cols; k++) {
            out.data[row + k] = (x.data[row + k] - mean) * inv * gain[k];
        }
    }
    return out;
}

/** Element-wise GELU (tanh approximation). */
export function gelu(x: Mat): Mat {
    const out = zeros(x.rows, x.cols);
    const c = Math.sqrt(2.0 / Math.PI);
    for (let i = 0; i < x.data.length; i++) {
        const v = x.data[i];
        out.data[i] = 0.5 * v * (1.0 + Math.tanh(c * (v + 0.044715 * v * v * v)));
    }
    return out;
}

/** z = x + y, element-wise. */
export function add(x: Mat, y: Mat): Mat {
    if (x.rows !== y.rows || x.cols !== y.cols) {
        throw new Error(`add: shape mismatch ${x.rows}x${x.cols} vs ${y.rows}x${y.cols}`);
    }
    const out = zeros(x.rows, x.cols);
    for (let i = 0; i < x.data.length; i++) out.data[i] = x.data[i] + y.data[i];
    return out;
}

/**
 * Causal multi-head self attention over a fused qkv projection output.
 *
 * `qkv` is [seq, 3*dModel] laid out as q | k | v, each split into `nHeads`
 * contiguous head slices. Returns the concatenated per-head context,
 * [seq, dModel].
 */
export function causalAttention(qkv: Mat, dModel: number, nHeads: number): Mat {
    if (qkv.cols !== 3 * dModel) {
        throw new Error(`attention: qkv has ${qkv.cols} columns, expected ${3 * dModel}`);
    }
    if (dModel % nHeads !== 0) {
        throw new Error(`attention: dModel ${dModel} not divisible by ${nHeads} heads`);
    }
    const seq = qkv.rows;
    const dHead = dModel / nHeads;
    const scale = 1.0 / Math.sqrt(dHead);
    const out = zeros(seq, dModel);
    const scores = new Float64Array(seq);

    for (let h = 0; h < nHeads; h++) {
        const qOff = h * dHead;
        const kOff = dModel + h * dHead;
        const vOff = 2 * dModel + h * dHead;
        for (let t = 0; t < seq; t++) {
            const qRow = t * qkv.cols;
            // Causal scores for positions 0..t, softmax-normalised in f64.
            let maxScore = -Infinity;
            for (let s = 0; s <= t; s++) {
                const kRow = s * qkv.cols;
                let dot = 0;
                for (let k = 0; k < dHead; k++) {
                    dot += qkv.data[qRow + qOff + k] * qkv.data[kRow + kOff + k];
                }
                scores[s] = dot * scale;
                if (scores[s] > maxScore) maxScore = scores[s];
            }
            let total = 0;
            for (let s = 0; s <= t; s++) {
                scores[s] = Math.exp(scores[s] - maxScore);
                total += scores[s];
            }
            for (let k = 0; k < dHead; k++) {
                let acc = 0;
                for (let s = 0; s <= t; s++) {
                    acc += (scores[s] / total) * qkv.data[s * qkv.cols + vOff + k];
                }
                out.data[t * dModel + qOff + k] = acc;
            }
        }
    }
    return out;
}
