import { describe, expect, it } from 'vitest';
import { TOY_CONFIG, buildModel, forward } from '../src/model.js';

const LINEAR_IDS = [
    'h0.attn.qkv',
    'h0.attn.out',
    'h0.ffn.in',
    'h0.ffn.out',
    'h1.attn.qkv',
    'h1.attn.out',
    'h1.ffn.in',
    'h1.ffn.out',
    'lm_head',
];

describe('buildModel', () => {
    it('registers the expected layers in order', () => {
        const model = buildModel(0);
        expect(model.layers.map((l) => l.id)).toEqual([
            'h0.ln1', 'h0.attn.qkv', 'h0.attn.out', 'h0.ln2', 'h0.ffn.in', 'h0.ffn.out',
            'h1.ln1', 'h1.attn.qkv', 'h1.attn.out', 'h1.ln2', 'h1.ffn.in', 'h1.ffn.out',
            'ln_f', 'lm_head',
        ]);
    });

    it('gives linear layers 2-D weights with captures, norms 1-D gains without', () => {
        const model = buildModel(3);
        for (const entry of model.layers) {
            if (LINEAR_IDS.includes(entry.id)) {
                expect(entry.shape).toHaveLength(2);
                expect(entry.capture).toEqual([]);
            } else {
                expect(entry.shape).toHaveLength(1);
                expect(entry.capture).toBeNull();
            }
        }
        expect(model.byId.get('h0.attn.qkv')!.shape).toEqual([96, 32]);
        expect(model.byId.get('h0.ffn.out')!.shape).toEqual([32, 64]);
        expect(model.byId.get('lm_head')!.shape).toEqual([256, 32]);
    });

    it('is a pure function of the seed', () => {
        const a = buildModel(11);
        const b = buildModel(11);
        const c = buildModel(12);
        for (let i = 0; i < a.layers.length; i++) {
            expect(Array.from(a.layers[i].data)).toEqual(Array.from(b.layers[i].data));
        }
        expect(Array.from(a.tokEmb.data)).toEqual(Array.from(b.tokEmb.data));
        expect(Array.from(a.tokEmb.data)).not.toEqual(Array.from(c.tokEmb.data));
    });

    it('initialises norm gains to one', () => {
        const model = buildModel(5);
        const gain = model.byId.get('h1.ln2')!;
        expect(Array.from(gain.data)).toEqual(new Array(TOY_CONFIG.dModel).fill(1));
    });
});

describe('forward', () => {
    it('produces finite logits of shape [seq, vocab]', () => {
        const model = buildModel(0);
        const tokens = new Uint8Array([72, 97, 114, 98, 111, 117, 114, 46]);
        const logits = forward(model, tokens);
        expect(logits.rows).toBe(tokens.length);
        expect(logits.cols).toBe(TOY_CONFIG.vocabSize);
        for (const v of logits.data) expect(Number.isFinite(v)).toBe(true);
    });

    it('captures one input row per token at every linear layer', () => {
        const model = buildModel(0);
        forward(model, new Uint8Array(16).fill(65));
        forward(model, new Uint8Array(10).fill(66));
        for (const id of LINEAR_IDS) {
            const entry = model.byId.get(id)!;
            expect(entry.capture).toHaveLength(26);
            for (const row of entry.capture!) {
                expect(row.length).toBe(entry.shape[1]);
            }
        }
    });

    it('is deterministic: same seed and tokens give identical captures', () => {
        const tokens = new Uint8Array([10, 20, 30, 40, 50]);
        const a = buildModel(7);
        const b = buildModel(7);
        forward(a, tokens);
        forward(b, tokens);
        const rowsA = a.byId.get('h1.ffn.out')!.capture!;
        const rowsB = b.byId.get('h1.ffn.out')!.capture!;
        for (let t = 0; t < rowsA.length; t++) {
            expect(Array.from(rowsA[t])).toEqual(Array.from(rowsB[t]));
        }
    });

    it('rejects sequences longer than the context window', () => {
        const model = buildModel(0);
        expect(() => forward(model, new Uint8Array(TOY_CONFIG.seqLen + 1))).toThrow(/sequence length/);
    });

    it('rejects empty sequences', () => {
        const model = buildModel(0);
        expect(() => forward(model, new Uint8Array(0))).toThrow(/sequence length/);
    });
});
