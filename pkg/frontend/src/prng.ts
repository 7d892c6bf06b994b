/**
 * Deterministic pseudo-random number generation.
 *
 * Every weight in the toy checkpoint derives from a single integer seed via
 * mulberry32, a compact 32-bit generator that is more than adequate for
 * fixture data. Gaussian variates come from the Box-Muller transform. The
 * stream is a pure function of the seed, so rebuilding a model with the same
 * seed reproduces every tensor bit for bit.
 */

/** Uniform generator returning floats in [0, 1). */
export type Rng = () => number;

/** Create a mulberry32 generator from a 32-bit integer seed. */
export function mulberry32(seed: number): Rng {
    let state = seed >>> 0;
    return () => {
        state = (state + 0x6d2b79f5) >>> 0;
        let t = state;
        t = Math.imul(t ^ (t >>> 15), t | 1);
        t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
        return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
    };
}

/** Standard-normal sampler (Box-Muller) drawing from a uniform generator. */
export function gaussian(rng: Rng): () => number {
    let spare: number | null = null;
    return () => {
        if (spare !== null) {
            const value = spare;
            spare = null;
            return value;
        }
        let u = 0;
        while (u === 0) u = rng(); // log(0) guard
        const v = rng();
        const radius = Math.sqrt(-2.0 * Math.log(u));
        const theta = 2.0 * Math.PI * v;
        spare = radius * Math.sin(theta);
        return radius * Math.cos(theta);
    };
}
