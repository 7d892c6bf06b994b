/**
 * Checkpoint export: run calibration through the toy model and write every
 * selected linear layer as a pair of ESPT tensors plus a manifest.
 *
 * Per exported layer the weight goes out as [outFeatures, inFeatures] and
 * the captured pre-layer activations as [tokenCount, inFeatures], where the
 * token axis is the flattened (sequence, position) axis across all
 * calibration sequences. The manifest ties layer ids to both files with
 * paths relative to its own directory, so the directory can be moved or
 * archived wholesale.
 */

import * as fs from 'node:fs';
import * as path from 'node:path';
import { fetchCalibrationText, loadCalibrationText, makeSequences } from './calibration.js';
import { writeTensorFile } from './espt.js';
import { LayerEntry, ToyModel, buildModel, forward } from './model.js';

/** A parameter error in the caller's request, as opposed to an internal failure. */
export class UsageError extends Error {}

/** Everything needed to produce one export. */
export interface ExportJob {
    /** Model identifier; `toy-2layer` is the one built-in checkpoint. */
    model: string;
    /** Substring filter on layer ids; empty string selects every layer. */
    layerFilter: string;
    /** Local calibration text file; null selects the bundled sample. */
    calibPath: string | null;
    /** Web corpus shard URL; mutually exclusive with calibPath. */
    calibUrl: string | null;
    /** Token budget as a count of fixed-length calibration sequences. */
    sequences: number;
    /** Seed for the deterministic weight initialisation. */
    seed: number;
    /** Output directory, created if missing. */
    outDir: string;
}

/** One manifest row. */
export interface ExportedLayer {
    layer_id: string;
    weight_path: string;
    activation_path: string;
}

/** Summary of a completed export. */
export interface ExportResult {
    manifestPath: string;
    tokenCount: number;
    layers: ExportedLayer[];
    /** Ids that matched the filter but carry no 2-D linear weight. */
    skipped: string[];
}

export const BUILTIN_MODEL = 'toy-2layer';
export const DEFAULT_SEQUENCES = 128;

/**
 * Stack captured rows into one [tokens, channels] buffer.
 *
 * Every row must be exactly `channels` wide; a mismatch means the capture
 * got out of sync with the weight and the export must abort rather than
 * write a tensor the consumer would reject.
 */
export function concatCaptures(rows: Float32Array[], channels: number): Float32Array {
    const out = new Float32Array(rows.length * channels);
    for (let t = 0; t < rows.length; t++) {
        if (rows[t].length !== channels) {
            throw new Error(
                `activation channel mismatch at token ${t}: got ${rows[t].length}, expected ${channels}`
            );
        }
        out.set(rows[t], t * channels);
    }
    return out;
}

function validateJob(job: ExportJob): void {
    if (job.model !== BUILTIN_MODEL) {
        throw new UsageError(`unknown model ${JSON.stringify(job.model)}; available: ${BUILTIN_MODEL}`);
    }
    if (!Number.isInteger(job.sequences) || job.sequences < 1) {
        throw new UsageError(`token budget must be a positive number of sequences, got ${job.sequences}`);
    }
    if (!Number.isInteger(job.seed)) {
        throw new UsageError(`seed must be an integer, got ${job.seed}`);
    }
    if (job.calibPath !== null && job.calibUrl !== null) {
        throw new UsageError('pass either a calibration file or a corpus URL, not both');
    }
}

function selectLayers(model: ToyModel, filter: string): LayerEntry[] {
    return model.layers.filter((entry) => entry.id.includes(filter));
}

/**
 * Run an export job end to end.
 *
 * Selected layers without a 2-D linear weight (norm gains) are skipped with
 * a warning; an empty selection of exportable layers is a usage error, as
 * is a token budget below one sequence.
 */
export async function exportCheckpoint(job: ExportJob): Promise<ExportResult> {
    validateJob(job);

    const text = job.calibUrl !== null
        ? await fetchCalibrationText(job.calibUrl)
        : loadCalibrationText(job.calibPath);

    const model = buildModel(job.seed);
    const selected = selectLayers(model, job.layerFilter);
    if (selected.length === 0) {
        throw new UsageError(`layer filter ${JSON.stringify(job.layerFilter)} matched no layers`);
    }
    const exportable = selected.filter((entry) => entry.capture !== null);
    if (exportable.length === 0) {
        throw new UsageError(
            `layer filter ${JSON.stringify(job.layerFilter)} matched only layers without 2-D weights`
        );
    }

    const sequences = makeSequences(text, model.config.seqLen, job.sequences);
    let tokenCount = 0;
    for (const seq of sequences) {
        forward(model, seq);
        tokenCount += seq.length;
    }

    fs.mkdirSync(job.outDir, { recursive: true });
    const skipped: string[] = [];
    const layers: ExportedLayer[] = [];
    for (const entry of selected) {
        if (entry.capture === null) {
            console.warn(`skipping ${entry.id}: no 2-D linear weight (shape [${entry.shape.join(', ')}])`);
            skipped.push(entry.id);
            continue;
        }
        const [outFeatures, inFeatures] = entry.shape;
        if (entry.capture.length !== tokenCount) {
            throw new Error(
                `${entry.id}: captured ${entry.capture.length} rows for ${tokenCount} tokens`
            );
        }
        const activations = concatCaptures(entry.capture, inFeatures);
        const weightName = `${entry.id}.weight.espt`;
        const activationName = `${entry.id}.act.espt`;
        writeTensorFile(path.join(job.outDir, weightName), [outFeatures, inFeatures], entry.data);
        writeTensorFile(path.join(job.outDir, activationName), [tokenCount, inFeatures], activations);
        layers.push({ layer_id: entry.id, weight_path: weightName, activation_path: activationName });
    }

    const manifest = {
        model_name: job.model,
        token_count: tokenCount,
        layers,
    };
    const manifestPath = path.join(job.outDir, 'manifest.json');
    fs.writeFileSync(manifestPath, JSON.stringify(manifest, null, 2) + '\n', 'utf-8');

    return { manifestPath, tokenCount, layers, skipped };
}
