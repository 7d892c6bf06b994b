#!/usr/bin/env node
/**
 * Command line entry point for the checkpoint exporter.
 *
 * Produces a directory of ESPT tensors plus manifest.json describing a
 * seeded toy transformer and its calibration activations. Usage errors
 * (bad flags, zero token budget, unknown model) exit with code 2; internal
 * failures exit with code 1.
 */

import { parseArgs } from 'node:util';
import { BUILTIN_MODEL, DEFAULT_SEQUENCES, ExportJob, UsageError, exportCheckpoint } from './exporter.js';

const HELP = `usage: nmprune-export --out DIR [options]

Export a deterministic toy transformer checkpoint as ESPT tensors plus a
manifest.json consumable by the nmprune toolkit.

options:
  --out DIR          output directory (required; created if missing)
  --model NAME       model identifier (default: ${BUILTIN_MODEL})
  --layers TEXT      only export layers whose id contains TEXT
  --sequences N      calibration token budget, in 64-token sequences
                     (default: ${DEFAULT_SEQUENCES})
  --seed N           weight initialisation seed (default: 0)
  --calib PATH       calibration text file (default: bundled sample)
  --calib-url URL    fetch a web-text corpus shard instead (needs network)
  --help             show this message
`;

function parseIntFlag(name: string, raw: string): number {
    const value = Number(raw);
    if (!Number.isInteger(value)) {
        throw new UsageError(`--${name} expects an integer, got ${JSON.stringify(raw)}`);
    }
    return value;
}

async function run(argv: string[]): Promise<number> {
    let parsed;
    try {
        parsed = parseArgs({
            args: argv,
            strict: true,
            options: {
                out: { type: 'string' },
                model: { type: 'string', default: BUILTIN_MODEL },
                layers: { type: 'string', default: '' },
                sequences: { type: 'string', default: String(DEFAULT_SEQUENCES) },
                seed: { type: 'string', default: '0' },
                calib: { type: 'string' },
                'calib-url': { type: 'string' },
                help: { type: 'boolean', default: false },
            },
        });
    } catch (err) {
        console.error(`error: ${err instanceof Error ? err.message : err}`);
        return 2;
    }
    const values = parsed.values;
    if (values.help) {
        console.log(HELP);
        return 0;
    }
    if (values.out === undefined) {
        console.error('error: --out is required');
        return 2;
    }

    const job: ExportJob = {
        model: values.model!,
        layerFilter: values.layers!,
        calibPath: values.calib ?? null,
        calibUrl: values['calib-url'] ?? null,
        sequences: parseIntFlag('sequences', values.sequences!),
        seed: parseIntFlag('seed', values.seed!),
        outDir: values.out,
    };

    const result = await exportCheckpoint(job);
    console.log(`wrote ${result.manifestPath}`);
    console.log(`exported ${result.layers.length} layers, ${result.tokenCount} calibration tokens`);
    if (result.skipped.length > 0) {
        console.log(`skipped ${result.skipped.length} non-linear layers: ${result.skipped.join(', ')}`);
    }
    return 0;
}

run(process.argv.slice(2))
    .then((code) => {
        process.exitCode = code;
    })
    .catch((err) => {
        console.error(`error: ${err instanceof Error ? err.message : err}`);
        process.exitCode = err instanceof UsageError ? 2 : 1;
    });
