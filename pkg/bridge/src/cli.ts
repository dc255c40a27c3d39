#!/usr/bin/env node
/** Bridge CLI: export template banks and proposal files for the engine. */

import yargs from 'yargs';
import { hideBin } from 'yargs/helpers';
import { createExtractor } from './encoder';
import { extractProposals, extractTemplates } from './extract';

function encoderOptions(argv: { backend: string; dim: number; seed: number }) {
  return createExtractor(argv.backend, { dim: argv.dim, seed: argv.seed });
}

yargs(hideBin(process.argv))
  .scriptName('embmatch-bridge')
  .command(
    'extract-templates',
    'embed per-class render directories into an MEB v1 bank archive',
    y =>
      y
        .option('renders', { type: 'string', demandOption: true, describe: 'directory of <class_id>/ render folders' })
        .option('out', { type: 'string', demandOption: true, describe: 'bank archive destination' })
        .option('backend', { type: 'string', default: 'toy', describe: 'feature extractor backend' })
        .option('dim', { type: 'number', default: 32 })
        .option('seed', { type: 'number', default: 7 })
        .option('threshold', { type: 'number', default: 0.5 }),
    argv => {
      const manifest = extractTemplates({
        rendersDir: argv.renders,
        outDir: argv.out,
        extractor: encoderOptions(argv),
        proposer: { threshold: argv.threshold },
      });
      const views = manifest.classes.reduce((acc, c) => acc + c.views.length, 0);
      console.error(`wrote ${manifest.classes.length} classes, ${views} views to ${argv.out}`);
    },
  )
  .command(
    'extract-proposals',
    'extract candidate regions from query images into proposal JSONL',
    y =>
      y
        .option('images', { type: 'string', array: true, demandOption: true, describe: 'query image files (.pgm/.ppm)' })
        .option('out', { type: 'string', demandOption: true, describe: 'proposal JSONL destination' })
        .option('backend', { type: 'string', default: 'toy' })
        .option('dim', { type: 'number', default: 32 })
        .option('seed', { type: 'number', default: 7 })
        .option('threshold', { type: 'number', default: 0.5 })
        .option('min-area', { type: 'number', default: 4 }),
    argv => {
      const records = extractProposals({
        images: argv.images as string[],
        outPath: argv.out,
        extractor: encoderOptions(argv),
        proposer: { threshold: argv.threshold, minArea: argv['min-area'] as number },
      });
      console.error(`wrote ${records.length} proposals to ${argv.out}`);
    },
  )
  .demandCommand(1)
  .strict()
  .fail((msg, err) => {
    console.error(`error: ${msg ?? err?.message}`);
    process.exit(err && !msg ? 1 : 2);
  })
  .parse();
