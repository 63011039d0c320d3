#!/usr/bin/env node
/**
 * placemix-export CLI.
 *
 *   export --listing imgs.jsonl --backbone vitb14 --out dir
 *          [--image-side 224] [--weights dir] [--seed 0]
 *   synth  --out dir [--backbone vitb14 | --token-count 16 --embed-dim 24]
 *          [--places 32] [--images-per-place 4] [--spread 0.25] [--seed 0]
 *          [--database-per-place 1] [--queries-per-place 1]
 *          [--distractor-fraction 0] [--distractor-scale 1.5]
 *
 * In synth mode a --backbone name sets token count and embedding width from
 * the variant table at the given image side (C = (side/14)^2, D per variant).
 */

import { runExport } from './export.js';
import { synthesize } from './synthetic.js';
import { getVariant, tokenCount } from './variants.js';

function parseArgs(argv: string[]): Map<string, string> {
  const out = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith('--') || i + 1 >= argv.length) {
      throw new Error(`expected --flag value pairs, got ${JSON.stringify(argv)}`);
    }
    out.set(key.slice(2), argv[i + 1]);
  }
  return out;
}

function req(args: Map<string, string>, key: string): string {
  const v = args.get(key);
  if (v === undefined) throw new Error(`missing required flag --${key}`);
  return v;
}

function num(args: Map<string, string>, key: string, fallback: number): number {
  const v = args.get(key);
  if (v === undefined) return fallback;
  const n = Number(v);
  if (!Number.isFinite(n)) throw new Error(`--${key} expects a number, got ${v}`);
  return n;
}

const USAGE =
  'usage: placemix-export <export|synth> --out DIR [flags]; see source header for flags';

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    if (command === 'export') {
      const args = parseArgs(rest);
      const manifest = runExport({
        listing: req(args, 'listing'),
        backbone: req(args, 'backbone'),
        outDir: req(args, 'out'),
        imageSide: num(args, 'image-side', 224),
        weightsDir: args.get('weights'),
        seed: num(args, 'seed', 0),
      });
      console.log(manifest);
      return 0;
    }
    if (command === 'synth') {
      const args = parseArgs(rest);
      let tokens = num(args, 'token-count', 16);
      let embed = num(args, 'embed-dim', 24);
      const backbone = args.get('backbone');
      if (backbone) {
        const variant = getVariant(backbone);
        tokens = tokenCount(variant, num(args, 'image-side', 224));
        embed = variant.embedDim;
      }
      const manifest = synthesize({
        outDir: req(args, 'out'),
        nPlaces: num(args, 'places', 32),
        imagesPerPlace: num(args, 'images-per-place', 4),
        tokenCount: tokens,
        embedDim: embed,
        clusterSpread: num(args, 'spread', 0.25),
        seed: num(args, 'seed', 0),
        databasePerPlace: num(args, 'database-per-place', 1),
        queriesPerPlace: num(args, 'queries-per-place', 1),
        distractorFraction: num(args, 'distractor-fraction', 0),
        distractorScale: num(args, 'distractor-scale', 1.5),
      });
      console.log(manifest);
      return 0;
    }
    console.error(USAGE);
    return 2;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

const isMain =
  process.argv[1] !== undefined &&
  import.meta.url.endsWith(process.argv[1].split('/').pop() ?? '');
if (isMain) {
  process.exit(main(process.argv.slice(2)));
}
