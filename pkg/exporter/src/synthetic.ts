/**
 * Deterministic synthetic dataset generation, mirroring the engine's own
 * generator contract: per-place cluster centers with per-image Gaussian
 * perturbations of magnitude clusterSpread, optional per-image distractor
 * channels, and geotags on a coarse grid (same-place images < 25 m apart,
 * distinct places > 100 m apart).
 */

import * as fs from 'node:fs';
import * as path from 'node:path';

import { ImageRecord, Split, writeManifest } from './manifest.js';
import { Rng } from './rng.js';
import { writeTensor } from './tensorfile.js';

const GRID_STEP_DEG = 0.002; // ~222 m between neighbours
const JITTER_DEG = 5e-5; // ~+-5.5 m per image

export interface SynthesizeOptions {
  outDir: string;
  nPlaces: number;
  imagesPerPlace: number;
  tokenCount: number;
  embedDim: number;
  clusterSpread: number;
  seed: number;
  databasePerPlace?: number;
  queriesPerPlace?: number;
  distractorFraction?: number;
  distractorScale?: number;
}

export function synthesize(opts: SynthesizeOptions): string {
  const {
    outDir,
    nPlaces,
    imagesPerPlace,
    tokenCount,
    embedDim,
    clusterSpread,
    seed,
  } = opts;
  const databasePerPlace = opts.databasePerPlace ?? 1;
  const queriesPerPlace = opts.queriesPerPlace ?? 1;
  const distractorFraction = opts.distractorFraction ?? 0;
  const distractorScale = opts.distractorScale ?? 1.5;

  if (nPlaces < 1 || imagesPerPlace < 1) {
    throw new Error('need at least one place and one image per place');
  }
  const side = Math.round(Math.sqrt(tokenCount));
  if (side * side !== tokenCount) {
    throw new Error(`token count ${tokenCount} must be a perfect square`);
  }
  if (distractorFraction < 0 || distractorFraction >= 1) {
    throw new Error(`distractorFraction must be in [0, 1), got ${distractorFraction}`);
  }
  const signalDim = embedDim - Math.floor(embedDim * distractorFraction);

  const rng = new Rng(seed);
  const featureDir = path.join(outDir, 'features');
  fs.mkdirSync(featureDir, { recursive: true });

  const grid = Math.ceil(Math.sqrt(nPlaces));
  const records: ImageRecord[] = [];
  for (let p = 0; p < nPlaces; p++) {
    const center = new Float32Array(tokenCount * embedDim);
    for (let t = 0; t < tokenCount; t++) {
      for (let c = 0; c < signalDim; c++) {
        center[t * embedDim + c] = rng.normal();
      }
    }
    const baseLat = Math.floor(p / grid) * GRID_STEP_DEG;
    const baseLon = (p % grid) * GRID_STEP_DEG;
    const placeId = `place${String(p).padStart(4, '0')}`;

    const roles: Array<[Split, number]> = [];
    for (let i = 0; i < imagesPerPlace; i++) roles.push(['train', i]);
    for (let i = 0; i < databasePerPlace; i++) roles.push(['database', i]);
    for (let i = 0; i < queriesPerPlace; i++) roles.push(['query', i]);

    for (const [split, i] of roles) {
      const tokens = new Float32Array(center);
      for (let t = 0; t < tokenCount; t++) {
        for (let c = 0; c < signalDim; c++) {
          tokens[t * embedDim + c] += clusterSpread * rng.normal();
        }
        for (let c = signalDim; c < embedDim; c++) {
          tokens[t * embedDim + c] = distractorScale * rng.normal();
        }
      }
      const imageId = `${placeId}_${split}${i}`;
      const rel = path.join('features', `${imageId}.vprt`);
      writeTensor(path.join(outDir, rel), { dims: [tokenCount, embedDim], data: tokens });
      records.push({
        image_id: imageId,
        place_id: placeId,
        lat: baseLat + rng.uniform(-JITTER_DEG, JITTER_DEG),
        lon: baseLon + rng.uniform(-JITTER_DEG, JITTER_DEG),
        split,
        features: rel,
      });
    }
  }

  const manifestPath = path.join(outDir, 'manifest.jsonl');
  writeManifest(manifestPath, records);
  return manifestPath;
}
