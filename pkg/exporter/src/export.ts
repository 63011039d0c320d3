/**
 * Backbone export: run the truncated ViT over a listing of raw image tensors
 * and emit per-image (C, D) token features plus a dataset manifest.
 *
 * The listing is JSON-Lines, one object per image:
 *   {"image": "imgs/a.vprt", "image_id": "a", "place_id": "p1",
 *    "lat": 0.0, "lon": 0.0, "split": "database"}
 * where `image` points to a (side, side, 3) tensor file relative to the
 * listing. Weights load from a directory of tensor files when given,
 * otherwise a seeded deterministic initialization is used.
 */

import * as fs from 'node:fs';
import * as path from 'node:path';

import { ImageRecord, Split, writeManifest } from './manifest.js';
import { readTensor, writeTensor } from './tensorfile.js';
import { getVariant } from './variants.js';
import {
  VitConfig,
  VitWeights,
  extractTokens,
  loadWeights,
  randomWeights,
} from './vit.js';

export interface ExportJob {
  listing: string;
  backbone: string;
  outDir: string;
  imageSide?: number;
  weightsDir?: string;
  seed?: number;
  /** test-scale override of the named variant's dimensions */
  config?: Partial<VitConfig>;
}

interface ListingEntry {
  image: string;
  image_id: string;
  place_id: string;
  lat: number;
  lon: number;
  split: Split;
}

function readListing(filePath: string): ListingEntry[] {
  const entries: ListingEntry[] = [];
  const text = fs.readFileSync(filePath, 'utf-8');
  for (const [i, line] of text.split('\n').entries()) {
    const stripped = line.trim();
    if (!stripped) continue;
    let obj: Record<string, unknown>;
    try {
      obj = JSON.parse(stripped);
    } catch {
      throw new Error(`${filePath}:${i + 1}: invalid JSON`);
    }
    for (const field of ['image', 'image_id', 'place_id', 'lat', 'lon', 'split']) {
      if (!(field in obj)) throw new Error(`${filePath}:${i + 1}: missing field ${field}`);
    }
    entries.push(obj as unknown as ListingEntry);
  }
  if (!entries.length) throw new Error(`${filePath}: empty listing`);
  return entries;
}

export function vitConfigFor(job: ExportJob): VitConfig {
  const variant = getVariant(job.backbone);
  const cfg: VitConfig = {
    patchSize: variant.patchSize,
    blocks: variant.blocks,
    embedDim: variant.embedDim,
    heads: Math.max(1, Math.floor(variant.embedDim / 64)),
    imageSide: job.imageSide ?? 224,
    ...job.config,
  };
  if (cfg.imageSide % cfg.patchSize !== 0) {
    throw new Error(
      `image side ${cfg.imageSide} is not divisible by patch size ${cfg.patchSize}`,
    );
  }
  if (cfg.embedDim % cfg.heads !== 0) {
    throw new Error(`embed dim ${cfg.embedDim} not divisible by ${cfg.heads} heads`);
  }
  return cfg;
}

export function runExport(job: ExportJob): string {
  const cfg = vitConfigFor(job);
  const weights: VitWeights = job.weightsDir
    ? loadWeights(job.weightsDir, cfg)
    : randomWeights(cfg, job.seed ?? 0);

  const entries = readListing(job.listing);
  const listingRoot = path.dirname(path.resolve(job.listing));
  const featureDir = path.join(job.outDir, 'features');
  fs.mkdirSync(featureDir, { recursive: true });

  const records: ImageRecord[] = [];
  for (const entry of entries) {
    const imagePath = path.join(listingRoot, entry.image);
    let image;
    try {
      image = readTensor(imagePath);
    } catch (err) {
      throw new Error(`unreadable image tensor for ${entry.image_id}: ${imagePath}: ${(err as Error).message}`);
    }
    const tokens = extractTokens(image, cfg, weights);
    const rel = path.join('features', `${entry.image_id}.vprt`);
    writeTensor(path.join(job.outDir, rel), tokens);
    records.push({
      image_id: entry.image_id,
      place_id: entry.place_id,
      lat: entry.lat,
      lon: entry.lon,
      split: entry.split,
      features: rel,
    });
  }
  const manifestPath = path.join(job.outDir, 'manifest.jsonl');
  writeManifest(manifestPath, records);
  return manifestPath;
}
