/** JSON-Lines dataset manifest matching the engine's schema. */

import * as fs from 'node:fs';
import * as path from 'node:path';

export type Split = 'train' | 'database' | 'query';

export interface ImageRecord {
  image_id: string;
  place_id: string;
  lat: number;
  lon: number;
  split: Split;
  features: string;
}

export function writeManifest(filePath: string, records: ImageRecord[]): void {
  const lines = records.map((r) =>
    JSON.stringify({
      features: r.features,
      image_id: r.image_id,
      lat: r.lat,
      lon: r.lon,
      place_id: r.place_id,
      split: r.split,
    }),
  );
  const tmp = path.join(
    path.dirname(filePath),
    `.manifest-${process.pid}-${Math.random().toString(36).slice(2)}`,
  );
  fs.writeFileSync(tmp, lines.join('\n') + (lines.length ? '\n' : ''));
  fs.renameSync(tmp, filePath);
}

export function readManifest(filePath: string): ImageRecord[] {
  const records: ImageRecord[] = [];
  const text = fs.readFileSync(filePath, 'utf-8');
  for (const [i, line] of text.split('\n').entries()) {
    const stripped = line.trim();
    if (!stripped) continue;
    let obj: Record<string, unknown>;
    try {
      obj = JSON.parse(stripped);
    } catch (err) {
      throw new Error(`${filePath}:${i + 1}: invalid JSON`);
    }
    for (const field of ['image_id', 'place_id', 'lat', 'lon', 'split', 'features']) {
      if (!(field in obj)) {
        throw new Error(`${filePath}:${i + 1}: missing field ${field}`);
      }
    }
    records.push(obj as unknown as ImageRecord);
  }
  return records;
}
