/**
 * Binary tensor container shared with the placemix engine.
 *
 * Layout, little-endian: magic "VPRT", u32 version (1), u32 dtype code
 * (1 = float32), u32 ndim, ndim x u64 dims, row-major float32 payload.
 * Writes go through a temp file + rename so readers never see partial files.
 */

import * as fs from 'node:fs';
import * as path from 'node:path';

export const MAGIC = 'VPRT';
export const VERSION = 1;
export const DTYPE_F32 = 1;

export interface Tensor {
  dims: number[];
  data: Float32Array;
}

export class TensorFileError extends Error {}

function elementCount(dims: number[]): number {
  return dims.reduce((a, b) => a * b, 1);
}

export function writeTensor(filePath: string, tensor: Tensor): void {
  const { dims, data } = tensor;
  if (elementCount(dims) !== data.length) {
    throw new TensorFileError(
      `dims [${dims}] require ${elementCount(dims)} values, got ${data.length}`,
    );
  }
  const header = Buffer.alloc(4 + 12 + 8 * dims.length);
  header.write(MAGIC, 0, 'ascii');
  header.writeUInt32LE(VERSION, 4);
  header.writeUInt32LE(DTYPE_F32, 8);
  header.writeUInt32LE(dims.length, 12);
  dims.forEach((d, i) => header.writeBigUInt64LE(BigInt(d), 16 + 8 * i));

  const payload = Buffer.alloc(data.length * 4);
  for (let i = 0; i < data.length; i++) {
    payload.writeFloatLE(data[i], i * 4);
  }

  const tmp = path.join(
    path.dirname(filePath),
    `.vprt-${process.pid}-${Math.random().toString(36).slice(2)}`,
  );
  fs.writeFileSync(tmp, Buffer.concat([header, payload]));
  fs.renameSync(tmp, filePath);
}

export function readTensor(filePath: string): Tensor {
  const raw = fs.readFileSync(filePath);
  if (raw.length < 16 || raw.toString('ascii', 0, 4) !== MAGIC) {
    throw new TensorFileError(`${filePath}: bad magic`);
  }
  const version = raw.readUInt32LE(4);
  if (version !== VERSION) {
    throw new TensorFileError(`${filePath}: unsupported version ${version}`);
  }
  const dtype = raw.readUInt32LE(8);
  if (dtype !== DTYPE_F32) {
    throw new TensorFileError(`${filePath}: unsupported dtype code ${dtype}`);
  }
  const ndim = raw.readUInt32LE(12);
  const dims: number[] = [];
  for (let i = 0; i < ndim; i++) {
    dims.push(Number(raw.readBigUInt64LE(16 + 8 * i)));
  }
  const offset = 16 + 8 * ndim;
  const count = elementCount(dims);
  if (raw.length - offset !== count * 4) {
    throw new TensorFileError(
      `${filePath}: payload holds ${raw.length - offset} bytes, dims [${dims}] require ${count * 4}`,
    );
  }
  const data = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    data[i] = raw.readFloatLE(offset + i * 4);
  }
  return { dims, data };
}
