import * as fs from 'node:fs';
import * as os from 'node:os';
import * as path from 'node:path';

import { afterEach, beforeEach, describe, expect, it } from 'vitest';

import { readTensor, writeTensor, TensorFileError } from '../src/tensorfile.js';

let dir: string;
beforeEach(() => {
  dir = fs.mkdtempSync(path.join(os.tmpdir(), 'vprt-'));
});
afterEach(() => {
  fs.rmSync(dir, { recursive: true, force: true });
});

describe('tensor container', () => {
  it('round-trips data and dims bitwise', () => {
    const data = new Float32Array([1.5, -2.25, 3.125, 0, 5, 6]);
    const file = path.join(dir, 't.vprt');
    writeTensor(file, { dims: [2, 3], data });
    const back = readTensor(file);
    expect(back.dims).toEqual([2, 3]);
    expect(Buffer.from(back.data.buffer)).toEqual(Buffer.from(data.buffer));
  });

  it('writes the exact header layout', () => {
    const file = path.join(dir, 'h.vprt');
    writeTensor(file, { dims: [3, 5], data: new Float32Array(15) });
    const raw = fs.readFileSync(file);
    expect(raw.toString('ascii', 0, 4)).toBe('VPRT');
    expect(raw.readUInt32LE(4)).toBe(1); // version
    expect(raw.readUInt32LE(8)).toBe(1); // dtype f32
    expect(raw.readUInt32LE(12)).toBe(2); // ndim
    expect(Number(raw.readBigUInt64LE(16))).toBe(3);
    expect(Number(raw.readBigUInt64LE(24))).toBe(5);
    expect(raw.length).toBe(32 + 15 * 4);
  });

  it('serializes 1.0 as IEEE-754 little endian', () => {
    const file = path.join(dir, 'one.vprt');
    writeTensor(file, { dims: [1], data: new Float32Array([1.0]) });
    const raw = fs.readFileSync(file);
    expect([...raw.subarray(raw.length - 4)]).toEqual([0x00, 0x00, 0x80, 0x3f]);
  });

  it('rejects bad magic and truncated payloads', () => {
    const bad = path.join(dir, 'bad.vprt');
    fs.writeFileSync(bad, Buffer.from('XXXX0123456789abcdef'));
    expect(() => readTensor(bad)).toThrow(TensorFileError);

    const file = path.join(dir, 'trunc.vprt');
    writeTensor(file, { dims: [4], data: new Float32Array(4) });
    const raw = fs.readFileSync(file);
    fs.writeFileSync(file, raw.subarray(0, raw.length - 3));
    expect(() => readTensor(file)).toThrow(/payload/);
  });

  it('rejects dims/data length mismatch on write', () => {
    expect(() =>
      writeTensor(path.join(dir, 'x.vprt'), { dims: [2, 2], data: new Float32Array(3) }),
    ).toThrow(TensorFileError);
  });
});
