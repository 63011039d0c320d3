/**
 * Minimal truncated vision-transformer forward pass.
 *
 * Pipeline: non-overlapping patch embedding (kernel = stride = patch size),
 * class token + learned positional embeddings, pre-norm transformer blocks
 * (multi-head self-attention and a 4x MLP, both residual). The final layer
 * norm and any head are intentionally absent: the export surface is the raw
 * last-block output, with the class token dropped, giving (C, D) patch
 * tokens where C = (side / patch)^2.
 *
 * Weights come from a seeded generator or from a directory of tensor files;
 * all math is plain Float32Array loops, fast enough for desk-scale configs.
 */

import * as fs from 'node:fs';
import * as path from 'node:path';

import { Rng } from './rng.js';
import { readTensor, Tensor } from './tensorfile.js';

export interface VitConfig {
  patchSize: number;
  blocks: number;
  embedDim: number;
  heads: number;
  imageSide: number;
}

export interface BlockWeights {
  ln1Gamma: Float32Array;
  ln1Beta: Float32Array;
  wQkv: Float32Array; // (3*D, D)
  bQkv: Float32Array; // (3*D)
  wOut: Float32Array; // (D, D)
  bOut: Float32Array; // (D)
  ln2Gamma: Float32Array;
  ln2Beta: Float32Array;
  wMlp1: Float32Array; // (4*D, D)
  bMlp1: Float32Array;
  wMlp2: Float32Array; // (D, 4*D)
  bMlp2: Float32Array;
}

export interface VitWeights {
  patchWeight: Float32Array; // (D, patch*patch*3)
  patchBias: Float32Array; // (D)
  clsToken: Float32Array; // (D)
  posEmbed: Float32Array; // ((P+1) * D)
  blocks: BlockWeights[];
}

export function patchTokens(cfg: VitConfig): number {
  if (cfg.imageSide % cfg.patchSize !== 0) {
    throw new Error(
      `image side ${cfg.imageSide} is not divisible by patch size ${cfg.patchSize}`,
    );
  }
  const perSide = cfg.imageSide / cfg.patchSize;
  return perSide * perSide;
}

export function randomWeights(cfg: VitConfig, seed: number): VitWeights {
  const rng = new Rng(seed);
  const d = cfg.embedDim;
  const patchDim = cfg.patchSize * cfg.patchSize * 3;
  const tokens = patchTokens(cfg) + 1;
  const scaled = (n: number) => {
    const a = rng.normalArray(n);
    for (let i = 0; i < n; i++) a[i] *= 0.02;
    return a;
  };
  const ones = (n: number) => new Float32Array(n).fill(1);
  const zeros = (n: number) => new Float32Array(n);

  const blocks: BlockWeights[] = [];
  for (let b = 0; b < cfg.blocks; b++) {
    blocks.push({
      ln1Gamma: ones(d),
      ln1Beta: zeros(d),
      wQkv: scaled(3 * d * d),
      bQkv: zeros(3 * d),
      wOut: scaled(d * d),
      bOut: zeros(d),
      ln2Gamma: ones(d),
      ln2Beta: zeros(d),
      wMlp1: scaled(4 * d * d),
      bMlp1: zeros(4 * d),
      wMlp2: scaled(d * 4 * d),
      bMlp2: zeros(d),
    });
  }
  return {
    patchWeight: scaled(d * patchDim),
    patchBias: zeros(d),
    clsToken: scaled(d),
    posEmbed: scaled(tokens * d),
    blocks,
  };
}

function expectDims(t: Tensor, dims: number[], name: string): Float32Array {
  const ok =
    t.dims.length === dims.length && t.dims.every((v, i) => v === dims[i]);
  if (!ok) {
    throw new Error(`${name}: expected dims [${dims}], got [${t.dims}]`);
  }
  return t.data;
}

/** Load weights from a directory of tensor files with fixed names. */
export function loadWeights(dir: string, cfg: VitConfig): VitWeights {
  const d = cfg.embedDim;
  const patchDim = cfg.patchSize * cfg.patchSize * 3;
  const tokens = patchTokens(cfg) + 1;
  const get = (name: string, dims: number[]) => {
    const file = path.join(dir, `${name}.vprt`);
    if (!fs.existsSync(file)) throw new Error(`missing weight file ${file}`);
    return expectDims(readTensor(file), dims, name);
  };
  const blocks: BlockWeights[] = [];
  for (let b = 0; b < cfg.blocks; b++) {
    blocks.push({
      ln1Gamma: get(`block${b}.ln1.gamma`, [d]),
      ln1Beta: get(`block${b}.ln1.beta`, [d]),
      wQkv: get(`block${b}.attn.qkv.weight`, [3 * d, d]),
      bQkv: get(`block${b}.attn.qkv.bias`, [3 * d]),
      wOut: get(`block${b}.attn.out.weight`, [d, d]),
      bOut: get(`block${b}.attn.out.bias`, [d]),
      ln2Gamma: get(`block${b}.ln2.gamma`, [d]),
      ln2Beta: get(`block${b}.ln2.beta`, [d]),
      wMlp1: get(`block${b}.mlp.fc1.weight`, [4 * d, d]),
      bMlp1: get(`block${b}.mlp.fc1.bias`, [4 * d]),
      wMlp2: get(`block${b}.mlp.fc2.weight`, [d, 4 * d]),
      bMlp2: get(`block${b}.mlp.fc2.bias`, [d]),
    });
  }
  return {
    patchWeight: get('patch_embed.weight', [d, patchDim]),
    patchBias: get('patch_embed.bias', [d]),
    clsToken: get('cls_token', [d]),
    posEmbed: get('pos_embed', [tokens, d]),
    blocks,
  };
}

/** y[r] = W x[r] + b for row-major x (rows, inDim), W (outDim, inDim). */
function linear(
  x: Float32Array,
  rows: number,
  inDim: number,
  w: Float32Array,
  b: Float32Array,
  outDim: number,
): Float32Array {
  const y = new Float32Array(rows * outDim);
  for (let r = 0; r < rows; r++) {
    for (let o = 0; o < outDim; o++) {
      let acc = b[o];
      const wOff = o * inDim;
      const xOff = r * inDim;
      for (let i = 0; i < inDim; i++) acc += w[wOff + i] * x[xOff + i];
      y[r * outDim + o] = acc;
    }
  }
  return y;
}

function layerNorm(
  x: Float32Array,
  rows: number,
  dim: number,
  gamma: Float32Array,
  beta: Float32Array,
): Float32Array {
  const y = new Float32Array(rows * dim);
  for (let r = 0; r < rows; r++) {
    const off = r * dim;
    let mean = 0;
    for (let i = 0; i < dim; i++) mean += x[off + i];
    mean /= dim;
    let varAcc = 0;
    for (let i = 0; i < dim; i++) {
      const c = x[off + i] - mean;
      varAcc += c * c;
    }
    const inv = 1 / Math.sqrt(varAcc / dim + 1e-6);
    for (let i = 0; i < dim; i++) {
      y[off + i] = (x[off + i] - mean) * inv * gamma[i] + beta[i];
    }
  }
  return y;
}

function gelu(x: number): number {
  return 0.5 * x * (1 + Math.tanh(Math.sqrt(2 / Math.PI) * (x + 0.044715 * x * x * x)));
}

function attention(
  x: Float32Array,
  rows: number,
  dim: number,
  heads: number,
  blk: BlockWeights,
): Float32Array {
  const qkv = linear(x, rows, dim, blk.wQkv, blk.bQkv, 3 * dim);
  const headDim = dim / heads;
  const scale = 1 / Math.sqrt(headDim);
  const ctx = new Float32Array(rows * dim);
  const scores = new Float32Array(rows);
  for (let h = 0; h < heads; h++) {
    const hOff = h * headDim;
    for (let qi = 0; qi < rows; qi++) {
      let maxScore = -Infinity;
      for (let ki = 0; ki < rows; ki++) {
        let acc = 0;
        for (let c = 0; c < headDim; c++) {
          acc += qkv[qi * 3 * dim + hOff + c] * qkv[ki * 3 * dim + dim + hOff + c];
        }
        scores[ki] = acc * scale;
        if (scores[ki] > maxScore) maxScore = scores[ki];
      }
      let denom = 0;
      for (let ki = 0; ki < rows; ki++) {
        scores[ki] = Math.exp(scores[ki] - maxScore);
        denom += scores[ki];
      }
      for (let c = 0; c < headDim; c++) {
        let acc = 0;
        for (let ki = 0; ki < rows; ki++) {
          acc += (scores[ki] / denom) * qkv[ki * 3 * dim + 2 * dim + hOff + c];
        }
        ctx[qi * dim + hOff + c] = acc;
      }
    }
  }
  return linear(ctx, rows, dim, blk.wOut, blk.bOut, dim);
}

/**
 * Run the truncated backbone on an image tensor of dims (side, side, 3).
 * Returns (C, D) last-block patch tokens, class token excluded.
 */
export function extractTokens(
  image: Tensor,
  cfg: VitConfig,
  weights: VitWeights,
): Tensor {
  const side = cfg.imageSide;
  if (
    image.dims.length !== 3 ||
    image.dims[0] !== side ||
    image.dims[1] !== side ||
    image.dims[2] !== 3
  ) {
    throw new Error(
      `image tensor must have dims [${side},${side},3], got [${image.dims}]`,
    );
  }
  const d = cfg.embedDim;
  const p = cfg.patchSize;
  const perSide = side / p;
  const patches = perSide * perSide;
  const patchDim = p * p * 3;

  // patch extraction: row-major pixels within each patch, channels innermost
  const flat = new Float32Array(patches * patchDim);
  for (let py = 0; py < perSide; py++) {
    for (let px = 0; px < perSide; px++) {
      const pi = py * perSide + px;
      let k = 0;
      for (let y = 0; y < p; y++) {
        for (let x = 0; x < p; x++) {
          const src = ((py * p + y) * side + (px * p + x)) * 3;
          flat[pi * patchDim + k++] = image.data[src];
          flat[pi * patchDim + k++] = image.data[src + 1];
          flat[pi * patchDim + k++] = image.data[src + 2];
        }
      }
    }
  }

  const embedded = linear(flat, patches, patchDim, weights.patchWeight, weights.patchBias, d);
  const rows = patches + 1;
  let x = new Float32Array(rows * d);
  x.set(weights.clsToken, 0);
  x.set(embedded, d);
  for (let i = 0; i < rows * d; i++) x[i] += weights.posEmbed[i];

  for (const blk of weights.blocks) {
    const attnOut = attention(layerNorm(x, rows, d, blk.ln1Gamma, blk.ln1Beta), rows, d, cfg.heads, blk);
    for (let i = 0; i < rows * d; i++) x[i] += attnOut[i];
    const normed = layerNorm(x, rows, d, blk.ln2Gamma, blk.ln2Beta);
    const hidden = linear(normed, rows, d, blk.wMlp1, blk.bMlp1, 4 * d);
    for (let i = 0; i < hidden.length; i++) hidden[i] = gelu(hidden[i]);
    const mlpOut = linear(hidden, rows, 4 * d, blk.wMlp2, blk.bMlp2, d);
    for (let i = 0; i < rows * d; i++) x[i] += mlpOut[i];
  }

  // no final layer norm, no head; drop the class token (row 0)
  return { dims: [patches, d], data: x.slice(d) };
}
