/** Deterministic toy feature extractor.
 *
 * Stands in for a GPU vision backbone: crops are resampled to a fixed
 * grid, split into patches, and pushed through fixed seeded random
 * projections. Identical input bytes always produce identical embedding
 * bytes, which is what the export contract tests need. Real backbones
 * implement the same FeatureExtractor interface.
 */

import { CropEmbedding, FeatureExtractor, GrayImage } from './types';

/** mulberry32: tiny deterministic PRNG, uniform in [0, 1). */
function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function projectionMatrix(rows: number, cols: number, seed: number): Float32Array {
  const rand = mulberry32(seed);
  const w = new Float32Array(rows * cols);
  for (let i = 0; i < w.length; i++) {
    w[i] = Math.fround((rand() * 2 - 1) / Math.sqrt(cols));
  }
  return w;
}

export function resizeBilinear(image: GrayImage, size: number): Float32Array {
  const out = new Float32Array(size * size);
  const sx = image.width / size;
  const sy = image.height / size;
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const fx = Math.min((x + 0.5) * sx - 0.5, image.width - 1);
      const fy = Math.min((y + 0.5) * sy - 0.5, image.height - 1);
      const x0 = Math.max(0, Math.floor(fx));
      const y0 = Math.max(0, Math.floor(fy));
      const x1 = Math.min(x0 + 1, image.width - 1);
      const y1 = Math.min(y0 + 1, image.height - 1);
      const dx = Math.max(0, fx - x0);
      const dy = Math.max(0, fy - y0);
      const top =
        image.pixels[y0 * image.width + x0] * (1 - dx) +
        image.pixels[y0 * image.width + x1] * dx;
      const bottom =
        image.pixels[y1 * image.width + x0] * (1 - dx) +
        image.pixels[y1 * image.width + x1] * dx;
      out[y * size + x] = Math.fround(top * (1 - dy) + bottom * dy);
    }
  }
  return out;
}

/** inputs gets an appended constant 1 so projections never collapse to zero */
function project(inputs: Float32Array, w: Float32Array, dim: number): Float32Array {
  const cols = inputs.length + 1;
  const out = new Float32Array(dim);
  for (let r = 0; r < dim; r++) {
    let acc = 0;
    for (let c = 0; c < inputs.length; c++) {
      acc += w[r * cols + c] * inputs[c];
    }
    acc += w[r * cols + inputs.length];
    out[r] = Math.fround(acc);
  }
  return out;
}

function l2Normalize(v: Float32Array): Float32Array {
  let norm = 0;
  for (let i = 0; i < v.length; i++) norm += v[i] * v[i];
  norm = Math.sqrt(norm);
  if (norm === 0) {
    throw new Error('degenerate zero embedding');
  }
  const out = new Float32Array(v.length);
  for (let i = 0; i < v.length; i++) out[i] = Math.fround(v[i] / norm);
  return out;
}

export interface ToyEncoderOptions {
  /** embedding dimension (default 32) */
  dim?: number;
  /** resampled crop side; must be a multiple of patchGrid (default 16) */
  inputSize?: number;
  /** patches per side (default 4, so 16 tokens) */
  patchGrid?: number;
  /** projection seed (default 7) */
  seed?: number;
}

export class ToyPatchEncoder implements FeatureExtractor {
  readonly name: string;
  readonly dim: number;
  readonly tokenCount: number;
  private readonly inputSize: number;
  private readonly patchGrid: number;
  private readonly patchSize: number;
  private readonly wCls: Float32Array;
  private readonly wPatch: Float32Array;

  constructor(options: ToyEncoderOptions = {}) {
    this.dim = options.dim ?? 32;
    this.inputSize = options.inputSize ?? 16;
    this.patchGrid = options.patchGrid ?? 4;
    if (this.inputSize % this.patchGrid !== 0) {
      throw new Error(
        `inputSize ${this.inputSize} is not a multiple of patchGrid ${this.patchGrid}`,
      );
    }
    this.patchSize = this.inputSize / this.patchGrid;
    this.tokenCount = this.patchGrid * this.patchGrid;
    const seed = options.seed ?? 7;
    this.name = `toy-${this.dim}d-s${seed}`;
    this.wCls = projectionMatrix(this.dim, this.inputSize * this.inputSize + 1, seed);
    this.wPatch = projectionMatrix(this.dim, this.patchSize * this.patchSize + 1, seed + 1);
  }

  embed(crop: GrayImage): CropEmbedding {
    const grid = resizeBilinear(crop, this.inputSize);
    const cls = l2Normalize(project(grid, this.wCls, this.dim));

    const patchTokens = new Float32Array(this.tokenCount * this.dim);
    const patchPixels = new Float32Array(this.patchSize * this.patchSize);
    let token = 0;
    for (let py = 0; py < this.patchGrid; py++) {
      for (let px = 0; px < this.patchGrid; px++) {
        let k = 0;
        for (let y = 0; y < this.patchSize; y++) {
          for (let x = 0; x < this.patchSize; x++) {
            patchPixels[k++] =
              grid[(py * this.patchSize + y) * this.inputSize + (px * this.patchSize + x)];
          }
        }
        const projected = l2Normalize(project(patchPixels, this.wPatch, this.dim));
        patchTokens.set(projected, token * this.dim);
        token++;
      }
    }
    return { cls, patchTokens, tokenCount: this.tokenCount, dim: this.dim };
  }
}

const BACKENDS: Record<string, (options: ToyEncoderOptions) => FeatureExtractor> = {
  toy: options => new ToyPatchEncoder(options),
};

/** Model choice is configuration; unknown backends fail loudly. */
export function createExtractor(backend: string, options: ToyEncoderOptions = {}): FeatureExtractor {
  const factory = BACKENDS[backend];
  if (!factory) {
    throw new Error(`unknown extractor backend ${backend}; available: ${Object.keys(BACKENDS).join(', ')}`);
  }
  return factory(options);
}
