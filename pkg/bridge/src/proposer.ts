/** Threshold + flood-fill proposal generator.
 *
 * A deterministic stand-in for a detector + segmenter cascade: connected
 * bright regions become candidates, the component bitmap is the mask, and
 * the confidence is a fill-ratio x brightness heuristic in [0, 1]. The
 * masked crop (background zeroed inside the bbox) is what gets embedded.
 */

import { encodeMask } from './rle';
import { GrayImage, RegionProposal } from './types';

export interface ProposerOptions {
  /** foreground threshold on [0, 1] intensities (default 0.5) */
  threshold?: number;
  /** discard components smaller than this many pixels (default 4) */
  minArea?: number;
}

interface Component {
  pixels: number[];
  minX: number;
  minY: number;
  maxX: number;
  maxY: number;
  intensitySum: number;
}

function findComponents(image: GrayImage, threshold: number): Component[] {
  const { width, height, pixels } = image;
  const visited = new Uint8Array(width * height);
  const components: Component[] = [];
  const stack: number[] = [];
  for (let start = 0; start < pixels.length; start++) {
    if (visited[start] || pixels[start] < threshold) continue;
    const comp: Component = {
      pixels: [],
      minX: width,
      minY: height,
      maxX: -1,
      maxY: -1,
      intensitySum: 0,
    };
    stack.push(start);
    visited[start] = 1;
    while (stack.length) {
      const idx = stack.pop() as number;
      const x = idx % width;
      const y = Math.floor(idx / width);
      comp.pixels.push(idx);
      comp.intensitySum += pixels[idx];
      if (x < comp.minX) comp.minX = x;
      if (y < comp.minY) comp.minY = y;
      if (x > comp.maxX) comp.maxX = x;
      if (y > comp.maxY) comp.maxY = y;
      const neighbors = [idx - 1, idx + 1, idx - width, idx + width];
      for (const n of neighbors) {
        if (n < 0 || n >= pixels.length) continue;
        if (n === idx - 1 && x === 0) continue;
        if (n === idx + 1 && x === width - 1) continue;
        if (!visited[n] && pixels[n] >= threshold) {
          visited[n] = 1;
          stack.push(n);
        }
      }
    }
    components.push(comp);
  }
  return components;
}

function maskedCrop(image: GrayImage, comp: Component, member: Uint8Array): GrayImage {
  const w = comp.maxX - comp.minX + 1;
  const h = comp.maxY - comp.minY + 1;
  const crop = new Float32Array(w * h);
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      const src = (comp.minY + y) * image.width + (comp.minX + x);
      crop[y * w + x] = member[src] ? image.pixels[src] : 0;
    }
  }
  return { width: w, height: h, pixels: crop };
}

/** Candidates in scan order (deterministic for a given image). */
export function proposeRegions(image: GrayImage, options: ProposerOptions = {}): RegionProposal[] {
  const threshold = options.threshold ?? 0.5;
  const minArea = options.minArea ?? 4;
  if (!(threshold >= 0 && threshold <= 1)) {
    throw new Error(`threshold must be in [0, 1], got ${threshold}`);
  }
  const proposals: RegionProposal[] = [];
  for (const comp of findComponents(image, threshold)) {
    if (comp.pixels.length < minArea) continue;
    const member = new Uint8Array(image.width * image.height);
    for (const idx of comp.pixels) member[idx] = 1;
    const w = comp.maxX - comp.minX + 1;
    const h = comp.maxY - comp.minY + 1;
    const fill = comp.pixels.length / (w * h);
    const meanIntensity = comp.intensitySum / comp.pixels.length;
    const objectness = Math.max(0, Math.min(1, fill * meanIntensity));
    proposals.push({
      bbox: [comp.minX, comp.minY, w, h],
      objectness,
      mask: encodeMask(member, image.height, image.width),
      crop: maskedCrop(image, comp, member),
    });
  }
  return proposals;
}

/** The single largest foreground region, for clean template renders. */
export function largestRegion(image: GrayImage, options: ProposerOptions = {}): RegionProposal {
  const proposals = proposeRegions(image, options);
  if (!proposals.length) {
    throw new Error('no foreground region found in template render');
  }
  return proposals.reduce((best, p) =>
    p.bbox[2] * p.bbox[3] > best.bbox[2] * best.bbox[3] ? p : best,
  );
}
