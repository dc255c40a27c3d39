/** COCO-convention run-length encoding: column-major runs starting with a
 * zero count, difference coding from the fourth count, 5-bit chunks with a
 * continuation bit offset by 48. Matches the engine's mask codec. */

import { RleMask } from './types';

function packCounts(counts: number[]): string {
  const chars: string[] = [];
  for (let i = 0; i < counts.length; i++) {
    let x = counts[i];
    if (i > 2) {
      x -= counts[i - 2];
    }
    let more = true;
    while (more) {
      let piece = x & 0x1f;
      x >>= 5;
      more = piece & 0x10 ? x !== -1 : x !== 0;
      if (more) {
        piece |= 0x20;
      }
      chars.push(String.fromCharCode(piece + 48));
    }
  }
  return chars.join('');
}

/**
 * Encode a binary mask given as a row-major flag array on a height x width
 * canvas. Runs are taken in column-major order.
 */
export function encodeMask(flags: Uint8Array, height: number, width: number): RleMask {
  if (flags.length !== height * width) {
    throw new Error(`mask has ${flags.length} entries, canvas is ${height}x${width}`);
  }
  const counts: number[] = [];
  let current = 0;
  let run = 0;
  for (let x = 0; x < width; x++) {
    for (let y = 0; y < height; y++) {
      const v = flags[y * width + x] ? 1 : 0;
      if (v === current) {
        run++;
      } else {
        counts.push(run);
        current = v;
        run = 1;
      }
    }
  }
  counts.push(run);
  return { size: [height, width], counts: packCounts(counts) };
}

export function unpackCounts(s: string): number[] {
  const counts: number[] = [];
  let p = 0;
  while (p < s.length) {
    let x = 0;
    let k = 0;
    let more = true;
    while (more) {
      if (p >= s.length) throw new Error('truncated run-length string');
      const c = s.charCodeAt(p) - 48;
      if (c < 0 || c > 63) throw new Error(`invalid run-length character at ${p}`);
      x |= (c & 0x1f) << (5 * k);
      more = (c & 0x20) !== 0;
      p++;
      k++;
      if (!more && c & 0x10) {
        x |= -1 << (5 * k);
      }
    }
    if (counts.length > 2) {
      x += counts[counts.length - 2];
    }
    counts.push(x);
  }
  return counts;
}

/** Decode back to a row-major flag array; inverse of encodeMask. */
export function decodeMask(mask: RleMask): Uint8Array {
  const [height, width] = mask.size;
  const counts = unpackCounts(mask.counts);
  const total = counts.reduce((a, b) => a + b, 0);
  if (total !== height * width) {
    throw new Error(`run lengths cover ${total} pixels, canvas has ${height * width}`);
  }
  const flags = new Uint8Array(height * width);
  let value = 0;
  let idx = 0;
  for (const count of counts) {
    for (let i = 0; i < count; i++) {
      const x = Math.floor(idx / height);
      const y = idx % height;
      flags[y * width + x] = value;
      idx++;
    }
    value = 1 - value;
  }
  return flags;
}
