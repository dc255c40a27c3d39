/** Binary PGM (P5) and PPM (P6) readers; color maps to Rec.601 luminance. */

import { readFileSync } from 'fs';
import { GrayImage } from './types';

function parseHeader(buf: Buffer): { magic: string; width: number; height: number; maxval: number; offset: number } {
  const fields: string[] = [];
  let pos = 0;
  while (fields.length < 4) {
    if (pos >= buf.length) {
      throw new Error('truncated netpbm header');
    }
    const ch = String.fromCharCode(buf[pos]);
    if (ch === '#') {
      while (pos < buf.length && buf[pos] !== 0x0a) pos++;
      pos++;
      continue;
    }
    if (/\s/.test(ch)) {
      pos++;
      continue;
    }
    let token = '';
    while (pos < buf.length && !/\s/.test(String.fromCharCode(buf[pos]))) {
      token += String.fromCharCode(buf[pos]);
      pos++;
    }
    fields.push(token);
  }
  pos++; // single whitespace after maxval, then raster
  const [magic, w, h, maxval] = fields;
  return {
    magic,
    width: parseInt(w, 10),
    height: parseInt(h, 10),
    maxval: parseInt(maxval, 10),
    offset: pos,
  };
}

export function decodeNetpbm(buf: Buffer): GrayImage {
  const { magic, width, height, maxval, offset } = parseHeader(buf);
  if (!Number.isFinite(width) || !Number.isFinite(height) || width < 1 || height < 1) {
    throw new Error(`invalid netpbm dimensions ${width}x${height}`);
  }
  if (maxval < 1 || maxval > 255) {
    throw new Error(`unsupported netpbm maxval ${maxval} (8-bit only)`);
  }
  const n = width * height;
  const pixels = new Float32Array(n);
  if (magic === 'P5') {
    if (buf.length < offset + n) throw new Error('truncated P5 raster');
    for (let i = 0; i < n; i++) {
      pixels[i] = buf[offset + i] / maxval;
    }
  } else if (magic === 'P6') {
    if (buf.length < offset + 3 * n) throw new Error('truncated P6 raster');
    for (let i = 0; i < n; i++) {
      const r = buf[offset + 3 * i];
      const g = buf[offset + 3 * i + 1];
      const b = buf[offset + 3 * i + 2];
      pixels[i] = (0.299 * r + 0.587 * g + 0.114 * b) / maxval;
    }
  } else {
    throw new Error(`unsupported netpbm magic ${magic} (binary P5/P6 only)`);
  }
  return { width, height, pixels };
}

export function readImage(path: string): GrayImage {
  return decodeNetpbm(readFileSync(path));
}

/** Encode a grayscale image as binary PGM (P5); used by tests and fixtures. */
export function encodePgm(image: GrayImage): Buffer {
  const header = Buffer.from(`P5\n${image.width} ${image.height}\n255\n`, 'ascii');
  const raster = Buffer.alloc(image.width * image.height);
  for (let i = 0; i < raster.length; i++) {
    raster[i] = Math.max(0, Math.min(255, Math.round(image.pixels[i] * 255)));
  }
  return Buffer.concat([header, raster]);
}
