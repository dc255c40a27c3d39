/** MEB v1 bank archive writer: manifest.json plus raw little-endian float32
 * blobs, built in a temp directory and renamed into place. */

import { mkdirSync, renameSync, rmSync, writeFileSync } from 'fs';
import { dirname, join } from 'path';
import { BankManifest, CropEmbedding } from './types';

export function f32Bytes(values: Float32Array): Buffer {
  const buf = Buffer.alloc(values.length * 4);
  for (let i = 0; i < values.length; i++) {
    buf.writeFloatLE(values[i], i * 4);
  }
  return buf;
}

export function f32Base64(values: Float32Array): string {
  return f32Bytes(values).toString('base64');
}

function sortKeysDeep(v: unknown): unknown {
  if (Array.isArray(v)) return v.map(sortKeysDeep);
  if (v && typeof v === 'object') {
    const entries = Object.entries(v as Record<string, unknown>).sort(([a], [b]) =>
      a < b ? -1 : a > b ? 1 : 0,
    );
    return Object.fromEntries(entries.map(([k, val]) => [k, sortKeysDeep(val)]));
  }
  return v;
}

/** JSON with recursively sorted keys, two-space indent, trailing newline. */
export function canonicalJson(value: unknown): string {
  return JSON.stringify(sortKeysDeep(value), null, 2) + '\n';
}

/** Single-line JSON with recursively sorted keys (for JSONL records). */
export function canonicalJsonLine(value: unknown): string {
  return JSON.stringify(sortKeysDeep(value));
}

export interface BankView {
  cls: Float32Array;
  patchTokens: Float32Array;
  tokenCount: number;
}

export interface BankClass {
  classId: string;
  views: BankView[];
}

export function writeBankArchive(classes: BankClass[], dim: number, outDir: string): BankManifest {
  const tmp = `${outDir}.tmp-${process.pid}`;
  rmSync(tmp, { recursive: true, force: true });
  mkdirSync(join(tmp, 'blobs'), { recursive: true });

  const manifest: BankManifest = {
    format_version: 1,
    dim,
    pooled: false,
    pooled_exponent: null,
    metric_hint: null,
    classes: [],
  };
  classes.forEach((cls, ci) => {
    const views = cls.views.map((view, vi) => {
      if (view.cls.length !== dim) {
        throw new Error(
          `class ${cls.classId} view ${vi}: cls embedding has dim ${view.cls.length}, expected ${dim}`,
        );
      }
      if (view.patchTokens.length !== view.tokenCount * dim) {
        throw new Error(
          `class ${cls.classId} view ${vi}: token matrix has ${view.patchTokens.length} values, ` +
            `expected ${view.tokenCount} x ${dim}`,
        );
      }
      const clsRef = `blobs/c${String(ci).padStart(4, '0')}_v${String(vi).padStart(4, '0')}_cls.f32`;
      const patchRef = `blobs/c${String(ci).padStart(4, '0')}_v${String(vi).padStart(4, '0')}_patch.f32`;
      writeFileSync(join(tmp, clsRef), f32Bytes(view.cls));
      writeFileSync(join(tmp, patchRef), f32Bytes(view.patchTokens));
      return { cls: clsRef, patch: patchRef, patch_tokens: view.tokenCount };
    });
    manifest.classes.push({ class_id: cls.classId, views });
  });
  writeFileSync(join(tmp, 'manifest.json'), canonicalJson(manifest));

  rmSync(outDir, { recursive: true, force: true });
  mkdirSync(dirname(outDir), { recursive: true });
  renameSync(tmp, outDir);
  return manifest;
}

export function embeddingToBankView(e: CropEmbedding): BankView {
  return { cls: e.cls, patchTokens: e.patchTokens, tokenCount: e.tokenCount };
}
