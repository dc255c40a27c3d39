/** Proposal JSONL writer in the engine's wire format (one sorted-key JSON
 * object per line, inline base64 float32 embeddings, atomic rename). */

import { renameSync, writeFileSync } from 'fs';
import { canonicalJsonLine, f32Base64 } from './meb';
import { CropEmbedding, ProposalRecord, RegionProposal, RleMask } from './types';

export function proposalRecord(
  imageId: string,
  proposalId: string,
  region: { bbox: [number, number, number, number]; objectness: number; mask: RleMask | null },
  embedding: CropEmbedding,
): ProposalRecord {
  if (!(region.objectness >= 0 && region.objectness <= 1)) {
    throw new Error(`objectness must be in [0, 1], got ${region.objectness}`);
  }
  return {
    image_id: imageId,
    proposal_id: proposalId,
    bbox: region.bbox,
    objectness: region.objectness,
    mask: region.mask,
    cls: { b64: f32Base64(embedding.cls) },
    patch: { b64: f32Base64(embedding.patchTokens), tokens: embedding.tokenCount },
  };
}

export function writeProposalFile(records: ProposalRecord[], outPath: string): void {
  const lines = records.map(canonicalJsonLine);
  const body = lines.length ? lines.join('\n') + '\n' : '';
  const tmp = `${outPath}.tmp-${process.pid}`;
  writeFileSync(tmp, body);
  renameSync(tmp, outPath);
}

export { RegionProposal };
