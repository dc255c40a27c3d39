export { createExtractor, ToyPatchEncoder, resizeBilinear } from './encoder';
export { extractProposals, extractTemplates } from './extract';
export { canonicalJson, canonicalJsonLine, f32Base64, f32Bytes, writeBankArchive } from './meb';
export { decodeNetpbm, encodePgm, readImage } from './ppm';
export { proposalRecord, writeProposalFile } from './proposals';
export { largestRegion, proposeRegions } from './proposer';
export { decodeMask, encodeMask, unpackCounts } from './rle';
export * from './types';
