/** Shared data shapes for the bridge's exports. */

/** Grayscale image, values in [0, 1], row-major. */
export interface GrayImage {
  width: number;
  height: number;
  pixels: Float32Array;
}

/** COCO-convention run-length encoded binary mask. */
export interface RleMask {
  /** [height, width] of the canvas */
  size: [number, number];
  counts: string;
}

/** One extracted object candidate before embedding. */
export interface RegionProposal {
  bbox: [number, number, number, number];
  /** detector confidence in [0, 1] */
  objectness: number;
  mask: RleMask;
  /** masked crop of the source image (background zeroed inside the bbox) */
  crop: GrayImage;
}

/** Embeddings for one crop: a global vector plus raw patch tokens. */
export interface CropEmbedding {
  cls: Float32Array;
  /** tokenCount x dim, row-major */
  patchTokens: Float32Array;
  tokenCount: number;
  dim: number;
}

/**
 * Pluggable feature extractor. The bridge treats model choice as
 * configuration; any backend that maps a crop to (cls, patch tokens) with a
 * fixed dimension slots in here.
 */
export interface FeatureExtractor {
  readonly name: string;
  readonly dim: number;
  readonly tokenCount: number;
  embed(crop: GrayImage): CropEmbedding;
}

export interface BankViewEntry {
  cls: string;
  patch: string;
  patch_tokens: number;
}

export interface BankClassEntry {
  class_id: string;
  views: BankViewEntry[];
}

/** MEB v1 manifest: the engine's bank archive format. */
export interface BankManifest {
  format_version: 1;
  dim: number;
  pooled: false;
  pooled_exponent: null;
  metric_hint: string | null;
  classes: BankClassEntry[];
}

/** One line of the engine's proposal JSONL format. */
export interface ProposalRecord {
  image_id: string;
  proposal_id: string;
  bbox: [number, number, number, number];
  objectness: number;
  mask: RleMask | null;
  cls: { b64: string };
  patch: { b64: string; tokens: number };
}
