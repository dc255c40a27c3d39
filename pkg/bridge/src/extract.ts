/** Extraction jobs: template renders to a bank archive, query images to a
 * proposal file. The bridge only extracts and exports; every scoring
 * quantity (similarities, softmax, priors) lives engine-side. */

import { readdirSync, statSync } from 'fs';
import { basename, extname, join } from 'path';
import { readImage } from './ppm';
import { BankClass, embeddingToBankView, writeBankArchive } from './meb';
import { largestRegion, proposeRegions, ProposerOptions } from './proposer';
import { proposalRecord, writeProposalFile } from './proposals';
import { BankManifest, FeatureExtractor, ProposalRecord } from './types';

const IMAGE_EXTENSIONS = new Set(['.pgm', '.ppm']);

function listImages(dir: string): string[] {
  return readdirSync(dir)
    .filter(name => IMAGE_EXTENSIONS.has(extname(name).toLowerCase()))
    .sort()
    .map(name => join(dir, name));
}

export interface TemplateExtractionJob {
  /** directory of per-class subdirectories, each holding one render per view */
  rendersDir: string;
  outDir: string;
  extractor: FeatureExtractor;
  proposer?: ProposerOptions;
}

/**
 * Build an MEB v1 bank from per-class render directories.
 *
 * Each render is thresholded, the largest foreground region is masked and
 * cropped (the same preprocessing the proposal path uses), and the crop is
 * embedded as one view: a class vector plus raw patch tokens. Pooling stays
 * an engine-side concern so one export serves every pooling exponent.
 */
export function extractTemplates(job: TemplateExtractionJob): BankManifest {
  const classDirs = readdirSync(job.rendersDir)
    .filter(name => statSync(join(job.rendersDir, name)).isDirectory())
    .sort();
  if (!classDirs.length) {
    throw new Error(`no class directories under ${job.rendersDir}`);
  }
  const classes: BankClass[] = classDirs.map(classId => {
    const renders = listImages(join(job.rendersDir, classId));
    if (!renders.length) {
      throw new Error(`class ${classId} has no renders (.pgm/.ppm)`);
    }
    const views = renders.map(path => {
      const region = largestRegion(readImage(path), job.proposer);
      return embeddingToBankView(job.extractor.embed(region.crop));
    });
    return { classId, views };
  });
  return writeBankArchive(classes, job.extractor.dim, job.outDir);
}

export interface ProposalExtractionJob {
  /** query image paths; each file is one image */
  images: string[];
  outPath: string;
  extractor: FeatureExtractor;
  proposer?: ProposerOptions;
}

function imageId(path: string): string {
  return basename(path, extname(path));
}

/**
 * Extract candidate regions from query images into the proposal JSONL
 * format: detector bbox, segmenter mask, detector confidence as objectness,
 * and embeddings of the masked crop. Images with no candidates simply
 * contribute no lines; the file stays valid.
 */
export function extractProposals(job: ProposalExtractionJob): ProposalRecord[] {
  const records: ProposalRecord[] = [];
  for (const path of [...job.images].sort()) {
    const image = readImage(path);
    const id = imageId(path);
    proposeRegions(image, job.proposer).forEach((region, index) => {
      const embedding = job.extractor.embed(region.crop);
      records.push(
        proposalRecord(id, `${id}/p${String(index).padStart(3, '0')}`, region, embedding),
      );
    });
  }
  writeProposalFile(records, job.outPath);
  return records;
}
