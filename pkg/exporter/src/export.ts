/** Export job orchestration: decode -> caption -> embed -> features ->
 * interchange directory + captions.txt sidecar.
 *
 * Undecodable images produce an error record and the job continues; the
 * interchange rows carry only the successfully processed images, in input
 * order. With no measured responses the voxel block is a placeholder:
 * zeros with noise ceiling 0 (evaluation downstream refuses such a
 * dataset loudly, which is the intended behavior). The absent-with-flag
 * policy writes the same zeros plus a voxels_absent.flag marker file so
 * the directory still satisfies the interchange contract.
 */

import { writeFileSync } from "node:fs";
import { join } from "node:path";

import { CaptionRecord, getCaptioner } from "./captioner.js";
import { getEncoder } from "./embedder.js";
import { getBackbone } from "./features.js";
import { decodeImage, DecodedImage, ImageDecodeError } from "./images.js";
import { writeDataset } from "./interchange.js";
import { tokenize } from "./captioner.js";

export type VoxelPolicy = "zeros" | "absent-with-flag";

export interface ExportJob {
  imagePaths: string[];
  prompt: string;
  captionerId: string;
  textEncoderId: string;
  visionBackboneId: string;
  outPath: string;
  batchSize: number;
  nVertices: number;
  valueWidth: 32 | 64;
  voxelPolicy: VoxelPolicy;
}

export const DEFAULT_PROMPT = "Describe this image in one sentence";

export function defaultJob(imagePaths: string[], outPath: string): ExportJob {
  return {
    imagePaths,
    prompt: DEFAULT_PROMPT,
    captionerId: "builtin:stats",
    textEncoderId: "builtin:hash-bow-128",
    visionBackboneId: "builtin:stats-64",
    outPath,
    batchSize: 16,
    nVertices: 8,
    valueWidth: 32,
    voxelPolicy: "zeros",
  };
}

export interface ImageError {
  imageId: string;
  message: string;
}

export interface ExportResult {
  captions: CaptionRecord[];
  errors: ImageError[];
  nExported: number;
}

export function captionImages(
  job: ExportJob,
  decoded?: Map<string, DecodedImage>,
): { records: CaptionRecord[]; errors: ImageError[] } {
  if (job.imagePaths.length === 0) {
    throw new Error("export job has no images");
  }
  const captioner = getCaptioner(job.captionerId);
  const records: CaptionRecord[] = [];
  const errors: ImageError[] = [];
  for (const path of job.imagePaths) {
    try {
      const img = decodeImage(path);
      decoded?.set(path, img);
      const caption = captioner.caption(img, job.prompt);
      if (caption.length === 0) {
        throw new Error("captioner produced empty text");
      }
      records.push({ imageId: path, caption, tokenCount: tokenize(caption).length });
    } catch (e) {
      if (e instanceof ImageDecodeError) {
        errors.push({ imageId: path, message: e.message });
      } else {
        throw e;
      }
    }
  }
  return { records, errors };
}

export function runExport(job: ExportJob): ExportResult {
  const decoded = new Map<string, DecodedImage>();
  const { records, errors } = captionImages(job, decoded);
  if (records.length === 0) {
    throw new Error("no image could be decoded");
  }

  const encoder = getEncoder(job.textEncoderId);
  const backbone = getBackbone(job.visionBackboneId);

  const embeddings: Float64Array[] = [];
  for (let start = 0; start < records.length; start += job.batchSize) {
    const batch = records.slice(start, start + job.batchSize).map((r) => r.caption);
    embeddings.push(...encoder.embed(batch));
  }
  const features = records.map((r) => backbone.extract(decoded.get(r.imageId)!));

  const n = records.length;
  const voxels = Array.from({ length: n }, () => new Float64Array(job.nVertices));
  const noiseCeiling = new Float64Array(job.nVertices); // all zero: nothing measured
  const roiLabels = new Uint32Array(job.nVertices);     // all "unknown"

  writeDataset(
    {
      n_samples: n,
      d_img: backbone.dim,
      d_text: encoder.dim,
      n_vertices: job.nVertices,
      value_width: job.valueWidth,
      roi_names: ["unknown"],
      subject_id: "export",
    },
    { features, textEmbeddings: embeddings, voxels, noiseCeiling, roiLabels },
    job.outPath,
  );
  if (job.voxelPolicy === "absent-with-flag") {
    writeFileSync(join(job.outPath, "voxels_absent.flag"),
      "voxel targets are placeholders; no fMRI was measured\n");
  }
  writeFileSync(
    join(job.outPath, "captions.txt"),
    records.map((r) => r.caption).join("\n") + "\n",
    { encoding: "utf-8" },
  );
  return { captions: records, errors, nExported: n };
}
