/** Writer for the primary interchange dataset format.
 *
 * Directory layout (binary little-endian, row-major; float width per the
 * manifest's value_width):
 *   manifest.json, features.bin (n x d_img), text_embeddings.bin
 *   (n x d_text), voxels.bin (n x n_vertices), noise_ceiling.bin
 *   (n_vertices), roi_labels.bin (n_vertices, uint32).
 * File sizes must equal count * width / 8 bytes exactly.
 */

import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";

export interface Manifest {
  n_samples: number;
  d_img: number;
  d_text: number;
  n_vertices: number;
  value_width: 32 | 64;
  roi_names: string[];
  subject_id: string;
}

export class ExportValidationError extends Error {}

function floatBuffer(rows: Float64Array[], width: 32 | 64): Buffer {
  const total = rows.reduce((acc, r) => acc + r.length, 0);
  const bytes = width / 8;
  const buf = Buffer.alloc(total * bytes);
  let offset = 0;
  for (const row of rows) {
    for (const v of row) {
      if (width === 32) buf.writeFloatLE(Math.fround(v), offset);
      else buf.writeDoubleLE(v, offset);
      offset += bytes;
    }
  }
  return buf;
}

export interface DatasetArrays {
  features: Float64Array[];        // n_samples rows of d_img
  textEmbeddings: Float64Array[];  // n_samples rows of d_text
  voxels: Float64Array[];          // n_samples rows of n_vertices
  noiseCeiling: Float64Array;      // n_vertices
  roiLabels: Uint32Array;          // n_vertices
}

export function writeDataset(manifest: Manifest, arrays: DatasetArrays, outDir: string): void {
  const { n_samples, d_img, d_text, n_vertices } = manifest;
  const checks: Array<[string, number, number]> = [
    ["features", arrays.features.length, n_samples],
    ["textEmbeddings", arrays.textEmbeddings.length, n_samples],
    ["voxels", arrays.voxels.length, n_samples],
    ["noiseCeiling", arrays.noiseCeiling.length, n_vertices],
    ["roiLabels", arrays.roiLabels.length, n_vertices],
  ];
  for (const [name, actual, expected] of checks) {
    if (actual !== expected) {
      throw new ExportValidationError(`${name}: ${actual} entries, manifest says ${expected}`);
    }
  }
  const widths: Array<[string, Float64Array[], number]> = [
    ["features", arrays.features, d_img],
    ["textEmbeddings", arrays.textEmbeddings, d_text],
    ["voxels", arrays.voxels, n_vertices],
  ];
  for (const [name, rows, width] of widths) {
    for (const row of rows) {
      if (row.length !== width) {
        throw new ExportValidationError(`${name}: row of length ${row.length}, expected ${width}`);
      }
    }
  }

  mkdirSync(outDir, { recursive: true });
  const manifestDoc = {
    d_img,
    d_text,
    n_samples,
    n_vertices,
    roi_names: manifest.roi_names,
    subject_id: manifest.subject_id,
    value_width: manifest.value_width,
  };
  writeFileSync(join(outDir, "manifest.json"), JSON.stringify(manifestDoc, null, 2) + "\n");
  const w = manifest.value_width;
  writeFileSync(join(outDir, "features.bin"), floatBuffer(arrays.features, w));
  writeFileSync(join(outDir, "text_embeddings.bin"), floatBuffer(arrays.textEmbeddings, w));
  writeFileSync(join(outDir, "voxels.bin"), floatBuffer(arrays.voxels, w));
  writeFileSync(join(outDir, "noise_ceiling.bin"), floatBuffer([arrays.noiseCeiling], w));
  const labels = Buffer.alloc(arrays.roiLabels.length * 4);
  arrays.roiLabels.forEach((v, i) => labels.writeUInt32LE(v, i * 4));
  writeFileSync(join(outDir, "roi_labels.bin"), labels);
}
