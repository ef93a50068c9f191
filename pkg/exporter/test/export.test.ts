import { existsSync, mkdtempSync, readFileSync, statSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { main } from "../src/cli.js";
import { defaultJob, runExport } from "../src/export.js";
import { getBackbone } from "../src/features.js";
import { decodeImage } from "../src/images.js";
import { ExportValidationError, writeDataset } from "../src/interchange.js";
import { tempImageSet } from "./helpers.js";

function outDir(): string {
  return mkdtempSync(join(tmpdir(), "exporter-out-"));
}

describe("runExport", () => {
  it("writes files whose sizes match the manifest arithmetic", () => {
    const { paths } = tempImageSet(6, 21);
    const out = outDir();
    const job = defaultJob(paths, out);
    runExport(job);
    const manifest = JSON.parse(readFileSync(join(out, "manifest.json"), "utf-8"));
    expect(manifest.n_samples).toBe(6);
    expect(manifest.value_width).toBe(32);
    const bytes = manifest.value_width / 8;
    expect(statSync(join(out, "features.bin")).size)
      .toBe(manifest.n_samples * manifest.d_img * bytes);
    expect(statSync(join(out, "text_embeddings.bin")).size)
      .toBe(manifest.n_samples * manifest.d_text * bytes);
    expect(statSync(join(out, "voxels.bin")).size)
      .toBe(manifest.n_samples * manifest.n_vertices * bytes);
    expect(statSync(join(out, "noise_ceiling.bin")).size)
      .toBe(manifest.n_vertices * bytes);
    expect(statSync(join(out, "roi_labels.bin")).size).toBe(manifest.n_vertices * 4);
  });

  it("zeros policy leaves the noise ceiling all zero", () => {
    const { paths } = tempImageSet(3, 22);
    const out = outDir();
    runExport(defaultJob(paths, out));
    const nc = readFileSync(join(out, "noise_ceiling.bin"));
    for (let i = 0; i < nc.length; i += 4) {
      expect(nc.readFloatLE(i)).toBe(0);
    }
  });

  it("absent-with-flag policy adds the marker file", () => {
    const { paths } = tempImageSet(2, 23);
    const out = outDir();
    const job = defaultJob(paths, out);
    job.voxelPolicy = "absent-with-flag";
    runExport(job);
    expect(existsSync(join(out, "voxels_absent.flag"))).toBe(true);
  });

  it("row order matches image list order", () => {
    const { paths } = tempImageSet(5, 24);
    const out = outDir();
    const job = defaultJob(paths, out);
    job.valueWidth = 64;
    runExport(job);
    const backbone = getBackbone(job.visionBackboneId);
    const raw = readFileSync(join(out, "features.bin"));
    for (let i = 0; i < paths.length; i++) {
      const expected = backbone.extract(decodeImage(paths[i]));
      for (let j = 0; j < backbone.dim; j++) {
        expect(raw.readDoubleLE((i * backbone.dim + j) * 8)).toBe(expected[j]);
      }
    }
  });

  it("writes one caption line per exported image", () => {
    const { paths } = tempImageSet(4, 25);
    const out = outDir();
    runExport(defaultJob(paths, out));
    const lines = readFileSync(join(out, "captions.txt"), "utf-8").trim().split("\n");
    expect(lines).toHaveLength(4);
  });

  it("skips undecodable images but keeps exporting", () => {
    const { dir, paths } = tempImageSet(3, 26);
    const bad = join(dir, "bad.png");
    writeFileSync(bad, "nope");
    const out = outDir();
    const result = runExport(defaultJob([...paths, bad], out));
    expect(result.nExported).toBe(3);
    expect(result.errors).toHaveLength(1);
    const manifest = JSON.parse(readFileSync(join(out, "manifest.json"), "utf-8"));
    expect(manifest.n_samples).toBe(3);
  });
});

describe("writeDataset validation", () => {
  it("rejects row-count mismatches", () => {
    expect(() =>
      writeDataset(
        {
          n_samples: 2, d_img: 3, d_text: 2, n_vertices: 2,
          value_width: 32, roi_names: ["unknown"], subject_id: "x",
        },
        {
          features: [new Float64Array(3)],
          textEmbeddings: [new Float64Array(2), new Float64Array(2)],
          voxels: [new Float64Array(2), new Float64Array(2)],
          noiseCeiling: new Float64Array(2),
          roiLabels: new Uint32Array(2),
        },
        outDir(),
      ),
    ).toThrow(ExportValidationError);
  });
});

describe("cli", () => {
  it("exports via a listing file", () => {
    const { dir, paths } = tempImageSet(3, 27);
    const listing = join(dir, "list.txt");
    writeFileSync(listing, paths.join("\n") + "\n");
    const out = outDir();
    expect(main(["export", "--images", listing, "--out", out])).toBe(0);
    expect(existsSync(join(out, "manifest.json"))).toBe(true);
  });

  it("usage errors exit 2", () => {
    expect(main([])).toBe(2);
    expect(main(["export"])).toBe(2);
    expect(main(["export", "--out", outDir(), "--bogus", "1", "x.png"])).toBe(2);
    expect(main(["frobnicate"])).toBe(2);
  });

  it("missing listing file exits 1", () => {
    expect(main(["export", "--images", "/nonexistent/list.txt", "--out", outDir()])).toBe(1);
  });
});
