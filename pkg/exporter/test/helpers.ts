import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { PNG } from "pngjs";

/** mulberry32: tiny deterministic PRNG for test images. */
export function rng(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function makePng(width: number, height: number, next: () => number): Buffer {
  const png = new PNG({ width, height });
  for (let i = 0; i < width * height; i++) {
    png.data[i * 4] = Math.floor(next() * 256);
    png.data[i * 4 + 1] = Math.floor(next() * 256);
    png.data[i * 4 + 2] = Math.floor(next() * 256);
    png.data[i * 4 + 3] = 255;
  }
  return PNG.sync.write(png);
}

export function tempImageSet(count: number, seed = 1): { dir: string; paths: string[] } {
  const dir = mkdtempSync(join(tmpdir(), "exporter-test-"));
  const next = rng(seed);
  const paths: string[] = [];
  for (let i = 0; i < count; i++) {
    const w = 16 + Math.floor(next() * 24);
    const h = 16 + Math.floor(next() * 24);
    const path = join(dir, `img_${String(i).padStart(2, "0")}.png`);
    writeFileSync(path, makePng(w, h, next));
    paths.push(path);
  }
  return { dir, paths };
}
