/** Image decoding for the export pipeline (PNG and JPEG). */

import { readFileSync } from "node:fs";
import { PNG } from "pngjs";
import jpeg from "jpeg-js";

/** Decoded image: interleaved RGBA, 8 bits per channel. */
export interface DecodedImage {
  width: number;
  height: number;
  data: Uint8Array; // width * height * 4
}

export class ImageDecodeError extends Error {}

export function decodeImage(path: string): DecodedImage {
  let buf: Buffer;
  try {
    buf = readFileSync(path);
  } catch (e) {
    throw new ImageDecodeError(`${path}: ${(e as Error).message}`);
  }
  try {
    if (buf.length >= 8 && buf[0] === 0x89 && buf[1] === 0x50) {
      const png = PNG.sync.read(buf);
      return { width: png.width, height: png.height, data: new Uint8Array(png.data) };
    }
    if (buf.length >= 2 && buf[0] === 0xff && buf[1] === 0xd8) {
      const img = jpeg.decode(buf, { useTArray: true, maxMemoryUsageInMB: 256 });
      return { width: img.width, height: img.height, data: new Uint8Array(img.data) };
    }
  } catch (e) {
    throw new ImageDecodeError(`${path}: ${(e as Error).message}`);
  }
  throw new ImageDecodeError(`${path}: not a PNG or JPEG`);
}

/** Per-pixel luma in [0, 255]. */
export function luma(img: DecodedImage): Float64Array {
  const n = img.width * img.height;
  const out = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    const o = i * 4;
    out[i] = 0.299 * img.data[o] + 0.587 * img.data[o + 1] + 0.114 * img.data[o + 2];
  }
  return out;
}
