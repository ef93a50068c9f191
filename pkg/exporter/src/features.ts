/** Vision backbones: image -> feature vector.
 *
 * The builtin packs color histograms, luma statistics, gradient energy,
 * geometry, and a coarse 5x4 luma grid into 64 dimensions. Deterministic
 * per image; identifiers are configuration strings like the captioner's.
 */

import { DecodedImage, luma } from "./images.js";

export interface VisionBackbone {
  readonly id: string;
  readonly dim: number;
  extract(img: DecodedImage): Float64Array;
}

export class StatsBackbone implements VisionBackbone {
  readonly id = "builtin:stats-64";
  readonly dim = 64;

  extract(img: DecodedImage): Float64Array {
    const out = new Float64Array(this.dim);
    const n = img.width * img.height;
    let k = 0;

    // 8-bucket histogram per RGB channel (24)
    for (let ch = 0; ch < 3; ch++) {
      const hist = new Float64Array(8);
      for (let i = 0; i < n; i++) {
        hist[Math.min(7, img.data[i * 4 + ch] >> 5)]++;
      }
      for (let b = 0; b < 8; b++) out[k++] = hist[b] / n;
    }

    // 8-bucket luma histogram (8)
    const y = luma(img);
    const yhist = new Float64Array(8);
    for (let i = 0; i < n; i++) yhist[Math.min(7, Math.floor(y[i] / 32))]++;
    for (let b = 0; b < 8; b++) out[k++] = yhist[b] / n;

    // per-channel mean and std (6)
    for (let ch = 0; ch < 3; ch++) {
      let mean = 0;
      for (let i = 0; i < n; i++) mean += img.data[i * 4 + ch];
      mean /= n;
      let varsum = 0;
      for (let i = 0; i < n; i++) {
        const d = img.data[i * 4 + ch] - mean;
        varsum += d * d;
      }
      out[k++] = mean / 255;
      out[k++] = Math.sqrt(varsum / n) / 255;
    }

    // horizontal/vertical gradient energy, mean and max (4)
    let hSum = 0, hMax = 0, vSum = 0, vMax = 0;
    for (let r = 0; r < img.height; r++) {
      for (let c = 1; c < img.width; c++) {
        const d = Math.abs(y[r * img.width + c] - y[r * img.width + c - 1]);
        hSum += d;
        if (d > hMax) hMax = d;
      }
    }
    for (let r = 1; r < img.height; r++) {
      for (let c = 0; c < img.width; c++) {
        const d = Math.abs(y[r * img.width + c] - y[(r - 1) * img.width + c]);
        vSum += d;
        if (d > vMax) vMax = d;
      }
    }
    const hCount = Math.max(1, img.height * (img.width - 1));
    const vCount = Math.max(1, (img.height - 1) * img.width);
    out[k++] = hSum / hCount / 255;
    out[k++] = hMax / 255;
    out[k++] = vSum / vCount / 255;
    out[k++] = vMax / 255;

    // geometry (2)
    out[k++] = img.width / (img.width + img.height);
    out[k++] = Math.log1p(n) / 20;

    // coarse 5x4 luma grid means (20)
    const gw = 5, gh = 4;
    for (let gy = 0; gy < gh; gy++) {
      for (let gx = 0; gx < gw; gx++) {
        const c0 = Math.floor((gx * img.width) / gw);
        const c1 = Math.max(c0 + 1, Math.floor(((gx + 1) * img.width) / gw));
        const r0 = Math.floor((gy * img.height) / gh);
        const r1 = Math.max(r0 + 1, Math.floor(((gy + 1) * img.height) / gh));
        let sum = 0, cnt = 0;
        for (let r = r0; r < r1 && r < img.height; r++) {
          for (let c = c0; c < c1 && c < img.width; c++) {
            sum += y[r * img.width + c];
            cnt++;
          }
        }
        out[k++] = cnt === 0 ? 0 : sum / cnt / 255;
      }
    }
    return out;
  }
}

const BACKBONES: Record<string, () => VisionBackbone> = {
  "builtin:stats-64": () => new StatsBackbone(),
};

export function getBackbone(id: string): VisionBackbone {
  const make = BACKBONES[id];
  if (!make) {
    throw new Error(`unknown vision backbone '${id}' (available: ${Object.keys(BACKBONES).join(", ")})`);
  }
  return make();
}
