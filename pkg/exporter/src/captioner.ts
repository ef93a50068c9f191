/** Captioners: image -> one-sentence description.
 *
 * Model identifiers are configuration strings; any captioner meeting the
 * interface qualifies. The builtin describes measurable image statistics
 * (deterministic, so reruns reproduce captions exactly, standing in for
 * greedy decoding on a generative model).
 */

import { DecodedImage, luma } from "./images.js";

export interface Captioner {
  readonly id: string;
  caption(img: DecodedImage, prompt: string): string;
}

export interface CaptionRecord {
  imageId: string;
  caption: string;
  tokenCount: number;
}

export function tokenize(text: string): string[] {
  return text.toLowerCase().split(/[^a-z0-9]+/).filter((t) => t.length > 0);
}

const HUE_NAMES = ["red", "orange", "yellow", "green", "cyan", "blue", "purple", "magenta"];

function dominantHue(img: DecodedImage): { name: string; saturation: number } {
  const counts = new Array(HUE_NAMES.length).fill(0);
  let satSum = 0;
  const n = img.width * img.height;
  for (let i = 0; i < n; i++) {
    const o = i * 4;
    const r = img.data[o] / 255;
    const g = img.data[o + 1] / 255;
    const b = img.data[o + 2] / 255;
    const max = Math.max(r, g, b);
    const min = Math.min(r, g, b);
    const delta = max - min;
    satSum += max === 0 ? 0 : delta / max;
    if (delta < 1e-9) continue;
    let h: number;
    if (max === r) h = ((g - b) / delta + 6) % 6;
    else if (max === g) h = (b - r) / delta + 2;
    else h = (r - g) / delta + 4;
    counts[Math.floor((h / 6) * HUE_NAMES.length) % HUE_NAMES.length]++;
  }
  let best = 0;
  for (let i = 1; i < counts.length; i++) if (counts[i] > counts[best]) best = i;
  return { name: HUE_NAMES[best], saturation: satSum / n };
}

function edgeDensity(img: DecodedImage): number {
  const y = luma(img);
  let total = 0;
  let count = 0;
  for (let row = 0; row < img.height; row++) {
    for (let col = 1; col < img.width; col++) {
      total += Math.abs(y[row * img.width + col] - y[row * img.width + col - 1]);
      count++;
    }
  }
  return count === 0 ? 0 : total / count / 255;
}

/** Deterministic statistics-based captioner. Always emits exactly one
 * sentence ending in a period. */
export class StatsCaptioner implements Captioner {
  readonly id = "builtin:stats";

  caption(img: DecodedImage, _prompt: string): string {
    const y = luma(img);
    let mean = 0;
    for (const v of y) mean += v;
    mean /= y.length;
    const brightness = mean < 85 ? "dark" : mean < 170 ? "evenly lit" : "bright";
    const { name, saturation } = dominantHue(img);
    const tone = saturation < 0.25 ? "muted" : saturation < 0.6 ? "soft" : "vivid";
    const edges = edgeDensity(img);
    const texture = edges < 0.05 ? "smooth" : edges < 0.2 ? "textured" : "busy";
    const aspect = img.width > img.height * 1.2 ? "wide" :
      img.height > img.width * 1.2 ? "tall" : "square";
    return `A ${brightness} ${aspect} image with ${tone} ${name} tones and a ${texture} surface.`;
  }
}

const CAPTIONERS: Record<string, () => Captioner> = {
  "builtin:stats": () => new StatsCaptioner(),
};

export function getCaptioner(id: string): Captioner {
  const make = CAPTIONERS[id];
  if (!make) {
    throw new Error(`unknown captioner '${id}' (available: ${Object.keys(CAPTIONERS).join(", ")})`);
  }
  return make();
}
