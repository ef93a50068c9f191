/** Text encoders: caption -> pooled sentence embedding.
 *
 * The builtin hashes unigram counts into a fixed-width vector and
 * L2-normalizes (term frequency with feature hashing). Deterministic,
 * no zero rows for nonempty text, and captions sharing words land closer
 * than unrelated ones, which is all the bridge requires of an encoder.
 */

import { tokenize } from "./captioner.js";

export interface TextEncoder {
  readonly id: string;
  readonly dim: number;
  embed(texts: string[]): Float64Array[];
}

/** FNV-1a 32-bit */
function fnv1a(text: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i);
    h = Math.imul(h, 0x01000193) >>> 0;
  }
  return h >>> 0;
}

export class HashBowEncoder implements TextEncoder {
  readonly id: string;
  readonly dim: number;

  constructor(dim = 128) {
    this.dim = dim;
    this.id = `builtin:hash-bow-${dim}`;
  }

  embedOne(text: string): Float64Array {
    const v = new Float64Array(this.dim);
    const tokens = tokenize(text);
    if (tokens.length === 0) {
      throw new Error("cannot embed empty text");
    }
    for (const tok of tokens) {
      v[fnv1a(tok) % this.dim] += 1;
    }
    let norm = 0;
    for (const x of v) norm += x * x;
    norm = Math.sqrt(norm);
    for (let i = 0; i < this.dim; i++) v[i] /= norm;
    return v;
  }

  embed(texts: string[]): Float64Array[] {
    return texts.map((t) => this.embedOne(t));
  }
}

const ENCODERS: Record<string, () => TextEncoder> = {
  "builtin:hash-bow-128": () => new HashBowEncoder(128),
  "builtin:hash-bow-256": () => new HashBowEncoder(256),
};

export function getEncoder(id: string): TextEncoder {
  const make = ENCODERS[id];
  if (!make) {
    throw new Error(`unknown text encoder '${id}' (available: ${Object.keys(ENCODERS).join(", ")})`);
  }
  return make();
}

export function cosine(a: Float64Array, b: Float64Array): number {
  let dot = 0;
  let na = 0;
  let nb = 0;
  for (let i = 0; i < a.length; i++) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / Math.sqrt(na * nb);
}
