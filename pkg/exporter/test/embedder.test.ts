import { describe, expect, it } from "vitest";

import { cosine, getEncoder } from "../src/embedder.js";

const PARAPHRASE_PAIRS: Array<[string, string]> = [
  ["A bright wide image with vivid red tones.", "A wide bright picture with vivid red colors."],
  ["A dark square image with muted blue tones.", "A square dark photo with muted blue shades."],
  ["A smooth surface lit evenly in green.", "An evenly lit smooth green surface."],
  ["A busy textured scene in orange light.", "An orange lit scene, busy and textured."],
  ["A tall image with soft purple tones.", "A tall picture in soft purple color."],
  ["A vivid cyan image with a smooth look.", "A smooth looking image in vivid cyan."],
  ["A dark busy photo with magenta accents.", "A busy dark image with magenta accents."],
  ["A bright yellow scene with high detail.", "A detailed bright scene in yellow."],
  ["A muted gray surface, flat and smooth.", "A flat smooth surface in muted gray."],
  ["A wide landscape view with green fields.", "A green field landscape in a wide view."],
];

const UNRELATED: Array<[string, string]> = [
  ["A bright wide image with vivid red tones.", "The printer jammed twice before lunch."],
  ["A dark square image with muted blue tones.", "Quarterly revenue exceeded projections."],
  ["A smooth surface lit evenly in green.", "He parked the truck behind the warehouse."],
  ["A busy textured scene in orange light.", "The recipe calls for two cups of flour."],
  ["A tall image with soft purple tones.", "Migration patterns shifted northward."],
  ["A vivid cyan image with a smooth look.", "Her violin needed new strings."],
  ["A dark busy photo with magenta accents.", "The committee adjourned until Thursday."],
  ["A bright yellow scene with high detail.", "Tectonic plates drift a few centimeters yearly."],
  ["A muted gray surface, flat and smooth.", "The password expires every ninety days."],
  ["A wide landscape view with green fields.", "Static electricity crackled through the blanket."],
];

describe("hash bag-of-words encoder", () => {
  const encoder = getEncoder("builtin:hash-bow-128");

  it("identical captions give identical rows", () => {
    const [a, b] = encoder.embed(["A bright wide image.", "A bright wide image."]);
    expect(Array.from(a)).toEqual(Array.from(b));
  });

  it("produces the declared shape", () => {
    const rows = encoder.embed(["one", "two", "three"]);
    expect(rows).toHaveLength(3);
    for (const row of rows) expect(row).toHaveLength(128);
  });

  it("rows are unit-norm, never zero", () => {
    const rows = encoder.embed(PARAPHRASE_PAIRS.map((p) => p[0]));
    for (const row of rows) {
      let norm = 0;
      for (const v of row) norm += v * v;
      expect(Math.sqrt(norm)).toBeCloseTo(1.0, 12);
    }
  });

  it("rejects empty text", () => {
    expect(() => encoder.embed([" ... "])).toThrow(/empty/);
  });

  it("paraphrase pairs beat unrelated pairs on the 10-pair probe set", () => {
    for (let i = 0; i < PARAPHRASE_PAIRS.length; i++) {
      const [pa, pb] = PARAPHRASE_PAIRS[i];
      const [ua, ub] = UNRELATED[i];
      const [va, vb, wa, wb] = encoder.embed([pa, pb, ua, ub]);
      expect(cosine(va, vb)).toBeGreaterThan(cosine(wa, wb));
    }
  });

  it("rejects unknown encoder ids", () => {
    expect(() => getEncoder("builtin:nope")).toThrow(/unknown text encoder/);
  });
});
