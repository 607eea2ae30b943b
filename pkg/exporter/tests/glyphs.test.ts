import { describe, expect, it } from "vitest";
import { CLASSES, IMG, makeDataset, renderGlyph } from "../src/glyphs.js";
import { Prng } from "../src/prng.js";

describe("glyph dataset", () => {
  it("is deterministic for a given seed", () => {
    const a = makeDataset(50, 7);
    const b = makeDataset(50, 7);
    expect(Buffer.from(a.images.buffer).equals(Buffer.from(b.images.buffer))).toBe(true);
    expect([...a.labels]).toEqual([...b.labels]);
  });

  it("differs across seeds", () => {
    const a = makeDataset(50, 7);
    const b = makeDataset(50, 8);
    expect(Buffer.from(a.images.buffer).equals(Buffer.from(b.images.buffer))).toBe(false);
  });

  it("keeps pixels in [0, 1] and labels in range", () => {
    const ds = makeDataset(200, 3);
    for (const v of ds.images) {
      expect(v).toBeGreaterThanOrEqual(0);
      expect(v).toBeLessThanOrEqual(1);
    }
    for (const l of ds.labels) expect(l).toBeLessThan(CLASSES);
  });

  it("covers all ten classes", () => {
    const ds = makeDataset(400, 5);
    expect(new Set(ds.labels).size).toBe(CLASSES);
  });

  it("renders shapes distinguishable from noise", () => {
    // a noise-free glyph must contain a bright connected mass
    const img = renderGlyph(0, new Prng(1), 0);
    const bright = [...img].filter((v) => v > 0.5).length;
    expect(bright).toBeGreaterThan(30);
    expect(img.length).toBe(IMG * IMG);
  });
});
