import { spawnSync } from "node:child_process";
import { existsSync, mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import * as tf from "@tensorflow/tfjs";
import { beforeAll, describe, expect, it } from "vitest";
import { exportBundle, predictScores, topOneAccuracy } from "../src/export.js";
import { makeDataset } from "../src/glyphs.js";
import { tiny } from "../src/models.js";
import { Prng } from "../src/prng.js";

function tinyDataset(n: number) {
  const rng = new Prng(11);
  const images = new Float32Array(n * 64);
  for (let i = 0; i < images.length; i++) images[i] = rng.next();
  const labels = new Uint16Array(n);
  for (let i = 0; i < n; i++) labels[i] = rng.int(0, 2);
  return { images, labels, n };
}

let outDir: string;
let model: tf.LayersModel;

beforeAll(async () => {
  await tf.ready();
  model = tiny(3);
  outDir = mkdtempSync(join(tmpdir(), "fxq-bundle-"));
  exportBundle(model, tinyDataset(40), outDir, { name: "tiny", seed: 3, classes: 3 });
});

describe("exportBundle", () => {
  it("writes the five bundle files", () => {
    for (const name of [
      "model.json",
      "weights.bin",
      "dataset.fxqd",
      "reference.fxqr",
      "metadata.json",
    ]) {
      expect(existsSync(join(outDir, name)), name).toBe(true);
    }
  });

  it("manifest indexes every referenced tensor inside the blob", () => {
    const manifest = JSON.parse(readFileSync(join(outDir, "model.json"), "utf-8"));
    expect(manifest.format).toBe("fxq-model");
    const blobSize = readFileSync(join(outDir, "weights.bin")).length;
    for (const [name, entry] of Object.entries<any>(manifest.tensors)) {
      const count = entry.shape.reduce((a: number, b: number) => a * b, 1);
      expect(entry.offset + 4 * count, name).toBeLessThanOrEqual(blobSize);
    }
  });

  it("reference scores reproduce a fresh prediction on the same weights", () => {
    const ds = tinyDataset(40);
    const fresh = predictScores(model, ds.images, ds.n, 8, 8, 1);
    const raw = readFileSync(join(outDir, "reference.fxqr"));
    expect(raw.toString("ascii", 0, 4)).toBe("FXQR");
    const stored = new Float32Array(
      raw.buffer.slice(raw.byteOffset + 44, raw.byteOffset + 44 + 4 * fresh.length)
    );
    expect([...stored]).toEqual([...fresh]);
  });

  it("metadata carries a0 and the quantizable layer count", () => {
    const meta = JSON.parse(readFileSync(join(outDir, "metadata.json"), "utf-8"));
    const ds = tinyDataset(40);
    const scores = predictScores(model, ds.images, ds.n, 8, 8, 1);
    expect(meta.a0).toBeCloseTo(topOneAccuracy(scores, ds.labels, 3), 12);
    expect(meta.quantizable_layers).toBe(2);
    expect(meta.input_shape).toEqual([8, 8, 1]);
  });
});

const pythonOk =
  spawnSync("python3", ["-c", "import fxq"], { encoding: "utf-8" }).status === 0;

describe.skipIf(!pythonOk)("primary engine consumes the bundle", () => {
  it("fxq eval reports the metadata accuracy through the CLI", () => {
    const meta = JSON.parse(readFileSync(join(outDir, "metadata.json"), "utf-8"));
    const result = spawnSync(
      "python3",
      [
        "-c",
        "import sys; from fxq.cli import main; sys.exit(main(sys.argv[1:]))",
        "eval",
        "--model",
        join(outDir, "model.json"),
        "--data",
        join(outDir, "dataset.fxqd"),
      ],
      { encoding: "utf-8" }
    );
    expect(result.status).toBe(0);
    const match = result.stdout.match(/accuracy = ([0-9.]+)/);
    expect(match).not.toBeNull();
    expect(Number(match![1])).toBeCloseTo(meta.a0, 4);
  });
});

describe("glyph bundle export", () => {
  it("round-trips a small glyph batch end to end", async () => {
    const ds = makeDataset(30, 21);
    const m = (await import("../src/models.js")).sequential15(2);
    const dir = mkdtempSync(join(tmpdir(), "fxq-seq-"));
    const meta = exportBundle(m, ds, dir, { name: "seq", seed: 2 });
    expect(meta.quantizable_layers).toBe(15);
    expect(meta.n_test).toBe(30);
    expect(meta.a0).toBeGreaterThan(0);
  });
});
