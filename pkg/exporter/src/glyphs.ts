/**
 * Synthetic 10-class glyph dataset: simple shapes with random position,
 * scale, brightness and additive Gaussian noise, rendered at 28x28x1.
 */
import { Prng } from "./prng.js";

export const IMG = 28;
export const CLASSES = 10;

export interface GlyphDataset {
  images: Float32Array; // n * 28 * 28 * 1, row-major, values in [0, 1]
  labels: Uint16Array;
  n: number;
}

type Shape = (u: number, v: number) => boolean;

const SHAPES: Shape[] = [
  // 0: filled disc
  (u, v) => u * u + v * v <= 1,
  // 1: vertical bar
  (u, v) => Math.abs(u) <= 0.34 && Math.abs(v) <= 1,
  // 2: horizontal bar
  (u, v) => Math.abs(v) <= 0.34 && Math.abs(u) <= 1,
  // 3: plus
  (u, v) =>
    (Math.abs(u) <= 0.3 && Math.abs(v) <= 1) ||
    (Math.abs(v) <= 0.3 && Math.abs(u) <= 1),
  // 4: diagonal cross
  (u, v) =>
    Math.max(Math.abs(u), Math.abs(v)) <= 1 &&
    Math.abs(Math.abs(u) - Math.abs(v)) <= 0.3,
  // 5: square outline
  (u, v) => {
    const m = Math.max(Math.abs(u), Math.abs(v));
    return m <= 1 && m >= 0.55;
  },
  // 6: wedge
  (u, v) => v >= -1 && v <= 1 && Math.abs(u) <= (v + 1) / 2,
  // 7: 2x2 checkerboard
  (u, v) => {
    if (Math.max(Math.abs(u), Math.abs(v)) > 1) return false;
    const cu = u < 0 ? 0 : 1;
    const cv = v < 0 ? 0 : 1;
    return (cu + cv) % 2 === 0;
  },
  // 8: two discs
  (u, v) =>
    (u + 0.55) * (u + 0.55) + v * v <= 0.17 ||
    (u - 0.55) * (u - 0.55) + v * v <= 0.17,
  // 9: ring
  (u, v) => {
    const r = u * u + v * v;
    return r <= 1 && r >= 0.48;
  },
];

export function renderGlyph(
  cls: number,
  rng: Prng,
  noiseSigma = 0.15
): Float32Array {
  const img = new Float32Array(IMG * IMG);
  const cx = IMG / 2 - 0.5 + rng.uniform(-3.5, 3.5);
  const cy = IMG / 2 - 0.5 + rng.uniform(-3.5, 3.5);
  const scale = rng.uniform(5.0, 8.5);
  const amp = rng.uniform(0.55, 1.0);
  const shape = SHAPES[cls];
  for (let y = 0; y < IMG; y++) {
    for (let x = 0; x < IMG; x++) {
      const u = (x - cx) / scale;
      const v = (y - cy) / scale;
      let val = shape(u, v) ? amp : 0;
      val += noiseSigma * rng.gauss();
      img[y * IMG + x] = Math.min(1, Math.max(0, val));
    }
  }
  return img;
}

export function makeDataset(n: number, seed: number): GlyphDataset {
  const rng = new Prng(seed);
  const images = new Float32Array(n * IMG * IMG);
  const labels = new Uint16Array(n);
  for (let i = 0; i < n; i++) {
    const cls = rng.int(0, CLASSES - 1);
    labels[i] = cls;
    images.set(renderGlyph(cls, rng), i * IMG * IMG);
  }
  return { images, labels, n };
}
