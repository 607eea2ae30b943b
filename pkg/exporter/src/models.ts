/**
 * Fixture architectures: a 15-layer sequential CNN (14 conv + 1 dense) and
 * a 23-layer branched CNN (22 conv + 1 dense) with concat blocks and one
 * residual add.  All initializers are seeded for reproducible builds.
 */
import * as tf from "@tensorflow/tfjs";

type Sym = tf.SymbolicTensor;

class SeedPool {
  constructor(private seed: number) {}
  next(): number {
    return this.seed++;
  }
}

function conv(
  x: Sym,
  name: string,
  filters: number,
  seeds: SeedPool,
  opts: { strides?: number; kernel?: number } = {}
): Sym {
  return tf.layers
    .conv2d({
      name,
      filters,
      kernelSize: opts.kernel ?? 3,
      strides: opts.strides ?? 1,
      padding: "same",
      activation: "linear",
      kernelInitializer: tf.initializers.heNormal({ seed: seeds.next() }),
    })
    .apply(x) as Sym;
}

function bnRelu(x: Sym, name: string): Sym {
  const y = tf.layers.batchNormalization({ name: `${name}_bn` }).apply(x) as Sym;
  return tf.layers.reLU({ name: `${name}_relu` }).apply(y) as Sym;
}

function convBlock(
  x: Sym,
  name: string,
  filters: number,
  seeds: SeedPool,
  opts: { strides?: number; kernel?: number } = {}
): Sym {
  return bnRelu(conv(x, name, filters, seeds, opts), name);
}

export function sequential15(seed = 1): tf.LayersModel {
  const seeds = new SeedPool(seed * 1000);
  const input = tf.input({ shape: [28, 28, 1], name: "img" });
  let x = convBlock(input, "c1", 6, seeds, { strides: 2 }); // 14x14
  x = convBlock(x, "c2", 6, seeds);
  x = tf.layers.maxPooling2d({ name: "p1", poolSize: 2, strides: 2 }).apply(x) as Sym; // 7x7
  for (let i = 3; i <= 9; i++) {
    x = convBlock(x, `c${i}`, 6, seeds);
  }
  x = tf.layers.avgPooling2d({ name: "p2", poolSize: 2, strides: 2 }).apply(x) as Sym; // 3x3
  for (let i = 10; i <= 14; i++) {
    x = convBlock(x, `c${i}`, 6, seeds);
  }
  x = tf.layers.dropout({ name: "drop", rate: 0.15 }).apply(x) as Sym;
  x = tf.layers.flatten({ name: "flat" }).apply(x) as Sym;
  x = tf.layers
    .dense({
      name: "fc",
      units: 10,
      activation: "linear",
      kernelInitializer: tf.initializers.heNormal({ seed: seeds.next() }),
    })
    .apply(x) as Sym;
  const out = tf.layers.softmax({ name: "probs" }).apply(x) as Sym;
  return tf.model({ inputs: input, outputs: out, name: "glyphs-seq15" });
}

function inceptionBlock(x: Sym, name: string, seeds: SeedPool): Sym {
  const b1 = convBlock(x, `${name}_1x1`, 3, seeds, { kernel: 1 });
  const r = convBlock(x, `${name}_r1`, 2, seeds, { kernel: 1 });
  const b2 = convBlock(r, `${name}_3x3`, 3, seeds);
  const pooled = tf.layers
    .maxPooling2d({ name: `${name}_pool`, poolSize: 3, strides: 1, padding: "same" })
    .apply(x) as Sym;
  const b3 = convBlock(pooled, `${name}_p1x1`, 2, seeds, { kernel: 1 });
  return tf.layers
    .concatenate({ name: `${name}_cat` })
    .apply([b1, b2, b3]) as Sym;
}

export function branched23(seed = 1): tf.LayersModel {
  const seeds = new SeedPool(seed * 2000);
  const input = tf.input({ shape: [28, 28, 1], name: "img" });
  let x = convBlock(input, "c1", 8, seeds, { strides: 2 }); // 14x14
  x = convBlock(x, "c2", 8, seeds);
  x = tf.layers.maxPooling2d({ name: "p1", poolSize: 2, strides: 2 }).apply(x) as Sym; // 7x7
  const block1 = inceptionBlock(x, "b1", seeds); // 8 channels out
  let y = inceptionBlock(block1, "b2", seeds);
  y = tf.layers.add({ name: "res" }).apply([y, block1]) as Sym;
  y = inceptionBlock(y, "b3", seeds);
  y = tf.layers.maxPooling2d({ name: "p2", poolSize: 2, strides: 2 }).apply(y) as Sym; // 3x3
  y = inceptionBlock(y, "b4", seeds);
  y = inceptionBlock(y, "b5", seeds);
  y = tf.layers.flatten({ name: "flat" }).apply(y) as Sym;
  y = tf.layers
    .dense({
      name: "fc",
      units: 10,
      activation: "linear",
      kernelInitializer: tf.initializers.heNormal({ seed: seeds.next() }),
    })
    .apply(y) as Sym;
  const out = tf.layers.softmax({ name: "probs" }).apply(y) as Sym;
  return tf.model({ inputs: input, outputs: out, name: "glyphs-branched23" });
}

/** Two-quantizable-layer model used by the unit tests. */
export function tiny(seed = 1): tf.LayersModel {
  const seeds = new SeedPool(seed * 3000);
  const input = tf.input({ shape: [8, 8, 1], name: "img" });
  let x = convBlock(input, "c1", 2, seeds);
  x = tf.layers.maxPooling2d({ name: "p1", poolSize: 2, strides: 2 }).apply(x) as Sym;
  x = tf.layers.dropout({ name: "drop", rate: 0.5 }).apply(x) as Sym;
  x = tf.layers.flatten({ name: "flat" }).apply(x) as Sym;
  const logits = tf.layers
    .dense({
      name: "fc",
      units: 3,
      activation: "softmax",
      kernelInitializer: tf.initializers.heNormal({ seed: seeds.next() }),
    })
    .apply(x) as Sym;
  return tf.model({ inputs: input, outputs: logits, name: "tiny" });
}
