/**
 * Trains the two fixture CNNs on the synthetic glyph dataset and exports
 * interchange bundles.  Usage:
 *
 *   node dist/buildFixtures.js [--out DIR] [--seed N] [--train N]
 *                              [--epochs-seq N] [--epochs-br N] [--skip-branched]
 */
import { join } from "node:path";
import * as tf from "@tensorflow/tfjs";

import { exportBundle } from "./export.js";
import { CLASSES, IMG, makeDataset } from "./glyphs.js";
import { branched23, sequential15 } from "./models.js";
import { topOneAccuracy, predictScores } from "./export.js";
import { Prng } from "./prng.js";

interface Args {
  out: string;
  seed: number;
  train: number;
  test: number;
  epochsSeq: number;
  epochsBr: number;
  skipBranched: boolean;
}

function parseArgs(argv: string[]): Args {
  const args: Args = {
    out: "../tests/fixtures",
    seed: 1,
    train: 4500,
    test: 1000,
    epochsSeq: 16,
    epochsBr: 10,
    skipBranched: false,
  };
  for (let i = 0; i < argv.length; i++) {
    const key = argv[i];
    const next = () => argv[++i];
    if (key === "--out") args.out = next();
    else if (key === "--seed") args.seed = Number(next());
    else if (key === "--train") args.train = Number(next());
    else if (key === "--test") args.test = Number(next());
    else if (key === "--epochs-seq") args.epochsSeq = Number(next());
    else if (key === "--epochs-br") args.epochsBr = Number(next());
    else if (key === "--skip-branched") args.skipBranched = true;
    else throw new Error(`unknown argument ${key}`);
  }
  return args;
}

/** Per-epoch learning rates: fast start, then two settling phases. */
function schedule(epochs: number): number[] {
  const rates: number[] = [];
  for (let e = 0; e < epochs; e++) {
    rates.push(e < epochs - 6 ? 0.01 : e < epochs - 2 ? 0.002 : 0.0005);
  }
  return rates;
}

async function train(
  model: tf.LayersModel,
  trainImages: Float32Array,
  trainLabels: Uint16Array,
  testImages: Float32Array,
  testLabels: Uint16Array,
  epochs: number,
  shuffleSeed: number
): Promise<void> {
  const n = trainLabels.length;
  const size = IMG * IMG;
  const rng = new Prng(shuffleSeed);
  const rates = schedule(epochs);
  const shuffled = new Float32Array(trainImages.length);
  const shuffledLabels = new Float32Array(n);
  let activeRate = 0;
  for (let epoch = 1; epoch <= epochs; epoch++) {
    // seeded shuffle keeps the whole build reproducible
    const order = rng.shuffle([...Array(n).keys()]);
    for (let i = 0; i < n; i++) {
      shuffled.set(trainImages.subarray(order[i] * size, (order[i] + 1) * size), i * size);
      shuffledLabels[i] = trainLabels[order[i]];
    }
    if (rates[epoch - 1] !== activeRate) {
      // recompile only on rate changes; optimizer state survives an epoch
      activeRate = rates[epoch - 1];
      model.compile({
        optimizer: tf.train.adam(activeRate),
        loss: "sparseCategoricalCrossentropy",
      });
    }
    const x = tf.tensor4d(shuffled, [n, IMG, IMG, 1]);
    const y = tf.tensor1d(shuffledLabels);
    const t0 = Date.now();
    const hist = await model.fit(x, y, { epochs: 1, batchSize: 192, shuffle: false, verbose: 0 });
    x.dispose();
    y.dispose();
    const loss = (hist.history.loss as number[])[0];
    const scores = predictScores(model, testImages, testLabels.length, IMG, IMG, 1);
    const acc = topOneAccuracy(scores, testLabels, CLASSES);
    console.log(
      `  epoch ${epoch}/${epochs}: lr=${rates[epoch - 1]} loss=${loss.toFixed(4)} ` +
        `test_acc=${acc.toFixed(4)} (${((Date.now() - t0) / 1000).toFixed(0)}s)`
    );
  }
}

async function main() {
  const args = parseArgs(process.argv.slice(2));
  await tf.ready();
  console.log(`backend=${tf.getBackend()} seed=${args.seed}`);

  const trainSet = makeDataset(args.train, args.seed * 7919 + 1);
  const testSet = makeDataset(args.test, args.seed * 104729 + 2);

  console.log("training sequential fixture (14 conv + 1 dense)...");
  const seq = sequential15(args.seed);
  await train(seq, trainSet.images, trainSet.labels, testSet.images, testSet.labels,
    args.epochsSeq, args.seed * 31 + 5);
  const seqMeta = exportBundle(seq, testSet, join(args.out, "sequential"), {
    name: "glyphs-seq15",
    seed: args.seed,
  });
  console.log(`sequential: a0=${seqMeta.a0} L=${seqMeta.quantizable_layers}`);

  if (!args.skipBranched) {
    console.log("training branched fixture (22 conv + 1 dense)...");
    const br = branched23(args.seed);
    await train(br, trainSet.images, trainSet.labels, testSet.images, testSet.labels,
      args.epochsBr, args.seed * 37 + 11);
    const brMeta = exportBundle(br, testSet, join(args.out, "branched"), {
      name: "glyphs-branched23",
      seed: args.seed,
    });
    console.log(`branched: a0=${brMeta.a0} L=${brMeta.quantizable_layers}`);
  }
}

main().catch((err) => {
  console.error(err);
  process.exit(1);
});
