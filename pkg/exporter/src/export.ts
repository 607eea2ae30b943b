/**
 * Writes a complete interchange bundle for a trained model: manifest +
 * weight blob, dataset file, reference class scores computed by
 * TensorFlow.js on the exact exported weights, and metadata (a0, layer
 * count, per-layer shapes).
 */
import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";
import * as tf from "@tensorflow/tfjs";

import { convertModel, quantizableIds } from "./convert.js";
import {
  buildBlob,
  datasetBuffer,
  imagePayloadDigest,
  referenceBuffer,
} from "./formats.js";
import { GlyphDataset } from "./glyphs.js";

export interface BundleMetadata {
  name: string;
  a0: number;
  quantizable_layers: number;
  classes: number;
  n_test: number;
  input_shape: number[];
  layer_shapes: Record<string, number[]>;
  seed: number;
  source: string;
}

export function predictScores(
  model: tf.LayersModel,
  images: Float32Array,
  n: number,
  h: number,
  w: number,
  c: number,
  batch = 200
): Float32Array {
  const out = new Float32Array(n * (model.outputs[0].shape[1] as number));
  const classes = model.outputs[0].shape[1] as number;
  for (let start = 0; start < n; start += batch) {
    const stop = Math.min(start + batch, n);
    const slice = images.subarray(start * h * w * c, stop * h * w * c);
    const x = tf.tensor4d(slice, [stop - start, h, w, c]);
    const scores = model.predict(x) as tf.Tensor;
    out.set(scores.dataSync() as Float32Array, start * classes);
    x.dispose();
    scores.dispose();
  }
  return out;
}

export function topOneAccuracy(
  scores: Float32Array,
  labels: Uint16Array,
  classes: number
): number {
  let correct = 0;
  for (let i = 0; i < labels.length; i++) {
    let best = 0;
    for (let k = 1; k < classes; k++) {
      if (scores[i * classes + k] > scores[i * classes + best]) best = k;
    }
    if (best === labels[i]) correct++;
  }
  return correct / labels.length;
}

export function exportBundle(
  model: tf.LayersModel,
  dataset: GlyphDataset,
  outDir: string,
  opts: { name: string; seed: number; classes?: number }
): BundleMetadata {
  const [h, w, c] = model.inputs[0].shape.slice(1) as number[];
  const classes = opts.classes ?? (model.outputs[0].shape[1] as number);
  mkdirSync(outDir, { recursive: true });

  const converted = convertModel(model);
  const { blob, index } = buildBlob(converted.tensors);
  const manifest = {
    format: "fxq-model",
    version: 1,
    name: opts.name,
    blob: "weights.bin",
    layers: converted.layers,
    tensors: index,
  };
  writeFileSync(join(outDir, "model.json"), JSON.stringify(manifest, null, 1));
  writeFileSync(join(outDir, "weights.bin"), blob);

  writeFileSync(
    join(outDir, "dataset.fxqd"),
    datasetBuffer(dataset.images, dataset.labels, h, w, c, classes)
  );

  const scores = predictScores(model, dataset.images, dataset.n, h, w, c);
  const digest = imagePayloadDigest(dataset.images);
  writeFileSync(
    join(outDir, "reference.fxqr"),
    referenceBuffer(scores, dataset.n, classes, digest)
  );

  const layerShapes: Record<string, number[]> = {};
  for (const layer of model.layers) {
    const shape = layer.outputShape as number[];
    layerShapes[layer.name] = shape.slice(1).map((v) => v ?? -1);
  }
  const a0 = topOneAccuracy(scores, dataset.labels, classes);
  if (a0 <= 0) {
    throw new Error("exported model has zero accuracy; refusing to build bundle");
  }
  const metadata: BundleMetadata = {
    name: opts.name,
    a0,
    quantizable_layers: quantizableIds(converted).length,
    classes,
    n_test: dataset.n,
    input_shape: [h, w, c],
    layer_shapes: layerShapes,
    seed: opts.seed,
    source: `tfjs-${tf.version.tfjs}`,
  };
  writeFileSync(join(outDir, "metadata.json"), JSON.stringify(metadata, null, 1));
  return metadata;
}
