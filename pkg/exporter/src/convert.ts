/**
 * Converts a TensorFlow.js LayersModel into the fxq manifest + tensor set.
 *
 * Dropout layers are elided (their consumers are rewired to the dropout
 * input).  Fused relu/softmax activations on conv/dense layers are split
 * into explicit activation layers.  Conv kernels stay [kh, kw, inC, outC]
 * and dense kernels [in, out], matching the manifest conventions.
 */
import * as tf from "@tensorflow/tfjs";
import { TensorData } from "./formats.js";

export class UnsupportedLayerError extends Error {}

export interface ManifestLayer {
  id: string;
  kind: string;
  inputs: string[];
  [key: string]: unknown;
}

export interface ConvertedModel {
  layers: ManifestLayer[];
  tensors: Map<string, TensorData>;
}

function asPair(value: unknown): [number, number] {
  if (typeof value === "number") return [value, value];
  const arr = value as number[];
  return [arr[0], arr[1]];
}

function tensorData(t: tf.Tensor): TensorData {
  return { shape: [...t.shape], data: t.dataSync() as Float32Array };
}

function inboundIds(
  layer: tf.layers.Layer,
  resolved: Map<string, string>
): string[] {
  const nodes = (layer as unknown as { inboundNodes: { inboundLayers: tf.layers.Layer[] }[] })
    .inboundNodes;
  if (!nodes.length) return [];
  return nodes[0].inboundLayers.map((l) => {
    const id = resolved.get(l.name);
    if (id === undefined) {
      throw new UnsupportedLayerError(
        `layer ${layer.name}: input ${l.name} was not converted`
      );
    }
    return id;
  });
}

export function convertModel(model: tf.LayersModel): ConvertedModel {
  const layers: ManifestLayer[] = [];
  const tensors = new Map<string, TensorData>();
  // maps a tfjs layer name to the manifest layer producing its output
  const resolved = new Map<string, string>();

  const pushActivation = (id: string, activation: string): string => {
    if (activation === "linear") return id;
    if (activation !== "relu" && activation !== "softmax") {
      throw new UnsupportedLayerError(
        `layer ${id}: unsupported fused activation '${activation}'`
      );
    }
    const actId = `${id}_act`;
    layers.push({
      id: actId,
      kind: activation === "relu" ? "relu" : "softmax",
      inputs: [id],
    });
    return actId;
  };

  for (const layer of model.layers) {
    const cls = layer.getClassName();
    const cfg = layer.getConfig() as Record<string, unknown>;
    const id = layer.name;
    const inputs = inboundIds(layer, resolved);

    switch (cls) {
      case "InputLayer": {
        const shape = (cfg.batchInputShape as number[]).slice(1);
        layers.push({ id, kind: "input", inputs: [], shape });
        resolved.set(layer.name, id);
        break;
      }
      case "Dropout": {
        // inference-time identity; rewire consumers past it
        resolved.set(layer.name, inputs[0]);
        break;
      }
      case "Conv2D": {
        if (cfg.useBias === false) {
          throw new UnsupportedLayerError(`layer ${id}: conv2d without bias`);
        }
        const [w, b] = layer.getWeights();
        tensors.set(`${id}.w`, tensorData(w));
        tensors.set(`${id}.b`, tensorData(b));
        layers.push({
          id,
          kind: "conv2d",
          inputs,
          kernel: asPair(cfg.kernelSize),
          filters: cfg.filters as number,
          strides: asPair(cfg.strides),
          padding: cfg.padding as string,
          weights: `${id}.w`,
          bias: `${id}.b`,
        });
        resolved.set(layer.name, pushActivation(id, cfg.activation as string));
        break;
      }
      case "Dense": {
        if (cfg.useBias === false) {
          throw new UnsupportedLayerError(`layer ${id}: dense without bias`);
        }
        const [w, b] = layer.getWeights();
        tensors.set(`${id}.w`, tensorData(w));
        tensors.set(`${id}.b`, tensorData(b));
        layers.push({
          id,
          kind: "dense",
          inputs,
          units: cfg.units as number,
          weights: `${id}.w`,
          bias: `${id}.b`,
        });
        resolved.set(layer.name, pushActivation(id, cfg.activation as string));
        break;
      }
      case "BatchNormalization": {
        const [gamma, beta, mean, variance] = layer.getWeights();
        tensors.set(`${id}.gamma`, tensorData(gamma));
        tensors.set(`${id}.beta`, tensorData(beta));
        tensors.set(`${id}.mean`, tensorData(mean));
        tensors.set(`${id}.variance`, tensorData(variance));
        layers.push({
          id,
          kind: "batchnorm",
          inputs,
          epsilon: cfg.epsilon as number,
          params: {
            gamma: `${id}.gamma`,
            beta: `${id}.beta`,
            mean: `${id}.mean`,
            variance: `${id}.variance`,
          },
        });
        resolved.set(layer.name, id);
        break;
      }
      case "MaxPooling2D":
      case "AveragePooling2D": {
        layers.push({
          id,
          kind: cls === "MaxPooling2D" ? "maxpool" : "avgpool",
          inputs,
          pool: asPair(cfg.poolSize),
          strides: asPair(cfg.strides ?? cfg.poolSize),
          padding: cfg.padding as string,
        });
        resolved.set(layer.name, id);
        break;
      }
      case "ReLU": {
        layers.push({ id, kind: "relu", inputs });
        resolved.set(layer.name, id);
        break;
      }
      case "Softmax": {
        layers.push({ id, kind: "softmax", inputs });
        resolved.set(layer.name, id);
        break;
      }
      case "Activation": {
        const activation = cfg.activation as string;
        if (activation === "relu" || activation === "softmax") {
          layers.push({
            id,
            kind: activation === "relu" ? "relu" : "softmax",
            inputs,
          });
          resolved.set(layer.name, id);
          break;
        }
        throw new UnsupportedLayerError(
          `layer ${id}: unsupported activation '${activation}'`
        );
      }
      case "Flatten": {
        layers.push({ id, kind: "flatten", inputs });
        resolved.set(layer.name, id);
        break;
      }
      case "Add": {
        layers.push({ id, kind: "add", inputs });
        resolved.set(layer.name, id);
        break;
      }
      case "Concatenate": {
        const axis = cfg.axis as number;
        if (axis !== -1 && axis !== 3) {
          throw new UnsupportedLayerError(
            `layer ${id}: concatenate on axis ${axis} (only channels supported)`
          );
        }
        layers.push({ id, kind: "concat", inputs });
        resolved.set(layer.name, id);
        break;
      }
      default:
        throw new UnsupportedLayerError(
          `layer ${id}: unsupported layer kind '${cls}'`
        );
    }
  }
  return { layers, tensors };
}

/** Manifest layer ids of quantizable (conv2d/dense) layers, in order. */
export function quantizableIds(converted: ConvertedModel): string[] {
  return converted.layers
    .filter((l) => l.kind === "conv2d" || l.kind === "dense")
    .map((l) => l.id);
}
