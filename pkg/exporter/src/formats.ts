/**
 * Binary writers for the fxq interchange formats.
 *
 * Dataset (.fxqd): magic "FXQD", u32 n/h/w/c/classes (LE), n*h*w*c float32
 * image values, then n uint16 labels.
 *
 * Reference outputs (.fxqr): magic "FXQR", u32 n, u32 classes, 32-byte
 * sha256 of the dataset's image payload, then n*classes float32 scores.
 *
 * Model: JSON manifest plus a blob of little-endian float32 tensor data,
 * each tensor addressed by byte offset and shape.
 */
import { createHash } from "node:crypto";

export interface TensorData {
  shape: number[];
  data: Float32Array;
}

export interface BlobIndexEntry {
  offset: number;
  shape: number[];
}

function floatBuffer(data: Float32Array): Buffer {
  const buf = Buffer.alloc(data.length * 4);
  for (let i = 0; i < data.length; i++) buf.writeFloatLE(data[i], i * 4);
  return buf;
}

export function datasetBuffer(
  images: Float32Array,
  labels: Uint16Array,
  h: number,
  w: number,
  c: number,
  classes: number
): Buffer {
  const n = labels.length;
  if (images.length !== n * h * w * c) {
    throw new Error(
      `image payload ${images.length} does not match ${n}x${h}x${w}x${c}`
    );
  }
  const header = Buffer.alloc(24);
  header.write("FXQD", 0, "ascii");
  header.writeUInt32LE(n, 4);
  header.writeUInt32LE(h, 8);
  header.writeUInt32LE(w, 12);
  header.writeUInt32LE(c, 16);
  header.writeUInt32LE(classes, 20);
  const lab = Buffer.alloc(n * 2);
  for (let i = 0; i < n; i++) lab.writeUInt16LE(labels[i], i * 2);
  return Buffer.concat([header, floatBuffer(images), lab]);
}

export function imagePayloadDigest(images: Float32Array): Buffer {
  return createHash("sha256").update(floatBuffer(images)).digest();
}

export function referenceBuffer(
  scores: Float32Array,
  n: number,
  classes: number,
  imageDigest: Buffer
): Buffer {
  if (scores.length !== n * classes) {
    throw new Error(`score payload ${scores.length} != ${n}x${classes}`);
  }
  if (imageDigest.length !== 32) {
    throw new Error("image digest must be 32 bytes of sha256");
  }
  const header = Buffer.alloc(12);
  header.write("FXQR", 0, "ascii");
  header.writeUInt32LE(n, 4);
  header.writeUInt32LE(classes, 8);
  return Buffer.concat([header, imageDigest, floatBuffer(scores)]);
}

export function buildBlob(tensors: Map<string, TensorData>): {
  blob: Buffer;
  index: Record<string, BlobIndexEntry>;
} {
  const chunks: Buffer[] = [];
  const index: Record<string, BlobIndexEntry> = {};
  let offset = 0;
  for (const [name, t] of tensors) {
    const count = t.shape.reduce((a, b) => a * b, 1);
    if (count !== t.data.length) {
      throw new Error(
        `tensor ${name}: shape ${t.shape} does not match ${t.data.length} values`
      );
    }
    const raw = floatBuffer(t.data);
    index[name] = { offset, shape: [...t.shape] };
    chunks.push(raw);
    offset += raw.length;
  }
  return { blob: Buffer.concat(chunks), index };
}
