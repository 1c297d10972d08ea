/**
 * Bundled synthetic two-class image data for tests and smoke training:
 * class 0 carries horizontal stripes, class 1 vertical stripes, both with
 * brightness jitter and pixel noise.  Deterministic for a given seed.
 * Real datasets are user-supplied via NAGO_DATA_DIR (not bundled).
 */

import * as tf from "@tensorflow/tfjs";

import { mulberry32 } from "./rng.js";

export interface Dataset {
  trainXs: tf.Tensor4D;
  trainLabels: tf.Tensor1D;
  valXs: tf.Tensor4D;
  valLabels: tf.Tensor1D;
  numClasses: number;
}

export interface DatasetSpec {
  size: number;
  trainCount: number;
  valCount: number;
}

const REGISTRY: Record<string, DatasetSpec> = {
  tiny16: { size: 16, trainCount: 600, valCount: 200 },
  tiny32: { size: 32, trainCount: 600, valCount: 200 },
};

export function datasetSpec(tag: string): DatasetSpec {
  return REGISTRY[tag] ?? REGISTRY.tiny32;
}

function stripeImage(size: number, vertical: boolean, rng: () => number, out: Float32Array, offset: number): void {
  const phase = Math.floor(rng() * 4);
  const brightness = 0.2 + 0.15 * rng();
  const amplitude = 0.5 + 0.1 * rng();
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const coord = vertical ? x : y;
      const stripe = (Math.floor((coord + phase) / 2) % 2) * amplitude;
      for (let ch = 0; ch < 3; ch++) {
        const noise = (rng() - 0.5) * 0.1;
        const v = brightness + stripe + noise;
        out[offset + (y * size + x) * 3 + ch] = Math.min(Math.max(v, 0), 1);
      }
    }
  }
}

function makeSplit(count: number, size: number, rng: () => number): { xs: tf.Tensor4D; labels: tf.Tensor1D } {
  const data = new Float32Array(count * size * size * 3);
  const labels = new Int32Array(count);
  for (let i = 0; i < count; i++) {
    const vertical = i % 2 === 1;
    labels[i] = vertical ? 1 : 0;
    stripeImage(size, vertical, rng, data, i * size * size * 3);
  }
  return {
    xs: tf.tensor4d(data, [count, size, size, 3]),
    labels: tf.tensor1d(labels, "int32"),
  };
}

export function makeStripesDataset(tag: string, seed = 0): Dataset {
  const spec = datasetSpec(tag);
  const rng = mulberry32(seed ^ 0x51f15e);
  const train = makeSplit(spec.trainCount, spec.size, rng);
  const val = makeSplit(spec.valCount, spec.size, rng);
  return {
    trainXs: train.xs,
    trainLabels: train.labels,
    valXs: val.xs,
    valLabels: val.labels,
    numClasses: 2,
  };
}

export function disposeDataset(data: Dataset): void {
  data.trainXs.dispose();
  data.trainLabels.dispose();
  data.valXs.dispose();
  data.valLabels.dispose();
}
