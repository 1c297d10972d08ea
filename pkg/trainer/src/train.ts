/**
 * Training loop: SGD with momentum.  The initial learning rate is
 * extrapolated linearly in the batch size from 0.025 at batch 96 to 0.1
 * at batch 512 (clamped below by 0.005), then follows a one-step warmup
 * and cosine decay to zero over the budget.  Optional cutout
 * augmentation, off by default.  Returns held-out accuracy, an
 * activation-memory measurement per sample, and the wall time.
 */

import * as tf from "@tensorflow/tfjs";

import type { Dataset } from "./dataset.js";
import type { MaterializedNetwork } from "./network.js";
import { mulberry32 } from "./rng.js";

export interface TrainConfig {
  epochs: number;
  batchSize?: number;
  momentum?: number;
  cutout?: boolean;
  cutoutLength?: number;
  seed?: number;
}

export interface TrainResult {
  valAccuracy: number;
  memoryMbPerSample: number;
  timeS: number;
}

export function learningRate(batchSize: number): number {
  const lr = 0.025 + ((batchSize - 96) * (0.1 - 0.025)) / (512 - 96);
  return Math.min(Math.max(lr, 0.005), 0.1);
}

function applyCutout(xs: tf.Tensor4D, length: number, rng: () => number): tf.Tensor4D {
  return tf.tidy(() => {
    const [n, h, w] = xs.shape;
    const mask = new Float32Array(n * h * w);
    mask.fill(1);
    for (let i = 0; i < n; i++) {
      const cy = Math.floor(rng() * h);
      const cx = Math.floor(rng() * w);
      for (let y = Math.max(0, cy - length / 2); y < Math.min(h, cy + length / 2); y++) {
        for (let x = Math.max(0, cx - length / 2); x < Math.min(w, cx + length / 2); x++) {
          mask[i * h * w + y * w + x] = 0;
        }
      }
    }
    return tf.mul(xs, tf.tensor4d(mask, [n, h, w, 1])) as tf.Tensor4D;
  });
}

export function evaluateAccuracy(net: MaterializedNetwork, xs: tf.Tensor4D, labels: tf.Tensor1D, batchSize = 128): number {
  const n = xs.shape[0];
  let correct = 0;
  for (let start = 0; start < n; start += batchSize) {
    const count = Math.min(batchSize, n - start);
    correct += tf.tidy(() => {
      const batch = xs.slice([start, 0, 0, 0], [count, -1, -1, -1]);
      const logits = net.forward(batch);
      const preds = tf.argMax(logits, -1);
      const truth = labels.slice([start], [count]);
      return tf.sum(tf.cast(tf.equal(preds, tf.cast(truth, "int32")), "int32")).dataSync()[0];
    });
  }
  return correct / n;
}

export async function trainAndEval(
  net: MaterializedNetwork,
  data: Dataset,
  config: TrainConfig,
): Promise<TrainResult> {
  const started = Date.now();
  const n = data.trainXs.shape[0];
  const batchSize = Math.min(config.batchSize ?? 96, n);
  const lrInit = learningRate(batchSize);
  const rng = mulberry32((config.seed ?? 0) ^ 0x7a11);

  const baselineBytes = tf.memory().numBytes;
  let peakBytes = baselineBytes;

  const order = Array.from({ length: n }, (_, i) => i);
  const vars = net.trainableVariables();
  const stepsPerEpoch = Math.ceil(n / batchSize);
  const totalSteps = config.epochs * stepsPerEpoch;
  const optimizer = tf.train.momentum(lrInit, config.momentum ?? 0.9);
  let step = 0;
  for (let epoch = 0; epoch < config.epochs; epoch++) {
    // Fisher-Yates shuffle on the seeded stream
    for (let i = n - 1; i > 0; i--) {
      const j = Math.floor(rng() * (i + 1));
      [order[i], order[j]] = [order[j], order[i]];
    }
    for (let start = 0; start < n; start += batchSize) {
      const count = Math.min(batchSize, n - start);
      const idx = order.slice(start, start + count);
      const warmup = step === 0 ? 0.1 : 1.0;
      const lr = warmup * lrInit * 0.5 * (1 + Math.cos((Math.PI * step) / Math.max(totalSteps, 1)));
      (optimizer as unknown as { setLearningRate(v: number): void }).setLearningRate(lr);
      tf.tidy(() => {
        const indices = tf.tensor1d(idx, "int32");
        let batch = tf.gather(data.trainXs, indices) as tf.Tensor4D;
        if (config.cutout) {
          batch = applyCutout(batch, config.cutoutLength ?? 8, rng);
        }
        const labels = tf.oneHot(tf.gather(data.trainLabels, indices), data.numClasses);
        optimizer.minimize(() => {
          const logits = net.forward(batch);
          const loss = tf.losses.softmaxCrossEntropy(labels, logits);
          peakBytes = Math.max(peakBytes, tf.memory().numBytes);
          return loss as tf.Scalar;
        }, false, vars);
        peakBytes = Math.max(peakBytes, tf.memory().numBytes);
      });
      step += 1;
      await tf.nextFrame();
    }
  }
  optimizer.dispose();

  const valAccuracy = evaluateAccuracy(net, data.valXs, data.valLabels);
  const memoryMbPerSample = Math.max(peakBytes - baselineBytes, 0) / batchSize / (1024 * 1024);
  return {
    valAccuracy,
    memoryMbPerSample,
    timeS: (Date.now() - started) / 1000,
  };
}
