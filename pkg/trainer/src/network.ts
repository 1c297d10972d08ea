/**
 * Materialize an architecture document into a trainable tfjs network.
 *
 * Conventions mirror the orchestrator's analytic cost model exactly, so
 * the body parameter count matches it:
 *   - incoming activations are average-pooled to the node's resolution
 *     and 1x1-projected (weights + bias) when channel counts differ;
 *   - weighted_sum merges have one learnable scalar per input; the
 *     attention variant adds a linear map (channels -> indegree) over the
 *     globally averaged summed inputs, softmax-normalized; concat
 *     concatenates; single-input nodes skip the merge entirely;
 *   - a conv op consumes concatenated channels directly; a pool op after
 *     a multi-input concat gets a 1x1 reduction conv first;
 *   - convs are weight + bias (no normalization layers), relu after the
 *     node op (and after reduction convs); pooling ops are stride-1,
 *     same-padding (resolution changes only at stage boundaries);
 *   - the classifier head (dense over concatenated pooled boundary
 *     features) is excluded from the body count.
 */

import * as tf from "@tensorflow/tfjs";

import type { IrDocument, IrNode } from "./protocol.js";
import { validateIr } from "./protocol.js";
import { mulberry32, normalArray, type Rng } from "./rng.js";

const KERNEL: Record<IrNode["op"], number> = {
  conv1x1: 1,
  conv3x3: 3,
  conv5x5: 5,
  pool3x3: 3,
  pool5x5: 5,
};

/**
 * Convolution as im2col (zero-pad, shifted slices, matMul).  Numerically
 * identical to conv2d with 'same' padding and stride 1, but built from
 * primitives whose gradients every tfjs backend registers (the wasm
 * backend ships no Conv2DBackprop* kernels).
 */
function convSame(x: tf.Tensor4D, w: tf.Variable, b: tf.Variable): tf.Tensor4D {
  const [k, , cin, cout] = w.shape as [number, number, number, number];
  const [batch, h, wd] = x.shape;
  let patches: tf.Tensor4D;
  if (k === 1) {
    patches = x;
  } else {
    const half = Math.floor(k / 2);
    const padded = tf.pad(x, [[0, 0], [half, half], [half, half], [0, 0]]) as tf.Tensor4D;
    const cols: tf.Tensor4D[] = [];
    for (let dy = 0; dy < k; dy++) {
      for (let dx = 0; dx < k; dx++) {
        cols.push(tf.slice(padded, [0, dy, dx, 0], [batch, h, wd, cin]) as tf.Tensor4D);
      }
    }
    patches = tf.concat(cols, -1);
  }
  const flat = tf.reshape(patches, [batch * h * wd, k * k * cin]) as tf.Tensor2D;
  const wFlat = tf.reshape(w, [k * k * cin, cout]) as tf.Tensor2D;
  const out = tf.reshape(tf.matMul(flat, wFlat), [batch, h, wd, cout]) as tf.Tensor4D;
  return tf.add(out, b) as tf.Tensor4D;
}

/** Factor-f average downsampling via reshape + mean (needs f | H). */
function poolDown(x: tf.Tensor4D, f: number): tf.Tensor4D {
  const [batch, h, w, c] = x.shape;
  if (h % f !== 0 || w % f !== 0) {
    throw new Error(`resolution ${h}x${w} not divisible by pool factor ${f}`);
  }
  const grouped = tf.reshape(x, [batch, h / f, f, w / f, f, c]);
  return tf.mean(grouped, [2, 4]) as tf.Tensor4D;
}

/** Stride-1 k x k average smoothing over the zero-padded input. */
function poolSmooth(x: tf.Tensor4D, k: number): tf.Tensor4D {
  const [batch, h, wd, c] = x.shape;
  const half = Math.floor(k / 2);
  const padded = tf.pad(x, [[0, 0], [half, half], [half, half], [0, 0]]) as tf.Tensor4D;
  let acc: tf.Tensor4D | null = null;
  for (let dy = 0; dy < k; dy++) {
    for (let dx = 0; dx < k; dx++) {
      const shifted = tf.slice(padded, [0, dy, dx, 0], [batch, h, wd, c]) as tf.Tensor4D;
      acc = acc ? (tf.add(acc, shifted) as tf.Tensor4D) : shifted;
    }
  }
  return tf.div(acc as tf.Tensor4D, k * k) as tf.Tensor4D;
}

interface EdgePlan {
  src: number;
  srcChannels: number;
  poolFactor: number;
  proj: { w: tf.Variable; b: tf.Variable } | null;
}

interface NodePlan {
  node: IrNode;
  inEdges: EdgePlan[];
  gains: tf.Variable | null; // weighted_sum
  attention: { w: tf.Variable; b: tf.Variable } | null;
  reduce: { w: tf.Variable; b: tf.Variable } | null; // pool after concat
  conv: { w: tf.Variable; b: tf.Variable } | null;
}

function convVariable(k: number, cin: number, cout: number, rng: Rng): { w: tf.Variable; b: tf.Variable } {
  const std = Math.sqrt(2.0 / (k * k * cin));
  const w = tf.variable(tf.tensor4d(normalArray(k * k * cin * cout, std, rng), [k, k, cin, cout]));
  const b = tf.variable(tf.zeros([cout]));
  return { w, b };
}

export class MaterializedNetwork {
  constructor(
    readonly ir: IrDocument,
    readonly numClasses: number,
    private readonly plans: NodePlan[],
    private readonly outBoundary: { src: number; channels: number }[],
    private readonly head: { w: tf.Variable; b: tf.Variable },
    readonly inputChannels: number,
  ) {}

  bodyVariables(): tf.Variable[] {
    const vars: tf.Variable[] = [];
    for (const plan of this.plans) {
      for (const e of plan.inEdges) if (e.proj) vars.push(e.proj.w, e.proj.b);
      if (plan.gains) vars.push(plan.gains);
      if (plan.attention) vars.push(plan.attention.w, plan.attention.b);
      if (plan.reduce) vars.push(plan.reduce.w, plan.reduce.b);
      if (plan.conv) vars.push(plan.conv.w, plan.conv.b);
    }
    return vars;
  }

  trainableVariables(): tf.Variable[] {
    return [...this.bodyVariables(), this.head.w, this.head.b];
  }

  /** Learnable parameters excluding the classifier head. */
  bodyParamCount(): number {
    return this.bodyVariables().reduce((acc, v) => acc + v.size, 0);
  }

  /** Logits for a [batch, H, W, inputChannels] image tensor. */
  forward(x: tf.Tensor4D): tf.Tensor2D {
    return tf.tidy(() => {
      const acts = new Map<number, tf.Tensor4D>();
      acts.set(this.ir.input, x);
      for (const plan of this.plans) {
        const aligned: tf.Tensor4D[] = plan.inEdges.map((e) => {
          let a = acts.get(e.src);
          if (!a) throw new Error(`activation for node ${e.src} missing`);
          if (e.poolFactor > 1) {
            a = poolDown(a, e.poolFactor);
          }
          if (e.proj) {
            a = convSame(a, e.proj.w, e.proj.b);
          }
          return a;
        });

        let merged: tf.Tensor4D;
        if (aligned.length === 1) {
          merged = aligned[0];
        } else if (plan.node.merge === "weighted_sum") {
          const gains = plan.gains as tf.Variable;
          merged = aligned
            .map((a, i) => tf.mul(a, tf.reshape(tf.slice(gains, [i], [1]), [1, 1, 1, 1])) as tf.Tensor4D)
            .reduce((s, a) => tf.add(s, a) as tf.Tensor4D);
        } else if (plan.node.merge === "attention_weighted_sum") {
          const att = plan.attention!;
          const summed = aligned.reduce((s, a) => tf.add(s, a) as tf.Tensor4D);
          const pooled = tf.mean(summed, [1, 2]) as tf.Tensor2D;
          const logits = tf.add(tf.matMul(pooled, att.w as tf.Tensor2D), att.b) as tf.Tensor2D;
          const weights = tf.softmax(logits, -1);
          merged = aligned
            .map((a, i) => {
              const gate = weights.slice([0, i], [-1, 1]).reshape([-1, 1, 1, 1]);
              return tf.mul(a, gate) as tf.Tensor4D;
            })
            .reduce((s, a) => tf.add(s, a) as tf.Tensor4D);
        } else {
          merged = tf.concat(aligned, -1);
        }

        const k = KERNEL[plan.node.op];
        let out: tf.Tensor4D;
        if (plan.conv) {
          out = tf.relu(convSame(merged, plan.conv.w, plan.conv.b)) as tf.Tensor4D;
        } else {
          let pre = merged;
          if (plan.reduce) {
            pre = tf.relu(convSame(merged, plan.reduce.w, plan.reduce.b)) as tf.Tensor4D;
          }
          out = poolSmooth(pre, k);
        }
        acts.set(plan.node.id, out);
      }
      const feats = tf.concat(
        this.outBoundary.map((e) => tf.mean(acts.get(e.src) as tf.Tensor4D, [1, 2])),
        -1,
      ) as tf.Tensor2D;
      return tf.add(tf.matMul(feats, this.head.w as tf.Tensor2D), this.head.b) as tf.Tensor2D;
    });
  }

  dispose(): void {
    for (const v of this.trainableVariables()) v.dispose();
  }
}

export function buildNetwork(ir: IrDocument, numClasses: number, seed = 0): MaterializedNetwork {
  validateIr(ir);
  const rng = mulberry32(seed ^ 0x9e3779b9);
  const inputChannels = Number(ir.provenance?.input_channels ?? 3);

  const channelsOf = (id: number): number =>
    id === ir.input ? inputChannels : ir.nodes[id].channels;
  const divisorOf = (id: number): number => (id === ir.input ? 1 : ir.nodes[id].divisor);

  const inEdges = new Map<number, number[]>();
  const outEdges: number[] = [];
  for (const [s, d] of ir.edges) {
    if (d === ir.output) {
      outEdges.push(s);
    } else {
      const list = inEdges.get(d) ?? [];
      list.push(s);
      inEdges.set(d, list);
    }
  }

  const plans: NodePlan[] = ir.nodes.map((node) => {
    const sources = (inEdges.get(node.id) ?? []).slice().sort((a, b) => a - b);
    const c = node.channels;
    const edges: EdgePlan[] = sources.map((src) => {
      const srcC = channelsOf(src);
      const factor = node.divisor / divisorOf(src);
      return {
        src,
        srcChannels: srcC,
        poolFactor: factor,
        proj: srcC !== c ? convVariable(1, srcC, c, rng) : null,
      };
    });
    const indeg = edges.length;
    const isPool = node.op.startsWith("pool");
    const multi = indeg >= 2;
    const gains =
      multi && node.merge === "weighted_sum"
        ? tf.variable(tf.fill([indeg], 1.0 / indeg))
        : null;
    const attention =
      multi && node.merge === "attention_weighted_sum"
        ? {
            w: tf.variable(tf.tensor2d(normalArray(c * indeg, Math.sqrt(1.0 / c), rng), [c, indeg])),
            b: tf.variable(tf.zeros([indeg])),
          }
        : null;
    const concatIn = multi && node.merge === "concat" ? indeg * c : c;
    const reduce = isPool && multi && node.merge === "concat" ? convVariable(1, indeg * c, c, rng) : null;
    const conv = isPool ? null : convVariable(KERNEL[node.op], concatIn, c, rng);
    return { node, inEdges: edges, gains, attention, reduce, conv };
  });

  const outBoundary = outEdges
    .slice()
    .sort((a, b) => a - b)
    .map((src) => ({ src, channels: channelsOf(src) }));
  const featDim = outBoundary.reduce((acc, e) => acc + e.channels, 0);
  const head = {
    w: tf.variable(tf.tensor2d(normalArray(featDim * numClasses, Math.sqrt(2.0 / featDim), rng), [featDim, numClasses])),
    b: tf.variable(tf.zeros([numClasses])),
  };
  return new MaterializedNetwork(ir, numClasses, plans, outBoundary, head, inputChannels);
}
