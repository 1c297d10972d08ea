/**
 * nago-eval/1 line protocol: newline-delimited JSON over stdio.
 * Responses match requests by id and may arrive in any order.
 */

export const PROTOCOL_VERSION = "nago-eval/1";

export interface HelloMessage {
  type: "hello";
  protocol: string;
}

export interface EvalRequest {
  type: "request";
  id: string;
  theta: Record<string, unknown> | null;
  ir: IrDocument | null;
  budget: number;
  dataset: string;
  seed: number;
  param_budget: number;
}

export interface EvalResponse {
  type: "response";
  id: string;
  status: "ok" | "failed";
  objectives: Record<string, number>;
  message: string;
}

export interface IrNode {
  id: number;
  op: "conv1x1" | "conv3x3" | "conv5x5" | "pool3x3" | "pool5x5";
  channels: number;
  divisor: number;
  merge: "weighted_sum" | "attention_weighted_sum" | "concat";
  stage: number;
}

export interface IrDocument {
  schema: "nago-ir/1";
  input: number;
  output: number;
  nodes: IrNode[];
  edges: [number, number][];
  provenance?: { input_channels?: number; [k: string]: unknown };
}

export function helloLine(): string {
  return JSON.stringify({ protocol: PROTOCOL_VERSION, type: "hello" });
}

export function parseLine(line: string): HelloMessage | EvalRequest | EvalResponse {
  const doc = JSON.parse(line);
  if (doc.type !== "hello" && doc.type !== "request" && doc.type !== "response") {
    throw new Error(`unknown message type: ${doc.type}`);
  }
  return doc;
}

export function okResponse(id: string, objectives: Record<string, number>): EvalResponse {
  return { type: "response", id, status: "ok", objectives, message: "" };
}

export function failedResponse(id: string, message: string): EvalResponse {
  return { type: "response", id, status: "failed", objectives: {}, message };
}

export function responseLine(resp: EvalResponse): string {
  return JSON.stringify(resp);
}

export function validateIr(ir: IrDocument): void {
  if (ir.schema !== "nago-ir/1") throw new Error(`unexpected schema ${ir.schema}`);
  const n = ir.nodes.length;
  if (ir.input !== n || ir.output !== n + 1) {
    throw new Error("virtual node ids must be node_count and node_count+1");
  }
  ir.nodes.forEach((node, i) => {
    if (node.id !== i) throw new Error("node ids must be 0..n-1 in order");
    if (node.channels < 1) throw new Error("channels must be >= 1");
  });
  const indeg = new Array(n + 2).fill(0);
  for (const [s, d] of ir.edges) {
    if (s < 0 || s > n + 1 || d < 0 || d > n + 1) throw new Error("edge out of range");
    if (d === ir.input || s === ir.output) throw new Error("bad virtual edge direction");
    indeg[d] += 1;
  }
  ir.nodes.forEach((node) => {
    if (indeg[node.id] < 1) throw new Error(`node ${node.id} has no predecessor`);
  });
  if (indeg[ir.output] < 1) throw new Error("output unreachable");
}
