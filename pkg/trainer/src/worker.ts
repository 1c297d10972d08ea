/**
 * nago-eval/1 worker loop: handshake on startup, then one response per
 * request line, processed sequentially.  Malformed lines produce a
 * failed response (when an id is recoverable) and never stop the loop.
 *
 * Requests must carry a pre-sampled architecture document (`ir`); the
 * orchestrator samples one architecture per request from `theta` before
 * dispatching.  Budgets are interpreted as whole training epochs
 * (floored).  NAGO_DETERMINISTIC=1 seeds everything from the request.
 */

import * as readline from "node:readline";

import { initBackend } from "./backend.js";
import { disposeDataset, makeStripesDataset, type Dataset } from "./dataset.js";
import { buildNetwork } from "./network.js";
import {
  failedResponse,
  helloLine,
  okResponse,
  PROTOCOL_VERSION,
  responseLine,
  type EvalRequest,
} from "./protocol.js";
import { trainAndEval } from "./train.js";

const datasets = new Map<string, Dataset>();

function datasetFor(tag: string): Dataset {
  let data = datasets.get(tag);
  if (!data) {
    data = makeStripesDataset(tag, 0);
    datasets.set(tag, data);
  }
  return data;
}

export async function handleRequest(req: EvalRequest): Promise<string> {
  try {
    if (!req.ir) {
      return responseLine(
        failedResponse(req.id, "request carries no architecture document (theta-only requests must be pre-sampled by the orchestrator)"),
      );
    }
    const data = datasetFor(req.dataset);
    const net = buildNetwork(req.ir, data.numClasses, req.seed);
    try {
      const result = await trainAndEval(net, data, {
        epochs: Math.max(Math.floor(req.budget), 0),
        seed: req.seed,
      });
      return responseLine(
        okResponse(req.id, {
          val_error: 1 - result.valAccuracy,
          memory_mb: result.memoryMbPerSample,
          train_time_s: result.timeS,
        }),
      );
    } finally {
      net.dispose();
    }
  } catch (err) {
    return responseLine(failedResponse(req.id, err instanceof Error ? err.message : String(err)));
  }
}

export async function serve(): Promise<void> {
  await initBackend();
  const rl = readline.createInterface({ input: process.stdin, terminal: false });
  let greeted = false;
  for await (const line of rl) {
    const text = line.trim();
    if (!text) continue;
    let doc: any;
    try {
      doc = JSON.parse(text);
    } catch {
      process.stdout.write(responseLine(failedResponse("?", "malformed json line")) + "\n");
      continue;
    }
    if (doc.type === "hello") {
      if (doc.protocol !== PROTOCOL_VERSION) {
        process.stderr.write(`protocol mismatch: ${doc.protocol}\n`);
        process.exit(2);
      }
      process.stdout.write(helloLine() + "\n");
      greeted = true;
      continue;
    }
    if (doc.type !== "request") continue;
    if (!greeted) {
      process.stdout.write(responseLine(failedResponse(doc.id ?? "?", "request before handshake")) + "\n");
      continue;
    }
    const out = await handleRequest(doc as EvalRequest);
    process.stdout.write(out + "\n");
  }
  for (const data of datasets.values()) disposeDataset(data);
}

const isMain = process.argv[1]?.endsWith("worker.js") || process.argv[1]?.endsWith("worker.ts");
if (isMain) {
  serve().catch((err) => {
    process.stderr.write(`fatal: ${err}\n`);
    process.exit(1);
  });
}
