/**
 * Backend bootstrap: prefer the wasm backend (bundled binaries, ~300x the
 * plain-JS cpu backend on conv workloads), fall back to cpu.  Threads are
 * pinned to one so runs stay deterministic.
 */

import * as path from "node:path";
import { fileURLToPath } from "node:url";

import * as tf from "@tensorflow/tfjs";

let initialized: Promise<string> | null = null;

export function initBackend(): Promise<string> {
  if (!initialized) {
    initialized = (async () => {
      if (process.env.NAGO_TRAINER_BACKEND === "cpu") {
        await tf.setBackend("cpu");
        await tf.ready();
        return tf.getBackend();
      }
      try {
        const wasm = await import("@tensorflow/tfjs-backend-wasm");
        const here = path.dirname(fileURLToPath(import.meta.url));
        const dist = path.join(here, "..", "node_modules", "@tensorflow/tfjs-backend-wasm", "dist");
        wasm.setWasmPaths(dist + path.sep);
        wasm.setThreadsCount(1);
        await tf.setBackend("wasm");
        await tf.ready();
      } catch (err) {
        process.stderr.write(`wasm backend unavailable (${err}); using cpu\n`);
        await tf.setBackend("cpu");
        await tf.ready();
      }
      return tf.getBackend();
    })();
  }
  return initialized;
}
