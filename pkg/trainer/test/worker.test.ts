import { spawn, type ChildProcessWithoutNullStreams } from "node:child_process";
import * as fs from "node:fs";
import * as path from "node:path";
import * as readline from "node:readline";
import { fileURLToPath } from "node:url";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { helloLine, PROTOCOL_VERSION } from "../src/protocol.js";

const HERE = path.dirname(fileURLToPath(import.meta.url));
const WORKER = path.join(HERE, "..", "dist", "worker.js");

function loadIr(): any {
  const text = fs.readFileSync(path.join(HERE, "fixtures", "param_contract.jsonl"), "utf-8");
  const smallest = text
    .split("\n")
    .filter((l) => l.trim())
    .map((l) => JSON.parse(l))
    .reduce((a, b) => (a.ir.nodes.length <= b.ir.nodes.length ? a : b));
  return smallest.ir;
}

class WorkerClient {
  proc: ChildProcessWithoutNullStreams;
  private pending = new Map<string, (resp: any) => void>();
  private hello: Promise<any>;

  constructor() {
    this.proc = spawn("node", [WORKER], { stdio: ["pipe", "pipe", "inherit"] });
    const rl = readline.createInterface({ input: this.proc.stdout });
    let resolveHello: (v: any) => void;
    this.hello = new Promise((res) => (resolveHello = res));
    rl.on("line", (line) => {
      if (!line.trim()) return;
      const doc = JSON.parse(line);
      if (doc.type === "hello") {
        resolveHello(doc);
        return;
      }
      const cb = this.pending.get(doc.id);
      if (cb) {
        this.pending.delete(doc.id);
        cb(doc);
      }
    });
    this.proc.stdin.write(helloLine() + "\n");
  }

  async handshake(): Promise<any> {
    return this.hello;
  }

  request(doc: Record<string, unknown>): Promise<any> {
    return new Promise((resolve) => {
      this.pending.set(doc.id as string, resolve);
      this.proc.stdin.write(JSON.stringify({ type: "request", ...doc }) + "\n");
    });
  }

  sendRaw(line: string): void {
    this.proc.stdin.write(line + "\n");
  }

  close(): void {
    this.proc.stdin.end();
    this.proc.kill();
  }
}

describe("worker loop", () => {
  let client: WorkerClient;
  const ir = loadIr();

  beforeAll(async () => {
    expect(fs.existsSync(WORKER), "run `npm run build` before the worker tests").toBe(true);
    client = new WorkerClient();
    const hello = await client.handshake();
    expect(hello.protocol).toBe(PROTOCOL_VERSION);
  }, 60_000);

  afterAll(() => {
    client?.close();
  });

  it("answers a canned training request with a schema-valid response", { timeout: 300_000 }, async () => {
    const resp = await client.request({
      id: "r1",
      theta: null,
      ir,
      budget: 1.0,
      dataset: "tiny16",
      seed: 7,
      param_budget: 50_000,
    });
    expect(resp.status).toBe("ok");
    expect(resp.objectives.val_error).toBeGreaterThanOrEqual(0);
    expect(resp.objectives.val_error).toBeLessThanOrEqual(1);
    expect(resp.objectives.memory_mb).toBeGreaterThan(0);
    expect(resp.objectives.train_time_s).toBeGreaterThan(0);
  });

  it("malformed lines produce an error response and the loop survives", { timeout: 300_000 }, async () => {
    client.sendRaw("this is not json");
    const resp = await client.request({
      id: "r2",
      theta: null,
      ir,
      budget: 0.5, // floors to zero epochs: evaluation only
      dataset: "tiny16",
      seed: 8,
      param_budget: 50_000,
    });
    expect(resp.status).toBe("ok");
  });

  it("theta-only requests fail with a clear message", async () => {
    const resp = await client.request({
      id: "r3",
      theta: { space: "hnag", N_t: 5 },
      ir: null,
      budget: 1.0,
      dataset: "tiny16",
      seed: 9,
      param_budget: 50_000,
    });
    expect(resp.status).toBe("failed");
    expect(resp.message).toMatch(/pre-sampled/);
  });

  it("eight concurrent requests all come back, order-independent", { timeout: 600_000 }, async () => {
    const ids = Array.from({ length: 8 }, (_, i) => `c${i}`);
    const responses = await Promise.all(
      ids.map((id) =>
        client.request({
          id,
          theta: null,
          ir,
          budget: 0.5,
          dataset: "tiny16",
          seed: 1,
          param_budget: 50_000,
        }),
      ),
    );
    expect(responses.map((r) => r.id).sort()).toEqual(ids.slice().sort());
    expect(responses.every((r) => r.status === "ok")).toBe(true);
  });

  it("one hundred concurrent evaluation-only requests lose no ids", { timeout: 600_000 }, async () => {
    const ids = Array.from({ length: 100 }, (_, i) => `q${i}`);
    const responses = await Promise.all(
      ids.map((id) =>
        client.request({
          id,
          theta: null,
          ir,
          budget: 0.5,
          dataset: "tiny16",
          seed: 2,
          param_budget: 50_000,
        }),
      ),
    );
    expect(new Set(responses.map((r) => r.id)).size).toBe(100);
    expect(responses.every((r) => r.status === "ok")).toBe(true);
  });
});
