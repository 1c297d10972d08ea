"""Uniform objective evaluation: builtin benchmarks, cost-model proxies,
and external workers speaking the nago-eval/1 protocol.

The wire protocol is newline-delimited JSON over the worker's stdin and
stdout (one object per line, responses matched to requests by ``id``,
out-of-order allowed).  See docs/protocol.md for the bit-exact field
list.  Workers are spawned with :func:`spawn_worker`; the environment
variable ``NAGO_WORKER`` supplies a default worker command line.

Builtin and proxy evaluations are pure functions of the request
contents, so replaying a run reproduces it byte for byte.
"""

from __future__ import annotations

import json
import math
import os
import shlex
import subprocess
import threading
import time
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import costs
from .errors import NagoError, ParameterDomainError, ProtocolError, WorkerError
from .rng import derive_seed, generator
from .space import sample_architecture, theta_from_flat

PROTOCOL_VERSION = "nago-eval/1"

# dataset tag -> input resolution (square); unknown tags fall back to 32
DATASET_RESOLUTION = {
    "cifar10": 32,
    "cifar100": 32,
    "tiny32": 32,
    "sport8": 224,
    "mit67": 224,
    "flowers102": 224,
    "imagenet": 224,
    "large224": 224,
}


def resolution_for(dataset: str) -> int:
    return DATASET_RESOLUTION.get(dataset.lower(), 32)


def default_param_budget(dataset: str) -> int:
    """4.0M learnable parameters for small-image tags, 6.0M for large."""
    return 6_000_000 if resolution_for(dataset) > 64 else 4_000_000


@dataclass(frozen=True)
class EvalRequest:
    id: str
    theta: dict | None
    budget: float
    dataset: str = "tiny32"
    seed: int = 0
    param_budget: int = 4_000_000
    ir: dict | None = None

    def __post_init__(self):
        if self.budget <= 0:
            raise ParameterDomainError("evaluation budget must be > 0")
        if self.theta is None and self.ir is None:
            raise ParameterDomainError("request needs either theta or ir")

    def to_json_line(self) -> str:
        doc = {
            "type": "request",
            "id": self.id,
            "theta": self.theta,
            "budget": self.budget,
            "dataset": self.dataset,
            "seed": self.seed,
            "param_budget": self.param_budget,
            "ir": self.ir,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json_line(line: str) -> "EvalRequest":
        doc = json.loads(line)
        if doc.get("type") != "request":
            raise ProtocolError(f"expected a request line, got {doc.get('type')!r}")
        return EvalRequest(
            id=doc["id"],
            theta=doc.get("theta"),
            budget=doc["budget"],
            dataset=doc.get("dataset", "tiny32"),
            seed=doc.get("seed", 0),
            param_budget=doc.get("param_budget", 4_000_000),
            ir=doc.get("ir"),
        )


@dataclass(frozen=True)
class EvalResponse:
    id: str
    objectives: dict[str, float] = field(default_factory=dict)
    status: str = "ok"
    message: str = ""

    def __post_init__(self):
        if self.status == "ok":
            for k, v in self.objectives.items():
                if not math.isfinite(v):
                    raise ProtocolError(f"objective {k!r} is not finite")

    def to_json_line(self) -> str:
        doc = {
            "type": "response",
            "id": self.id,
            "status": self.status,
            "objectives": self.objectives,
            "message": self.message,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json_line(line: str) -> "EvalResponse":
        doc = json.loads(line)
        if doc.get("type") != "response":
            raise ProtocolError(f"expected a response line, got {doc.get('type')!r}")
        return EvalResponse(
            id=doc["id"],
            objectives={k: float(v) for k, v in (doc.get("objectives") or {}).items()},
            status=doc.get("status", "ok"),
            message=doc.get("message", ""),
        )


def hello_line() -> str:
    return json.dumps({"type": "hello", "protocol": PROTOCOL_VERSION}, sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class SyntheticBenchmark:
    """Analytic multi-fidelity test function on the unit cube.

    The noise standard deviation is ``noise_scale * sqrt(max(0, 1/b - 1/b_max))``,
    which behaves like noise_scale/sqrt(b) at small budgets and vanishes
    exactly at the maximum budget.
    """

    name: str
    dimension: int
    optimum: tuple[float, ...]
    noise_scale: float = 0.3
    max_budget: float = 120.0
    objective_names: tuple[str, ...] = ("val_error",)

    def values(self, x: np.ndarray, budget: float, seed: int) -> dict[str, float]:
        x = np.asarray(x, dtype=float)
        if self.name.startswith("sphere"):
            f = float(np.sum((x - np.asarray(self.optimum)) ** 2))
            clean = {"val_error": f}
        elif self.name.startswith("toy-pareto"):
            t = float(x[0])
            clean = {"f1": t * t, "f2": (t - 1.0) ** 2}
        else:  # pragma: no cover - registry guards names
            raise ParameterDomainError(f"unknown benchmark {self.name!r}")
        sd = self.noise_scale * math.sqrt(max(0.0, 1.0 / budget - 1.0 / self.max_budget))
        if sd > 0:
            rng = generator(derive_seed(seed, "bench", self.name, budget, *map(float, x)))
            clean = {k: v + float(rng.normal(0.0, sd)) for k, v in clean.items()}
        return clean

    def noiseless(self, x: np.ndarray) -> dict[str, float]:
        return self.values(x, self.max_budget, 0)


BENCHMARKS: dict[str, SyntheticBenchmark] = {
    "sphere-mf": SyntheticBenchmark(
        "sphere-mf", 4, (0.7, 0.2, 0.55, 0.35), noise_scale=0.15, max_budget=120.0
    ),
    "toy-pareto": SyntheticBenchmark(
        "toy-pareto", 1, (0.0,), noise_scale=0.0, max_budget=120.0,
        objective_names=("f1", "f2"),
    ),
}


class Evaluator:
    """Base evaluator: sequential batch over :meth:`evaluate`."""

    objective_names: tuple[str, ...] = ("val_error",)

    def evaluate(self, request: EvalRequest) -> EvalResponse:
        raise NotImplementedError

    def evaluate_batch(self, requests: Sequence[EvalRequest]) -> list[EvalResponse]:
        return [self.evaluate(r) for r in requests]

    def close(self) -> None:
        pass


class BuiltinEvaluator(Evaluator):
    """Evaluates a synthetic benchmark; theta keys x0..x{d-1} on [0,1]."""

    def __init__(self, bench: SyntheticBenchmark):
        self.bench = bench
        self.objective_names = bench.objective_names

    def vector_of(self, theta: dict) -> np.ndarray:
        return np.array([float(theta[f"x{i}"]) for i in range(self.bench.dimension)])

    def evaluate(self, request: EvalRequest) -> EvalResponse:
        x = self.vector_of(request.theta or {})
        vals = self.bench.values(x, request.budget, request.seed)
        return EvalResponse(id=request.id, objectives=vals)


def _sigmoid(z: float) -> float:
    return 1.0 / (1.0 + math.exp(-z))


def proxy_pseudo_error(ir, input_resolution: int) -> float:
    """Documented pseudo-error v1: a logistic bowl over (log FLOPs, mean
    topological depth, node count).  Smooth in the generator
    hyperparameters on average; explicitly not a claim about accuracy.
    """
    flops = costs.estimate_flops(ir, input_resolution)
    n = len(ir.nodes)
    depth = {ir.input_id: 0}
    order: dict[int, list[int]] = {}
    for s, d in ir.edges:
        order.setdefault(d, []).append(s)
    mean_depth = 0.0
    for node in ir.nodes:  # ids are topologically safe: edges go low->high
        preds = order.get(node.id, [])
        depth[node.id] = 1 + max((depth.get(p, 0) for p in preds), default=0)
        mean_depth += depth[node.id]
    mean_depth /= max(n, 1)
    z_f = math.log10(1.0 + flops) / 10.0
    raw = 1.6 - 2.0 * z_f + 2.5 * (z_f - 0.62) ** 2 - 0.35 * math.log1p(mean_depth) + 0.6 * n / 1000.0
    return 0.05 + 0.9 * _sigmoid(raw)


class ProxyEvaluator(Evaluator):
    """Prices sampled architectures with the analytic cost model and a
    smooth pseudo-error; the budget-decaying noise is seeded by the
    request contents, so identical requests give identical responses."""

    objective_names = ("val_error", "memory_mb", "train_time_s")

    def __init__(self, noise_scale: float = 0.2):
        self.noise_scale = noise_scale

    def evaluate(self, request: EvalRequest) -> EvalResponse:
        try:
            theta = theta_from_flat(request.theta)
            ir = sample_architecture(theta, request.seed, request.param_budget)
            res = resolution_for(request.dataset)
            err = proxy_pseudo_error(ir, res)
            sd = self.noise_scale / math.sqrt(request.budget)
            theta_blob = json.dumps(request.theta, sort_keys=True)
            rng = generator(derive_seed(request.seed, "proxy-noise", theta_blob, float(request.budget)))
            err = min(max(err + float(rng.normal(0.0, sd)), 0.0), 1.0)
            memory = costs.estimate_memory(ir, res) / (1024 * 1024)
            t = costs.time_proxy(ir, res) * request.budget
            return EvalResponse(
                id=request.id,
                objectives={"val_error": err, "memory_mb": memory, "train_time_s": t},
            )
        except NagoError as exc:
            return EvalResponse(id=request.id, objectives={}, status="failed", message=str(exc))


class WorkerHandle:
    """Owns a worker subprocess: serialized writes, a reader thread that
    demultiplexes responses by id, and a rolling-median timeout policy
    (10x the median response time, floored at ``timeout_floor`` seconds).
    """

    def __init__(self, command: str | Sequence[str], env: dict | None = None, timeout_floor: float = 60.0):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        full_env = dict(os.environ)
        if env:
            full_env.update(env)
        try:
            self.proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                env=full_env,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise WorkerError(f"failed to spawn worker {argv!r}: {exc}") from exc
        self.timeout_floor = timeout_floor
        self._write_lock = threading.Lock()
        self._pending: dict[str, threading.Event] = {}
        self._results: dict[str, EvalResponse] = {}
        self._durations: deque[float] = deque(maxlen=32)
        self._closed = False
        self._handshake()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _handshake(self) -> None:
        assert self.proc.stdin and self.proc.stdout
        self.proc.stdin.write(hello_line() + "\n")
        self.proc.stdin.flush()
        line = self.proc.stdout.readline()
        if not line:
            raise WorkerError("worker exited before the handshake")
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"handshake is not JSON: {line!r}") from exc
        if doc.get("type") != "hello" or doc.get("protocol") != PROTOCOL_VERSION:
            raise ProtocolError(f"protocol mismatch: {doc!r}")

    def _read_loop(self) -> None:
        assert self.proc.stdout
        for line in self.proc.stdout:
            line = line.strip()
            if not line:
                continue
            try:
                resp = EvalResponse.from_json_line(line)
            except (json.JSONDecodeError, ProtocolError, KeyError):
                continue  # malformed line: ignore, the sender logs it
            self._results[resp.id] = resp
            event = self._pending.pop(resp.id, None)
            if event:
                event.set()
        # EOF: release all waiters
        for rid, event in list(self._pending.items()):
            self._results.setdefault(
                rid, EvalResponse(id=rid, objectives={}, status="failed", message="worker closed its pipe")
            )
            event.set()
        self._pending.clear()

    def _timeout(self) -> float:
        if not self._durations:
            return self.timeout_floor
        med = sorted(self._durations)[len(self._durations) // 2]
        return max(self.timeout_floor, 10.0 * med)

    def submit(self, request: EvalRequest) -> threading.Event:
        if self._closed or self.proc.poll() is not None:
            raise WorkerError("worker is not running")
        event = threading.Event()
        self._pending[request.id] = event
        with self._write_lock:
            assert self.proc.stdin
            try:
                self.proc.stdin.write(request.to_json_line() + "\n")
                self.proc.stdin.flush()
            except (BrokenPipeError, ValueError) as exc:
                self._pending.pop(request.id, None)
                raise WorkerError(f"worker pipe broke: {exc}") from exc
        return event

    def wait(self, request_id: str, started: float, event: threading.Event) -> EvalResponse:
        deadline = started + self._timeout()
        if not event.wait(timeout=max(0.0, deadline - time.monotonic())):
            self._pending.pop(request_id, None)
            return EvalResponse(
                id=request_id, objectives={}, status="failed",
                message=f"timeout after {self._timeout():.1f}s",
            )
        self._durations.append(time.monotonic() - started)
        return self._results.pop(request_id)

    def call(self, request: EvalRequest) -> EvalResponse:
        started = time.monotonic()
        try:
            event = self.submit(request)
        except WorkerError as exc:
            return EvalResponse(id=request.id, objectives={}, status="failed", message=str(exc))
        return self.wait(request.id, started, event)

    def call_many(self, requests: Sequence[EvalRequest]) -> list[EvalResponse]:
        started = time.monotonic()
        events = []
        for r in requests:
            try:
                events.append((r.id, self.submit(r)))
            except WorkerError as exc:
                events.append((r.id, None))
                self._results[r.id] = EvalResponse(
                    id=r.id, objectives={}, status="failed", message=str(exc)
                )
        out = []
        for rid, event in events:
            if event is None:
                out.append(self._results.pop(rid))
            else:
                out.append(self.wait(rid, started, event))
        return out

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        try:
            if self.proc.stdin:
                self.proc.stdin.close()
        except OSError:
            pass
        try:
            self.proc.wait(timeout=2.0)
        except subprocess.TimeoutExpired:
            self.proc.kill()


def spawn_worker(command: str | Sequence[str], env: dict | None = None, timeout_floor: float = 60.0) -> WorkerHandle:
    """Start an external evaluation worker and complete the handshake."""
    return WorkerHandle(command, env=env, timeout_floor=timeout_floor)


class WorkerEvaluator(Evaluator):
    """Dispatches to an external worker, pre-sampling one architecture per
    generator request (the graph generators live on this side of the
    protocol; the worker only materializes and trains)."""

    objective_names = ("val_error", "memory_mb", "train_time_s")

    def __init__(self, command: str | Sequence[str], timeout_floor: float = 60.0):
        self.handle = spawn_worker(command, timeout_floor=timeout_floor)

    def _enrich(self, request: EvalRequest) -> EvalRequest:
        if request.ir is None and request.theta and "space" in request.theta:
            theta = theta_from_flat(request.theta)
            ir = sample_architecture(theta, request.seed, request.param_budget)
            return replace(request, ir=json.loads(ir.to_json()))
        return request

    def evaluate(self, request: EvalRequest) -> EvalResponse:
        try:
            request = self._enrich(request)
        except NagoError as exc:
            return EvalResponse(id=request.id, objectives={}, status="failed", message=str(exc))
        return self.handle.call(request)

    def evaluate_batch(self, requests: Sequence[EvalRequest]) -> list[EvalResponse]:
        ready: list[EvalRequest] = []
        failed: dict[str, EvalResponse] = {}
        for r in requests:
            try:
                ready.append(self._enrich(r))
            except NagoError as exc:
                failed[r.id] = EvalResponse(id=r.id, objectives={}, status="failed", message=str(exc))
        responses = {r.id: r for r in self.handle.call_many(ready)} if ready else {}
        responses.update(failed)
        return [responses[r.id] for r in requests]

    def close(self) -> None:
        self.handle.close()


def make_evaluator(spec: str, timeout_floor: float = 60.0) -> Evaluator:
    """Build an evaluator from a spec string.

    ``builtin:<name>`` | ``proxy`` | ``worker:<command line>`` |
    ``worker`` (command taken from $NAGO_WORKER).
    """
    if spec == "proxy":
        return ProxyEvaluator()
    if spec.startswith("builtin:"):
        name = spec.split(":", 1)[1]
        if name not in BENCHMARKS:
            raise ParameterDomainError(f"unknown builtin benchmark {name!r} (have {sorted(BENCHMARKS)})")
        return BuiltinEvaluator(BENCHMARKS[name])
    if spec == "worker" or spec.startswith("worker:"):
        cmd = spec.split(":", 1)[1] if ":" in spec else os.environ.get("NAGO_WORKER", "")
        if not cmd:
            raise ParameterDomainError("worker evaluator needs a command (worker:<cmd> or $NAGO_WORKER)")
        return WorkerEvaluator(cmd, timeout_floor=timeout_floor)
    raise ParameterDomainError(f"unknown evaluator spec {spec!r}")
