"""Architecture sampling from stochastic network generators.

Two generator families are implemented:

* the hierarchical generator (``sample_hnag``): a top-level Watts-Strogatz
  graph of cells, each cell an independently sampled Erdős–Rényi graph,
  each of whose nodes is an independently sampled bottom-level WS graph of
  atomic compute nodes;
* the flat baseline (``sample_rnag``): three WS graphs wired in sequence,
  one per stage.

Both flatten into an :class:`ArchitectureIR` — a single-input/single-output
DAG of typed compute nodes with per-stage resolution and channel counts.
Sub-graphs are sampled on split RNG streams keyed by (level, parent ids),
so changing one hyperparameter never reshuffles unrelated sub-graphs.

Flattening rule: when two sub-graphs are joined by a higher-level edge,
every output-boundary node of the source connects to every input-boundary
node of the destination (the sub-graphs' virtual endpoints dissolve).
Incoming activations are aligned at merge time: pooled down to the
receiving node's resolution and passed through a 1x1 projection when the
channel counts differ.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import costs
from .errors import InfeasibleSplitError, IrInvariantError, ParameterDomainError
from .graphs import Dag, ErParams, WsParams, generate_er, generate_ws, to_dag
from .rng import derive_seed, generator

IR_SCHEMA = "nago-ir/1"

OP_KINDS = ("conv1x1", "conv3x3", "conv5x5", "pool3x3", "pool5x5")
MERGE_KINDS = ("weighted_sum", "attention_weighted_sum", "concat")

# Search ranges for the hierarchical generator hyperparameters.
HNAG_BOUNDS: dict[str, tuple[float, float, bool]] = {
    "N_t": (3, 10, True),
    "K_t": (2, 5, True),
    "P_t": (0.1, 0.9, False),
    "N_m": (1, 10, True),
    "P_m": (0.1, 0.9, False),
    "N_b": (3, 10, True),
    "K_b": (2, 5, True),
    "P_b": (0.1, 0.9, False),
}

# Search ranges for the flat baseline (one WS graph per stage).
RNAG_BOUNDS: dict[str, tuple[float, float, bool]] = {}
for _i in (1, 2, 3):
    RNAG_BOUNDS[f"N_{_i}"] = (10, 40, True)
    RNAG_BOUNDS[f"K_{_i}"] = (2, 9, True)
    RNAG_BOUNDS[f"P_{_i}"] = (0.1, 0.9, False)

# Extra searchable blocks (expanded spaces).  Merge/op weights are raw
# values normalized to a simplex when the theta is built.
MERGEOP_BOUNDS: dict[str, tuple[float, float, bool]] = {
    **{f"M_{m}": (0.0, 1.0, False) for m in ("ws", "att", "cat")},
    **{f"OP_{o}": (0.0, 1.0, False) for o in ("c1", "c3", "c5", "p3", "p5")},
}
STAGECHANNEL_BOUNDS: dict[str, tuple[float, float, bool]] = {
    **{f"S_{i}": (0.05, 1.0, False) for i in (1, 2, 3)},
    **{f"C_{i}": (0.25, 4.0, False) for i in (1, 2, 3)},
}

DEFAULT_THETA_S = (1 / 3, 1 / 3, 1 / 3)
DEFAULT_THETA_C = (1.0, 2.0, 4.0)
DEFAULT_THETA_M = (1.0, 0.0, 0.0)  # one-hot weighted_sum
DEFAULT_THETA_OP = (0.0, 1.0, 0.0, 0.0, 0.0)  # one-hot conv3x3


def _check_simplex(name: str, w: Sequence[float], size: int) -> tuple[float, ...]:
    w = tuple(float(x) for x in w)
    if len(w) != size:
        raise ParameterDomainError(f"{name} must have {size} entries, got {len(w)}")
    if any(x < 0 for x in w):
        raise ParameterDomainError(f"{name} entries must be >= 0")
    if abs(sum(w) - 1.0) > 1e-6:
        raise ParameterDomainError(f"{name} must sum to 1, got {sum(w)!r}")
    return w


@dataclass(frozen=True)
class GeneratorHyperparams:
    """Full hyperparameter vector of the hierarchical generator.

    ``theta_s`` (stage ratios) is normalized on construction; ``theta_m``
    and ``theta_op`` must already be normalized probability weights over
    :data:`MERGE_KINDS` and :data:`OP_KINDS`.
    """

    theta_top: WsParams
    theta_mid: ErParams
    theta_bottom: WsParams
    theta_s: tuple[float, ...] = DEFAULT_THETA_S
    theta_c: tuple[float, ...] = DEFAULT_THETA_C
    theta_m: tuple[float, ...] = DEFAULT_THETA_M
    theta_op: tuple[float, ...] = DEFAULT_THETA_OP

    def __post_init__(self):
        s = tuple(float(x) for x in self.theta_s)
        if len(s) < 1 or any(x <= 0 for x in s):
            raise ParameterDomainError("theta_s entries must be > 0")
        total = sum(s)
        object.__setattr__(self, "theta_s", tuple(x / total for x in s))
        c = tuple(float(x) for x in self.theta_c)
        if len(c) != len(s):
            raise ParameterDomainError("theta_c must match theta_s length")
        if any(x <= 0 for x in c):
            raise ParameterDomainError("theta_c entries must be > 0")
        object.__setattr__(self, "theta_c", c)
        object.__setattr__(self, "theta_m", _check_simplex("theta_m", self.theta_m, len(MERGE_KINDS)))
        object.__setattr__(self, "theta_op", _check_simplex("theta_op", self.theta_op, len(OP_KINDS)))

    @property
    def stage_count(self) -> int:
        return len(self.theta_s)

    def to_flat(self) -> dict:
        return {
            "space": "hnag",
            "N_t": self.theta_top.n, "K_t": self.theta_top.k, "P_t": self.theta_top.p,
            "N_m": self.theta_mid.n, "P_m": self.theta_mid.p,
            "N_b": self.theta_bottom.n, "K_b": self.theta_bottom.k, "P_b": self.theta_bottom.p,
            "theta_S": list(self.theta_s),
            "theta_C": list(self.theta_c),
            "theta_M": list(self.theta_m),
            "theta_OP": list(self.theta_op),
        }

    @staticmethod
    def from_flat(doc: dict) -> "GeneratorHyperparams":
        if doc.get("space", "hnag") != "hnag":
            raise ParameterDomainError(f"not a hierarchical theta document: {doc.get('space')!r}")
        return GeneratorHyperparams(
            theta_top=WsParams(int(doc["N_t"]), int(doc["K_t"]), float(doc["P_t"])),
            theta_mid=ErParams(int(doc["N_m"]), float(doc["P_m"])),
            theta_bottom=WsParams(int(doc["N_b"]), int(doc["K_b"]), float(doc["P_b"])),
            theta_s=tuple(doc.get("theta_S", DEFAULT_THETA_S)),
            theta_c=tuple(doc.get("theta_C", DEFAULT_THETA_C)),
            theta_m=tuple(doc.get("theta_M", DEFAULT_THETA_M)),
            theta_op=tuple(doc.get("theta_OP", DEFAULT_THETA_OP)),
        )


@dataclass(frozen=True)
class RnagHyperparams:
    """Flat baseline hyperparameters: one WS graph per stage."""

    stages: tuple[WsParams, WsParams, WsParams]
    theta_c: tuple[float, ...] = DEFAULT_THETA_C
    theta_m: tuple[float, ...] = DEFAULT_THETA_M
    theta_op: tuple[float, ...] = DEFAULT_THETA_OP

    def __post_init__(self):
        if len(self.stages) != 3:
            raise ParameterDomainError("the flat baseline uses exactly three stages")
        c = tuple(float(x) for x in self.theta_c)
        if len(c) != 3 or any(x <= 0 for x in c):
            raise ParameterDomainError("theta_c must be three positive entries")
        object.__setattr__(self, "theta_c", c)
        object.__setattr__(self, "theta_m", _check_simplex("theta_m", self.theta_m, len(MERGE_KINDS)))
        object.__setattr__(self, "theta_op", _check_simplex("theta_op", self.theta_op, len(OP_KINDS)))

    def to_flat(self) -> dict:
        doc: dict = {"space": "rnag"}
        for i, ws in enumerate(self.stages, start=1):
            doc[f"N_{i}"], doc[f"K_{i}"], doc[f"P_{i}"] = ws.n, ws.k, ws.p
        doc["theta_C"] = list(self.theta_c)
        doc["theta_M"] = list(self.theta_m)
        doc["theta_OP"] = list(self.theta_op)
        return doc

    @staticmethod
    def from_flat(doc: dict) -> "RnagHyperparams":
        if doc.get("space") != "rnag":
            raise ParameterDomainError(f"not a flat-baseline theta document: {doc.get('space')!r}")
        stages = tuple(
            WsParams(int(doc[f"N_{i}"]), int(doc[f"K_{i}"]), float(doc[f"P_{i}"])) for i in (1, 2, 3)
        )
        return RnagHyperparams(
            stages=stages,  # type: ignore[arg-type]
            theta_c=tuple(doc.get("theta_C", DEFAULT_THETA_C)),
            theta_m=tuple(doc.get("theta_M", DEFAULT_THETA_M)),
            theta_op=tuple(doc.get("theta_OP", DEFAULT_THETA_OP)),
        )


def theta_from_flat(doc: dict):
    """Dispatch a flat theta document to the right hyperparameter type."""
    return RnagHyperparams.from_flat(doc) if doc.get("space") == "rnag" else GeneratorHyperparams.from_flat(doc)


@dataclass(frozen=True)
class StagePlan:
    nodes_per_stage: tuple[int, ...]
    channels_per_stage: tuple[int, ...] = ()


def split_stages(top_node_count: int, theta_s: Sequence[float]) -> StagePlan:
    """Split ``top_node_count`` nodes over stages proportionally to ``theta_s``.

    Largest-remainder rounding with ties broken in favour of earlier
    stages; every stage gets at least one node (shortfall is taken from
    the largest stages).  Ratios are normalized to sum to one first.
    """
    stages = len(theta_s)
    if stages < 1 or any(x <= 0 for x in theta_s):
        raise ParameterDomainError("stage ratios must be positive")
    if top_node_count < stages:
        raise InfeasibleSplitError(
            f"cannot split {top_node_count} nodes into {stages} non-empty stages"
        )
    total = float(sum(theta_s))
    quotas = [top_node_count * x / total for x in theta_s]
    counts = [int(math.floor(q)) for q in quotas]
    remainder = top_node_count - sum(counts)
    by_fraction = sorted(range(stages), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in by_fraction[:remainder]:
        counts[i] += 1
    # Enforce the minimum of one node per stage.
    for i in range(stages):
        while counts[i] == 0:
            donor = max(range(stages), key=lambda j: (counts[j], -j))
            counts[donor] -= 1
            counts[i] += 1
    return StagePlan(tuple(counts))


def _categorical(cumw: np.ndarray, u: float) -> int:
    idx = int(np.searchsorted(cumw, u, side="right"))
    return min(idx, len(cumw) - 1)


def sample_merge_and_ops(
    node_count: int,
    theta_m: Sequence[float],
    theta_op: Sequence[float],
    seed: int,
) -> tuple[list[str], list[str]]:
    """Draw a merge strategy and an op kind for each of ``node_count`` nodes.

    Independent categorical draws, deterministic per seed.  Weight vectors
    must be normalized.
    """
    theta_m = _check_simplex("theta_m", theta_m, len(MERGE_KINDS))
    theta_op = _check_simplex("theta_op", theta_op, len(OP_KINDS))
    rng = generator(derive_seed(seed, "mergeops", node_count))
    cm = np.cumsum(theta_m)
    co = np.cumsum(theta_op)
    merges = [MERGE_KINDS[_categorical(cm, rng.random())] for _ in range(node_count)]
    ops = [OP_KINDS[_categorical(co, rng.random())] for _ in range(node_count)]
    return merges, ops


@dataclass(frozen=True)
class IrNode:
    id: int
    op_kind: str
    out_channels: int
    resolution_divisor: int
    merge_strategy: str
    stage_index: int


@dataclass(frozen=True)
class ArchitectureIR:
    """Flattened, serializable architecture DAG.

    Compute nodes carry ids ``0..len(nodes)-1``; the virtual input is
    ``len(nodes)`` and the virtual output ``len(nodes)+1``.  See
    docs/formats.md for the field-by-field schema.
    """

    nodes: tuple[IrNode, ...]
    edges: tuple[tuple[int, int], ...]
    input_id: int
    output_id: int
    provenance: dict = field(default_factory=dict)

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    def predecessors(self, node_id: int) -> list[int]:
        return [s for s, d in self.edges if d == node_id]

    def validate(self) -> None:
        k = len(self.nodes)
        if self.input_id != k or self.output_id != k + 1:
            raise IrInvariantError("virtual node ids must be node_count and node_count+1")
        ids = [n.id for n in self.nodes]
        if ids != list(range(k)):
            raise IrInvariantError("compute node ids must be 0..node_count-1 in order")
        for n in self.nodes:
            if n.op_kind not in OP_KINDS:
                raise IrInvariantError(f"unknown op kind {n.op_kind!r}")
            if n.merge_strategy not in MERGE_KINDS:
                raise IrInvariantError(f"unknown merge strategy {n.merge_strategy!r}")
            if n.out_channels < 1:
                raise IrInvariantError("channels must be >= 1")
            d = n.resolution_divisor
            if d < 1 or d & (d - 1):
                raise IrInvariantError("resolution divisor must be a power of two")
        divisor = {n.id: n.resolution_divisor for n in self.nodes}
        divisor[self.input_id] = 1
        divisor[self.output_id] = max((n.resolution_divisor for n in self.nodes), default=1)
        indeg = {i: 0 for i in range(k + 2)}
        for s, d in self.edges:
            if s not in indeg or d not in indeg:
                raise IrInvariantError(f"edge ({s},{d}) references an unknown node")
            if d == self.input_id or s == self.output_id:
                raise IrInvariantError("virtual input has no predecessors, output no successors")
            if divisor[s] > divisor[d]:
                raise IrInvariantError("resolution divisor must be nondecreasing along edges")
            indeg[d] += 1
        for n in self.nodes:
            if indeg[n.id] < 1:
                raise IrInvariantError(f"node {n.id} has no predecessor")
        if indeg[self.output_id] < 1:
            raise IrInvariantError("output is unreachable")
        self._check_acyclic()

    def _check_acyclic(self) -> None:
        indeg = {i: 0 for i in range(self.node_count + 2)}
        succ: dict[int, list[int]] = {i: [] for i in indeg}
        for s, d in self.edges:
            succ[s].append(d)
            indeg[d] += 1
        ready = [i for i, deg in indeg.items() if deg == 0]
        seen = 0
        while ready:
            node = ready.pop()
            seen += 1
            for nxt in succ[node]:
                indeg[nxt] -= 1
                if indeg[nxt] == 0:
                    ready.append(nxt)
        if seen != self.node_count + 2:
            raise IrInvariantError("architecture graph contains a cycle")

    def to_json(self, pretty: bool = False) -> str:
        doc = {
            "schema": IR_SCHEMA,
            "input": self.input_id,
            "output": self.output_id,
            "nodes": [
                {
                    "id": n.id,
                    "op": n.op_kind,
                    "channels": n.out_channels,
                    "divisor": n.resolution_divisor,
                    "merge": n.merge_strategy,
                    "stage": n.stage_index,
                }
                for n in self.nodes
            ],
            "edges": [list(e) for e in self.edges],
            "provenance": self.provenance,
        }
        if pretty:
            return json.dumps(doc, sort_keys=True, indent=2)
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json(text: str) -> "ArchitectureIR":
        doc = json.loads(text)
        if doc.get("schema") != IR_SCHEMA:
            raise IrInvariantError(f"unexpected IR schema: {doc.get('schema')!r}")
        nodes = tuple(
            IrNode(n["id"], n["op"], n["channels"], n["divisor"], n["merge"], n["stage"])
            for n in doc["nodes"]
        )
        ir = ArchitectureIR(
            nodes=nodes,
            edges=tuple((s, d) for s, d in doc["edges"]),
            input_id=doc["input"],
            output_id=doc["output"],
            provenance=doc.get("provenance", {}),
        )
        ir.validate()
        return ir

    def to_dot(self) -> str:
        lines = ["digraph architecture {", "  rankdir=TB;"]
        lines.append(f'  {self.input_id} [label="input", shape=diamond];')
        lines.append(f'  {self.output_id} [label="output", shape=diamond];')
        for n in self.nodes:
            label = f"{n.id}\\n{n.op_kind} c{n.out_channels} /{n.resolution_divisor}"
            lines.append(f'  {n.id} [label="{label}"];')
        lines += [f"  {s} -> {d};" for s, d in self.edges]
        lines.append("}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class _Skeleton:
    """Structure of an architecture before channels are solved."""

    ops: list[str]
    merges: list[str]
    stage_index: list[int]
    edges: list[tuple[int, int]]
    input_id: int
    output_id: int


def _finalize(
    skeleton: _Skeleton,
    theta_c: Sequence[float],
    param_budget: int,
    input_channels: int,
    provenance: dict,
) -> ArchitectureIR:
    solution = costs.solve_channels(
        skeleton, theta_c, param_budget, input_channels=input_channels
    )
    nodes = tuple(
        IrNode(
            id=i,
            op_kind=skeleton.ops[i],
            out_channels=solution.channels_per_stage[skeleton.stage_index[i]],
            resolution_divisor=2 ** skeleton.stage_index[i],
            merge_strategy=skeleton.merges[i],
            stage_index=skeleton.stage_index[i],
        )
        for i in range(len(skeleton.ops))
    )
    ir = ArchitectureIR(
        nodes=nodes,
        edges=tuple(sorted(skeleton.edges)),
        input_id=skeleton.input_id,
        output_id=skeleton.output_id,
        provenance=provenance,
    )
    ir.validate()
    return ir


def _bipartite(src_outs: Sequence[int], dst_ins: Sequence[int]) -> list[tuple[int, int]]:
    return [(s, d) for s in src_outs for d in dst_ins]


def sample_hnag(
    theta: GeneratorHyperparams,
    seed: int,
    param_budget: int,
    input_channels: int = 3,
) -> ArchitectureIR:
    """Sample one architecture from the hierarchical generator.

    The top-level WS graph is split into stages (resolution halves at each
    stage boundary); every top node expands into an ER cell graph, every
    cell node into a bottom WS graph of compute nodes.  Per-node merge
    strategies and ops are categorical draws from ``theta_m``/``theta_op``;
    channels are solved against ``param_budget``.
    """
    top_dag = to_dag(generate_ws(theta.theta_top, derive_seed(seed, "top")))
    plan = split_stages(top_dag.node_count, theta.theta_s)
    stage_of_top: list[int] = []
    for stage, count in enumerate(plan.nodes_per_stage):
        stage_of_top += [stage] * count

    mid_dags: list[Dag] = []
    bottom_dags: list[list[Dag]] = []
    for t in range(top_dag.node_count):
        mid = to_dag(generate_er(theta.theta_mid, derive_seed(seed, "mid", t)))
        mid_dags.append(mid)
        bottoms = [
            to_dag(generate_ws(theta.theta_bottom, derive_seed(seed, "bottom", t, m)))
            for m in range(mid.node_count)
        ]
        bottom_dags.append(bottoms)

    # Global compute-node ids, in (top, mid, bottom) lexicographic order.
    offset: dict[tuple[int, int], int] = {}
    counter = 0
    stage_index: list[int] = []
    for t in range(top_dag.node_count):
        for m in range(mid_dags[t].node_count):
            offset[(t, m)] = counter
            n_b = bottom_dags[t][m].node_count
            counter += n_b
            stage_index += [stage_of_top[t]] * n_b
    total = counter

    def bottom_ins(t: int, m: int) -> list[int]:
        base = offset[(t, m)]
        return [base + b for b in bottom_dags[t][m].input_boundary()]

    def bottom_outs(t: int, m: int) -> list[int]:
        base = offset[(t, m)]
        return [base + b for b in bottom_dags[t][m].output_boundary()]

    def top_ins(t: int) -> list[int]:
        return [g for m in mid_dags[t].input_boundary() for g in bottom_ins(t, m)]

    def top_outs(t: int) -> list[int]:
        return [g for m in mid_dags[t].output_boundary() for g in bottom_outs(t, m)]

    edges: list[tuple[int, int]] = []
    for t in range(top_dag.node_count):
        for m in range(mid_dags[t].node_count):
            base = offset[(t, m)]
            dag = bottom_dags[t][m]
            edges += [
                (base + s, base + d)
                for s, d in dag.directed_edges
                if s < dag.node_count and d < dag.node_count
            ]
        mid = mid_dags[t]
        edges += [
            e
            for s, d in mid.directed_edges
            if s < mid.node_count and d < mid.node_count
            for e in _bipartite(bottom_outs(t, s), bottom_ins(t, d))
        ]
    edges += [
        e
        for s, d in top_dag.directed_edges
        if s < top_dag.node_count and d < top_dag.node_count
        for e in _bipartite(top_outs(s), top_ins(d))
    ]
    input_id, output_id = total, total + 1
    for t in top_dag.input_boundary():
        edges += [(input_id, g) for g in top_ins(t)]
    for t in top_dag.output_boundary():
        edges += [(g, output_id) for g in top_outs(t)]

    merges, ops = sample_merge_and_ops(total, theta.theta_m, theta.theta_op, seed)
    skeleton = _Skeleton(ops, merges, stage_index, sorted(set(edges)), input_id, output_id)
    provenance = {
        "theta": theta.to_flat(),
        "seed": seed,
        "param_budget": param_budget,
        "input_channels": input_channels,
    }
    return _finalize(skeleton, theta.theta_c, param_budget, input_channels, provenance)


def sample_rnag(
    theta: RnagHyperparams,
    seed: int,
    param_budget: int,
    input_channels: int = 3,
) -> ArchitectureIR:
    """Sample one architecture from the flat baseline generator: three WS
    DAGs chained input → stage1 → stage2 → stage3 → output, with resolution
    halving and channel scaling between stages."""
    dags = [
        to_dag(generate_ws(ws, derive_seed(seed, "stage", i)))
        for i, ws in enumerate(theta.stages)
    ]
    offsets = []
    counter = 0
    stage_index: list[int] = []
    for i, dag in enumerate(dags):
        offsets.append(counter)
        counter += dag.node_count
        stage_index += [i] * dag.node_count
    total = counter
    input_id, output_id = total, total + 1

    edges: list[tuple[int, int]] = []
    for i, dag in enumerate(dags):
        base = offsets[i]
        edges += [
            (base + s, base + d)
            for s, d in dag.directed_edges
            if s < dag.node_count and d < dag.node_count
        ]
    edges += [(input_id, offsets[0] + d) for d in dags[0].input_boundary()]
    for i in range(len(dags) - 1):
        outs = [offsets[i] + s for s in dags[i].output_boundary()]
        ins = [offsets[i + 1] + d for d in dags[i + 1].input_boundary()]
        edges += _bipartite(outs, ins)
    edges += [(offsets[-1] + s, output_id) for s in dags[-1].output_boundary()]

    merges, ops = sample_merge_and_ops(total, theta.theta_m, theta.theta_op, seed)
    skeleton = _Skeleton(ops, merges, stage_index, sorted(set(edges)), input_id, output_id)
    provenance = {
        "theta": theta.to_flat(),
        "seed": seed,
        "param_budget": param_budget,
        "input_channels": input_channels,
    }
    return _finalize(skeleton, theta.theta_c, param_budget, input_channels, provenance)


def sample_architecture(theta, seed: int, param_budget: int, input_channels: int = 3) -> ArchitectureIR:
    if isinstance(theta, GeneratorHyperparams):
        return sample_hnag(theta, seed, param_budget, input_channels)
    if isinstance(theta, RnagHyperparams):
        return sample_rnag(theta, seed, param_budget, input_channels)
    raise ParameterDomainError(f"unknown hyperparameter type {type(theta)!r}")


class SearchSpace:
    """A named box of search dimensions with integer handling.

    Integer dimensions are relaxed to continuous values during search and
    rounded when a vector is turned into generator hyperparameters; the
    rounded values are what evaluators see.  ``K`` dimensions are clamped
    to ``n - 1`` when a sampled ``(n, k)`` combination would violate the
    WS domain (possible at the low end of the node range).
    """

    def __init__(self, tag: str, bounds: dict[str, tuple[float, float, bool]]):
        self.tag = tag
        self.names = list(bounds)
        self.lower = np.array([bounds[k][0] for k in self.names], dtype=float)
        self.upper = np.array([bounds[k][1] for k in self.names], dtype=float)
        self.is_int = np.array([bounds[k][2] for k in self.names], dtype=bool)

    @property
    def dim(self) -> int:
        return len(self.names)

    def sample_uniform(self, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(self.dim)
        return self.lower + u * (self.upper - self.lower)

    def normalize(self, raw: np.ndarray) -> np.ndarray:
        return (np.asarray(raw, dtype=float) - self.lower) / (self.upper - self.lower)

    def denormalize(self, x: np.ndarray) -> np.ndarray:
        return self.lower + np.clip(np.asarray(x, dtype=float), 0.0, 1.0) * (self.upper - self.lower)

    def round_values(self, raw: np.ndarray) -> dict[str, float]:
        vals: dict[str, float] = {}
        for i, name in enumerate(self.names):
            v = float(np.clip(raw[i], self.lower[i], self.upper[i]))
            vals[name] = int(round(v)) if self.is_int[i] else v
        return vals

    def to_theta(self, raw: np.ndarray):
        """Build hyperparameters from a raw vector (rounding integers)."""
        vals = self.round_values(np.asarray(raw, dtype=float))
        if self.tag.startswith("hnag"):
            n_t, n_b = int(vals["N_t"]), int(vals["N_b"])
            k_t = min(int(vals["K_t"]), n_t - 1)
            k_b = min(int(vals["K_b"]), n_b - 1)
            kwargs: dict = {}
            if "M_ws" in vals:
                kwargs["theta_m"] = _normalize_weights(
                    [vals["M_ws"], vals["M_att"], vals["M_cat"]]
                )
                kwargs["theta_op"] = _normalize_weights(
                    [vals[f"OP_{o}"] for o in ("c1", "c3", "c5", "p3", "p5")]
                )
            if "S_1" in vals:
                kwargs["theta_s"] = tuple(vals[f"S_{i}"] for i in (1, 2, 3))
                kwargs["theta_c"] = tuple(vals[f"C_{i}"] for i in (1, 2, 3))
            return GeneratorHyperparams(
                theta_top=WsParams(n_t, k_t, vals["P_t"]),
                theta_mid=ErParams(int(vals["N_m"]), vals["P_m"]),
                theta_bottom=WsParams(n_b, k_b, vals["P_b"]),
                **kwargs,
            )
        if self.tag.startswith("rnag"):
            stages = tuple(
                WsParams(int(vals[f"N_{i}"]), min(int(vals[f"K_{i}"]), int(vals[f"N_{i}"]) - 1), vals[f"P_{i}"])
                for i in (1, 2, 3)
            )
            return RnagHyperparams(stages=stages)  # type: ignore[arg-type]
        raise ParameterDomainError(f"unknown space tag {self.tag!r}")

    def theta_dict(self, raw: np.ndarray) -> dict:
        """Flat theta document for the evaluated (rounded) configuration.

        Generator spaces serialize their hyperparameter types; plain
        vector boxes (builtin benchmarks) pass the rounded values through.
        """
        if self.tag.startswith(("hnag", "rnag")):
            return self.to_theta(raw).to_flat()
        return self.round_values(np.asarray(raw, dtype=float))


def _normalize_weights(raw: Sequence[float]) -> tuple[float, ...]:
    w = np.clip(np.asarray(raw, dtype=float), 0.0, None)
    total = w.sum()
    if total < 1e-12:
        w = np.ones_like(w)
        total = w.sum()
    return tuple(w / total)


def make_search_space(space: str = "hnag", dims: str = "graph") -> SearchSpace:
    """Build a search space.

    ``space``: ``hnag`` or ``rnag``.  ``dims`` selects the searched blocks
    for the hierarchical space: ``graph`` (the 8 graph hyperparameters),
    ``graph+mergeop``, ``graph+stagechannel`` or ``all``.
    """
    if space == "rnag":
        return SearchSpace("rnag", dict(RNAG_BOUNDS))
    if space != "hnag":
        raise ParameterDomainError(f"unknown space {space!r}")
    bounds = dict(HNAG_BOUNDS)
    if dims in ("graph+mergeop", "all"):
        bounds.update(MERGEOP_BOUNDS)
    if dims in ("graph+stagechannel", "all"):
        bounds.update(STAGECHANNEL_BOUNDS)
    if dims not in ("graph", "graph+mergeop", "graph+stagechannel", "all"):
        raise ParameterDomainError(f"unknown search dims {dims!r}")
    return SearchSpace(f"hnag:{dims}", bounds)
