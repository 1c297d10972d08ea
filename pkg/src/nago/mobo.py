"""Batch multi-objective Bayesian optimization.

Per iteration: a heteroscedastic BNN surrogate is fitted per objective;
a candidate pool (uniform draws plus mutations of archive members) is
scored with per-objective lower-confidence-bound acquisitions; the
Pareto set of those acquisition vectors is computed; the candidate with
the highest summed (scale-normalized) posterior standard deviation is
picked first and the batch is extended greedily under hard local
penalization, which zeroes the acquisition at already-selected points
and fades to no penalty with distance:

    phi(x | anchor) = min(L * ||x - anchor|| / (|mu(x) - M| + sigma(x)), 1)

with L the maximum finite-difference gradient norm of the scalarized
posterior mean and M the best scalarized objective observed.  All B
evaluations of an iteration go to the evaluator as one batch.

Objectives are minimized.  The archive keeps the nondominated set; the
2-D hypervolume is exact (sweep), 3-D is Monte-Carlo.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ParameterDomainError
from .evalbridge import EvalRequest, Evaluator
from .rng import derive_seed, generator
from .space import SearchSpace
from .surrogate import BnnSurrogate, SghmcConfig, SurrogateDataset


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    """Weak Pareto dominance: a <= b everywhere and < somewhere."""
    le = all(x <= y for x, y in zip(a, b))
    lt = any(x < y for x, y in zip(a, b))
    return le and lt


def pareto_filter(points: Sequence[Sequence[float]]) -> list[int]:
    """Indices of the nondominated points, in stable (input) order."""
    pts = [tuple(map(float, p)) for p in points]
    if not pts:
        return []
    m = len(pts[0])
    if any(len(p) != m for p in pts):
        raise ParameterDomainError("objective vectors must share one arity")
    if m == 2:
        order = sorted(range(len(pts)), key=lambda i: (pts[i][0], pts[i][1], i))
        kept: list[int] = []
        best_f2 = math.inf
        last_pair: tuple[float, float] | None = None
        for i in order:
            f1, f2 = pts[i]
            if f2 < best_f2 or (f1, f2) == last_pair:
                kept.append(i)
                best_f2 = min(best_f2, f2)
                last_pair = (f1, f2)
        return sorted(kept)
    out = []
    for i, p in enumerate(pts):
        if not any(dominates(q, p) for j, q in enumerate(pts) if j != i):
            out.append(i)
    return out


@dataclass
class ParetoArchive:
    """Nondominated (theta, objective-vector) archive; insertion keeps the
    set dominance-free and preserves the order of surviving entries."""

    entries: list[dict] = field(default_factory=list)

    def insert(self, theta: dict, x: Sequence[float], objectives: Sequence[float]) -> bool:
        vec = tuple(float(v) for v in objectives)
        for e in self.entries:
            if dominates(e["objectives"], vec):
                return False
        self.entries = [e for e in self.entries if not dominates(vec, e["objectives"])]
        self.entries.append({"theta": theta, "x": list(map(float, x)), "objectives": list(vec)})
        return True

    def vectors(self) -> list[tuple[float, ...]]:
        return [tuple(e["objectives"]) for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def to_json_lines(self) -> str:
        return "\n".join(json.dumps(e, sort_keys=True, separators=(",", ":")) for e in self.entries)


def hypervolume(points: Sequence[Sequence[float]], reference: Sequence[float],
                mc_samples: int = 100_000, seed: int = 0) -> float:
    """Dominated hypervolume w.r.t. ``reference`` (minimization).

    Points on or beyond the reference contribute nothing (inclusive
    boundary).  Exact sweep for two objectives; Monte-Carlo for three.
    """
    ref = tuple(map(float, reference))
    pts = [tuple(map(float, p)) for p in points if all(v < r for v, r in zip(p, ref))]
    if not pts:
        return 0.0
    m = len(ref)
    if m == 2:
        front = sorted((pts[i] for i in pareto_filter(pts)), key=lambda p: p[0])
        hv = 0.0
        prev_y = ref[1]
        for x, y in front:
            if y < prev_y:
                hv += (ref[0] - x) * (prev_y - y)
                prev_y = y
        return hv
    if m == 3:
        rng = generator(derive_seed(seed, "hv-mc"))
        arr = np.array(pts)
        lows = arr.min(axis=0)
        ref_arr = np.array(ref)
        box = np.prod(ref_arr - lows)
        samples = lows + rng.random((mc_samples, 3)) * (ref_arr - lows)
        dominated = np.zeros(mc_samples, dtype=bool)
        for p in arr:
            dominated |= (samples >= p).all(axis=1)
        return float(box * dominated.mean())
    raise ParameterDomainError("hypervolume supports 2 objectives exactly and 3 by Monte-Carlo")


@dataclass
class PenalizerState:
    """Shared state of one greedy batch-selection pass."""

    lipschitz: float
    best_scalarized: float
    anchors: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.lipschitz <= 0:
            raise ParameterDomainError("the Lipschitz estimate must be > 0")


def hard_penalizer(distance: float, L: float, mu: float, sigma: float, m_best: float) -> float:
    """Hard local penalization factor in [0, 1].

    Zero at the anchor itself, one far away; the denominator uses the
    posterior mean/std at the query point and the best observed value.
    """
    if distance <= 0.0:
        return 0.0
    denom = abs(mu - m_best) + sigma
    if denom <= 1e-32:
        return 1.0
    return min(L * distance / denom, 1.0)


def penalize_batch(
    candidates: np.ndarray,
    anchors: np.ndarray,
    L: float,
    mu: np.ndarray,
    sigma: np.ndarray,
    m_best: float,
) -> np.ndarray:
    """Product of hard penalizers over all anchors, vectorized over candidates."""
    phi = np.ones(len(candidates))
    denom = np.abs(mu - m_best) + sigma
    denom = np.maximum(denom, 1e-32)
    for anchor in anchors:
        dist = np.linalg.norm(candidates - anchor, axis=1)
        phi *= np.minimum(L * dist / denom, 1.0)
        phi[dist <= 0.0] = 0.0
    return phi


def select_batch(
    candidates: np.ndarray,
    acquisition: np.ndarray,
    mu: np.ndarray,
    sigma: np.ndarray,
    batch_size: int,
    L: float,
    m_best: float,
) -> list[int]:
    """Greedy penalized argmax: pick, penalize around the pick, repeat.

    The penalizer is exactly zero at selected points, so the batch is
    pairwise distinct whenever the pool has enough distinct rows.
    """
    if batch_size < 1:
        raise ParameterDomainError("batch size must be >= 1")
    if len(candidates) < batch_size:
        raise ParameterDomainError("candidate pool smaller than the batch")
    state = PenalizerState(lipschitz=L, best_scalarized=m_best)
    chosen: list[int] = []
    penalty = np.ones(len(candidates))
    for _ in range(batch_size):
        scores = acquisition * penalty
        idx = int(np.argmax(scores))
        chosen.append(idx)
        state.anchors.append(candidates[idx].copy())
        penalty *= penalize_batch(
            candidates, candidates[idx : idx + 1], state.lipschitz, mu, sigma, state.best_scalarized
        )
    return chosen


def estimate_lipschitz(
    predict_mean: Callable[[np.ndarray], np.ndarray],
    dim: int,
    seed: int,
    n_points: int = 256,
    fd_step: float = 1e-3,
    floor: float = 1e-3,
) -> float:
    """Max finite-difference gradient norm of the posterior mean over a
    random sample of the unit box (floored away from zero)."""
    rng = generator(derive_seed(seed, "lipschitz"))
    pts = rng.random((n_points, dim))
    queries = []
    for j in range(dim):
        step = np.zeros(dim)
        step[j] = fd_step
        queries.append(pts + step)
        queries.append(pts - step)
    stacked = np.clip(np.vstack(queries), 0.0, 1.0)
    vals = predict_mean(stacked)
    grads = np.empty((n_points, dim))
    for j in range(dim):
        plus = vals[2 * j * n_points : (2 * j + 1) * n_points]
        minus = vals[(2 * j + 1) * n_points : (2 * j + 2) * n_points]
        grads[:, j] = (plus - minus) / (2 * fd_step)
    return max(float(np.linalg.norm(grads, axis=1).max()), floor)


@dataclass
class MoboPoint:
    id: int
    iteration: int
    theta: dict
    x: tuple[float, ...]
    seed: int
    objectives: dict[str, float] | None
    status: str

    def to_json_line(self) -> str:
        doc = {
            "id": self.id,
            "iteration": self.iteration,
            "theta": self.theta,
            "x": list(self.x),
            "seed": self.seed,
            "objectives": self.objectives,
            "status": self.status,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json_line(line: str) -> "MoboPoint":
        doc = json.loads(line)
        return MoboPoint(
            id=doc["id"], iteration=doc["iteration"], theta=doc["theta"], x=tuple(doc["x"]),
            seed=doc["seed"], objectives=doc["objectives"], status=doc["status"],
        )


@dataclass
class MoboResult:
    archive: ParetoArchive
    history: list[MoboPoint]
    hypervolume_trace: list[float]


@dataclass(frozen=True)
class MoboConfig:
    candidates: int = 2000
    mutation_scale: float = 0.1
    lcb_beta: float = 2.0
    lipschitz_points: int = 256
    surrogate: SghmcConfig | None = None


def run_mobo(
    evaluator: Evaluator,
    space: SearchSpace,
    objectives: Sequence[str],
    iterations: int,
    batch_size: int,
    seed: int,
    budget: float = 60.0,
    dataset: str = "tiny32",
    param_budget: int | None = None,
    init_points: Sequence[Sequence[float]] | None = None,
    reference: Sequence[float] | None = None,
    config: MoboConfig = MoboConfig(),
    on_point: Callable[[MoboPoint], None] | None = None,
) -> MoboResult:
    """Run batch multi-objective BO at a fixed evaluation budget.

    ``init_points`` are normalized vectors evaluated as iteration 0;
    without them, ``max(2d+2, batch)`` uniform points seed the model.
    The hypervolume trace is recorded per iteration when a reference
    point is given.
    """
    from .evalbridge import default_param_budget

    if len(objectives) < 2:
        raise ParameterDomainError("multi-objective search needs at least two objectives")
    if param_budget is None:
        param_budget = default_param_budget(dataset)
    rng = generator(derive_seed(seed, "mobo"))
    d = space.dim
    archive = ParetoArchive()
    history: list[MoboPoint] = []
    hv_trace: list[float] = []
    data_x: list[tuple[float, ...]] = []
    data_y: dict[str, list[float]] = {k: [] for k in objectives}
    next_id = 0

    def evaluate_points(xs: Sequence[np.ndarray], iteration: int) -> None:
        nonlocal next_id
        points = []
        requests = []
        for x in xs:
            raw = space.denormalize(np.asarray(x))
            theta = space.theta_dict(raw)
            point = MoboPoint(
                id=next_id,
                iteration=iteration,
                theta=theta,
                x=tuple(float(v) for v in x),
                seed=derive_seed(seed, "point", next_id),
                objectives=None,
                status="pending",
            )
            requests.append(
                EvalRequest(
                    id=f"m{point.id}",
                    theta=theta,
                    budget=budget,
                    dataset=dataset,
                    seed=point.seed,
                    param_budget=param_budget,
                )
            )
            points.append(point)
            next_id += 1
        responses = evaluator.evaluate_batch(requests)
        for point, resp in zip(points, responses):
            if resp.status == "ok" and all(k in resp.objectives for k in objectives):
                point.objectives = {k: float(resp.objectives[k]) for k in objectives}
                point.status = "ok"
                data_x.append(point.x)
                for k in objectives:
                    data_y[k].append(point.objectives[k])
                archive.insert(point.theta, point.x, [point.objectives[k] for k in objectives])
            else:
                point.objectives = None
                point.status = "failed"
            history.append(point)
            if on_point:
                on_point(point)

    if init_points is None:
        n_init = max(2 * d + 2, batch_size)
        init_points = [rng.random(d) for _ in range(n_init)]
    evaluate_points([np.asarray(p, dtype=float) for p in init_points], iteration=0)
    if reference is not None:
        hv_trace.append(hypervolume(archive.vectors(), reference))

    surrogate_cfg = config.surrogate or SghmcConfig.default()
    for it in range(1, iterations + 1):
        if len(data_x) < 3:
            xs = [rng.random(d) for _ in range(batch_size)]
            evaluate_points(xs, it)
            if reference is not None:
                hv_trace.append(hypervolume(archive.vectors(), reference))
            continue

        X = np.array(data_x)
        models: dict[str, BnnSurrogate] = {}
        scales: dict[str, float] = {}
        for k in objectives:
            y = np.array(data_y[k])
            models[k] = BnnSurrogate(heteroscedastic=True, config=surrogate_cfg).fit(
                SurrogateDataset(X, y), seed=derive_seed(seed, "fit", it, k)
            )
            s = float(y.std())
            scales[k] = s if s > 1e-12 else 1.0

        n_mut = config.candidates // 2 if archive.entries else 0
        n_uni = config.candidates - n_mut
        cands = [rng.random((n_uni, d))]
        if n_mut:
            base = np.array([e["x"] for e in archive.entries])
            picks = base[rng.integers(0, len(base), n_mut)]
            cands.append(np.clip(picks + rng.normal(0.0, config.mutation_scale, (n_mut, d)), 0.0, 1.0))
        candidates = np.vstack(cands)

        mu_k = {}
        sd_k = {}
        for k in objectives:
            mean, var = models[k].predict(candidates)
            mu_k[k] = mean
            sd_k[k] = np.sqrt(var)
        lcb = np.column_stack([mu_k[k] - config.lcb_beta * sd_k[k] for k in objectives])
        front = pareto_filter([tuple(row) for row in lcb])

        uncertainty = sum(sd_k[k] / scales[k] for k in objectives)
        mu_scal = sum(mu_k[k] / scales[k] for k in objectives)
        sigma_scal = uncertainty
        m_best = min(
            sum(data_y[k][i] / scales[k] for k in objectives) for i in range(len(data_x))
        )

        def scalarized_mean(q: np.ndarray) -> np.ndarray:
            total = np.zeros(len(q))
            for k in objectives:
                mean, _ = models[k].predict(q)
                total += mean / scales[k]
            return total

        L = estimate_lipschitz(
            scalarized_mean, d, derive_seed(seed, "lip", it), n_points=config.lipschitz_points
        )

        pool = front if len(front) >= batch_size else list(range(len(candidates)))
        pool_idx = np.asarray(pool, dtype=int)
        picked = select_batch(
            candidates[pool_idx],
            uncertainty[pool_idx],
            mu_scal[pool_idx],
            sigma_scal[pool_idx],
            batch_size,
            L,
            m_best,
        )
        xs = [candidates[pool_idx[i]] for i in picked]
        evaluate_points(xs, it)
        if reference is not None:
            hv_trace.append(hypervolume(archive.vectors(), reference))

    return MoboResult(archive=archive, history=history, hypervolume_trace=hv_trace)
