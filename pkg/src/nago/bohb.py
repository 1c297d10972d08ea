"""Multi-fidelity single-objective search: successive-halving brackets in
the Hyperband style, with a model-based configuration sampler.

The sampler keeps two kernel density estimates over the normalized search
box — one over the best ``gamma`` fraction of configurations at the
fullest usable budget, one over the rest — and proposes the candidate
maximizing their density ratio (a fixed fraction of proposals stays
uniform for exploration).  Integer dimensions are relaxed during search
and rounded at evaluation; the rounded values are recorded.

Failed evaluations are kept in the history with ``status="failed"`` and
treated as worst-possible during promotion, which keeps the successive
halving counts exact.
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

_WORST = float("inf")


@dataclass(frozen=True)
class BudgetSchedule:
    """Ascending budgets (epochs) with ratio ``eta`` between rungs.

    A single-rung schedule is allowed: search then degenerates to plain
    model-based sampling at full budget.
    """

    budgets: tuple[float, ...]
    eta: float = 2.0

    def __post_init__(self):
        if not self.budgets or any(b <= 0 for b in self.budgets):
            raise ParameterDomainError("budgets must be positive")
        if self.eta <= 1:
            raise ParameterDomainError("eta must be > 1")
        for lo, hi in zip(self.budgets, self.budgets[1:]):
            if hi <= lo:
                raise ParameterDomainError("budgets must be strictly ascending")
            if abs(hi / lo - self.eta) > 0.1 * self.eta:
                raise ParameterDomainError(
                    f"budget ratio {hi / lo:.3f} is not eta={self.eta} within rounding"
                )

    @property
    def max_rung(self) -> int:
        return len(self.budgets) - 1

    def bracket_sizes(self, s: int) -> list[tuple[int, float]]:
        """(config count, budget) per rung of bracket ``s``.

        Bracket ``s`` starts ``ceil((s_max+1)/(s+1)) * eta^s`` configs at
        budget index ``s_max - s`` and halves by ``eta`` per rung.
        """
        s_max = self.max_rung
        if not 0 <= s <= s_max:
            raise ParameterDomainError(f"bracket index {s} out of range")
        n = math.ceil((s_max + 1) / (s + 1)) * int(round(self.eta**s))
        out = []
        for rung in range(s_max - s, s_max + 1):
            out.append((n, self.budgets[rung]))
            n = math.ceil(n / self.eta)
        return out

    def bracket_cost(self, s: int) -> float:
        return sum(n * b for n, b in self.bracket_sizes(s))


@dataclass
class Trial:
    id: int
    config_id: int
    bracket: int
    rung: int
    budget: float
    theta: dict
    x: tuple[float, ...]  # continuous normalized vector (pre-rounding)
    seed: int
    objective: float | None = None
    status: str = "pending"

    def sort_objective(self) -> float:
        return self.objective if (self.status == "ok" and self.objective is not None) else _WORST

    def to_json_line(self) -> str:
        doc = {
            "id": self.id,
            "config_id": self.config_id,
            "bracket": self.bracket,
            "rung": self.rung,
            "budget": self.budget,
            "theta": self.theta,
            "x": list(self.x),
            "seed": self.seed,
            "objective": self.objective,
            "status": self.status,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json_line(line: str) -> "Trial":
        doc = json.loads(line)
        return Trial(
            id=doc["id"], config_id=doc["config_id"], bracket=doc["bracket"], rung=doc["rung"],
            budget=doc["budget"], theta=doc["theta"], x=tuple(doc["x"]), seed=doc["seed"],
            objective=doc["objective"], status=doc["status"],
        )


def promote(rung_trials: Sequence[Trial], eta: float) -> list[Trial]:
    """Top ceil(n/eta) trials by objective (failed trials rank worst);
    ties break deterministically by trial id."""
    if not rung_trials:
        raise ParameterDomainError("cannot promote an empty rung")
    keep = math.ceil(len(rung_trials) / eta)
    ranked = sorted(rung_trials, key=lambda t: (t.sort_objective(), t.id))
    return ranked[:keep]


class DiagonalKde:
    """Gaussian KDE with per-dimension Scott bandwidths (floored).

    Proposal sampling widens the bandwidths by ``sample_bw_factor`` for
    exploration, as in the reference model-based sampler.
    """

    def __init__(self, points: np.ndarray, bw_floor: float = 1e-3, sample_bw_factor: float = 3.0):
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        n, d = self.points.shape
        spread = self.points.std(axis=0, ddof=1) if n > 1 else np.zeros(d)
        self.bw = np.maximum(spread * n ** (-1.0 / (d + 4)), bw_floor)
        self.sample_bw_factor = sample_bw_factor

    def pdf(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        z = (x - self.points) / self.bw
        norm = np.prod(self.bw) * (2 * np.pi) ** (len(x) / 2)
        return float(np.exp(-0.5 * (z * z).sum(axis=1)).sum() / (len(self.points) * norm))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        i = int(rng.integers(0, len(self.points)))
        return np.clip(self.points[i] + rng.normal(0.0, self.bw * self.sample_bw_factor), 0.0, 1.0)


@dataclass
class KdeModelPair:
    good: DiagonalKde
    bad: DiagonalKde
    gamma: float
    min_points: int


@dataclass(frozen=True)
class SamplerConfig:
    gamma: float = 0.15
    random_fraction: float = 1 / 3
    candidates: int = 24
    bw_floor: float = 1e-3
    sample_bw_factor: float = 3.0


def build_kde_pair(
    history: Sequence[Trial], space: SearchSpace, config: SamplerConfig
) -> KdeModelPair | None:
    """Fit good/bad KDEs on the fullest budget that has enough data
    (at least 2(d+1) finished trials), or return None."""
    min_points = space.dim + 1
    done = [t for t in history if t.status in ("ok", "failed")]
    budgets = sorted({t.budget for t in done}, reverse=True)
    for b in budgets:
        at_b = [t for t in done if t.budget == b]
        if len(at_b) < 2 * min_points:
            continue
        ranked = sorted(at_b, key=lambda t: (t.sort_objective(), t.id))
        n_good = max(min_points, int(math.floor(config.gamma * len(ranked))))
        good_pts = np.array([t.x for t in ranked[:n_good]])
        bad_pts = np.array([t.x for t in ranked[n_good:]])
        if len(bad_pts) < min_points:
            continue
        return KdeModelPair(
            good=DiagonalKde(good_pts, config.bw_floor, config.sample_bw_factor),
            bad=DiagonalKde(bad_pts, config.bw_floor, config.sample_bw_factor),
            gamma=config.gamma,
            min_points=min_points,
        )
    return None


def suggest(
    history: Sequence[Trial],
    space: SearchSpace,
    rng: np.random.Generator,
    config: SamplerConfig = SamplerConfig(),
    models: KdeModelPair | None = None,
) -> np.ndarray:
    """Propose one normalized configuration vector in [0,1]^d.

    Uniform with probability ``random_fraction`` or when the KDE pair
    cannot be built; otherwise the best of ``candidates`` draws from the
    good KDE by good/bad density ratio (first index wins ties).
    """
    if rng.random() < config.random_fraction:
        return rng.random(space.dim)
    if models is None:
        models = build_kde_pair(history, space, config)
    if models is None:
        return rng.random(space.dim)
    cands = np.array([models.good.sample(rng) for _ in range(config.candidates)])
    scores = np.array(
        [models.good.pdf(c) / max(models.bad.pdf(c), 1e-32) for c in cands]
    )
    return cands[int(np.argmax(scores))]


@dataclass
class BohbResult:
    best: Trial | None
    history: list[Trial]
    total_cost: float
    bracket_costs: list[float]


def run_bohb(
    evaluator: Evaluator,
    space: SearchSpace,
    schedule: BudgetSchedule,
    iterations: int,
    seed: int,
    objective_key: str = "val_error",
    dataset: str = "tiny32",
    param_budget: int | None = None,
    sampler: SamplerConfig = SamplerConfig(),
    on_trial: Callable[[Trial], None] | None = None,
) -> BohbResult:
    """Run ``iterations`` successive-halving brackets, cycling the bracket
    index from the fullest down.  One architecture sample per trial; each
    trial's seed derives from the root seed and the trial id."""
    from .evalbridge import default_param_budget

    if param_budget is None:
        param_budget = default_param_budget(dataset)
    rng = generator(derive_seed(seed, "bohb"))
    history: list[Trial] = []
    next_trial = 0
    next_config = 0
    s_max = schedule.max_rung
    bracket_costs: list[float] = []

    def new_trial(x: np.ndarray, config_id: int, bracket: int, rung: int, budget: float) -> Trial:
        nonlocal next_trial
        raw = space.denormalize(np.asarray(x))
        trial = Trial(
            id=next_trial,
            config_id=config_id,
            bracket=bracket,
            rung=rung,
            budget=budget,
            theta=space.theta_dict(raw),
            x=tuple(float(v) for v in x),
            seed=derive_seed(seed, "trial", next_trial),
        )
        next_trial += 1
        return trial

    def evaluate_rung(trials: list[Trial]) -> None:
        requests = [
            EvalRequest(
                id=f"t{t.id}",
                theta=t.theta,
                budget=t.budget,
                dataset=dataset,
                seed=t.seed,
                param_budget=param_budget,
            )
            for t in trials
        ]
        responses = evaluator.evaluate_batch(requests)
        for t, resp in zip(trials, responses):
            if resp.status == "ok" and objective_key in resp.objectives:
                t.objective = float(resp.objectives[objective_key])
                t.status = "ok"
            else:
                t.objective = None
                t.status = "failed"
            history.append(t)
            if on_trial:
                on_trial(t)

    for it in range(iterations):
        bracket_index = s_max - (it % (s_max + 1))
        sizes = schedule.bracket_sizes(bracket_index)
        cost = 0.0
        n0, b0 = sizes[0]
        models = build_kde_pair(history, space, sampler)
        xs = [suggest(history, space, rng, sampler, models) for _ in range(n0)]
        configs = []
        for x in xs:
            configs.append((next_config, x))
            next_config += 1
        rung_index = s_max - bracket_index
        trials = [new_trial(x, cid, bracket_index, rung_index, b0) for cid, x in configs]
        evaluate_rung(trials)
        cost += len(trials) * b0
        current = trials
        for rung_offset in range(1, len(sizes)):
            survivors = promote(current, schedule.eta)
            _, budget = sizes[rung_offset]
            current = [
                new_trial(np.array(t.x), t.config_id, bracket_index, rung_index + rung_offset, budget)
                for t in survivors
            ]
            evaluate_rung(current)
            cost += len(current) * budget
        bracket_costs.append(cost)

    best = None
    top_budget = schedule.budgets[-1]
    finished = [t for t in history if t.status == "ok"]
    at_top = [t for t in finished if t.budget == top_budget]
    pool = at_top or finished
    if pool:
        best = min(pool, key=lambda t: (t.sort_objective(), t.id))
    return BohbResult(best=best, history=history, total_cost=sum(bracket_costs), bracket_costs=bracket_costs)
