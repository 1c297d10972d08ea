"""Search-space analytics: cardinality, memory histograms, sample studies,
and budget rank-correlation diagnostics.

Cardinality uses exact big-integer arithmetic.  The count is a lower
bound: it ignores the extra variation from per-node merge choices.
The Spearman diagnostic is the standard average-rank version; the value
it takes on any particular search history is data-specific, not a target.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from . import costs
from .errors import InsufficientDataError, ParameterDomainError
from .rng import derive_seed, generator
from .space import (
    make_search_space,
    sample_architecture,
)


@dataclass(frozen=True)
class CardinalityParams:
    n_o_max: int
    n_c_max: int
    n_s_max: int
    m: int

    def __post_init__(self):
        if self.n_o_max < 3 or self.n_s_max < 3 or self.n_c_max < 1 or self.m < 1:
            raise ParameterDomainError("cardinality maxima below the space's minimum sizes")


def dag_count_exponent(n: int) -> int:
    """phi(n) = n(n+1)/2: exponent in the per-level DAG count bound."""
    return n * (n + 1) // 2


def pair_count(n: int) -> int:
    # documented helper: possible connections among n nodes (n=32 -> 496)
    return n * (n - 1) // 2


def hnag_cardinality(p: CardinalityParams) -> int:
    """Lower bound on the number of distinct networks in the hierarchical
    space, as the product of the three per-level graph counts (the
    operation level also picks one of ``m`` ops per node)."""
    op_level = sum(2 ** dag_count_exponent(n) for n in range(3, p.n_o_max + 1))
    cell_level = sum(2 ** dag_count_exponent(n) for n in range(1, p.n_c_max + 1))
    stage_level = sum(2 ** dag_count_exponent(n) * p.m**n for n in range(3, p.n_s_max + 1))
    return op_level * cell_level * stage_level


def darts_cardinality() -> int:
    """Size of the reference cell-based space: 8^14."""
    return 8**14


def sci_notation(value: int, digits: int = 3) -> str:
    """3-significant-figure scientific form of an exact integer."""
    if value == 0:
        return "0"
    exp = len(str(value)) - 1
    lead = round(value / 10**exp, digits - 1)
    if lead >= 10:  # rounding carried over
        lead /= 10
        exp += 1
    return f"{lead:.{digits - 1}f}e+{exp}"


def rank_correlation(pairs: Sequence[tuple[float, float]]) -> float:
    """Spearman rank correlation with average ranks for ties."""
    if len(pairs) < 2:
        raise InsufficientDataError("rank correlation needs at least two pairs")
    a = np.asarray([p[0] for p in pairs], dtype=float)
    b = np.asarray([p[1] for p in pairs], dtype=float)
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise InsufficientDataError("rank correlation rejects non-finite scores")
    if (a == a[0]).all() or (b == b[0]).all():
        raise InsufficientDataError("rank correlation is undefined for constant scores")
    rho = stats.spearmanr(a, b).statistic
    return float(rho)


def sample_uniform_theta(space: str, rng: np.random.Generator):
    """Uniform draw of generator hyperparameters within the search ranges."""
    sp = make_search_space(space, "graph")
    raw = sp.sample_uniform(rng)
    return sp.to_theta(raw)


@dataclass(frozen=True)
class StudyRow:
    index: int
    theta: dict
    mean_memory_mb: float
    std_memory_mb: float
    mean_time_proxy: float
    mean_params: float
    node_count: float


def sample_study(
    space: str,
    theta_count: int,
    draws_per_theta: int,
    seed: int,
    input_resolution: int = 32,
    param_budget: int = 4_000_000,
) -> list[StudyRow]:
    """Price ``draws_per_theta`` architecture draws for each of
    ``theta_count`` uniform generator hyperparameters."""
    if theta_count < 1 or draws_per_theta < 1:
        raise ParameterDomainError("study needs at least one theta and one draw")
    rows = []
    rng = generator(derive_seed(seed, "study", space))
    for i in range(theta_count):
        theta = sample_uniform_theta(space, rng)
        mems, times, params, nodes = [], [], [], []
        for d in range(draws_per_theta):
            ir = sample_architecture(theta, derive_seed(seed, "draw", i, d), param_budget)
            mems.append(costs.estimate_memory(ir, input_resolution) / (1024 * 1024))
            times.append(costs.time_proxy(ir, input_resolution))
            params.append(costs.count_params(ir))
            nodes.append(len(ir.nodes))
        rows.append(
            StudyRow(
                index=i,
                theta=theta.to_flat(),
                mean_memory_mb=float(np.mean(mems)),
                std_memory_mb=float(np.std(mems)),
                mean_time_proxy=float(np.mean(times)),
                mean_params=float(np.mean(params)),
                node_count=float(np.mean(nodes)),
            )
        )
    return rows


def memory_samples(
    space: str,
    sample_count: int,
    seed: int,
    input_resolution: int = 32,
    param_budget: int = 4_000_000,
) -> np.ndarray:
    """Estimated memory (MB) of uniform-at-random architectures."""
    if sample_count < 1:
        raise ParameterDomainError("need at least one sample")
    rng = generator(derive_seed(seed, "memhist", space))
    out = np.empty(sample_count)
    for i in range(sample_count):
        theta = sample_uniform_theta(space, rng)
        ir = sample_architecture(theta, derive_seed(seed, "memhist-draw", i), param_budget)
        out[i] = costs.estimate_memory(ir, input_resolution) / (1024 * 1024)
    return out


def freedman_diaconis_bins(values: np.ndarray) -> int:
    v = np.sort(np.asarray(values, dtype=float))
    n = len(v)
    if n < 2 or v[-1] == v[0]:
        return 1
    iqr = np.percentile(v, 75) - np.percentile(v, 25)
    if iqr <= 0:
        return max(1, int(math.ceil(math.sqrt(n))))
    width = 2 * iqr / n ** (1 / 3)
    return max(1, int(math.ceil((v[-1] - v[0]) / width)))


def memory_histogram(
    space: str,
    sample_count: int,
    seed: int,
    input_resolution: int = 32,
    param_budget: int = 4_000_000,
    bins: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Histogram of estimated memory over uniform generator draws.

    Bin count defaults to the Freedman–Diaconis rule; pass ``bins`` to
    override.  Returns (counts, bin_edges).
    """
    values = memory_samples(space, sample_count, seed, input_resolution, param_budget)
    nbins = bins if bins is not None else freedman_diaconis_bins(values)
    counts, edges = np.histogram(values, bins=nbins)
    return counts, edges


def histogram_csv(counts: np.ndarray, edges: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bin_low_mb", "bin_high_mb", "count"])
    for i, c in enumerate(counts):
        w.writerow([f"{edges[i]:.6f}", f"{edges[i + 1]:.6f}", int(c)])
    return buf.getvalue()


def study_csv(rows: Iterable[StudyRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(
        ["index", "mean_memory_mb", "std_memory_mb", "mean_time_proxy", "mean_params", "node_count", "theta"]
    )
    import json as _json

    for r in rows:
        w.writerow(
            [
                r.index,
                f"{r.mean_memory_mb:.6f}",
                f"{r.std_memory_mb:.6f}",
                f"{r.mean_time_proxy:.6f}",
                f"{r.mean_params:.1f}",
                f"{r.node_count:.1f}",
                _json.dumps(r.theta, sort_keys=True),
            ]
        )
    return buf.getvalue()
