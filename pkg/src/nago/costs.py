"""Analytic cost model: parameters, activation memory, FLOPs, time proxy.

Bookkeeping conventions (mirrored by the reference trainer, so the
parameter-count boundary contract is exact):

* conv k×k with effective input channels ``C_in`` and output ``C_out``
  costs ``k²·C_in·C_out + C_out`` parameters (weights + bias); there are
  no normalization parameters;
* pooling is free;
* every incoming edge whose source channel count differs from the node's
  channel count carries a 1×1 projection (``C_s·C_d + C_d``);
* merge gates: ``weighted_sum`` has one scalar per input; the attention
  variant adds a linear map from the pooled merged features to the input
  gates (``C·k + k``); ``concat`` has none.  Single-input nodes skip the
  merge entirely;
* ``concat`` feeds the concatenated channels straight into a conv op; a
  pooling op after a concat gets a 1×1 reduction conv back to ``C``;
* the classifier head is not part of the IR and is excluded everywhere.

Memory counts each node's output activation once (inference style) plus
one aligned copy per incoming edge that needed pooling or projection;
a ``train_multiplier`` approximates training-time retention.  FLOPs are
multiply-accumulate counts of the conv-like operators; pooling and
element-wise work are free by convention.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BudgetError

_KERNEL = {"conv1x1": 1, "conv3x3": 3, "conv5x5": 5, "pool3x3": 0, "pool5x5": 0}


@dataclass(frozen=True)
class CostReport:
    param_count: int
    memory_bytes: int
    flops: int
    time_proxy: float

    @property
    def memory_mb(self) -> float:
        return self.memory_bytes / (1024 * 1024)

    def to_json(self) -> str:
        return json.dumps(
            {
                "param_count": self.param_count,
                "memory_bytes": self.memory_bytes,
                "memory_mb": self.memory_mb,
                "flops": self.flops,
                "time_proxy": self.time_proxy,
            },
            sort_keys=True,
            separators=(",", ":"),
        )


@dataclass(frozen=True)
class ChannelSolution:
    base_channels: int
    channels_per_stage: tuple[int, ...]
    achieved_params: int


class _Tables:
    """numpy views of an IR or skeleton, reused across solver iterations."""

    def __init__(self, ir_like, input_channels: int):
        if hasattr(ir_like, "nodes"):  # ArchitectureIR
            ops = [n.op_kind for n in ir_like.nodes]
            merges = [n.merge_strategy for n in ir_like.nodes]
            stages = [n.stage_index for n in ir_like.nodes]
            self.node_channels = np.array([n.out_channels for n in ir_like.nodes], dtype=np.int64)
            edges = ir_like.edges
            self.input_id, self.output_id = ir_like.input_id, ir_like.output_id
        else:  # skeleton
            ops, merges, stages = ir_like.ops, ir_like.merges, ir_like.stage_index
            self.node_channels = None
            edges = ir_like.edges
            self.input_id, self.output_id = ir_like.input_id, ir_like.output_id
        self.n = len(ops)
        self.input_channels = input_channels
        self.stage = np.asarray(stages, dtype=np.int64)
        self.kernel = np.array([_KERNEL[o] for o in ops], dtype=np.int64)
        self.is_pool = self.kernel == 0
        self.is_concat = np.array([m == "concat" for m in merges], dtype=bool)
        self.is_wsum = np.array([m == "weighted_sum" for m in merges], dtype=bool)
        self.is_att = np.array([m == "attention_weighted_sum" for m in merges], dtype=bool)
        self.divisor = np.array([2**s for s in stages], dtype=np.int64)

        src = np.array([s for s, d in edges], dtype=np.int64)
        dst = np.array([d for s, d in edges], dtype=np.int64)
        compute_dst = dst != self.output_id
        self.e_src = src[compute_dst]
        self.e_dst = dst[compute_dst]
        self.e_src_is_input = self.e_src == self.input_id
        self.out_src = src[~compute_dst]
        self.indeg = np.bincount(self.e_dst, minlength=self.n)[: self.n]

    def channels(self, per_stage: Sequence[int] | None = None) -> np.ndarray:
        if per_stage is None:
            if self.node_channels is None:
                raise ValueError("skeleton pricing needs explicit per-stage channels")
            return self.node_channels
        per_stage = np.asarray(per_stage, dtype=np.int64)
        return per_stage[self.stage]


def _params(t: _Tables, ch: np.ndarray) -> int:
    indeg = t.indeg
    # effective conv input channels: concat feeds all inputs, otherwise C
    mult = np.where(t.is_concat & ~t.is_pool, np.maximum(indeg, 1), 1)
    conv = (t.kernel**2) * (mult * ch) * ch + ch
    conv = np.where(t.is_pool, 0, conv)
    reduce_mask = t.is_pool & t.is_concat & (indeg >= 2)
    reduce_conv = np.where(reduce_mask, indeg * ch * ch + ch, 0)

    src_c = np.where(t.e_src_is_input, t.input_channels, ch[np.minimum(t.e_src, t.n - 1)])
    dst_c = ch[t.e_dst]
    proj = np.where(src_c != dst_c, src_c * dst_c + dst_c, 0)

    multi = indeg >= 2
    gates = np.where(multi & t.is_wsum, indeg, 0) + np.where(
        multi & t.is_att, ch * indeg + indeg, 0
    )
    return int(conv.sum() + reduce_conv.sum() + proj.sum() + gates.sum())


def count_params(ir, input_channels: int | None = None) -> int:
    """Learnable parameter count of an architecture under the documented
    bookkeeping (see module docstring)."""
    if input_channels is None:
        input_channels = int(ir.provenance.get("input_channels", 3)) if hasattr(ir, "provenance") else 3
    t = _Tables(ir, input_channels)
    return _params(t, t.channels())


def estimate_flops(ir, input_resolution: int, input_channels: int | None = None) -> int:
    """Multiply-accumulate count for one forward pass at the given square
    input resolution.  Pooling is free by convention."""
    if input_channels is None:
        input_channels = int(ir.provenance.get("input_channels", 3)) if hasattr(ir, "provenance") else 3
    t = _Tables(ir, input_channels)
    ch = t.channels()
    hw = (input_resolution // t.divisor).astype(np.int64) ** 2
    indeg = t.indeg
    mult = np.where(t.is_concat & ~t.is_pool, np.maximum(indeg, 1), 1)
    conv = (t.kernel**2) * (mult * ch) * ch * hw
    conv = np.where(t.is_pool, 0, conv)
    reduce_mask = t.is_pool & t.is_concat & (indeg >= 2)
    reduce_conv = np.where(reduce_mask, indeg * ch * ch * hw, 0)
    src_c = np.where(t.e_src_is_input, t.input_channels, ch[np.minimum(t.e_src, t.n - 1)])
    dst_c = ch[t.e_dst]
    proj = np.where(src_c != dst_c, src_c * dst_c * hw[t.e_dst], 0)
    att = np.where((indeg >= 2) & t.is_att, ch * indeg, 0)
    return int(conv.sum() + reduce_conv.sum() + proj.sum() + att.sum())


def estimate_memory(
    ir,
    input_resolution: int,
    bytes_per_element: int = 4,
    train_multiplier: float = 1.0,
    input_channels: int | None = None,
) -> int:
    """Activation bytes for one sample: each node's output counted once,
    plus one aligned copy per incoming edge that needed pooling or a
    projection, plus the pooled feature vectors gathered at the output.
    """
    if input_channels is None:
        input_channels = int(ir.provenance.get("input_channels", 3)) if hasattr(ir, "provenance") else 3
    t = _Tables(ir, input_channels)
    ch = t.channels()
    hw = (input_resolution // t.divisor).astype(np.int64) ** 2
    out_elems = int((hw * ch).sum())

    src_c = np.where(t.e_src_is_input, t.input_channels, ch[np.minimum(t.e_src, t.n - 1)])
    src_div = np.where(t.e_src_is_input, 1, t.divisor[np.minimum(t.e_src, t.n - 1)])
    dst_c = ch[t.e_dst]
    dst_hw = hw[t.e_dst]
    needs_proj = src_c != dst_c
    needs_pool = src_div != t.divisor[t.e_dst]
    aligned_c = np.where(needs_proj, dst_c, src_c)
    inter_elems = int(np.where(needs_proj | needs_pool, dst_hw * aligned_c, 0).sum())

    head_elems = int(ch[np.minimum(t.out_src, t.n - 1)].sum()) if len(t.out_src) else 0
    total = (out_elems + inter_elems + head_elems) * bytes_per_element
    return int(round(total * train_multiplier))


def time_proxy(ir, input_resolution: int, input_channels: int | None = None) -> float:
    """Unitless training-time proxy, monotone in FLOPs and node count."""
    f = estimate_flops(ir, input_resolution, input_channels)
    return f / 1e9 + 0.002 * len(ir.nodes)


def price(ir, input_resolution: int, bytes_per_element: int = 4, train_multiplier: float = 1.0) -> CostReport:
    return CostReport(
        param_count=count_params(ir),
        memory_bytes=estimate_memory(ir, input_resolution, bytes_per_element, train_multiplier),
        flops=estimate_flops(ir, input_resolution),
        time_proxy=time_proxy(ir, input_resolution),
    )


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def channels_for_base(base: int, theta_c: Sequence[float]) -> tuple[int, ...]:
    """Per-stage channel counts for an integer base multiplier.

    ``theta_c`` is normalized by its minimum entry first, so only the
    relative ratios matter (scaling ``theta_c`` uniformly never changes
    the result).
    """
    low = min(theta_c)
    return tuple(max(1, _round_half_up(base * (c / low))) for c in theta_c)


def solve_channels(ir_template, theta_c: Sequence[float], budget: int, input_channels: int = 3) -> ChannelSolution:
    """Find the largest integer base channel multiplier whose per-stage
    channels keep the parameter count within ``budget``.

    Monotone bisection over the base, then a recount walk to guarantee
    ``achieved <= budget < count(base + 1)``.  Raises :class:`BudgetError`
    carrying the minimum achievable count when even base 1 is too big.
    """
    t = _Tables(ir_template, input_channels)

    def count(base: int) -> int:
        return _params(t, t.channels(channels_for_base(base, theta_c)))

    smallest = count(1)
    if smallest > budget:
        raise BudgetError(
            f"budget {budget} below minimum achievable parameter count {smallest}",
            min_achievable=smallest,
        )
    hi = 1
    while count(hi) <= budget:
        hi *= 2
        if hi > 1 << 22:
            raise BudgetError("budget implausibly large for this architecture", min_achievable=smallest)
    lo = hi // 2  # count(lo) <= budget < count(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if count(mid) <= budget:
            lo = mid
        else:
            hi = mid
    while count(lo + 1) <= budget:  # guard against rare rounding plateaus
        lo += 1
    per_stage = channels_for_base(lo, theta_c)
    return ChannelSolution(lo, per_stage, count(lo))
