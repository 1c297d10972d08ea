"""Backend selection for the hot numeric kernels.

By default the kernels are compiled with numba's ``@njit``.  Set the
environment variable ``NAGO_PURE_NUMPY=1`` (before import) to force the
pure-numpy fallback — same source, same arithmetic order, no JIT.
``benchmarks/bench_kernels.py`` compares the two.
"""

from __future__ import annotations

import os

from . import _impl

_want_numpy = os.environ.get("NAGO_PURE_NUMPY", "").strip().lower() in ("1", "true", "yes")

BACKEND = "numpy"
if not _want_numpy:
    try:
        from numba import njit

        BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba is a default dependency
        BACKEND = "numpy"

if BACKEND == "numba":
    nll_and_grad, sghmc_chain, _ = _impl.build(njit)
    # the batched forward pass is BLAS-bound and measurably faster without
    # the JIT (see benchmarks/bench_kernels.py), so it always runs on numpy
    _, _, ensemble_forward = _impl.build(None)
else:
    nll_and_grad, sghmc_chain, ensemble_forward = _impl.build(None)


def backend() -> str:
    """Name of the active kernel backend ("numba" or "numpy")."""
    return BACKEND
