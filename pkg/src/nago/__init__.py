"""Architecture-generator search toolkit.

Samples architectures from stochastic graph generators, prices them with
analytic cost models, and searches the generator-hyperparameter space
with multi-fidelity successive halving and batch multi-objective
Bayesian optimization backed by an SGHMC-sampled Bayesian neural
network surrogate.
"""

__version__ = "0.1.0"

from .graphs import Dag, ErParams, RandomGraph, WsParams, generate_er, generate_ws, to_dag
from .space import (
    ArchitectureIR,
    GeneratorHyperparams,
    RnagHyperparams,
    make_search_space,
    sample_hnag,
    sample_rnag,
    split_stages,
)

__all__ = [
    "ArchitectureIR",
    "Dag",
    "ErParams",
    "GeneratorHyperparams",
    "RandomGraph",
    "RnagHyperparams",
    "WsParams",
    "generate_er",
    "generate_ws",
    "make_search_space",
    "sample_hnag",
    "sample_rnag",
    "split_stages",
    "to_dag",
    "__version__",
]
