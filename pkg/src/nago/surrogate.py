"""Bayesian neural-network regression surrogate.

A small tanh MLP (3 hidden layers, 10 units each) whose weights are
sampled with stochastic-gradient Hamiltonian Monte Carlo, giving an
ensemble of 100 retained weight samples.  Two noise models:

* homoscedastic — one scalar noise parameter, sampled along with the
  weights;
* heteroscedastic — a second network output models the noise variance as
  a function of the input (softplus + floor keeps it positive).

The predictive posterior over the ensemble is

    mean = avg_i f_i(x)
    var  = avg_i (f_i(x)^2 + noise_i(x)) - mean^2

which for a constant noise head reduces exactly to the homoscedastic
form avg(f^2) - mean^2 + avg(noise).  Inputs are expected in [0,1]^d
(the search spaces normalize); targets are standardized internally and
the affine transform undone at prediction time.

All SGHMC constants are pinned in ``data/sghmc_defaults.json``.
"""

from __future__ import annotations

import importlib.resources
import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .errors import InsufficientDataError, NagoError, ParameterDomainError
from .rng import derive_seed, generator

HIDDEN = 10
N_LAYERS = 3  # fixed architecture: 3 hidden layers


def _load_defaults() -> dict:
    ref = importlib.resources.files("nago").joinpath("data/sghmc_defaults.json")
    return json.loads(ref.read_text())


@dataclass(frozen=True)
class SghmcConfig:
    """Sampler constants (see data/sghmc_defaults.json for the pinned values)."""

    step_size: float = 1e-2
    mdecay: float = 5e-2
    burn_in_multiplier: int = 5
    sampling_steps: int = 1000
    keep_every: int = 10
    batch_size: int = 32
    prior_scale: float = 1.0
    noise_floor: float = 1e-6

    @staticmethod
    def default() -> "SghmcConfig":
        return SghmcConfig(**_load_defaults())

    @property
    def n_keep(self) -> int:
        return self.sampling_steps // self.keep_every


@dataclass(frozen=True)
class SurrogateDataset:
    """Normalized inputs in [0,1]^d with real-valued targets."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        y = np.asarray(self.targets, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise ParameterDomainError("inputs and targets must have equal length")
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise ParameterDomainError("dataset contains non-finite entries")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "targets", y)

    def __len__(self) -> int:
        return len(self.targets)


@dataclass(frozen=True)
class SurrogatePosterior:
    mean: float
    variance: float
    sample_count: int


def heteroscedastic_posterior(f_samples: Sequence[float], noise_variances: Sequence[float]) -> SurrogatePosterior:
    """Ensemble posterior with input-dependent noise:
    var = avg(f^2 + noise(x)) - mean^2."""
    f = np.asarray(f_samples, dtype=float)
    w = np.asarray(noise_variances, dtype=float)
    mean = float(f.mean())
    var = float((f * f + w).mean() - mean * mean)
    return SurrogatePosterior(mean, max(var, 0.0), len(f))


def homoscedastic_posterior(f_samples: Sequence[float], noise_variances: Sequence[float]) -> SurrogatePosterior:
    """Ensemble posterior with constant-in-x noise variances:
    var = avg(f^2) - mean^2 + avg(noise).

    Shares the heteroscedastic arithmetic, so a constant noise head
    collapses the two variants to bit-identical results.
    """
    return heteroscedastic_posterior(f_samples, noise_variances)


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.where(x > 30.0, x, np.log1p(np.exp(np.minimum(x, 30.0))))


def _param_count(d: int, het: bool) -> int:
    h = HIDDEN
    n_out = 2 if het else 1
    base = d * h + h + 2 * (h * h + h) + h * n_out + n_out
    return base + (0 if het else 1)


class BnnSurrogate:
    """SGHMC-sampled MLP regressor with homo- or heteroscedastic noise."""

    CHECKPOINT_VERSION = "nago-bnn/1"

    def __init__(self, heteroscedastic: bool = True, config: SghmcConfig | None = None):
        self.heteroscedastic = heteroscedastic
        self.config = config or SghmcConfig.default()
        self.samples: np.ndarray | None = None
        self.y_mean = 0.0
        self.y_scale = 1.0
        self.dim: int | None = None

    @property
    def n_out(self) -> int:
        return 2 if self.heteroscedastic else 1

    def fit(self, data: SurrogateDataset, seed: int = 0) -> "BnnSurrogate":
        """Run burn-in (5x dataset size steps) plus 1000 sampling steps,
        retaining every 10th sample: exactly 100 weight samples."""
        n = len(data)
        if n < 3:
            raise InsufficientDataError("surrogate fit needs at least 3 points")
        X = np.ascontiguousarray(data.inputs, dtype=np.float64)
        y = np.asarray(data.targets, dtype=np.float64)
        self.dim = X.shape[1]
        self.y_mean = float(y.mean())
        scale = float(y.std())
        cfg = self.config
        P = _param_count(self.dim, self.heteroscedastic)
        if scale <= 1e-12:
            # Degenerate constant targets: the posterior is the constant
            # with the noise floor.  An all-zero network predicts exactly
            # that once the noise head is pushed to its floor.
            self.y_scale = 1.0
            samples = np.zeros((cfg.n_keep, P))
            if self.heteroscedastic:
                samples[:, P - 1] = -30.0  # noise-head output bias
            else:
                samples[:, P - 1] = -30.0  # constant noise parameter
            self.samples = samples
            return self
        self.y_scale = scale
        y_std = (y - self.y_mean) / self.y_scale
        m = min(cfg.batch_size, n)
        n_burn = cfg.burn_in_multiplier * n
        total = n_burn + cfg.n_keep * cfg.keep_every
        rng = generator(derive_seed(seed, "sghmc", int(self.heteroscedastic), n))
        w0 = rng.normal(0.0, 0.1, P)
        if not self.heteroscedastic:
            w0[-1] = -3.0  # softplus(-3) ~ 0.05 starting noise
        batch_idx = rng.integers(0, n, size=(total, m))
        noise = rng.normal(0.0, 1.0, size=(total, P))
        samples = kernels.sghmc_chain(
            w0,
            X,
            y_std,
            HIDDEN,
            self.n_out,
            self.heteroscedastic,
            cfg.noise_floor,
            cfg.prior_scale**2,
            batch_idx,
            noise,
            n_burn,
            cfg.keep_every,
            cfg.n_keep,
            cfg.step_size,
            cfg.mdecay,
        )
        if not np.isfinite(samples).all():
            raise NagoError("surrogate sampling diverged (non-finite weights)")
        self.samples = samples
        return self

    def _require_fit(self) -> np.ndarray:
        if self.samples is None:
            raise NagoError("surrogate is not fitted")
        return self.samples

    def _raw_outputs(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-sample predictive means and noise variances (standardized scale)."""
        samples = self._require_fit()
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
        out = kernels.ensemble_forward(samples, X, HIDDEN, self.n_out)
        mus = out[:, :, 0]
        if self.heteroscedastic:
            noise = _softplus(out[:, :, 1]) + self.config.noise_floor
        else:
            rho = samples[:, -1]
            noise = (_softplus(rho) + self.config.noise_floor)[:, None] * np.ones_like(mus)
        return mus, noise

    def predict(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Predictive mean and variance arrays on the original target scale."""
        mus, noise = self._raw_outputs(X)
        mean = mus.mean(axis=0)
        var = (mus * mus + noise).mean(axis=0) - mean * mean
        var = np.maximum(var, self.config.noise_floor)
        return mean * self.y_scale + self.y_mean, var * self.y_scale**2

    def predict_one(self, x: np.ndarray) -> SurrogatePosterior:
        mean, var = self.predict(np.atleast_2d(x))
        return SurrogatePosterior(float(mean[0]), float(var[0]), int(self._require_fit().shape[0]))

    def save(self, path) -> None:
        meta = {
            "version": self.CHECKPOINT_VERSION,
            "heteroscedastic": self.heteroscedastic,
            "dim": self.dim,
            "y_mean": self.y_mean,
            "y_scale": self.y_scale,
            "config": asdict(self.config),
        }
        np.savez(path, samples=self._require_fit(), meta=json.dumps(meta, sort_keys=True))

    @staticmethod
    def load(path) -> "BnnSurrogate":
        with np.load(path, allow_pickle=False) as blob:
            meta = json.loads(str(blob["meta"]))
            if meta.get("version") != BnnSurrogate.CHECKPOINT_VERSION:
                raise NagoError(f"unsupported checkpoint version {meta.get('version')!r}")
            model = BnnSurrogate(meta["heteroscedastic"], SghmcConfig(**meta["config"]))
            model.samples = blob["samples"].copy()
            model.dim = meta["dim"]
            model.y_mean = meta["y_mean"]
            model.y_scale = meta["y_scale"]
        return model


def nll(means: np.ndarray, variances: np.ndarray, targets: np.ndarray) -> float:
    """Mean Gaussian negative log-likelihood under per-point (mean, var)."""
    mu = np.asarray(means, dtype=float)
    var = np.maximum(np.asarray(variances, dtype=float), 1e-12)
    y = np.asarray(targets, dtype=float)
    if not (mu.shape == var.shape == y.shape):
        raise ParameterDomainError("posterior and target arrays must have equal shape")
    return float(np.mean(0.5 * np.log(2.0 * np.pi * var) + (y - mu) ** 2 / (2.0 * var)))


def rmse(means: np.ndarray, targets: np.ndarray) -> float:
    mu = np.asarray(means, dtype=float)
    y = np.asarray(targets, dtype=float)
    if mu.shape != y.shape:
        raise ParameterDomainError("posterior and target arrays must have equal shape")
    return float(np.sqrt(np.mean((mu - y) ** 2)))
