"""Gaussian-process surrogate and Bayesian-optimization driver.

Zero-mean GP regression with a Matern 5/2 kernel over the normalized
[0, 1]^4 parameter box.  The engine canonically minimizes; maximization
objectives are negated at the boundary.  Hyperparameters are fixed
(amplitude 1 on standardized objectives, per-dimension length-scale 0.2,
noise variance 1e-4) so runs are reproducible without a fitting stage.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import BudgetExhausted, IllConditioned
from .ledger import LedgeredObjective, OptResult, QueryLedger
from .params import ParamSpace

SQRT5 = math.sqrt(5.0)

DEFAULT_LENGTH_SCALE = 0.2
DEFAULT_NOISE_VARIANCE = 1e-4
STD_FLOOR = 1e-6

N_CANDIDATES = 1024
N_REFINE = 8


@dataclass(frozen=True)
class KernelConfig:
    """Matern 5/2 hyperparameters in the normalized box."""

    length_scales: tuple = (DEFAULT_LENGTH_SCALE,) * 4
    amplitude: float = 1.0
    noise_variance: float = DEFAULT_NOISE_VARIANCE

    def __post_init__(self):
        if any(l <= 0 for l in self.length_scales):
            raise ValueError("length scales must be positive")
        if self.noise_variance < 0:
            raise ValueError("noise variance must be non-negative")


def _scaled_sqdist(a: np.ndarray, b: np.ndarray, scales) -> np.ndarray:
    sa = np.asarray(a, dtype=float) / scales
    sb = np.asarray(b, dtype=float) / scales
    diff = sa[:, None, :] - sb[None, :, :]
    return np.sum(diff * diff, axis=-1)


def matern52_matrix(a: np.ndarray, b: np.ndarray, k: KernelConfig) -> np.ndarray:
    r = np.sqrt(_scaled_sqdist(a, b, np.asarray(k.length_scales)))
    return k.amplitude * (1.0 + SQRT5 * r + (5.0 / 3.0) * r * r) * np.exp(-SQRT5 * r)


def matern52(x, x_prime, k: KernelConfig) -> float:
    """Kernel value (1 + sqrt5*r/l + 5r^2/(3l^2)) * exp(-sqrt5*r/l) with
    per-dimension length scales folded into r."""
    a = np.atleast_2d(np.asarray(x, dtype=float))
    b = np.atleast_2d(np.asarray(x_prime, dtype=float))
    return float(matern52_matrix(a, b, k)[0, 0])


class GpModel:
    """Observations plus a cached Cholesky factor of (K + sigma^2 I)."""

    def __init__(self, X: np.ndarray, y: np.ndarray, kernel: KernelConfig,
                 chol: np.ndarray | None, alpha: np.ndarray | None,
                 effective_noise: float):
        self.X = X
        self.y = y
        self.kernel = kernel
        self._chol = chol
        self._alpha = alpha
        self.effective_noise = effective_noise

    @classmethod
    def fit(cls, X: np.ndarray, y: np.ndarray, kernel: KernelConfig) -> "GpModel":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float)
        n = len(y)
        if n == 0:
            return cls(X.reshape(0, X.shape[-1] if X.size else 4), y, kernel, None, None,
                       kernel.noise_variance)
        K = matern52_matrix(X, X, kernel)
        noise = kernel.noise_variance
        # On factorization failure inflate the noise tenfold, three times.
        for attempt in range(4):
            try:
                chol = np.linalg.cholesky(K + noise * np.eye(n))
                break
            except np.linalg.LinAlgError:
                if attempt == 3:
                    raise IllConditioned(f"Cholesky failed at noise {noise}")
                noise = noise * 10.0 if noise > 0 else 1e-10
        else:  # pragma: no cover
            raise IllConditioned("unreachable")
        tmp = np.linalg.solve(chol, y)
        alpha = np.linalg.solve(chol.T, tmp)
        return cls(X, y, kernel, chol, alpha, noise)

    @property
    def n_observations(self) -> int:
        return len(self.y)

    def posterior_batch(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        amp = self.kernel.amplitude
        if self.n_observations == 0:
            m = len(points)
            return np.zeros(m), np.full(m, amp)
        ks = matern52_matrix(self.X, points, self.kernel)
        mean = ks.T @ self._alpha
        v = np.linalg.solve(self._chol, ks)
        var = amp - np.sum(v * v, axis=0)
        return mean, np.maximum(var, 0.0)

    def posterior(self, x: np.ndarray) -> tuple[float, float]:
        mean, var = self.posterior_batch(np.asarray(x, dtype=float)[None, :])
        return float(mean[0]), float(var[0])


def cap_observations(model: GpModel, n_max: int) -> GpModel:
    """Sparse-GP stand-in: keep the best observation plus the n_max - 1 most
    recent others, preserving chronological order."""
    X, y = cap_observation_lists(list(model.X), list(model.y), n_max)
    return GpModel.fit(np.array(X), np.array(y), model.kernel)


def cap_observation_lists(X: list, y: list, n_max: int) -> tuple[list, list]:
    if n_max < 8:
        raise ValueError(f"observation cap must be >= 8, got {n_max}")
    n = len(y)
    if n <= n_max:
        return list(X), list(y)
    best = int(np.argmin(y))
    keep = set(range(n - (n_max - 1), n))
    keep.add(best)
    idx = sorted(keep)[-n_max:]
    return [X[i] for i in idx], [y[i] for i in idx]


# ---------------------------------------------------------------------------
# Acquisitions
# ---------------------------------------------------------------------------

def _phi(z):
    return np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def _cdf(z):
    return 0.5 * (1.0 + erf(z / math.sqrt(2.0)))


def ei_values(means: np.ndarray, variances: np.ndarray, best: float) -> np.ndarray:
    """Expected improvement below `best` (minimization): sigma * (gamma *
    Phi(gamma) + phi(gamma)); zero wherever sigma is zero."""
    sigma = np.sqrt(np.maximum(variances, 0.0))
    out = np.zeros_like(sigma)
    pos = sigma > 0.0
    gamma = (best - means[pos]) / sigma[pos]
    out[pos] = sigma[pos] * (gamma * _cdf(gamma) + _phi(gamma))
    return np.maximum(out, 0.0)


def expected_improvement(model: GpModel, x: np.ndarray, best: float) -> float:
    mean, var = model.posterior(x)
    return float(ei_values(np.array([mean]), np.array([var]), best)[0])


def ucb_values(means: np.ndarray, variances: np.ndarray, kappa: float) -> np.ndarray:
    """Optimism under minimization: -mean + kappa * sigma (the classical
    mu + kappa*sigma upper bound, negated to fit the minimizing engine)."""
    return -means + kappa * np.sqrt(np.maximum(variances, 0.0))


@dataclass(frozen=True)
class AcquisitionChoice:
    kind: str = "ei"
    kappa: float = 2.0

    def __post_init__(self):
        if self.kind not in ("ei", "ucb"):
            raise ValueError(f"unknown acquisition {self.kind!r}")
        if self.kind == "ucb" and self.kappa <= 0:
            raise ValueError("kappa must be positive for UCB")

    def scores(self, means, variances, best):
        if self.kind == "ei":
            return ei_values(means, variances, best)
        return ucb_values(means, variances, self.kappa)


# ---------------------------------------------------------------------------
# Proposal scheme
# ---------------------------------------------------------------------------

def _candidates(space: ParamSpace, rng: np.random.Generator, n: int) -> np.ndarray:
    cands = np.empty((n, space.DIM))
    cands[:, :3] = rng.uniform(0.0, 1.0, size=(n, 3))
    levels = rng.integers(1, space.levels + 1, size=n)
    cands[:, 3] = (levels - 1) / (space.levels - 1)
    return cands


def propose_next(model: GpModel, acquisition: AcquisitionChoice, space: ParamSpace,
                 rng: np.random.Generator, best: float = 0.0) -> np.ndarray:
    """Maximize the acquisition over 1024 uniform candidates (discrete
    coordinate pre-rounded) with local pattern refinement on the best 8.
    Deterministic under a fixed rng state; ties keep the lowest index."""
    cands = _candidates(space, rng, N_CANDIDATES)
    means, variances = model.posterior_batch(cands)
    scores = acquisition.scores(means, variances, best)
    order = np.argsort(-scores, kind="stable")[:N_REFINE]

    def score_at(x: np.ndarray) -> float:
        m, v = model.posterior(x)
        return float(acquisition.scores(np.array([m]), np.array([v]), best)[0])

    best_x = cands[order[0]].copy()
    best_score = float(scores[order[0]])
    for idx in order:
        x = cands[idx].copy()
        s = float(scores[idx])
        step = 0.05
        while step >= 1e-3:
            moved = False
            for dim in range(3):
                for delta in (step, -step):
                    trial = x.copy()
                    trial[dim] = min(1.0, max(0.0, trial[dim] + delta))
                    ts = score_at(trial)
                    if ts > s:
                        x, s = trial, ts
                        moved = True
            if not moved:
                step /= 2.0
        if s > best_score:
            best_x, best_score = x, s
    return space.snap(best_x)


# ---------------------------------------------------------------------------
# Optimization driver
# ---------------------------------------------------------------------------

def bayes_minimize(objective, space: ParamSpace, ledger: QueryLedger,
                   rng: np.random.Generator, charge: bool = True,
                   n_init: int = 8, cap: int = 60,
                   kernel: KernelConfig | None = None,
                   acquisition: AcquisitionChoice | None = None) -> OptResult:
    """Sequential GP optimization: seeded uniform initial design, then
    standardize the observations, refit, and evaluate the acquisition
    argmax, until the ledger runs dry."""
    kernel = kernel or KernelConfig()
    acquisition = acquisition or AcquisitionChoice()
    obj = LedgeredObjective(objective, ledger, charge)
    X: list[np.ndarray] = []
    y: list[float] = []

    def observe(x: np.ndarray) -> None:
        val = obj(x)
        X.append(np.array(x, copy=True))
        y.append(val)

    try:
        for _ in range(n_init):
            observe(space.sample_uniform(rng))
        while True:
            Xc, yc = cap_observation_lists(X, y, cap)
            y_arr = np.asarray(yc, dtype=float)
            mu = float(np.mean(y_arr))
            sd = max(float(np.std(y_arr)), STD_FLOOR)
            y_std = (y_arr - mu) / sd
            model = GpModel.fit(np.asarray(Xc), y_std, kernel)
            x_next = propose_next(model, acquisition, space, rng, best=float(np.min(y_std)))
            observe(x_next)
    except BudgetExhausted:
        pass
    return OptResult.from_objective(obj)
