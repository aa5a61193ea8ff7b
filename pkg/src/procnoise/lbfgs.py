"""Projected L-BFGS with central finite differences over the normalized
[0, 1]^4 box, restarting from random points until the budget is spent.

Every objective evaluation, including finite-difference probes and line-
search trials, counts against the ledger; the reported best is the
incumbent over everything ever evaluated.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import BudgetExhausted
from .ledger import LedgeredObjective, OptResult, QueryLedger

ARMIJO_C1 = 1e-4
CURVATURE_EPS = 1e-12


@dataclass(frozen=True)
class LbfgsConfig:
    memory: int = 8
    fd_step: float = 1e-3
    max_line_search: int = 20
    convergence_tol: float = 1e-5

    def __post_init__(self):
        if self.memory < 3:
            raise ValueError(f"memory must be >= 3, got {self.memory}")
        if not (0.0 < self.fd_step <= 0.1):
            raise ValueError(f"fd_step must lie in (0, 0.1], got {self.fd_step}")
        if self.convergence_tol <= 0:
            raise ValueError("convergence_tol must be positive")


def fd_gradient(objective, x: np.ndarray, fd_step: float, ledger: QueryLedger) -> np.ndarray:
    """Central differences, one coordinate at a time: exactly 2*dim
    evaluations.  Raises before spending anything if the ledger cannot
    cover a full gradient."""
    x = np.asarray(x, dtype=float)
    dim = len(x)
    if ledger.remaining < 2 * dim:
        raise BudgetExhausted(f"gradient needs {2 * dim} evaluations, "
                              f"{ledger.remaining} left")
    grad = np.empty(dim)
    for i in range(dim):
        step = np.zeros(dim)
        step[i] = fd_step
        grad[i] = (objective(x + step) - objective(x - step)) / (2.0 * fd_step)
    return grad


def _two_loop(grad: np.ndarray, history: deque) -> np.ndarray:
    """Standard L-BFGS two-loop recursion; returns the descent direction."""
    q = grad.copy()
    alphas = []
    for s, yv, rho in reversed(history):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * yv
    if history:
        s, yv, _ = history[-1]
        q *= float(s @ yv) / float(yv @ yv)
    for (s, yv, rho), a in zip(history, reversed(alphas)):
        b = rho * float(yv @ q)
        q += (a - b) * s
    return -q


def minimize(objective, x0: np.ndarray, config: LbfgsConfig,
             ledger: QueryLedger, rng: np.random.Generator,
             charge: bool = True) -> OptResult:
    """Best-ever (x, value) over budget-driven restarts.  Iterates are kept
    in the interior box [h, 1-h] so finite-difference probes stay feasible."""
    obj = LedgeredObjective(objective, ledger, charge)
    h = config.fd_step
    x0 = np.asarray(x0, dtype=float)
    dim = len(x0)

    def interior(x: np.ndarray) -> np.ndarray:
        return np.clip(x, h, 1.0 - h)

    x = interior(x0)
    try:
        while True:  # restart loop
            f = obj(x)
            history: deque = deque(maxlen=config.memory)
            x_prev: np.ndarray | None = None
            g_prev: np.ndarray | None = None
            while True:  # iteration loop
                g = fd_gradient(obj, x, h, ledger)
                if x_prev is not None:
                    s = x - x_prev
                    yv = g - g_prev
                    sy = float(s @ yv)
                    if sy > CURVATURE_EPS:
                        history.append((s, yv, 1.0 / sy))
                if float(np.max(np.abs(g))) < config.convergence_tol:
                    break  # converged: restart elsewhere
                d = _two_loop(g, history)
                if float(d @ g) >= 0.0:
                    d = -g
                t = 1.0
                accepted = False
                for _ in range(config.max_line_search):
                    cand = interior(x + t * d)
                    if np.array_equal(cand, x):
                        t *= 0.5  # projection froze the step; no query wasted
                        continue
                    f_new = obj(cand)
                    if f_new <= f + ARMIJO_C1 * float(g @ (cand - x)):
                        accepted = True
                        break
                    t *= 0.5
                if not accepted:
                    break  # line search failed: restart
                x_prev, g_prev = x, g
                x, f = cand, f_new
            x = interior(rng.uniform(0.0, 1.0, dim))
    except BudgetExhausted:
        pass
    return OptResult.from_objective(obj, fallback_x=x0)
