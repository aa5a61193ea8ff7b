"""Query budget accounting shared by oracles and optimizers."""
from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExhausted


class QueryLedger:
    """Thread-safe evaluation counter with a hard cap.

    `limit=None` means unlimited (raw classification counters).  A charge
    against an exhausted ledger raises without incrementing.
    """

    def __init__(self, limit: int | None):
        self.limit = limit
        self.spent = 0
        self._lock = threading.Lock()

    def charge(self) -> None:
        with self._lock:
            if self.limit is not None and self.spent >= self.limit:
                raise BudgetExhausted(f"budget of {self.limit} spent")
            self.spent += 1

    @property
    def remaining(self) -> float:
        if self.limit is None:
            return float("inf")
        return self.limit - self.spent


class EvasionFound(Exception):
    """Control flow for input-specific attacks: raised by the objective the
    moment the oracle's top label differs from the true label."""

    def __init__(self, x: np.ndarray, value: float):
        super().__init__("evasion found")
        self.x = np.array(x, copy=True)
        self.value = float(value)


class LedgeredObjective:
    """Wraps an objective with budget charging, a trace, and an incumbent.

    With `charge=True` every call costs one budget unit (universal attacks,
    where one call is one training-set evaluation).  With `charge=False` the
    wrapped function performs its own charging through the oracle (input-
    specific attacks, one call = one classification).
    Ties on the best value keep the earliest point.
    """

    def __init__(self, fn, ledger: QueryLedger, charge: bool = True):
        self.fn = fn
        self.ledger = ledger
        self.charge = charge
        self.trace: list[tuple[np.ndarray, float]] = []
        self.best_x: np.ndarray | None = None
        self.best_value: float | None = None

    def _record(self, x, value: float) -> None:
        self.trace.append((np.array(x, copy=True), float(value)))
        if self.best_value is None or value < self.best_value:
            self.best_value = float(value)
            self.best_x = np.array(x, copy=True)

    def __call__(self, x) -> float:
        if self.charge:
            self.ledger.charge()
        try:
            value = self.fn(x)
        except EvasionFound as hit:
            self._record(hit.x, hit.value)
            raise
        self._record(x, float(value))
        return float(value)


@dataclass
class OptResult:
    """Outcome of one optimizer run (any method).

    `best_value` is None for the degenerate zero-budget run; `fallback_x`
    fills `best_x` in that case so callers always get a point back.
    """

    best_x: np.ndarray | None
    best_value: float | None
    trace: list[tuple[np.ndarray, float]] = field(default_factory=list)

    @property
    def n_evals(self) -> int:
        return len(self.trace)

    @classmethod
    def from_objective(cls, obj: LedgeredObjective,
                       fallback_x: np.ndarray | None = None) -> "OptResult":
        best_x = obj.best_x
        if best_x is None and fallback_x is not None:
            best_x = np.array(fallback_x, copy=True)
        return cls(best_x=best_x, best_value=obj.best_value, trace=obj.trace)
