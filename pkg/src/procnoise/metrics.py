"""Evasion metrics over (perturbation x input) outcome grids, success
statistics for per-input attacks, and parameter-metric correlations.

The boolean evaluation grid is the shared sufficient statistic: one pass of
oracle queries feeds universal evasion, average sensitivity, input-specific
evasion, and the correlation analysis.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateColumn, EmptyDataset, InsufficientTopK, NoCleanCorrectInputs
from .oracle import OracleVerdict
from .params import ProceduralParams, params_from_dict, params_to_dict


@dataclass
class GridRow:
    """One perturbation: its family, parameters (none for uniform), seed."""

    kind: str
    params: ProceduralParams | None
    seed: int


@dataclass
class EvaluationGrid:
    """|S| x |X| outcome matrix: entry is True iff perturbation s evades
    input x (argmax != true label)."""

    outcomes: np.ndarray
    rows: list[GridRow]
    item_ids: list[str]
    eps: float

    def __post_init__(self):
        self.outcomes = np.asarray(self.outcomes, dtype=bool)
        if self.outcomes.shape != (len(self.rows), len(self.item_ids)):
            raise ValueError(
                f"grid shape {self.outcomes.shape} does not match "
                f"{len(self.rows)} rows x {len(self.item_ids)} items"
            )


def universal_evasion_rate(grid_row: np.ndarray) -> float:
    """Fraction of inputs evaded by one fixed perturbation."""
    row = np.asarray(grid_row, dtype=bool)
    if row.size == 0:
        raise EmptyDataset("universal evasion over an empty dataset")
    return float(np.count_nonzero(row)) / row.size


def average_sensitivity(grid_column: np.ndarray) -> float:
    """Fraction of the perturbation set that evades one fixed input."""
    col = np.asarray(grid_column, dtype=bool)
    if col.size == 0:
        raise EmptyDataset("sensitivity over an empty perturbation set")
    return float(np.count_nonzero(col)) / col.size


def input_specific_evasion(grid: np.ndarray) -> float:
    """Fraction of inputs evaded by at least one perturbation in the set."""
    g = np.asarray(grid, dtype=bool)
    if g.size == 0:
        raise EmptyDataset("input-specific evasion over an empty grid")
    return float(np.count_nonzero(g.any(axis=0))) / g.shape[1]


def top5_evasion(verdicts: list[OracleVerdict], labels: list[int]) -> float:
    """Fraction of inputs whose true label is absent from the top 5."""
    if not verdicts:
        raise EmptyDataset("top-5 evasion over an empty dataset")
    hits = 0
    for verdict, label in zip(verdicts, labels):
        if verdict.probs is None or len(verdict.probs) < 5:
            raise InsufficientTopK("top-5 evasion needs verdicts with top_k >= 5")
        top5 = [c for c, _ in verdict.probs[:5]]
        if label not in top5:
            hits += 1
    return hits / len(verdicts)


@dataclass
class InputTrace:
    """Per-input attack outcome used by success statistics."""

    input_id: str
    clean_correct: bool
    success: bool
    queries: int
    best_prob: float | None = None
    error: bool = False


def success_stats(runs: list[InputTrace]) -> dict:
    """Success rate over clean-correct inputs; average queries over
    successful evasions only."""
    clean_correct = [t for t in runs if t.clean_correct]
    if not clean_correct:
        raise NoCleanCorrectInputs("every input was already misclassified clean")
    successes = [t for t in clean_correct if t.success]
    rate = len(successes) / len(clean_correct)
    avg = sum(t.queries for t in successes) / len(successes) if successes else None
    return {"success_rate": rate, "average_queries": avg}


def correlation_matrix(columns: np.ndarray) -> np.ndarray:
    """Pearson correlations between the columns of a (rows x k) table.

    Constant columns yield NaN entries (undefined markers), never zeros.
    """
    table = np.asarray(columns, dtype=np.float64)
    if table.ndim != 2 or table.shape[0] < 3:
        raise DegenerateColumn("correlation needs at least 3 rows")
    n, k = table.shape
    centered = table - table.mean(axis=0)
    sd = np.sqrt(np.mean(centered * centered, axis=0))
    cov = centered.T @ centered / n
    out = np.full((k, k), np.nan)
    valid = sd > 0.0
    denom = np.outer(sd, sd)
    mask = np.outer(valid, valid)
    out[mask] = (cov / np.where(denom > 0, denom, 1.0))[mask]
    diag = np.arange(k)
    out[diag[valid], diag[valid]] = 1.0
    return out


def param_metric_correlations(grid: EvaluationGrid) -> tuple[np.ndarray, list[str], list[str]]:
    """5x5 correlation matrix between the four noise parameters and the
    per-row universal evasion rate, grouped by noise kind."""
    kinds = sorted({r.kind for r in grid.rows if r.params is not None})
    if len(kinds) != 1:
        raise DegenerateColumn(f"correlations need one procedural kind, got {kinds}")
    rows = [(i, r) for i, r in enumerate(grid.rows) if r.params is not None]
    table = np.array(
        [list(r.params.as_tuple()) + [universal_evasion_rate(grid.outcomes[i])] for i, r in rows]
    )
    names = [k for k in params_to_dict(rows[0][1].params) if k != "kind"] + ["universal_evasion"]
    return correlation_matrix(table), names, kinds


# ---------------------------------------------------------------------------
# Grid CSV persistence
# ---------------------------------------------------------------------------

GRID_META_COLUMNS = ["param_1", "param_2", "param_3", "param_4", "kind", "seed"]


def write_grid_csv(grid: EvaluationGrid, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(GRID_META_COLUMNS + list(grid.item_ids))
        for row, outcomes in zip(grid.rows, grid.outcomes):
            vals = ["", "", "", ""] if row.params is None else [repr(v) for v in row.params.as_tuple()]
            writer.writerow(vals + [row.kind, row.seed] + [int(v) for v in outcomes])


def read_grid_csv(path, eps: float = 16.0) -> EvaluationGrid:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[: len(GRID_META_COLUMNS)] != GRID_META_COLUMNS:
            raise ValueError(f"{path}: unexpected grid header {header[:6]}")
        item_ids = header[len(GRID_META_COLUMNS):]
        rows, outcomes = [], []
        for rec in reader:
            meta, cells = rec[: len(GRID_META_COLUMNS)], rec[len(GRID_META_COLUMNS):]
            kind = meta[4]
            if kind == "uniform":
                params = None
            else:
                keys = (
                    ("sigma", "lambda", "omega", "xi")
                    if kind == "gabor"
                    else ("lambda_x", "lambda_y", "phi_sine", "octaves")
                )
                params = params_from_dict(dict(zip(keys, meta[:4]), kind=kind))
            rows.append(GridRow(kind=kind, params=params, seed=int(meta[5])))
            outcomes.append([c == "1" for c in cells])
    return EvaluationGrid(np.array(outcomes, dtype=bool), rows, item_ids, eps)
