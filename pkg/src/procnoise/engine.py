"""Attack orchestration: universal optimization with train/validation
generalization, per-input attacks with early exit, uniform random parameter
search, and full perturbation-set grid evaluation.

Budget accounting follows two unit conventions.  Universal attacks charge
one budget unit per training-set evasion evaluation (which costs |X_train|
raw classifications, reported separately); input-specific attacks charge
one unit per classification.  All randomness is derived from the run seed,
so a report is a pure function of (spec, datasets, oracle verdict stream)
regardless of the worker count.
"""
from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import gp, lbfgs
from .data import LabeledDataset, check_disjoint
from .errors import (BudgetExhausted, ManifestError, NoCleanCorrectInputs,
                     TransportAborted, TransportError)
from .image import Image, PerturbationField, apply
from .ledger import EvasionFound, LedgeredObjective, OptResult, QueryLedger
from .metrics import EvaluationGrid, GridRow, InputTrace, success_stats
from .noise import generate_field, to_perturbation
from .oracle import Oracle
from .params import ParamSpace, params_to_dict

REPORT_VERSION = 1

MODES = ("universal", "input_specific")
METHODS = ("bayesopt", "lbfgs", "random")
KINDS = ("gabor", "perlin")


@dataclass(frozen=True)
class AttackSpec:
    mode: str
    noise_kind: str
    method: str
    eps: float
    budget: int
    seed: int
    top_k: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.noise_kind not in KINDS:
            raise ValueError(f"noise_kind must be one of {KINDS}, got {self.noise_kind!r}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.budget < 1:
            raise ValueError(f"budget must be >= 1, got {self.budget}")
        if self.eps <= 0:
            raise ValueError(f"eps must be positive, got {self.eps}")

    def to_dict(self) -> dict:
        return {
            "mode": self.mode, "noise_kind": self.noise_kind, "method": self.method,
            "eps": self.eps, "budget": self.budget, "seed": self.seed, "top_k": self.top_k,
        }


def _perturbation_for(spec: AttackSpec, space: ParamSpace, x: np.ndarray,
                      side: int) -> tuple[PerturbationField, object]:
    params = space.to_params(x)
    field = generate_field(spec.noise_kind, params, side, spec.seed)
    return to_perturbation(field, spec.eps), params


def random_search(objective, space: ParamSpace, ledger: QueryLedger,
                  rng: np.random.Generator, charge: bool = True,
                  max_draws: int | None = None) -> OptResult:
    """Uniform i.i.d. draws over the box; exactly min(budget, draws)
    evaluations; identical seeds give identical draw sequences."""
    obj = LedgeredObjective(objective, ledger, charge)
    try:
        while max_draws is None or len(obj.trace) < max_draws:
            obj(space.sample_uniform(rng))
    except BudgetExhausted:
        pass
    return OptResult.from_objective(obj)


def _dispatch(spec: AttackSpec, objective, space: ParamSpace, ledger: QueryLedger,
              rng: np.random.Generator, charge: bool) -> OptResult:
    if spec.method == "random":
        return random_search(objective, space, ledger, rng, charge=charge)
    if spec.method == "bayesopt":
        return gp.bayes_minimize(objective, space, ledger, rng, charge=charge)
    x0 = space.sample_uniform(rng)
    return lbfgs.minimize(objective, x0, lbfgs.LbfgsConfig(), ledger, rng, charge=charge)


def _evasion_count(dataset: LabeledDataset, pert: PerturbationField, oracle: Oracle,
                   ledger: QueryLedger, executor: ThreadPoolExecutor | None) -> int:
    def one(item) -> bool:
        verdict = oracle.classify(apply(item.image, pert), top_k=1, ledger=ledger)
        return verdict.top != item.label

    if executor is None:
        return sum(one(item) for item in dataset.items)
    return sum(executor.map(one, dataset.items))


def _report_skeleton(spec: AttackSpec) -> dict:
    return {
        "version": REPORT_VERSION,
        "spec": spec.to_dict(),
        "best_params": None,
        "train_metric": None,
        "val_metric": None,
        "per_input": None,
        "queries_spent": 0,
        "raw_classifications": 0,
        "success_rate": None,
        "average_queries": None,
        "trace": None,
        "wall_time_ms": 0,
    }


def attack_universal(spec: AttackSpec, train: LabeledDataset, val: LabeledDataset,
                     oracle: Oracle, jobs: int = 1) -> dict:
    """Optimize the training-set universal evasion rate under the budget,
    then score the best parameters once on the held-out validation set."""
    if spec.mode != "universal":
        raise ValueError("attack_universal needs a universal-mode spec")
    check_disjoint(train, val)
    _check_oracle_side(oracle, train.side)
    side = train.side
    space = ParamSpace(spec.noise_kind, side)
    unit_ledger = QueryLedger(spec.budget)
    raw_ledger = QueryLedger(None)
    rng = np.random.default_rng([spec.seed, 0])
    t0 = time.perf_counter()
    report = _report_skeleton(spec)
    executor = ThreadPoolExecutor(max_workers=jobs) if jobs > 1 else None

    def objective(x: np.ndarray) -> float:
        pert, _ = _perturbation_for(spec, space, x, side)
        count = _evasion_count(train, pert, oracle, raw_ledger, executor)
        return -count / len(train)

    try:
        result = _dispatch(spec, objective, space, unit_ledger, rng, charge=True)
        report["trace"] = [
            {"params": params_to_dict(space.to_params(x)), "value": -v}
            for x, v in result.trace
        ]
        report["queries_spent"] = unit_ledger.spent
        if result.best_x is not None and result.best_value is not None:
            best_params = space.to_params(result.best_x)
            report["best_params"] = params_to_dict(best_params)
            report["train_metric"] = -result.best_value
            pert, _ = _perturbation_for(spec, space, result.best_x, side)
            val_count = _evasion_count(val, pert, oracle, raw_ledger, executor)
            report["val_metric"] = val_count / len(val)
        report["raw_classifications"] = raw_ledger.spent
    except TransportError as e:
        report["queries_spent"] = unit_ledger.spent
        report["raw_classifications"] = raw_ledger.spent
        report["error"] = "transport"
        report["wall_time_ms"] = int((time.perf_counter() - t0) * 1000)
        raise TransportAborted(str(e), partial=report) from e
    finally:
        if executor is not None:
            executor.shutdown(wait=False, cancel_futures=True)
    report["wall_time_ms"] = int((time.perf_counter() - t0) * 1000)
    return report


def attack_input_specific(spec: AttackSpec, data: LabeledDataset, oracle: Oracle,
                          jobs: int = 1) -> dict:
    """Per input: one uncounted clean classification, then minimize the true
    class's probability under a fresh budget, stopping that input the moment
    the top label flips.  Clean-misclassified inputs are recorded and
    excluded from the success statistics."""
    if spec.mode != "input_specific":
        raise ValueError("attack_input_specific needs an input_specific-mode spec")
    _check_oracle_side(oracle, data.side)
    side = data.side
    space = ParamSpace(spec.noise_kind, side)
    clean_ledger = QueryLedger(None)
    t0 = time.perf_counter()

    def attack_one(idx_item) -> InputTrace:
        idx, item = idx_item
        clean = oracle.classify(item.image, top_k=spec.top_k, ledger=clean_ledger)
        trace = InputTrace(input_id=item.item_id, clean_correct=(clean.top == item.label),
                           success=False, queries=0, best_prob=None)
        if not trace.clean_correct:
            return trace
        ledger = QueryLedger(spec.budget)
        rng = np.random.default_rng([spec.seed, 1, idx])

        def objective(x: np.ndarray) -> float:
            pert, _ = _perturbation_for(spec, space, x, side)
            verdict = oracle.classify(apply(item.image, pert), top_k=spec.top_k, ledger=ledger)
            prob_map = dict(verdict.probs) if verdict.probs else {}
            prob_true = float(prob_map.get(item.label, 0.0))
            if verdict.top != item.label:
                raise EvasionFound(x, prob_true)
            return prob_true

        try:
            result = _dispatch(spec, objective, space, ledger, rng, charge=False)
            trace.best_prob = result.best_value
        except EvasionFound as hit:
            trace.success = True
            trace.best_prob = hit.value
        except TransportError:
            trace.error = True
        trace.queries = ledger.spent
        return trace

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            traces = list(ex.map(attack_one, enumerate(data.items)))
    else:
        traces = [attack_one(pair) for pair in enumerate(data.items)]

    report = _report_skeleton(spec)
    report["per_input"] = [
        {"id": t.input_id, "clean_correct": t.clean_correct, "success": t.success,
         "queries": t.queries, "best_prob": t.best_prob, "error": t.error}
        for t in traces
    ]
    report["queries_spent"] = sum(t.queries for t in traces)
    report["raw_classifications"] = clean_ledger.spent + report["queries_spent"]
    try:
        stats = success_stats(traces)
        report["success_rate"] = stats["success_rate"]
        report["average_queries"] = stats["average_queries"]
    except NoCleanCorrectInputs:
        pass
    report["wall_time_ms"] = int((time.perf_counter() - t0) * 1000)
    return report


def _check_oracle_side(oracle: Oracle, side: int) -> None:
    if oracle.side is not None and oracle.side != side:
        raise ManifestError(f"dataset side {side} does not match oracle side {oracle.side}")


# ---------------------------------------------------------------------------
# Perturbation-set grid evaluation with resume support
# ---------------------------------------------------------------------------

def _zero_perturbation(side: int) -> PerturbationField:
    return PerturbationField(np.zeros((side, side, 3)), eps=0.0)


def _row_perturbation(row: GridRow, side: int, eps: float) -> PerturbationField:
    field = generate_field(row.kind, row.params, side, row.seed)
    if eps == 0.0:
        return _zero_perturbation(side)
    return to_perturbation(field, eps)


def _grid_fingerprint(rows: list[GridRow], dataset: LabeledDataset, eps: float) -> str:
    cells = [
        {"kind": r.kind, "seed": r.seed,
         "params": params_to_dict(r.params) if r.params is not None else None}
        for r in rows
    ]
    return json.dumps({"rows": cells, "items": dataset.ids, "eps": eps}, sort_keys=True)


def evaluate_perturbation_set(rows: list[GridRow], dataset: LabeledDataset,
                              oracle: Oracle, eps: float,
                              state_path: str | None = None,
                              jobs: int = 1) -> EvaluationGrid:
    """One oracle query per (perturbation, input) cell.  On TransportError
    the completed cells are persisted to `state_path` and the error is
    re-raised as TransportAborted; a later call with the same arguments
    resumes from the saved cursor."""
    _check_oracle_side(oracle, dataset.side)
    n_rows, n_items = len(rows), len(dataset)
    fingerprint = _grid_fingerprint(rows, dataset, eps)
    cells = np.full((n_rows, n_items), -1, dtype=np.int8)
    if state_path and os.path.exists(state_path):
        with open(state_path) as fh:
            state = json.load(fh)
        if state.get("fingerprint") != fingerprint:
            raise ManifestError(f"{state_path}: resume state does not match this evaluation")
        cells = np.array(state["cells"], dtype=np.int8)
    ledger = QueryLedger(None)

    def persist() -> None:
        if state_path:
            with open(state_path, "w") as fh:
                json.dump({"fingerprint": fingerprint, "cells": cells.tolist()}, fh)

    executor = ThreadPoolExecutor(max_workers=jobs) if jobs > 1 else None
    try:
        for i, row in enumerate(rows):
            pending = [j for j in range(n_items) if cells[i, j] < 0]
            if not pending:
                continue
            pert = _row_perturbation(row, dataset.side, eps)

            def one(j: int) -> tuple[int, bool]:
                item = dataset.items[j]
                verdict = oracle.classify(apply(item.image, pert), top_k=1, ledger=ledger)
                return j, verdict.top != item.label

            if executor is None:
                results = map(one, pending)
            else:
                results = executor.map(one, pending)
            for j, evaded in results:
                cells[i, j] = 1 if evaded else 0
    except TransportError as e:
        persist()
        raise TransportAborted(str(e), partial=cells.copy()) from e
    finally:
        if executor is not None:
            executor.shutdown(wait=False, cancel_futures=True)
    if state_path and os.path.exists(state_path):
        os.remove(state_path)
    return EvaluationGrid(cells.astype(bool), rows, dataset.ids, eps)
