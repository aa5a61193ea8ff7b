"""Command-line front end.

Exit codes: 0 success (a failed evasion is data, not an error), 2 usage,
3 transport, 4 data/manifest problems.
"""
from __future__ import annotations

import functools
import json
import os
import sys

import click
import numpy as np

from .data import generate_corpus, load_dataset
from .engine import AttackSpec, attack_input_specific, attack_universal, evaluate_perturbation_set
from .errors import (BadWindow, DegenerateColumn, DimensionMismatch, EmptyDataset,
                     IoError, ManifestError, TransportAborted, TransportError,
                     UnsupportedFormat)
from .image import Image, save_png
from .ledger import QueryLedger
from .metrics import (EvaluationGrid, GridRow, average_sensitivity, input_specific_evasion,
                      param_metric_correlations, read_grid_csv, universal_evasion_rate,
                      write_grid_csv)
from .noise import generate_field, to_perturbation
from .oracle import HttpOracle, oracle_from_uri
from .params import GaborParams, ParamSpace, PerlinParams, params_to_dict
from .reporting import (comparison_table, correlation_to_jsonable, histogram_svg,
                        report_to_json, write_correlation_csv, write_report)

EXIT_TRANSPORT = 3
EXIT_DATA = 4

DATA_ERRORS = (ManifestError, IoError, UnsupportedFormat, EmptyDataset,
               DegenerateColumn, DimensionMismatch, BadWindow)


def _guard(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except TransportError as e:
            click.echo(f"transport error: {e}", err=True)
            sys.exit(EXIT_TRANSPORT)
        except DATA_ERRORS as e:
            click.echo(f"data error: {e}", err=True)
            sys.exit(EXIT_DATA)
    return wrapper


@click.group()
def main():
    """Procedural-noise black-box attack toolkit."""


def _build_oracle(uri: str, defence_k: int | None):
    try:
        oracle = oracle_from_uri(uri, defence_k=defence_k)
    except ValueError as e:
        raise click.UsageError(str(e))
    if isinstance(oracle, HttpOracle):
        oracle.health()
    return oracle


# ---------------------------------------------------------------------------
# gen-noise
# ---------------------------------------------------------------------------

@main.command("gen-noise")
@click.option("--kind", type=click.Choice(["gabor", "perlin"]), required=True)
@click.option("--side", type=int, default=32, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--eps", type=float, default=16.0, show_default=True)
@click.option("--sigma", type=float, default=None, help="Gabor Gaussian width")
@click.option("--lam", type=float, default=None, help="Gabor harmonic period")
@click.option("--omega", type=float, default=None, help="Gabor orientation (radians)")
@click.option("--xi", type=int, default=None, help="Gabor isotropy count")
@click.option("--lx", type=float, default=None, help="Perlin x-wavelength")
@click.option("--ly", type=float, default=None, help="Perlin y-wavelength")
@click.option("--phi", type=float, default=None, help="Perlin colour-map frequency")
@click.option("--octaves", type=int, default=None, help="Perlin octave count")
@click.option("--out-dir", type=click.Path(), default=".", show_default=True)
@_guard
def cmd_gen_noise(kind, side, seed, eps, sigma, lam, omega, xi, lx, ly, phi, octaves, out_dir):
    """Render one noise field and its eps-scaled perturbation as PNGs."""
    if kind == "gabor":
        missing = [n for n, v in [("--sigma", sigma), ("--lam", lam), ("--omega", omega),
                                  ("--xi", xi)] if v is None]
        if missing:
            raise click.UsageError(f"gabor noise requires {' '.join(missing)}")
        params = GaborParams(sigma, lam, omega, xi)
    else:
        missing = [n for n, v in [("--lx", lx), ("--ly", ly), ("--phi", phi),
                                  ("--octaves", octaves)] if v is None]
        if missing:
            raise click.UsageError(f"perlin noise requires {' '.join(missing)}")
        params = PerlinParams(lx, ly, phi, octaves)
    try:
        params.validate(side)
        if eps <= 0:
            raise ValueError(f"eps must be positive, got {eps}")
    except ValueError as e:
        raise click.UsageError(str(e))

    field = generate_field(kind, params, side, seed)
    pert = to_perturbation(field, eps)
    os.makedirs(out_dir, exist_ok=True)
    noise_path = os.path.join(out_dir, "noise.png")
    pert_path = os.path.join(out_dir, "perturbation.png")
    gray = (field.values + 1.0) * (255.0 / 2.0)
    save_png(Image(np.repeat(gray[:, :, None], 3, axis=2)), noise_path)
    from .image import render_perturbation
    save_png(render_perturbation(pert), pert_path)
    record = {
        "kind": kind, "params": params_to_dict(params), "seed": seed, "side": side,
        "eps": eps, "noise_png": noise_path, "perturbation_png": pert_path,
    }
    click.echo(json.dumps(record, indent=2))


# ---------------------------------------------------------------------------
# attack
# ---------------------------------------------------------------------------

@main.command("attack")
@click.option("--mode", type=click.Choice(["universal", "specific"]), required=True)
@click.option("--kind", type=click.Choice(["gabor", "perlin"]), default="perlin", show_default=True)
@click.option("--method", type=click.Choice(["bayesopt", "lbfgs", "random"]), required=True)
@click.option("--oracle", "oracle_uri", required=True, help="toy:// | http(s):// | subprocess:")
@click.option("--defence-k", type=int, default=None, help="serve through a median-filter defence")
@click.option("--train", "train_path", type=click.Path(exists=True), default=None)
@click.option("--val", "val_path", type=click.Path(exists=True), default=None)
@click.option("--data", "data_path", type=click.Path(exists=True), default=None)
@click.option("--budget", type=int, required=True)
@click.option("--eps", type=float, default=16.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--top-k", type=int, default=1, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@_guard
def cmd_attack(mode, kind, method, oracle_uri, defence_k, train_path, val_path,
               data_path, budget, eps, seed, top_k, jobs, out_path):
    """Run a universal or input-specific black-box attack and write the
    report JSON."""
    spec_mode = "universal" if mode == "universal" else "input_specific"
    spec = AttackSpec(mode=spec_mode, noise_kind=kind, method=method, eps=eps,
                      budget=budget, seed=seed, top_k=top_k)
    run_config = {
        "command": "attack", "mode": mode, "kind": kind, "method": method,
        "oracle": oracle_uri, "defence_k": defence_k, "train": train_path,
        "val": val_path, "data": data_path, "budget": budget, "eps": eps,
        "seed": seed, "top_k": top_k, "jobs": jobs, "out": out_path,
    }
    oracle = _build_oracle(oracle_uri, defence_k)
    try:
        if spec_mode == "universal":
            if not train_path or not val_path:
                raise click.UsageError("universal mode requires --train and --val")
            train = load_dataset(train_path, name="train")
            val = load_dataset(val_path, name="val")
            report = attack_universal(spec, train, val, oracle, jobs=jobs)
        else:
            if not data_path:
                raise click.UsageError("specific mode requires --data")
            data = load_dataset(data_path, name="data")
            report = attack_input_specific(spec, data, oracle, jobs=jobs)
    except TransportAborted as e:
        if e.partial is not None:
            e.partial["run_config"] = run_config
            write_report(e.partial, out_path)
            click.echo(f"transport failure; partial report written to {out_path}", err=True)
        sys.exit(EXIT_TRANSPORT)
    finally:
        oracle.close()
    report["run_config"] = run_config
    write_report(report, out_path)
    summary = {k: report[k] for k in ("train_metric", "val_metric", "success_rate",
                                      "average_queries", "queries_spent")}
    click.echo(json.dumps(summary))


# ---------------------------------------------------------------------------
# eval-grid
# ---------------------------------------------------------------------------

def _draw_rows(kind: str, samples: int, seed: int, side: int) -> list[GridRow]:
    rng = np.random.default_rng([seed, 2])
    rows = []
    space = ParamSpace(kind, side) if kind != "uniform" else None
    for _ in range(samples):
        field_seed = int(rng.integers(0, 2**31))
        params = space.to_params(space.sample_uniform(rng)) if space else None
        rows.append(GridRow(kind=kind, params=params, seed=field_seed))
    return rows


def _read_params_file(path) -> list[GridRow]:
    import csv as _csv

    rows = []
    with open(path, newline="") as fh:
        reader = _csv.reader(fh)
        header = next(reader)
        if header[:6] != ["param_1", "param_2", "param_3", "param_4", "kind", "seed"]:
            raise ManifestError(f"{path}: expected grid parameter header, got {header}")
        for rec in reader:
            kind = rec[4]
            if kind == "uniform":
                params = None
            elif kind == "gabor":
                params = GaborParams(float(rec[0]), float(rec[1]), float(rec[2]), int(float(rec[3])))
            elif kind == "perlin":
                params = PerlinParams(float(rec[0]), float(rec[1]), float(rec[2]), int(float(rec[3])))
            else:
                raise ManifestError(f"{path}: unknown kind {kind!r}")
            rows.append(GridRow(kind=kind, params=params, seed=int(rec[5])))
    if not rows:
        raise ManifestError(f"{path}: no parameter rows")
    return rows


@main.command("eval-grid")
@click.option("--oracle", "oracle_uri", required=True)
@click.option("--defence-k", type=int, default=None)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), required=True)
@click.option("--eps", type=float, default=16.0, show_default=True)
@click.option("--params-file", type=click.Path(exists=True), default=None,
              help="CSV of param_1..param_4,kind,seed rows")
@click.option("--kind", type=click.Choice(["gabor", "perlin", "uniform"]), default=None)
@click.option("--samples", type=int, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--out-dir", type=click.Path(), required=True)
@_guard
def cmd_eval_grid(oracle_uri, defence_k, manifest_path, eps, params_file, kind,
                  samples, seed, jobs, out_dir):
    """Evaluate a perturbation set over a dataset into a boolean grid CSV;
    interrupted runs resume from the saved state."""
    if params_file is None and (kind is None or samples is None):
        raise click.UsageError("provide --params-file or both --kind and --samples")
    oracle = _build_oracle(oracle_uri, defence_k)
    dataset = load_dataset(manifest_path)
    rows = _read_params_file(params_file) if params_file else _draw_rows(kind, samples, seed, dataset.side)
    os.makedirs(out_dir, exist_ok=True)
    state_path = os.path.join(out_dir, "grid.state.json")
    try:
        grid = evaluate_perturbation_set(rows, dataset, oracle, eps,
                                         state_path=state_path, jobs=jobs)
    except TransportAborted:
        click.echo(f"transport failure; resume state kept at {state_path}", err=True)
        sys.exit(EXIT_TRANSPORT)
    finally:
        oracle.close()
    grid_path = os.path.join(out_dir, "grid.csv")
    write_grid_csv(grid, grid_path)
    click.echo(json.dumps({"grid_csv": grid_path, "perturbations": len(rows),
                           "inputs": len(dataset)}))


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

@main.command("analyze")
@click.option("--grid", "grid_path", type=click.Path(exists=True), required=True)
@click.option("--eps", type=float, default=16.0, show_default=True)
@click.option("--out-dir", type=click.Path(), required=True)
@_guard
def cmd_analyze(grid_path, eps, out_dir):
    """Metrics JSON, correlation CSV, and histogram SVGs from a grid CSV."""
    grid = read_grid_csv(grid_path, eps=eps)
    os.makedirs(out_dir, exist_ok=True)
    per_row = [universal_evasion_rate(row) for row in grid.outcomes]
    per_input = [average_sensitivity(grid.outcomes[:, j]) for j in range(grid.outcomes.shape[1])]
    metrics_obj = {
        "n_perturbations": len(per_row),
        "n_inputs": len(per_input),
        "universal_evasion": {
            "per_perturbation": per_row,
            "mean": float(np.mean(per_row)),
            "median": float(np.median(per_row)),
        },
        "average_sensitivity": {
            "per_input": per_input,
            "mean": float(np.mean(per_input)),
        },
        "input_specific_evasion": input_specific_evasion(grid.outcomes),
        "correlation": None,
    }
    try:
        matrix, names, _ = param_metric_correlations(grid)
        metrics_obj["correlation"] = correlation_to_jsonable(matrix, names)
        write_correlation_csv(matrix, names, os.path.join(out_dir, "correlation.csv"))
    except DegenerateColumn:
        pass
    with open(os.path.join(out_dir, "metrics.json"), "w") as fh:
        fh.write(json.dumps(metrics_obj, indent=2) + "\n")
    for name, values, title in [
        ("universal_evasion.svg", per_row, "Universal evasion rate"),
        ("average_sensitivity.svg", per_input, "Average sensitivity"),
    ]:
        with open(os.path.join(out_dir, name), "w") as fh:
            fh.write(histogram_svg(values, title))
    click.echo(json.dumps({"metrics_json": os.path.join(out_dir, "metrics.json")}))


# ---------------------------------------------------------------------------
# defend
# ---------------------------------------------------------------------------

@main.command("defend")
@click.option("--oracle", "oracle_uri", required=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), required=True)
@click.option("--kind", type=click.Choice(["gabor", "perlin", "uniform"]), default="perlin",
              show_default=True)
@click.option("--samples", type=int, default=20, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--eps-sweep", default="4,8,12,16", show_default=True)
@click.option("--filter-k", type=int, default=3, show_default=True)
@click.option("--phi-min", type=float, default=None,
              help="redraw phi_sine at or above this (perlin only)")
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--out-dir", type=click.Path(), required=True)
@_guard
def cmd_defend(oracle_uri, manifest_path, kind, samples, seed, eps_sweep, filter_k,
               phi_min, jobs, out_dir):
    """Paired universal-evasion summaries with and without the median-filter
    defence, over an eps sweep, plus the clean-error delta."""
    try:
        eps_values = [float(v) for v in eps_sweep.split(",") if v.strip()]
    except ValueError:
        raise click.UsageError(f"bad --eps-sweep {eps_sweep!r}")
    if not eps_values:
        raise click.UsageError("--eps-sweep is empty")
    raw_oracle = _build_oracle(oracle_uri, None)
    defended = _build_oracle(oracle_uri, filter_k)
    dataset = load_dataset(manifest_path)
    rows = _draw_rows(kind, samples, seed, dataset.side)
    if phi_min is not None and kind == "perlin":
        rng = np.random.default_rng([seed, 3])
        rows = [
            GridRow(kind, PerlinParams(r.params.lambda_x, r.params.lambda_y,
                                       float(rng.uniform(phi_min, dataset.side)),
                                       r.params.octaves), r.seed)
            for r in rows
        ]

    def clean_error(oracle) -> float:
        ledger = QueryLedger(None)
        wrong = sum(
            oracle.classify(item.image, 1, ledger).top != item.label
            for item in dataset.items
        )
        return wrong / len(dataset)

    arms = {"undefended": raw_oracle, "defended": defended}
    sweep_rows = []
    try:
        for eps in eps_values:
            entry = {"eps": eps}
            for arm, oracle in arms.items():
                grid = evaluate_perturbation_set(rows, dataset, oracle, eps, jobs=jobs)
                rates = [universal_evasion_rate(r) for r in grid.outcomes]
                entry[arm] = {"mean": float(np.mean(rates)), "median": float(np.median(rates))}
            sweep_rows.append(entry)
        ce_raw = clean_error(raw_oracle)
        ce_def = clean_error(defended)
    finally:
        raw_oracle.close()
        defended.close()
    result = {
        "kind": kind, "samples": samples, "filter_k": filter_k, "seed": seed,
        "clean_error": {"undefended": ce_raw, "defended": ce_def, "delta": ce_def - ce_raw},
        "rows": sweep_rows,
    }
    os.makedirs(out_dir, exist_ok=True)
    out_path = os.path.join(out_dir, "defence.json")
    with open(out_path, "w") as fh:
        fh.write(json.dumps(result, indent=2) + "\n")
    click.echo(json.dumps({"defence_json": out_path}))


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

@main.command("report")
@click.argument("reports", nargs=-1, type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
@_guard
def cmd_report(reports, out_path):
    """Comparison table (markdown) from one or more attack report JSONs."""
    loaded = []
    for path in reports:
        with open(path) as fh:
            loaded.append(json.load(fh))
    table = comparison_table(loaded)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(table)
    click.echo(table)


# ---------------------------------------------------------------------------
# serve / gen-corpus
# ---------------------------------------------------------------------------

@main.command("serve")
@click.option("--uri", default="toy://", show_default=True)
@click.option("--defence-k", type=int, default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8331, show_default=True)
@click.option("--model-name", default="toy", show_default=True)
@_guard
def cmd_serve(uri, defence_k, host, port, model_name):
    """Serve an oracle over the HTTP wire protocol (POST /classify)."""
    from .service import serve

    oracle = oracle_from_uri(uri, defence_k=defence_k)
    click.echo(f"serving {uri} on http://{host}:{port}")
    serve(oracle, host, port, model_name=model_name)


@main.command("gen-corpus")
@click.option("--oracle", "oracle_uri", default="toy://", show_default=True)
@click.option("--count", type=int, required=True)
@click.option("--side", type=int, default=32, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-dir", type=click.Path(), required=True)
@_guard
def cmd_gen_corpus(oracle_uri, count, side, seed, out_dir):
    """Write a smooth synthetic corpus labelled by the oracle's own clean
    verdicts, plus its manifest."""
    oracle = _build_oracle(oracle_uri, None)
    try:
        if oracle.side is not None and oracle.side != side:
            raise ManifestError(f"--side {side} does not match oracle side {oracle.side}")
        manifest = generate_corpus(out_dir, count, side, seed, oracle)
    finally:
        oracle.close()
    click.echo(json.dumps({"manifest": manifest, "count": count}))


if __name__ == "__main__":
    main()
