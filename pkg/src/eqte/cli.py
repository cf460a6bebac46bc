"""Command-line surface: ``estimate``, ``threshold``, and ``simulate``.

Every report embeds the seed, the fully resolved configuration, the
artifact version, and the threshold-selection convention, and is written
as deterministic JSON: rerunning with the same seed gives byte-identical
output. Exit codes: 0 success, 2 validation error, 3 estimation failure.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .bootstrap import bootstrap_components
from .counterfactual import ESTIMANDS, GridConfig
from .data import ingest_csv
from .errors import EstimationError, InvalidArgumentError, ValidationError
from .simulation import (
    ERROR_KINDS,
    METHOD_NAMES,
    StudySettings,
    estimate_all_methods,
    run_study,
)
from .threshold import CONVENTIONS, select_transition

_ERROR_ALIASES = {
    "gaussian": "gaussian_sd10",
    "gaussian_sd10": "gaussian_sd10",
    "t1": "student_t_df1",
    "student_t_df1": "student_t_df1",
}


def _parse_floats(text: str, what: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InvalidArgumentError(f"could not parse {what} list {text!r}") from None


def _parse_candidates(text: str) -> list[float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise InvalidArgumentError(
            f"candidates must look like start:stop:count, got {text!r}"
        )
    try:
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise InvalidArgumentError(f"could not parse candidates {text!r}") from None
    if count < 1 or not 0.0 < start <= stop < 1.0:
        raise InvalidArgumentError(f"invalid candidate grid {text!r}")
    if count == 1:
        return [start]
    return [float(v) for v in np.linspace(start, stop, count)]


def _parse_methods(text: str) -> list[str]:
    methods = [m.strip().lower() for m in text.split(",") if m.strip()]
    unknown = [m for m in methods if m not in METHOD_NAMES]
    if unknown:
        raise InvalidArgumentError(
            f"unknown methods {', '.join(unknown)}; choose from {', '.join(METHOD_NAMES)}"
        )
    if not methods:
        raise InvalidArgumentError("at least one method is required")
    return methods


def _load_dataset(path: str, outcome: str, treatment: str, covariates: list[str]):
    if not Path(path).exists():
        raise InvalidArgumentError(f"data file not found: {path}")
    with open(path, "rb") as fh:
        return ingest_csv(fh, outcome, treatment, covariates)


def _report_meta(command: str, seed: int, convention: str, config: dict) -> dict:
    return {
        "artifact": {"name": "eqte", "version": __version__},
        "command": command,
        "seed": seed,
        "convention": convention,
        "config": config,
    }


def _write_report(report: dict, out: str | None) -> None:
    text = json.dumps(report, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
        click.echo(f"report written to {out}")
    else:
        click.echo(text)


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ValidationError as exc:
            click.echo(f"validation error: {exc}", err=True)
            sys.exit(2)
        except EstimationError as exc:
            click.echo(f"estimation failed: {exc}", err=True)
            sys.exit(3)

    return wrapper


def _data_options(fn):
    fn = click.option("--data", required=True, help="CSV file with a header row.")(fn)
    fn = click.option("--outcome", required=True, help="Outcome column name.")(fn)
    fn = click.option("--treatment", required=True, help="Treatment column (0/1).")(fn)
    fn = click.option(
        "--covariates",
        required=True,
        help="Comma-separated covariate columns for the outcome/threshold models.",
    )(fn)
    return fn


def _selection_options(fn):
    fn = click.option(
        "--lambda", "fdr_level", default=0.05, show_default=True,
        help="ForwardStop false-discovery level.",
    )(fn)
    fn = click.option(
        "--candidates", default="0.75:0.99:10", show_default=True,
        help="Candidate transition levels as start:stop:count.",
    )(fn)
    fn = click.option(
        "--gof-boot", default=500, show_default=True,
        help="Bootstrap replicates per goodness-of-fit p-value.",
    )(fn)
    fn = click.option(
        "--convention", type=click.Choice(CONVENTIONS), default="paper-literal",
        show_default=True, help="Transition-level convention.",
    )(fn)
    return fn


def _grid_options(fn):
    fn = click.option("--bulk-points", default=75, show_default=True)(fn)
    fn = click.option("--extreme-points", default=25, show_default=True)(fn)
    fn = click.option("--tau-max", default=0.9995, show_default=True)(fn)
    return fn


@click.group()
@click.version_option(version=__version__, prog_name="eqte")
def main():
    """Quantile treatment effects at intermediate and extreme levels."""


@main.command("threshold")
@_data_options
@_selection_options
@click.option("--seed", default=0, show_default=True)
@click.option("--out", default=None, help="Write the JSON report here.")
@_guarded
def cmd_threshold(data, outcome, treatment, covariates, fdr_level, candidates,
                  gof_boot, convention, seed, out):
    """Select the bulk/tail transition level for a dataset."""
    if fdr_level <= 0.0:
        raise InvalidArgumentError("--lambda must be positive")
    cov_list = [c.strip() for c in covariates.split(",") if c.strip()]
    levels = _parse_candidates(candidates)
    ds = _load_dataset(data, outcome, treatment, cov_list)
    selection = select_transition(
        ds, levels, fdr_level=fdr_level, n_boot=gof_boot, seed=seed,
        convention=convention,
    )
    click.echo(f"{'level':>8} {'n_exceed':>9} {'p_value':>9}")
    for c in selection.candidates:
        click.echo(f"{c.level:>8.4f} {c.n_exceedances:>9d} {c.p_value:>9.4f}")
    click.echo(f"k_hat={selection.k_hat} selected_level={selection.selected_level:.4f}")
    report = _report_meta(
        "threshold", seed, convention,
        {
            "data": data, "outcome": outcome, "treatment": treatment,
            "covariates": cov_list, "lambda": fdr_level,
            "candidates": candidates, "gof_boot": gof_boot,
        },
    )
    report["selection"] = {
        "k_hat": selection.k_hat,
        "selected_level": selection.selected_level,
        "lambda": selection.fdr_level,
        "convention": selection.convention,
        "candidates": [
            {
                "level": c.level,
                "n_exceedances": c.n_exceedances,
                "p_value": c.p_value,
                "testable": c.testable,
            }
            for c in selection.candidates
        ],
    }
    _write_report(report, out)


def _method_vector(dataset, est_seed, method, ps, settings):
    # Estimator protocol for the bootstrap: full pipeline on the resample,
    # one component per (estimand, p), failures propagate.
    effects, _, _ = estimate_all_methods(
        dataset, [method], ps, est_seed, settings, catch_failures=False
    )
    return np.array(
        [effects[(method, estimand, p)].point for estimand in ESTIMANDS for p in ps]
    )


@main.command("estimate")
@_data_options
@click.option(
    "--propensity-covariates", default=None,
    help="Covariates for the propensity model (defaults to --covariates).",
)
@click.option(
    "--methods", default="proposed,or,ipw,firpo", show_default=True,
    help="Comma-separated subset of proposed,or,ipw,firpo.",
)
@click.option("--p", "p_text", default="0.85,0.9,0.95,0.995", show_default=True,
              help="Comma-separated probability levels.")
@_selection_options
@_grid_options
@click.option("--bootstrap", "n_boot", default=1000, show_default=True,
              help="Bootstrap replicates; 0 disables inference.")
@click.option("--bootstrap-b", default=0, show_default=True,
              help="Subsample size for b-out-of-n resampling; 0 = full samples.")
@click.option("--ci-level", default=0.95, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", default=None, help="Write the JSON report here.")
@_guarded
def cmd_estimate(data, outcome, treatment, covariates, propensity_covariates,
                 methods, p_text, fdr_level, candidates, gof_boot, convention,
                 bulk_points, extreme_points, tau_max, n_boot, bootstrap_b,
                 ci_level, seed, out):
    """Estimate QTE and QTT at the requested levels, with bootstrap CIs."""
    if fdr_level <= 0.0:
        raise InvalidArgumentError("--lambda must be positive")
    method_list = _parse_methods(methods)
    ps = _parse_floats(p_text, "--p")
    if not ps:
        raise InvalidArgumentError("--p must name at least one level")
    for p in ps:
        if not 0.0 < p <= tau_max:
            raise InvalidArgumentError(
                f"requested level {p} outside (0, tau_max={tau_max}]"
            )
    cov_list = [c.strip() for c in covariates.split(",") if c.strip()]
    prop_list = (
        cov_list
        if propensity_covariates is None
        else [c.strip() for c in propensity_covariates.split(",") if c.strip()]
    )
    all_cols = list(dict.fromkeys(cov_list + prop_list))
    ds = _load_dataset(data, outcome, treatment, all_cols)
    settings = StudySettings(
        candidate_levels=tuple(_parse_candidates(candidates)),
        fdr_level=fdr_level,
        gof_boot=gof_boot,
        convention=convention,
        grid=GridConfig(bulk_points, extreme_points, tau_max),
        outcome_covariates=tuple(cov_list),
        propensity_covariates=tuple(prop_list),
    )

    effects, failures, selection = estimate_all_methods(
        ds, method_list, ps, seed, settings
    )

    summaries = {}
    boot_errors = {}
    if n_boot > 0:
        for method in method_list:
            if method in failures:
                continue
            estimator = functools.partial(
                _method_vector, method=method, ps=ps, settings=settings
            )
            try:
                comps = bootstrap_components(
                    ds,
                    estimator,
                    n_components=2 * len(ps),
                    n_boot=n_boot,
                    seed=seed,
                    ci_level=ci_level,
                    b=None if bootstrap_b == 0 else bootstrap_b,
                )
            except EstimationError as exc:
                boot_errors[method] = f"{type(exc).__name__}: {exc}"
                continue
            for i, (estimand, p) in enumerate(
                (e, p) for e in ESTIMANDS for p in ps
            ):
                summaries[(method, estimand, p)] = comps[i]

    results = []
    for method in method_list:
        for estimand in ESTIMANDS:
            for p in ps:
                cell = {"method": method, "estimand": estimand, "p": p}
                eff = effects.get((method, estimand, p))
                if eff is None:
                    cell["error"] = failures.get(method, "estimation failed")
                else:
                    cell.update(eff.to_json_dict())
                    cell["error"] = None
                    summary = summaries.get((method, estimand, p))
                    if summary is not None:
                        cell["bootstrap"] = summary.to_json_dict()
                    elif method in boot_errors:
                        cell["bootstrap"] = {"error": boot_errors[method]}
                    else:
                        cell["bootstrap"] = None
                results.append(cell)
                point = "failed" if eff is None else f"{eff.point:.4f}"
                click.echo(f"{method:>9} {estimand} p={p:g}: {point}")

    report = _report_meta(
        "estimate", seed, convention,
        {
            "data": data, "outcome": outcome, "treatment": treatment,
            "covariates": cov_list, "propensity_covariates": prop_list,
            "methods": method_list, "p": ps, "lambda": fdr_level,
            "candidates": candidates, "gof_boot": gof_boot,
            "bulk_points": bulk_points, "extreme_points": extreme_points,
            "tau_max": tau_max, "bootstrap": n_boot, "bootstrap_b": bootstrap_b,
            "ci_level": ci_level,
        },
    )
    if selection is not None:
        report["threshold_selection"] = {
            "k_hat": selection.k_hat,
            "selected_level": selection.selected_level,
            "convention": selection.convention,
            "candidates": [
                {"level": c.level, "n_exceedances": c.n_exceedances,
                 "p_value": c.p_value}
                for c in selection.candidates
            ],
        }
    report["results"] = results
    _write_report(report, out)
    if failures:
        failed = ", ".join(sorted(failures))
        click.echo(f"note: methods failed on this data: {failed}", err=True)


@main.command("simulate")
@click.option("--n", "n_text", default="1000", show_default=True,
              help="Comma-separated sample sizes.")
@click.option("--error", "error_text", default="gaussian", show_default=True,
              help="Comma-separated error kinds (gaussian, t1).")
@click.option("--reps", default=200, show_default=True,
              help="Monte Carlo replicates per cell (minimum 50).")
@click.option("--p", "p_text", default="0.85,0.9,0.95,0.995", show_default=True)
@click.option("--methods", default="proposed,or,ipw,firpo", show_default=True)
@_selection_options
@_grid_options
@click.option("--oracle-draws", default=10**6, show_default=True,
              help="Monte Carlo draws for the true effect values.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", default="eqte-study", show_default=True,
              help="Output prefix; writes <prefix>.csv, <prefix>.txt, <prefix>.json.")
@_guarded
def cmd_simulate(n_text, error_text, reps, p_text, methods, fdr_level, candidates,
                 gof_boot, convention, bulk_points, extreme_points, tau_max,
                 oracle_draws, seed, out):
    """Run the Monte Carlo comparison study and write its tables."""
    if fdr_level <= 0.0:
        raise InvalidArgumentError("--lambda must be positive")
    if reps < 50:
        raise InvalidArgumentError(f"--reps must be at least 50, got {reps}")
    kinds = []
    for token in error_text.split(","):
        token = token.strip().lower()
        if not token:
            continue
        if token not in _ERROR_ALIASES:
            raise InvalidArgumentError(
                f"unknown error kind {token!r}; choose gaussian or t1"
            )
        kinds.append(_ERROR_ALIASES[token])
    if not kinds:
        raise InvalidArgumentError("--error must name at least one kind")
    try:
        ns = [int(v) for v in n_text.split(",") if v.strip()]
    except ValueError:
        raise InvalidArgumentError(f"could not parse --n list {n_text!r}") from None
    ps = _parse_floats(p_text, "--p")
    for p in ps:
        if not 0.0 < p <= tau_max:
            raise InvalidArgumentError(
                f"requested level {p} outside (0, tau_max={tau_max}]"
            )
    method_list = _parse_methods(methods)
    settings = StudySettings(
        candidate_levels=tuple(_parse_candidates(candidates)),
        fdr_level=fdr_level,
        gof_boot=gof_boot,
        convention=convention,
        grid=GridConfig(bulk_points, extreme_points, tau_max),
    )
    result = run_study(
        ns, kinds, ps, method_list, n_replicates=reps, seed=seed,
        settings=settings, oracle_draws=oracle_draws,
    )
    table = result.to_text_table()
    click.echo(table)
    csv_path = Path(f"{out}.csv")
    csv_path.write_text(result.to_csv_text(), encoding="utf-8")
    Path(f"{out}.txt").write_text(table, encoding="utf-8")
    report = _report_meta(
        "simulate", seed, convention,
        {
            "n": ns, "error_kinds": kinds, "reps": reps, "p": ps,
            "methods": method_list, "lambda": fdr_level, "candidates": candidates,
            "gof_boot": gof_boot, "bulk_points": bulk_points,
            "extreme_points": extreme_points, "tau_max": tau_max,
            "oracle_draws": oracle_draws,
        },
    )
    report["true_values"] = {
        f"{kind}|{estimand}|{p:g}": v
        for (kind, estimand, p), v in sorted(result.true_values.items())
    }
    report["cells"] = [
        {
            "error_kind": c.error_kind, "n": c.n, "estimand": c.estimand,
            "p": c.p, "method": c.method, "n_ok": c.n_ok, "n_failed": c.n_failed,
            "mean_estimate": None if np.isnan(c.mean_estimate) else c.mean_estimate,
            "relative_bias_pct": (
                None if np.isnan(c.relative_bias_pct) else c.relative_bias_pct
            ),
            "variance": None if np.isnan(c.variance) else c.variance,
            "mse": None if np.isnan(c.mse) else c.mse,
            "relative_variance": c.relative_variance,
            "relative_mse": c.relative_mse,
            "failed": c.failed,
        }
        for c in result.cells
    ]
    _write_report(report, f"{out}.json")
    click.echo(f"study table written to {csv_path}")


if __name__ == "__main__":
    main()
