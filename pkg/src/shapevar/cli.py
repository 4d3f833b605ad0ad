"""Command-line interface.

Subcommands: ``basis`` (dump basis matrices), ``fit`` (reweighted fit plus
diagnostics), ``bootstrap`` (standard errors, intervals, variance band),
``select`` (grid search over spline configurations), ``curves`` (reference
quantile curves), ``simulate`` (scenario runner).

Every run writes ``run_config.json`` — the fully resolved configuration
including the effective seed — next to its outputs; re-running the same
subcommand with ``--config run_config.json`` reproduces the outputs
bit-identically.  Machine CSVs carry 17 significant digits; files are
written via temp-and-rename and removed again if the run fails midway.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import datasets
from .bootstrap import bootstrap_clustered, bootstrap_independent
from .curves import quantile_curves, residual_diagnostics
from .dataio import (
    LongFormatTable,
    ModelFormulaConfig,
    _mean_matrix,
    apply_exclusions,
    build_design,
    canonical_labels,
    load_csv,
)
from .designs import ClusteredDesign
from .errors import (
    AllCandidatesFailed,
    DimensionMismatch,
    EmptyData,
    EmptyReplicates,
    InvalidSpec,
    MissingColumn,
    NonConvergence,
    NonPositiveVariance,
    OutOfRange,
    ParseError,
    QuadratureFailure,
    RankDeficient,
    ShapevarError,
    SingularCovariance,
    UnknownSubject,
    UnsupportedDimension,
    UnsupportedFormula,
)
from .fitting import FitResult, irw_fit_clustered, irw_fit_independent
from .selection import select_model
from .simulation import ScenarioConfig, g_true, run_scenario
from .splines import eval_basis, make_even_spec
from .variance import IndexKind, VarianceTemplate

SEED_ENV_VAR = "SHAPEVAR_SEED"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NONCONVERGENCE = 3

_USAGE_ERRORS = (InvalidSpec, UnsupportedFormula, OutOfRange, ValueError, KeyError)
_DATA_ERRORS = (
    MissingColumn, ParseError, EmptyData, UnknownSubject, RankDeficient,
    DimensionMismatch, UnsupportedDimension, FileNotFoundError,
)
_CONVERGENCE_ERRORS = (
    NonConvergence, AllCandidatesFailed, QuadratureFailure, NonPositiveVariance,
    SingularCovariance, EmptyReplicates,
)


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def _csv_text(header: list[str], rows: list[list]) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


class OutputSet:
    """Atomic output writing with rollback when a run fails partway."""

    def __init__(self, out_dir: str):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.written: list[Path] = []

    def write_text(self, name: str, text: str) -> Path:
        final = self.dir / name
        tmp = self.dir / f".{name}.tmp{os.getpid()}"
        tmp.write_text(text)
        os.replace(tmp, final)
        self.written.append(final)
        return final

    def write_json(self, name: str, payload: dict) -> Path:
        return self.write_text(name, json.dumps(payload, indent=2, sort_keys=True) + "\n")

    def rollback(self):
        for path in self.written:
            try:
                path.unlink()
            except OSError:
                pass


# ---------------------------------------------------------------------------
# configuration plumbing
# ---------------------------------------------------------------------------


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text())


def _resolve_run(args, config: dict) -> dict:
    run = dict(config.get("run", {}))
    if getattr(args, "seed", None) is not None:
        run["seed"] = int(args.seed)
    elif "seed" not in run:
        run["seed"] = int(os.environ.get(SEED_ENV_VAR) or 0)
    if getattr(args, "threads", None) is not None:
        run["threads"] = int(args.threads)
    run.setdefault("threads", 1)
    if getattr(args, "bootstrap_reps", None) is not None:
        run["bootstrap_reps"] = int(args.bootstrap_reps)
    if getattr(args, "quad_nodes", None) is not None:
        run["quad_nodes"] = int(args.quad_nodes)
    return run


def _load_table(data_cfg: dict) -> LongFormatTable:
    path = data_cfg.get("path")
    if path is None:
        raise KeyError("config is missing data.path")
    if path == "builtin:chick":
        table = datasets.load_chick_weights()
    elif path == "builtin:pancreas":
        table = datasets.load_pancreas_synthetic()
    else:
        table = load_csv(
            path,
            data_cfg.get("mapping"),
            allow_duplicate_times=bool(data_cfg.get("allow_duplicate_times", False)),
        )
    exclusions = data_cfg.get("exclude_subjects", [])
    if exclusions:
        table = apply_exclusions(table, exclusions)
    return table


def _model_from_config(config: dict, run: dict) -> ModelFormulaConfig:
    model = ModelFormulaConfig.from_dict(config.get("model", {}))
    if "quad_nodes" in run:
        model.fitting.n_quad = int(run["quad_nodes"])
    return model


def _resolved_config(command: str, config: dict, run: dict) -> dict:
    resolved = dict(config)
    resolved["command"] = command
    resolved["run"] = run
    return resolved


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_basis(args, out: OutputSet) -> int:
    config = _load_config(args.config)
    basis_cfg = dict(config.get("basis", {}))
    for key in ("family", "degree", "df", "lower", "upper"):
        val = getattr(args, key, None)
        if val is not None:
            basis_cfg[key] = val
    spec = make_even_spec(
        basis_cfg.get("family", "I"),
        int(basis_cfg.get("degree", 2)),
        int(basis_cfg.get("df", 3)),
        float(basis_cfg.get("lower", 0.0)),
        float(basis_cfg.get("upper", 1.0)),
    )
    if args.at:
        basis_cfg["at"] = args.at
    if "at" in basis_cfg:
        x = np.array([float(v) for v in str(basis_cfg["at"]).split(",")])
    else:
        n = int(basis_cfg.get("points", args.points))
        basis_cfg["points"] = n
        x = np.linspace(spec.lower, spec.upper, n)
    mat = eval_basis(spec, x)
    header = ["x"] + [f"{spec.family.value}{k + 1}" for k in range(spec.df)]
    rows = [[xi, *row] for xi, row in zip(mat.eval_points, mat.values)]
    out.write_text("basis.csv", _csv_text(header, rows))
    out.write_json("run_config.json", _resolved_config("basis", {"basis": basis_cfg}, {}))
    print(f"wrote {out.dir / 'basis.csv'} ({len(rows)} rows, {spec.df} columns)")
    return EXIT_OK


def _fit_from_config(config: dict, run: dict):
    table = _load_table(config.get("data", {}))
    model = _model_from_config(config, run)
    design = build_design(table, model)
    template = model.variance_template()
    if isinstance(design, ClusteredDesign):
        fit = irw_fit_clustered(design, template, model.fitting)
    else:
        fit = irw_fit_independent(design, template, model.fitting)
    return table, model, design, fit


def _fit_rows(fit: FitResult, summary=None) -> list[list]:
    names = fit.column_names or [f"x{j}" for j in range(len(fit.beta_hat))]
    rows = []
    se = ci_lo = ci_hi = None
    if summary is not None:
        se, ci_lo, ci_hi = summary.se_beta, summary.ci_beta[0], summary.ci_beta[1]
    for j, name in enumerate(names):
        rows.append([
            "beta", name, fit.beta_hat[j],
            None if se is None else se[j],
            None if ci_lo is None else ci_lo[j],
            None if ci_hi is None else ci_hi[j],
        ])
    for k, val in enumerate(fit.theta_hat):
        rows.append([
            "theta", f"theta{k}", val,
            None if summary is None else summary.se_theta[k], None, None,
        ])
    if fit.sigma_b is not None:
        rows.append(["random_effects", "sigma_b", fit.sigma_b, None, None, None])
    for name, val in (
        ("loglik", fit.loglik), ("aic", fit.aic), ("bic", fit.bic),
        ("n_iterations", fit.n_iterations), ("converged", fit.converged),
        ("n_params", fit.n_params),
    ):
        rows.append(["summary", name, val, None, None, None])
    return rows


def _write_fit_outputs(out: OutputSet, fit: FitResult, summary=None):
    header = ["kind", "name", "value", "se", "ci_lower", "ci_upper"]
    out.write_text("fit.csv", _csv_text(header, _fit_rows(fit, summary)))
    out.write_json("fit.json", fit.to_dict())
    _, pairs = residual_diagnostics(fit)
    out.write_text(
        "qq.csv", _csv_text(["theoretical", "empirical"], [list(r) for r in pairs])
    )


def _cmd_fit(args, out: OutputSet) -> int:
    config = _load_config(args.config)
    run = _resolve_run(args, config)
    table, model, design, fit = _fit_from_config(config, run)
    _write_fit_outputs(out, fit)
    out.write_json("run_config.json", _resolved_config("fit", config, run))
    print(
        f"fit: loglik={fit.loglik:.6f} aic={fit.aic:.6f} bic={fit.bic:.6f} "
        f"converged={fit.converged} iterations={fit.n_iterations}"
    )
    if not fit.converged:
        print("warning: fixed effects did not meet the convergence tolerance", file=sys.stderr)
    return EXIT_OK


def _cmd_bootstrap(args, out: OutputSet) -> int:
    config = _load_config(args.config)
    run = _resolve_run(args, config)
    table, model, design, fit = _fit_from_config(config, run)
    n_rep = int(run.get("bootstrap_reps", model.bootstrap_replicates))
    run["bootstrap_reps"] = n_rep
    kwargs = dict(
        n_rep=n_rep, seed=int(run["seed"]), level=model.bootstrap_level,
        threads=int(run.get("threads", 1)),
    )
    if isinstance(design, ClusteredDesign):
        summary = bootstrap_clustered(fit, design, model.fitting, **kwargs)
    else:
        summary = bootstrap_independent(fit, design, model.fitting, **kwargs)
    _write_fit_outputs(out, fit, summary)
    band_rows = [
        [v, lo, hi]
        for v, lo, hi in zip(summary.band_grid, summary.g_band[0], summary.g_band[1])
    ]
    out.write_text("band.csv", _csv_text(["index", "lower", "upper"], band_rows))
    out.write_json("run_config.json", _resolved_config("bootstrap", config, run))
    print(
        f"bootstrap: {summary.n_converged}/{summary.n_replicates} replicates converged; "
        f"se(beta)={np.array2string(summary.se_beta, precision=5)}"
    )
    return EXIT_OK


def _cmd_select(args, out: OutputSet) -> int:
    config = _load_config(args.config)
    run = _resolve_run(args, config)
    table = _load_table(config.get("data", {}))
    model = _model_from_config(config, run)
    sel = config.get("select", {})
    degrees = [int(d) for d in sel.get("degrees", [model.variance_degree])]
    dfs = [int(d) for d in sel.get("dfs", [model.variance_df])]
    kinds = [IndexKind(k) for k in sel.get("index_kinds", [model.index_kind.value])]
    mean_dfs = sel.get("mean_dfs")
    if mean_dfs and model.mean_spline is None:
        raise UnsupportedFormula("select.mean_dfs given but the model has no mean spline")
    shape = model.variance_shape
    index_rank = {"marginal_mean": 0, "conditional_mean": 1, "time": 2}

    all_rows = []
    best = {"aic": None, "bic": None}
    for mean_df in (mean_dfs or [None]):
        if mean_df is not None:
            model.mean_spline.df = int(mean_df)
        design = build_design(table, model)
        candidates = [
            VarianceTemplate(shape, kind, degree, df)
            for degree, df, kind in itertools.product(degrees, dfs, kinds)
            if df >= degree
        ]
        report = select_model(design, candidates, model.fitting)
        for c in report.candidates:
            row = {
                "mean_df": mean_df, "degree": c.degree, "df": c.df,
                "index": c.index_kind.value, "loglik": c.loglik, "aic": c.aic,
                "bic": c.bic, "converged": c.converged, "error": c.error or "",
            }
            all_rows.append(row)
            if c.converged:
                for crit in ("aic", "bic"):
                    key = (row[crit], c.df, c.degree, index_rank[row["index"]], mean_df or 0)
                    if best[crit] is None or key < best[crit][0]:
                        best[crit] = (key, row)
    if best["aic"] is None:
        raise AllCandidatesFailed("no candidate converged in any mean configuration")
    for crit in ("aic", "bic"):
        winner = best[crit][1]
        for row in all_rows:
            row[f"{crit}_winner"] = row is winner
    header = [
        "mean_df", "degree", "df", "index", "loglik", "aic", "bic",
        "converged", "aic_winner", "bic_winner", "error",
    ]
    out.write_text(
        "report.csv", _csv_text(header, [[r[h] for h in header] for r in all_rows])
    )
    out.write_json("run_config.json", _resolved_config("select", config, run))
    wa, wb = best["aic"][1], best["bic"][1]
    print(
        f"select: {len(all_rows)} candidates; AIC winner degree={wa['degree']} "
        f"df={wa['df']} index={wa['index']}; BIC winner degree={wb['degree']} "
        f"df={wb['df']} index={wb['index']}"
    )
    return EXIT_OK


def _curve_groups(table: LongFormatTable, model: ModelFormulaConfig):
    group_col = None
    if model.spline_interactions:
        group_col = model.spline_interactions[0]
    else:
        for cov in model.covariates:
            if cov in model.categorical or not pd.api.types.is_numeric_dtype(
                table.data[cov]
            ):
                group_col = cov
                break
    if group_col is None:
        return [("all", None, None)]
    levels = sorted(set(canonical_labels(table.data[group_col])))
    return [(f"{group_col}={level}", group_col, level) for level in levels]


def _grid_design(table: LongFormatTable, model: ModelFormulaConfig, grid, group_col, level):
    """Design rows for one group's trajectory along the time grid.

    The synthetic rows are appended to the real table before assembling the
    mean matrix so dummy levels and mean-spline knots match the fit.
    """
    frame = {"subject": "curve", "time": grid, "response": 0.0}
    for cov in dict.fromkeys([*model.covariates, *model.spline_interactions]):
        values = table.data[cov]
        if group_col == cov:
            # pick a representative raw value for the requested level
            mask = canonical_labels(values) == level
            frame[cov] = values[mask].iloc[0]
        elif pd.api.types.is_numeric_dtype(values) and cov not in model.categorical:
            frame[cov] = float(values.mean())
        else:
            frame[cov] = values.iloc[0]
    synth = pd.DataFrame(frame)
    combined = LongFormatTable(
        pd.concat([table.data, synth], ignore_index=True), covariates=table.covariates
    )
    X, _ = _mean_matrix(combined, model)
    X = X[len(table.data):]
    if model.random_effects == "intercept":
        Z = np.ones((len(grid), 1))
    elif model.random_effects == "time_slope":
        Z = np.asarray(grid, dtype=float)[:, None]
    else:
        Z = None
    return X, Z


def _cmd_curves(args, out: OutputSet) -> int:
    config = _load_config(args.config)
    run = _resolve_run(args, config)
    table, model, design, fit = _fit_from_config(config, run)
    curve_cfg = dict(config.get("curves", {}))
    n_points = int(curve_cfg.get("grid_points", args.grid_points))
    n_draws = int(curve_cfg.get("draws", args.draws))
    probs = list(curve_cfg.get("probs", [0.025, 0.05, 0.5, 0.95, 0.975]))
    t = table.data["time"]
    grid = np.linspace(float(t.min()), float(t.max()), n_points)
    designs = {}
    for label, group_col, level in _curve_groups(table, model):
        X_grid, Z_grid = _grid_design(table, model, grid, group_col, level)
        designs[label] = (grid, X_grid, Z_grid)
    curves = quantile_curves(
        fit, designs, n_draws=n_draws, probs=tuple(probs), seed=int(run["seed"])
    )
    rows = []
    for label in designs:
        q = curves[label]
        for j, tj in enumerate(grid):
            for i, p in enumerate(probs):
                rows.append([label, tj, p, q[i, j]])
    out.write_text("curves.csv", _csv_text(["group", "time", "prob", "value"], rows))
    out.write_json(
        "run_config.json",
        _resolved_config(
            "curves",
            {**config, "curves": {**curve_cfg, "grid_points": n_points,
                                  "draws": n_draws, "probs": probs}},
            run,
        ),
    )
    print(f"curves: {len(designs)} groups x {n_points} grid points x {len(probs)} quantiles")
    return EXIT_OK


def _cmd_simulate(args, out: OutputSet) -> int:
    config = _load_config(args.config)
    run = _resolve_run(args, config)
    scenario = dict(config.get("scenario", {}))
    if getattr(args, "seed", None) is not None or "seed" not in scenario:
        scenario["seed"] = run["seed"]
    if "threads" in run:
        scenario["threads"] = int(run["threads"])
    if "bootstrap_reps" in run:
        scenario["n_bootstrap"] = int(run["bootstrap_reps"])
    cfg = ScenarioConfig(**scenario)
    report = run_scenario(cfg)
    header = [
        "estimator", "coefficient", "bias", "empirical_se", "mean_se_hat",
        "coverage_pct", "n_completed",
    ]
    out.write_text(
        "report.csv",
        _csv_text(header, [[row[h] for h in header] for row in report.rows()]),
    )
    if report.band_lower is not None:
        band_rows = [
            [v, lo, hi, c, g_true(cfg.g_shape, v)]
            for v, lo, hi, c in zip(
                report.band_grid, report.band_lower, report.band_upper, report.band_center
            )
        ]
        out.write_text(
            "band.csv",
            _csv_text(["index", "lower", "upper", "center", "true_g"], band_rows),
        )
    out.write_json(
        "run_config.json", _resolved_config("simulate", {**config, "scenario": scenario}, run)
    )
    print(report.table())
    if report.failures:
        print(f"warning: {len(report.failures)} datasets failed", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(f"usage error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="shapevar", description="growth models with shape-restricted variance")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--out-dir", default="shapevar-out", help="output directory")
        p.add_argument("--seed", type=int, help=f"seed (overrides config and ${SEED_ENV_VAR})")
        p.add_argument("--threads", type=int, help="worker threads for parallel sections")
        p.add_argument("--bootstrap-reps", type=int, help="bootstrap replicate count")
        p.add_argument(
            "--quad-nodes", type=int, help="quadrature nodes for the conditional likelihood"
        )

    p = sub.add_parser("basis", help="dump a basis matrix as CSV")
    p.add_argument("--config")
    p.add_argument("--out-dir", default="shapevar-out")
    p.add_argument("--family", choices=["M", "I", "C"])
    p.add_argument("--degree", type=int)
    p.add_argument("--df", type=int)
    p.add_argument("--lower", type=float)
    p.add_argument("--upper", type=float)
    p.add_argument("--points", type=int, default=101)
    p.add_argument("--at", help="comma-separated evaluation points")
    p.set_defaults(func=_cmd_basis)

    for name, func in (
        ("fit", _cmd_fit),
        ("bootstrap", _cmd_bootstrap),
        ("select", _cmd_select),
        ("curves", _cmd_curves),
        ("simulate", _cmd_simulate),
    ):
        p = sub.add_parser(name, help=f"run the {name} pipeline")
        common(p)
        if name == "curves":
            p.add_argument("--draws", type=int, default=10_000)
            p.add_argument("--grid-points", type=int, default=101)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    out = OutputSet(args.out_dir)
    try:
        return args.func(args, out)
    except _CONVERGENCE_ERRORS as exc:
        out.rollback()
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except _DATA_ERRORS as exc:
        out.rollback()
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except _USAGE_ERRORS as exc:
        out.rollback()
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ShapevarError as exc:
        out.rollback()
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


cli_main = main


if __name__ == "__main__":
    sys.exit(main())
