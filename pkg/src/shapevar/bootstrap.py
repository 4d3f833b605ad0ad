"""Parametric bootstrap for standard errors, percentile intervals, and
pointwise variance-curve bands.

Each replicate simulates a fresh response from the fitted parameters
(random effects first, then heteroscedastic errors whose SD follows the
fitted g at the replicate's own index values) and refits with the same
reweighted algorithm.  Replicate r draws from its own counter-derived
random stream, so results are reproducible in isolation and under
parallel execution; non-converged replicates are recorded but excluded
from every summary.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .designs import ClusteredDesign, IndependentDesign
from .errors import EmptyReplicates, ShapevarError
from .fitting import FitResult, IrwConfig, irw_fit_clustered, irw_fit_independent
from .variance import IndexKind, VarianceModel

DROP_RATE_WARNING = 0.05


@dataclass
class Replicate:
    index: int
    converged: bool
    beta: np.ndarray | None = None
    alpha: np.ndarray | None = None
    theta: np.ndarray | None = None
    variance_model: VarianceModel | None = None
    error: str | None = None


@dataclass
class BootstrapSummary:
    replicates: list[Replicate]
    se_beta: np.ndarray
    se_alpha: np.ndarray | None
    se_theta: np.ndarray
    ci_beta: np.ndarray  # rows: lower, upper
    level: float
    band_grid: np.ndarray
    g_band: tuple[np.ndarray, np.ndarray]
    seed: int
    n_replicates: int
    n_converged: int

    @property
    def n_dropped(self) -> int:
        return self.n_replicates - self.n_converged

    def converged_replicates(self) -> list[Replicate]:
        return [r for r in self.replicates if r.converged]


def _replicate_rng(seed: int, r: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(r,))))


def _matrix_sqrt(B: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh((B + B.T) / 2.0)
    return V @ np.diag(np.sqrt(np.clip(w, 0.0, None)))


def _summarize(
    replicates: list[Replicate],
    point_fit: FitResult,
    level: float,
    band_grid: np.ndarray,
    seed: int,
) -> BootstrapSummary:
    done = [r for r in replicates if r.converged]
    n_conv = len(done)
    drop_rate = 1.0 - n_conv / max(len(replicates), 1)
    if drop_rate > DROP_RATE_WARNING:
        warnings.warn(
            f"{len(replicates) - n_conv} of {len(replicates)} bootstrap replicates "
            f"did not converge and were dropped",
            stacklevel=3,
        )
    p = point_fit.beta_hat.size
    if n_conv == 0:
        nan_p = np.full(p, np.nan)
        return BootstrapSummary(
            replicates, nan_p, None, np.full(point_fit.theta_hat.size, np.nan),
            np.full((2, p), np.nan), level, band_grid,
            (np.full_like(band_grid, np.nan), np.full_like(band_grid, np.nan)),
            seed, len(replicates), 0,
        )
    betas = np.array([r.beta for r in done])
    thetas = np.array([r.theta for r in done])
    ddof = 1 if n_conv > 1 else 0
    se_beta = betas.std(axis=0, ddof=ddof)
    se_theta = thetas.std(axis=0, ddof=ddof)
    se_alpha = None
    if done[0].alpha is not None:
        se_alpha = np.array([r.alpha for r in done]).std(axis=0, ddof=ddof)
    tail = (1.0 - level) / 2.0
    ci_beta = np.quantile(betas, [tail, 1.0 - tail], axis=0)
    curves = np.array([r.variance_model.evaluate(band_grid) for r in done])
    g_band = (
        np.quantile(curves, tail, axis=0),
        np.quantile(curves, 1.0 - tail, axis=0),
    )
    return BootstrapSummary(
        replicates, se_beta, se_alpha, se_theta, ci_beta, level, band_grid, g_band,
        seed, len(replicates), n_conv,
    )


def _default_band_grid(fit: FitResult) -> np.ndarray:
    lo, hi = fit.variance_model.boundary
    if not np.isfinite(lo) or not np.isfinite(hi):
        lo, hi = float(np.min(fit.index_values)), float(np.max(fit.index_values))
        if not lo < hi:
            lo, hi = lo - 0.5, hi + 0.5
    return np.linspace(lo, hi, 101)


def _run_replicates(n_rep: int, threads: int, one_replicate) -> list[Replicate]:
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one_replicate, range(n_rep)))
    return [one_replicate(r) for r in range(n_rep)]


def bootstrap_clustered(
    fit: FitResult,
    design: ClusteredDesign,
    config: IrwConfig | None = None,
    n_rep: int = 200,
    seed: int = 0,
    level: float = 0.95,
    band_grid: np.ndarray | None = None,
    threads: int = 1,
) -> BootstrapSummary:
    """Parametric bootstrap for a clustered fit."""
    config = config or IrwConfig()
    template = fit.template()
    vm = fit.variance_model
    B = fit.alpha_hat.cov
    sqrtB = _matrix_sqrt(B)
    marginal = design.X @ fit.beta_hat
    grid = _default_band_grid(fit) if band_grid is None else np.asarray(band_grid, float)

    def one_replicate(r: int) -> Replicate:
        rng = _replicate_rng(seed, r)
        b_star = rng.standard_normal((design.n_subjects, design.q)) @ sqrtB.T
        mu_cond = marginal.copy()
        for i in range(design.n_subjects):
            s = design.slice(i)
            mu_cond[s] += design.Z[s] @ b_star[i]
        if template.index_kind is IndexKind.CONDITIONAL_MEAN:
            v = mu_cond
        elif template.index_kind is IndexKind.MARGINAL_MEAN:
            v = marginal
        else:
            v = design.t
        y_star = mu_cond + rng.standard_normal(design.n_obs) * vm.evaluate(v)
        try:
            refit = irw_fit_clustered(
                design.with_response(y_star), template, config, theta_init=fit.theta_hat
            )
        except ShapevarError as exc:
            return Replicate(index=r, converged=False, error=str(exc))
        return Replicate(
            index=r,
            converged=bool(refit.converged),
            beta=refit.beta_hat,
            alpha=refit.alpha_hat.alpha,
            theta=refit.theta_hat,
            variance_model=refit.variance_model,
        )

    replicates = _run_replicates(n_rep, threads, one_replicate)
    return _summarize(replicates, fit, level, grid, seed)


def bootstrap_independent(
    fit: FitResult,
    design: IndependentDesign,
    config: IrwConfig | None = None,
    n_rep: int = 200,
    seed: int = 0,
    level: float = 0.95,
    band_grid: np.ndarray | None = None,
    threads: int = 1,
) -> BootstrapSummary:
    """Parametric bootstrap for an independent-data fit."""
    config = config or IrwConfig()
    template = fit.template()
    vm = fit.variance_model
    mean = design.X @ fit.beta_hat
    v = design.t if template.index_kind is IndexKind.TIME else mean
    g = vm.evaluate(v)
    grid = _default_band_grid(fit) if band_grid is None else np.asarray(band_grid, float)

    def one_replicate(r: int) -> Replicate:
        rng = _replicate_rng(seed, r)
        y_star = mean + rng.standard_normal(design.n) * g
        try:
            refit = irw_fit_independent(
                IndependentDesign(y_star, design.X, design.t, design.column_names),
                template,
                config,
                theta_init=fit.theta_hat,
            )
        except ShapevarError as exc:
            return Replicate(index=r, converged=False, error=str(exc))
        return Replicate(
            index=r,
            converged=bool(refit.converged),
            beta=refit.beta_hat,
            alpha=None,
            theta=refit.theta_hat,
            variance_model=refit.variance_model,
        )

    replicates = _run_replicates(n_rep, threads, one_replicate)
    return _summarize(replicates, fit, level, grid, seed)


def variance_band(
    summary: BootstrapSummary, grid: np.ndarray, level: float | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise empirical quantile envelope of g over the given grid."""
    done = summary.converged_replicates()
    if not done:
        raise EmptyReplicates("no converged bootstrap replicates to form a band")
    grid = np.asarray(grid, dtype=float)
    level = summary.level if level is None else level
    tail = (1.0 - level) / 2.0
    curves = np.array([r.variance_model.evaluate(grid) for r in done])
    return np.quantile(curves, tail, axis=0), np.quantile(curves, 1.0 - tail, axis=0)
