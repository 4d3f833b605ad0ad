"""Reference quantile curves and residual diagnostics for fitted models."""

from __future__ import annotations

import numpy as np
from scipy.stats import norm

from .fitting import FitResult
from .variance import IndexKind


def quantile_curves(
    fit: FitResult,
    curve_designs: dict,
    n_draws: int = 10_000,
    probs=(0.025, 0.05, 0.5, 0.95, 0.975),
    grid: np.ndarray | None = None,
    seed: int = 0,
) -> dict:
    """Empirical reference quantiles of the response along a time grid.

    ``curve_designs`` maps a group label to ``(grid, X_grid, Z_grid)``
    where ``X_grid`` is the fixed-effect design evaluated on the grid and
    ``Z_grid`` the random-effect design (or None for independent fits).
    For each group, ``n_draws`` individuals are simulated from the fitted
    model (a random effect per individual plus heteroscedastic noise) and
    the pointwise quantiles of the simulated responses are returned as an
    array of shape (len(probs), len(grid)).
    """
    probs = np.asarray(probs, dtype=float)
    if np.any(probs <= 0.0) or np.any(probs >= 1.0):
        raise ValueError(f"probs must lie strictly inside (0, 1), got {probs}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    vm = fit.variance_model
    B = None if fit.alpha_hat is None else fit.alpha_hat.cov
    out = {}
    for group, (tgrid, X_grid, Z_grid) in curve_designs.items():
        tgrid = np.asarray(tgrid, dtype=float)
        X_grid = np.asarray(X_grid, dtype=float)
        base = X_grid @ fit.beta_hat
        if Z_grid is not None and B is not None:
            Z_grid = np.asarray(Z_grid, dtype=float)
            w, V = np.linalg.eigh((B + B.T) / 2.0)
            sqrtB = V @ np.diag(np.sqrt(np.clip(w, 0.0, None)))
            b = rng.standard_normal((n_draws, B.shape[0])) @ sqrtB.T
            mu = base[None, :] + b @ Z_grid.T
        else:
            mu = np.tile(base, (n_draws, 1))
        if vm.index_kind is IndexKind.TIME:
            g = vm.evaluate(tgrid)[None, :]
        elif vm.index_kind is IndexKind.MARGINAL_MEAN:
            g = vm.evaluate(base)[None, :]
        else:
            g = vm.evaluate(mu.ravel()).reshape(mu.shape)
        y = mu + rng.standard_normal(mu.shape) * g
        out[group] = np.quantile(y, probs, axis=0)
    return out


def residual_diagnostics(fit: FitResult) -> tuple[np.ndarray, np.ndarray]:
    """Standardized residuals and their normal Q-Q pairs.

    Returns ``(standardized, pairs)`` where ``pairs[:, 0]`` holds the
    theoretical normal quantiles at plotting positions (i - 0.5)/n and
    ``pairs[:, 1]`` the ordered standardized residuals.
    """
    g = fit.variance_model.evaluate(fit.index_values)
    standardized = fit.residuals / g
    n = standardized.size
    theoretical = norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    pairs = np.column_stack([theoretical, np.sort(standardized)])
    return standardized, pairs
