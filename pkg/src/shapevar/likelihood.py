"""Exact and quadrature log-likelihoods for the clustered model.

When the error SD is indexed by time or the marginal mean, the response is
multivariate normal per subject and the likelihood is a sum of per-subject
Gaussian densities evaluated through Cholesky factors.  When it is indexed
by the conditional mean, the error SD depends on the subject's random
effect and the marginal density is a one-dimensional integral per subject,
computed by adaptive (mode-centered) Gauss-Hermite quadrature.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp

from .designs import ClusteredDesign, RandomEffectsCov, alpha_to_cov
from .errors import QuadratureFailure, SingularCovariance, UnsupportedDimension
from .variance import IndexKind, VarianceModel

_LOG_2PI = np.log(2.0 * np.pi)


def _cov_matrix(alpha, q: int) -> np.ndarray:
    if isinstance(alpha, RandomEffectsCov):
        return alpha.cov
    return alpha_to_cov(np.asarray(alpha, dtype=float), q)


def loglik_marginal_variance(
    design: ClusteredDesign, beta: np.ndarray, alpha, vm: VarianceModel
) -> float:
    """Sum of per-subject MVN log densities with covariance Z B Z' + diag(g^2)."""
    if vm.index_kind not in (IndexKind.TIME, IndexKind.MARGINAL_MEAN):
        raise ValueError(
            f"marginal-variance likelihood needs a time or marginal-mean index, "
            f"got {vm.index_kind.value}"
        )
    beta = np.asarray(beta, dtype=float).ravel()
    B = _cov_matrix(alpha, design.q)
    v = design.t if vm.index_kind is IndexKind.TIME else design.X @ beta
    g = vm.evaluate(v)
    resid = design.y - design.X @ beta
    total = 0.0
    for i in range(design.n_subjects):
        s = design.slice(i)
        Zi = design.Z[s]
        Vi = Zi @ B @ Zi.T + np.diag(g[s] ** 2)
        try:
            L = np.linalg.cholesky(Vi)
        except np.linalg.LinAlgError as exc:
            raise SingularCovariance(
                f"subject {design.subject_ids[i]!r}: covariance not positive definite"
            ) from exc
        w = np.linalg.solve(L, resid[s])
        total += -0.5 * (len(w) * _LOG_2PI) - np.sum(np.log(np.diag(L))) - 0.5 * w @ w
    return float(total)


def _subject_loglik_given_b(y, Xb, z, b_nodes, vm):
    """log f(y_i | b) for an array of b values; g is indexed by the
    conditional mean, which moves with b."""
    mu = Xb[None, :] + np.outer(b_nodes, z)
    g = vm.evaluate(mu.ravel()).reshape(mu.shape)
    g = np.maximum(g, 1e-300)
    r = y[None, :] - mu
    return np.sum(-0.5 * _LOG_2PI - np.log(g) - 0.5 * (r / g) ** 2, axis=1)


def loglik_conditional_variance(
    design: ClusteredDesign,
    beta: np.ndarray,
    alpha,
    vm: VarianceModel,
    n_quad: int = 21,
) -> float:
    """Marginal log-likelihood when g follows the conditional mean (q = 1).

    Each subject's integral over its scalar random effect is computed with
    Gauss-Hermite quadrature centered and scaled at the integrand's mode,
    accumulated in log space.  Deterministic for fixed inputs.
    """
    if vm.index_kind is not IndexKind.CONDITIONAL_MEAN:
        raise ValueError(
            f"conditional-variance likelihood needs a conditional-mean index, "
            f"got {vm.index_kind.value}"
        )
    if design.q != 1:
        raise UnsupportedDimension(f"conditional-mean likelihood supports q=1, got q={design.q}")
    beta = np.asarray(beta, dtype=float).ravel()
    B = _cov_matrix(alpha, design.q)
    sigma_b2 = max(float(B[0, 0]), 1e-24)
    nodes, weights = np.polynomial.hermite.hermgauss(int(n_quad))
    log_w = np.log(weights)
    marg = design.X @ beta

    total = 0.0
    for i in range(design.n_subjects):
        s = design.slice(i)
        y, Xb, z = design.y[s], marg[s], design.Z[s, 0]

        def h(b):
            b = np.atleast_1d(np.asarray(b, dtype=float))
            ll = _subject_loglik_given_b(y, Xb, z, b, vm)
            prior = -0.5 * (_LOG_2PI + np.log(sigma_b2)) - 0.5 * b**2 / sigma_b2
            return ll + prior

        # crude posterior center/scale from a constant-g working model
        g0 = np.maximum(vm.evaluate(Xb), 1e-12)
        info = 1.0 / sigma_b2 + np.sum((z / g0) ** 2)
        center = np.sum(z * (y - Xb) / g0**2) / info
        scale = 1.0 / np.sqrt(info)

        half = 8.0 * scale
        for _ in range(5):
            res = minimize_scalar(
                lambda b: -h(b)[0],
                bounds=(center - half, center + half),
                method="bounded",
                options={"xatol": 1e-10 * max(1.0, abs(center)) + 1e-14},
            )
            mode = float(res.x)
            at_edge = min(mode - (center - half), (center + half) - mode) < 1e-3 * half
            if not at_edge:
                break
            center, half = mode, half * 4.0
        else:
            raise QuadratureFailure(
                f"mode search for subject {design.subject_ids[i]!r} kept hitting the window edge"
            )
        if not np.isfinite(mode):
            raise QuadratureFailure(f"mode search diverged for subject {design.subject_ids[i]!r}")

        step = max(abs(scale), 1e-12) * 1e-3
        h_m, h_p, h_0 = h(np.array([mode - step, mode + step, mode]))
        with np.errstate(over="ignore", invalid="ignore"):
            curv = (h_m + h_p - 2.0 * h_0) / step**2
        sd = 1.0 / np.sqrt(-curv) if np.isfinite(curv) and curv < 0 else scale
        b_nodes = mode + np.sqrt(2.0) * sd * nodes
        total += float(
            0.5 * np.log(2.0) + np.log(sd) + logsumexp(log_w + nodes**2 + h(b_nodes))
        )
    return float(total)


def information_criteria(loglik: float, n_params: int, n: float) -> tuple[float, float]:
    """AIC and BIC; for clustered data ``n`` is the subject count."""
    aic = -2.0 * loglik + 2.0 * n_params
    bic = -2.0 * loglik + n_params * np.log(n)
    return float(aic), float(bic)
