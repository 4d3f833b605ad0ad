"""Point estimation: weighted least squares, weighted ML mixed-effects
fitting, constrained variance-coefficient MLE, and the iteratively
reweighted loop that alternates the two until the fixed effects settle.

Weight semantics: a weight w enters the mean fit as an inverse error-SD
multiplier, i.e. the error covariance is diag(1/w^2) times a profiled
scale.  After the loop converges the profiled scale is folded back into
the variance coefficients so the reported g parameterizes the actual
error SD.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .designs import (
    ClusteredDesign,
    IndependentDesign,
    RandomEffectsCov,
    alpha_dim,
)
from .errors import NonConvergence, NonPositiveVariance, RankDeficient
from .likelihood import (
    information_criteria,
    loglik_conditional_variance,
    loglik_marginal_variance,
)
from .splines import SplineSpec
from .variance import (
    IndexKind,
    Shape,
    VarianceModel,
    VarianceTemplate,
    basis_columns,
    box_coordinates,
)


@dataclass
class IrwConfig:
    """Knobs for the reweighted fitting loop.

    Convergence is a relative sup-norm criterion on the fixed effects
    (with an absolute floor of 1 so near-zero coefficients do not stall
    the loop); the variance-spline knots are frozen after the initial
    unweighted fit and later index values are clamped to that range.
    """

    max_iter: int = 50
    beta_rel_tol: float = 1e-6
    theta_floor: float = 1e-8
    knot_policy: str = "freeze_after_init"
    n_quad: int = 21
    theta_multistarts: int = 5
    theta_seed: int = 0

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.beta_rel_tol <= 0:
            raise ValueError("beta_rel_tol must be positive")
        if self.knot_policy != "freeze_after_init":
            raise ValueError(f"unknown knot policy {self.knot_policy!r}")


@dataclass
class FitResult:
    """Converged (or best-effort) parameter estimates and fit summaries.

    Stacked arrays (residuals, fitted means, index values) follow the
    design's row order.  ``residuals`` are conditional residuals when the
    variance index is the conditional mean and marginal residuals
    otherwise, matching what the variance coefficients were fitted to.
    """

    beta_hat: np.ndarray
    alpha_hat: RandomEffectsCov | None
    variance_model: VarianceModel
    blups: np.ndarray | None
    residuals: np.ndarray
    fitted_marginal_mean: np.ndarray
    fitted_conditional_mean: np.ndarray | None
    index_values: np.ndarray
    loglik: float
    aic: float
    bic: float
    n_iterations: int
    converged: bool
    n_params: int
    column_names: list[str] | None = None
    trace: list[float] = field(default_factory=list)

    @property
    def theta_hat(self) -> np.ndarray:
        return self.variance_model.theta

    @property
    def index_kind(self) -> IndexKind:
        return self.variance_model.index_kind

    @property
    def sigma_b(self) -> float | None:
        return None if self.alpha_hat is None else self.alpha_hat.sigma_b

    def template(self) -> VarianceTemplate:
        vm = self.variance_model
        if vm.spec is None:
            return VarianceTemplate(vm.shape, vm.index_kind)
        return VarianceTemplate(vm.shape, vm.index_kind, vm.spec.degree, vm.spec.df)

    def to_dict(self) -> dict:
        return {
            "beta_hat": [float(b) for b in self.beta_hat],
            "alpha_hat": None
            if self.alpha_hat is None
            else {"alpha": [float(a) for a in self.alpha_hat.alpha], "q": self.alpha_hat.q},
            "variance_model": self.variance_model.to_dict(),
            "blups": None if self.blups is None else np.asarray(self.blups).tolist(),
            "residuals": np.asarray(self.residuals).tolist(),
            "fitted_marginal_mean": np.asarray(self.fitted_marginal_mean).tolist(),
            "fitted_conditional_mean": None
            if self.fitted_conditional_mean is None
            else np.asarray(self.fitted_conditional_mean).tolist(),
            "index_values": np.asarray(self.index_values).tolist(),
            "loglik": float(self.loglik),
            "aic": float(self.aic),
            "bic": float(self.bic),
            "n_iterations": self.n_iterations,
            "converged": self.converged,
            "n_params": self.n_params,
            "column_names": self.column_names,
            "trace": [float(x) for x in self.trace],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FitResult":
        alpha = data["alpha_hat"]
        return cls(
            beta_hat=np.asarray(data["beta_hat"], dtype=float),
            alpha_hat=None
            if alpha is None
            else RandomEffectsCov(np.asarray(alpha["alpha"], dtype=float), int(alpha["q"])),
            variance_model=VarianceModel.from_dict(data["variance_model"]),
            blups=None if data["blups"] is None else np.asarray(data["blups"], dtype=float),
            residuals=np.asarray(data["residuals"], dtype=float),
            fitted_marginal_mean=np.asarray(data["fitted_marginal_mean"], dtype=float),
            fitted_conditional_mean=None
            if data["fitted_conditional_mean"] is None
            else np.asarray(data["fitted_conditional_mean"], dtype=float),
            index_values=np.asarray(data["index_values"], dtype=float),
            loglik=float(data["loglik"]),
            aic=float(data["aic"]),
            bic=float(data["bic"]),
            n_iterations=int(data["n_iterations"]),
            converged=bool(data["converged"]),
            n_params=int(data["n_params"]),
            column_names=data.get("column_names"),
            trace=[float(x) for x in data.get("trace", [])],
        )


# ---------------------------------------------------------------------------
# Weighted least squares
# ---------------------------------------------------------------------------


def fit_wls(X: np.ndarray, y: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Minimize sum of w_i (y_i - x_i'b)^2 via QR of the row-scaled system.

    ``weights`` are precision-scale (variance weights), not SD multipliers.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    if np.any(w <= 0):
        raise ValueError("weights must be strictly positive")
    sw = np.sqrt(w)
    beta, _, rank, _ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    if rank < X.shape[1]:
        raise RankDeficient(f"weighted design has rank {rank} < {X.shape[1]}")
    return beta


# ---------------------------------------------------------------------------
# Weighted ML linear mixed-effects fit
# ---------------------------------------------------------------------------


@dataclass
class LmmFit:
    beta: np.ndarray
    alpha: RandomEffectsCov
    B: np.ndarray
    sigma2: float
    blups: np.ndarray
    loglik: float


class _SuffStatsQ1:
    """Per-subject cross products for the scalar-random-effect fast path."""

    def __init__(self, design: ClusteredDesign, w: np.ndarray):
        w2 = w * w
        X, y, z = design.X, design.y, design.Z[:, 0]
        starts = design.starts[:-1]
        self.s = np.add.reduceat(w2 * z * z, starts)
        self.v = np.add.reduceat(w2 * z * y, starts)
        self.U = np.add.reduceat(w2[:, None] * z[:, None] * X, starts, axis=0)
        self.XtWX = X.T @ (w2[:, None] * X)
        self.XtWy = X.T @ (w2 * y)
        self.yty = float(w2 @ (y * y))
        self.sum_log_d = float(-2.0 * np.sum(np.log(w)))
        self.N = design.n_obs

    def profile(self, lam: float):
        lam2 = lam * lam
        c = lam2 / (1.0 + lam2 * self.s)
        XtVX = self.XtWX - (self.U * c[:, None]).T @ self.U
        XtVy = self.XtWy - self.U.T @ (c * self.v)
        ytVy = self.yty - float(c @ (self.v * self.v))
        try:
            beta = np.linalg.solve(XtVX, XtVy)
        except np.linalg.LinAlgError as exc:
            raise RankDeficient("collapsed weighted design in the mixed-model fit") from exc
        rss = max(ytVy - float(beta @ XtVy), 1e-300)
        sigma2 = rss / self.N
        logdet = self.sum_log_d + float(np.sum(np.log1p(lam2 * self.s)))
        deviance = self.N * (np.log(2.0 * np.pi * sigma2) + 1.0) + logdet
        return deviance, beta, sigma2

    def deviance_grid(self, lams: np.ndarray) -> np.ndarray:
        """Profiled deviance at many lambda values in one batched pass."""
        lam2 = lams * lams
        c = lam2[:, None] / (1.0 + lam2[:, None] * self.s[None, :])
        XtVX = self.XtWX[None] - np.einsum("ls,si,sj->lij", c, self.U, self.U)
        XtVy = self.XtWy[None] - c @ (self.U * self.v[:, None])
        ytVy = self.yty - c @ (self.v * self.v)
        try:
            beta = np.linalg.solve(XtVX, XtVy[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise RankDeficient("collapsed weighted design in the mixed-model fit") from exc
        rss = np.maximum(ytVy - np.einsum("lp,lp->l", beta, XtVy), 1e-300)
        logdet = self.sum_log_d + np.sum(np.log1p(lam2[:, None] * self.s[None, :]), axis=1)
        return self.N * (np.log(2.0 * np.pi * rss / self.N) + 1.0) + logdet

    def blups(self, lam: float, beta: np.ndarray) -> np.ndarray:
        lam2 = lam * lam
        c = lam2 / (1.0 + lam2 * self.s)
        return (c * (self.v - self.U @ beta))[:, None]


def _fit_lmm_q1(design: ClusteredDesign, w: np.ndarray) -> LmmFit:
    stats = _SuffStatsQ1(design, w)
    # grid in a scale-free coordinate (lam * typical per-subject leverage),
    # then a bounded local refinement between the best grid neighbours
    scale = np.sqrt(max(float(np.median(stats.s)), 1e-30))
    grid = np.concatenate([[0.0], np.geomspace(1e-4, 1e4, 49) / scale])
    devs = stats.deviance_grid(grid)
    k = int(np.argmin(devs))
    lo = grid[k - 1] if k > 0 else 0.0
    hi = grid[k + 1] if k + 1 < len(grid) else grid[-1] * 10.0
    res = scipy.optimize.minimize_scalar(
        lambda l: stats.profile(l)[0],
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-10 / scale},
    )
    lam = float(res.x) if res.fun <= devs[k] else float(grid[k])
    deviance, beta, sigma2 = stats.profile(lam)
    B = np.array([[sigma2 * lam * lam]])
    return LmmFit(
        beta=beta,
        alpha=RandomEffectsCov.from_cov(B),
        B=B,
        sigma2=sigma2,
        blups=stats.blups(lam, beta),
        loglik=-0.5 * deviance,
    )


def _pack_tril(q: int):
    return np.tril_indices(q)


def _fit_lmm_general(design: ClusteredDesign, w: np.ndarray) -> LmmFit:
    q, p = design.q, design.p
    rows, cols = _pack_tril(q)
    n_par = len(rows)
    w2 = w * w
    X, y, Z = design.X, design.y, design.Z
    slices = [design.slice(i) for i in range(design.n_subjects)]

    def profile(params):
        Lam = np.zeros((q, q))
        Lam[rows, cols] = params
        XtVX = np.zeros((p, p))
        XtVy = np.zeros(p)
        ytVy = 0.0
        logdet = float(-2.0 * np.sum(np.log(w)))
        mids = []
        for s in slices:
            Xi, yi, Zi, w2i = X[s], y[s], Z[s], w2[s]
            ZL = Zi @ Lam
            M = np.eye(q) + ZL.T @ (w2i[:, None] * ZL)
            Mc = np.linalg.cholesky(M)
            logdet += 2.0 * float(np.sum(np.log(np.diag(Mc))))
            a_X = ZL.T @ (w2i[:, None] * Xi)
            a_y = ZL.T @ (w2i * yi)
            sX = np.linalg.solve(Mc, a_X)
            sy = np.linalg.solve(Mc, a_y)
            XtVX += Xi.T @ (w2i[:, None] * Xi) - sX.T @ sX
            XtVy += Xi.T @ (w2i * yi) - sX.T @ sy
            ytVy += float(w2i @ (yi * yi)) - float(sy @ sy)
            mids.append((Mc, ZL))
        beta = np.linalg.solve(XtVX, XtVy)
        rss = max(ytVy - float(beta @ XtVy), 1e-300)
        sigma2 = rss / design.n_obs
        deviance = design.n_obs * (np.log(2.0 * np.pi * sigma2) + 1.0) + logdet
        return deviance, beta, sigma2, Lam, mids

    bounds = [(0.0, None) if r == c else (None, None) for r, c in zip(rows, cols)]
    start_scales = [0.0, 0.1, 1.0]
    best = None
    for sc in start_scales:
        x0 = np.zeros(n_par)
        x0[np.equal(rows, cols)] = sc
        res = scipy.optimize.minimize(
            lambda par: profile(par)[0], x0, method="L-BFGS-B", bounds=bounds
        )
        if best is None or res.fun < best.fun:
            best = res
    if best is None or not np.all(np.isfinite(best.x)):
        raise NonConvergence("mixed-model optimizer failed for q > 1")
    deviance, beta, sigma2, Lam, mids = profile(best.x)
    B = sigma2 * Lam @ Lam.T
    blups = np.zeros((design.n_subjects, q))
    for i, s in enumerate(slices):
        Mc, ZL = mids[i]
        r = y[s] - X[s] @ beta
        a = ZL.T @ (w2[s] * r)
        u = np.linalg.solve(Mc.T, np.linalg.solve(Mc, a))
        blups[i] = Lam @ u
    return LmmFit(
        beta=beta,
        alpha=RandomEffectsCov.from_cov(B),
        B=B,
        sigma2=sigma2,
        blups=blups,
        loglik=-0.5 * deviance,
    )


def fit_lmm_ml(design: ClusteredDesign, weights: np.ndarray | None = None) -> LmmFit:
    """Maximum-likelihood LMM fit with known inverse-SD observation weights.

    The random-effects covariance is parameterized through its relative
    Cholesky factor; the fixed effects and the residual scale are profiled
    out in closed form, leaving a low-dimensional optimization.
    """
    w = np.ones(design.n_obs) if weights is None else np.asarray(weights, float).ravel()
    if w.size != design.n_obs:
        raise ValueError(f"need one weight per observation ({design.n_obs}), got {w.size}")
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be strictly positive and finite")
    if design.q == 1:
        return _fit_lmm_q1(design, w)
    return _fit_lmm_general(design, w)


# ---------------------------------------------------------------------------
# Constrained variance-coefficient MLE
# ---------------------------------------------------------------------------


def fit_theta_mle(
    residuals: np.ndarray,
    index_values: np.ndarray,
    shape: Shape,
    spec: SplineSpec | None,
    *,
    floor: float = 1e-8,
    n_multistarts: int = 5,
    seed: int = 0,
    warm_start: np.ndarray | None = None,
) -> np.ndarray:
    """Maximize the normal likelihood of the residuals over the shape's box.

    Runs a box-constrained quasi-Newton search from a deterministic start,
    the warm start when given, and ``n_multistarts`` seeded random starts;
    the best objective wins, ties going to the first found.
    """
    e = np.asarray(residuals, dtype=float).ravel()
    v = np.asarray(index_values, dtype=float).ravel()
    if e.size != v.size:
        raise ValueError(f"residuals ({e.size}) and index values ({v.size}) differ in length")
    shape = Shape(shape)
    rms = max(float(np.sqrt(np.mean(e**2))), 10.0 * floor)
    if shape is Shape.CONSTANT:
        return np.array([rms])

    box = box_coordinates(shape, spec, floor)
    cols = basis_columns(shape, spec, v)
    Xn = np.hstack([np.ones((e.size, 1)), cols])
    Xb = Xn @ box.transform
    e2 = e**2

    if box.needs_positivity_guard:
        grid = np.linspace(spec.lower, spec.upper, 129)
        Gn = np.hstack([np.ones((grid.size, 1)), basis_columns(shape, spec, grid)])
        Gb = np.vstack([Gn @ box.transform, Xb])
    else:
        # the box itself keeps g >= floor everywhere for these shapes
        Gb = None
    rho = 1e8

    def objective(tb):
        g_raw = Xb @ tb
        g = np.maximum(g_raw, 0.5 * floor)
        f = float(np.sum(np.log(g)) + 0.5 * np.sum(e2 / g**2))
        inner = np.where(g_raw > 0.5 * floor, 1.0 / g - e2 / g**3, 0.0)
        grad = Xb.T @ inner
        if Gb is not None:
            viol = np.maximum(floor - Gb @ tb, 0.0)
            f += rho * float(np.sum(viol**2))
            grad -= 2.0 * rho * (Gb.T @ viol)
        return f, grad

    starts = []
    if warm_start is not None:
        tb = np.linalg.solve(box.transform, np.asarray(warm_start, dtype=float))
        starts.append(np.clip(tb, box.lower, box.upper))
    if warm_start is None or n_multistarts > 0:
        base = np.where(np.isfinite(box.lower), np.maximum(box.lower, 0.0), 0.0)
        base[0] = rms
        starts.append(np.clip(base, box.lower, box.upper))
    rng = np.random.default_rng(seed)
    col_scale = np.maximum(np.max(np.abs(Xb), axis=0), 1e-12)
    for _ in range(n_multistarts):
        draw = rng.standard_normal(Xb.shape[1]) * rms / col_scale
        cand = np.where(box.lower >= 0.0, np.abs(draw), draw)
        cand[0] = rms * (0.5 + abs(rng.standard_normal()))
        starts.append(np.clip(cand, box.lower, box.upper))

    bounds = list(zip(box.lower, box.upper))
    best_theta, best_f = None, np.inf
    for x0 in starts:
        res = scipy.optimize.minimize(
            objective, x0, jac=True, method="L-BFGS-B", bounds=bounds
        )
        if np.isfinite(res.fun) and res.fun < best_f:
            best_f = float(res.fun)
            best_theta = res.x
    if best_theta is None:
        raise NonConvergence("variance-coefficient MLE failed from every start")
    best_theta = np.clip(best_theta, box.lower, box.upper)
    check = Xb @ best_theta if Gb is None else Gb @ best_theta
    if np.min(check) < floor * (1.0 - 1e-6):
        raise NonPositiveVariance(
            f"fitted g dips to {np.min(check):.3e} below the floor {floor:.0e}"
        )
    return box.transform @ best_theta


# ---------------------------------------------------------------------------
# Iteratively reweighted fitting
# ---------------------------------------------------------------------------


def _beta_change(new: np.ndarray, old: np.ndarray) -> float:
    return float(np.max(np.abs(new - old)) / max(1.0, np.max(np.abs(old))))


def _weighting_sd(g: np.ndarray) -> np.ndarray:
    """SD values used to form weights: floored at 1% of the median.

    The constrained MLE may legitimately drive g toward zero at the edge of
    the index range; reciprocal weights would then hand a single
    observation essentially infinite leverage and destabilize the loop.
    Capping the weight spread at 100x the median leaves any realistic
    heteroscedasticity untouched while keeping the mean fit well posed.
    The reported variance coefficients are not affected.
    """
    return np.maximum(g, np.median(g) / 100.0)


def irw_fit_independent(
    design: IndependentDesign,
    template: VarianceTemplate,
    config: IrwConfig | None = None,
    theta_init: np.ndarray | None = None,
) -> FitResult:
    """Alternate weighted least squares and the constrained variance MLE.

    ``theta_init`` warm-starts the variance coefficients (used by bootstrap
    refits, whose surfaces sit near the parent fit's); multistarts are then
    skipped since the warm start already plays that role.
    """
    config = config or IrwConfig()
    if template.index_kind is IndexKind.CONDITIONAL_MEAN:
        raise ValueError("independent data has no conditional mean; use time or marginal mean")
    X, y, t = design.X, design.y, design.t

    beta = fit_wls(X, y, np.ones(design.n))
    index = t if template.index_kind is IndexKind.TIME else X @ beta
    lo, hi = float(np.min(index)), float(np.max(index))
    if not lo < hi:
        lo, hi = lo - 0.5, hi + 0.5  # constant index: give the spline a span
    vm = template.instantiate(lo, hi)

    theta = theta_init
    trace: list[float] = []
    converged = False
    iteration = 0
    for iteration in range(1, config.max_iter + 1):
        resid = y - X @ beta
        theta = fit_theta_mle(
            resid,
            index,
            vm.shape,
            vm.spec,
            floor=config.theta_floor,
            n_multistarts=(
                config.theta_multistarts if iteration == 1 and theta_init is None else 0
            ),
            seed=config.theta_seed,
            warm_start=theta,
        )
        g = _weighting_sd(vm.with_theta(theta).evaluate(index))
        beta_new = fit_wls(X, y, 1.0 / g**2)
        change = _beta_change(beta_new, beta)
        trace.append(change)
        beta = beta_new
        if template.index_kind is IndexKind.MARGINAL_MEAN:
            index = X @ beta
        if change < config.beta_rel_tol:
            converged = True
            break

    vm = vm.with_theta(theta)
    fitted = X @ beta
    resid = y - fitted
    g = vm.evaluate(index)
    loglik = float(
        np.sum(-0.5 * np.log(2.0 * np.pi) - np.log(g) - 0.5 * (resid / g) ** 2)
    )
    n_params = design.p + len(theta)
    aic, bic = information_criteria(loglik, n_params, design.n)
    return FitResult(
        beta_hat=beta,
        alpha_hat=None,
        variance_model=vm,
        blups=None,
        residuals=resid,
        fitted_marginal_mean=fitted,
        fitted_conditional_mean=None,
        index_values=index,
        loglik=loglik,
        aic=aic,
        bic=bic,
        n_iterations=iteration,
        converged=converged,
        n_params=n_params,
        column_names=design.column_names,
        trace=trace,
    )


def _stacked_means(design: ClusteredDesign, beta: np.ndarray, blups: np.ndarray):
    marginal = design.X @ beta
    conditional = marginal.copy()
    for i in range(design.n_subjects):
        s = design.slice(i)
        conditional[s] += design.Z[s] @ blups[i]
    return marginal, conditional


def irw_fit_clustered(
    design: ClusteredDesign,
    template: VarianceTemplate,
    config: IrwConfig | None = None,
    theta_init: np.ndarray | None = None,
) -> FitResult:
    """Reweighted fitting for clustered data.

    The initial unweighted mixed-model fit freezes the variance-spline knot
    range; each pass re-estimates the variance coefficients from the
    current residuals and refits the mixed model with weights 1/g.  The
    profiled residual scale of the last mixed-model fit is folded into the
    reported variance coefficients.
    """
    config = config or IrwConfig()
    lmm = fit_lmm_ml(design)
    beta = lmm.beta

    def index_and_resid(lmm_fit):
        marginal, conditional = _stacked_means(design, lmm_fit.beta, lmm_fit.blups)
        if template.index_kind is IndexKind.TIME:
            return design.t, design.y - marginal, marginal, conditional
        if template.index_kind is IndexKind.MARGINAL_MEAN:
            return marginal, design.y - marginal, marginal, conditional
        return conditional, design.y - conditional, marginal, conditional

    index, resid, marginal, conditional = index_and_resid(lmm)
    lo, hi = float(np.min(index)), float(np.max(index))
    if not lo < hi:
        lo, hi = lo - 0.5, hi + 0.5
    vm = template.instantiate(lo, hi)

    theta = theta_init
    trace: list[float] = []
    converged = False
    iteration = 0
    for iteration in range(1, config.max_iter + 1):
        theta = fit_theta_mle(
            resid,
            index,
            vm.shape,
            vm.spec,
            floor=config.theta_floor,
            n_multistarts=(
                config.theta_multistarts if iteration == 1 and theta_init is None else 0
            ),
            seed=config.theta_seed,
            warm_start=theta,
        )
        g = _weighting_sd(vm.with_theta(theta).evaluate(index))
        lmm = fit_lmm_ml(design, 1.0 / g)
        change = _beta_change(lmm.beta, beta)
        trace.append(change)
        beta = lmm.beta
        index, resid, marginal, conditional = index_and_resid(lmm)
        if change < config.beta_rel_tol:
            converged = True
            break

    sigma = float(np.sqrt(lmm.sigma2))
    vm = vm.with_theta(np.asarray(theta) * sigma)
    loglik = (
        loglik_conditional_variance(design, beta, lmm.alpha, vm, config.n_quad)
        if template.index_kind is IndexKind.CONDITIONAL_MEAN
        else loglik_marginal_variance(design, beta, lmm.alpha, vm)
    )
    n_params = design.p + alpha_dim(design.q) + len(vm.theta)
    aic, bic = information_criteria(loglik, n_params, design.n_subjects)
    return FitResult(
        beta_hat=beta,
        alpha_hat=lmm.alpha,
        variance_model=vm,
        blups=lmm.blups,
        residuals=resid,
        fitted_marginal_mean=marginal,
        fitted_conditional_mean=conditional,
        index_values=index,
        loglik=loglik,
        aic=aic,
        bic=bic,
        n_iterations=iteration,
        converged=converged,
        n_params=n_params,
        column_names=design.column_names,
        trace=trace,
    )
