"""Desk-scale simulation studies: generators, competing estimators, and
bias / empirical-SE / bootstrap-SE / coverage reporting.

Scenarios follow a fixed recipe: responses have mean 1 + x1 + x2 with a
binary and a uniform covariate, and the error SD follows one of three
shapes of the mean (linear, cubic, or sigmoid).  Clustered scenarios add a
subject-level random intercept (SD 0.1) with five observations per subject
and index the error SD by either the marginal or the conditional mean.
The naive comparator ignores heteroscedasticity and reports model-based
standard errors; the proposed estimator is the reweighted fit with
monotone quadratic variance splines plus a parametric bootstrap.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .bootstrap import bootstrap_clustered, bootstrap_independent
from .designs import ClusteredDesign, IndependentDesign
from .errors import ShapevarError
from .fitting import IrwConfig, irw_fit_clustered, irw_fit_independent
from .variance import IndexKind, Shape, VarianceTemplate

TRUE_BETA = np.array([1.0, 1.0, 1.0])
TRUE_SIGMA_B = 0.1
COEF_NAMES = ("beta0", "beta1", "beta2")


class ScenarioKind(str, enum.Enum):
    INDEPENDENT = "independent"
    CLUSTERED = "clustered"


class GShape(str, enum.Enum):
    G1 = "g1"
    G2 = "g2"
    G3 = "g3"


class Estimator(str, enum.Enum):
    NAIVE = "naive"
    PROPOSED = "proposed"


def g_true(shape: GShape | str, mu):
    """True error-SD curves used by the generators."""
    mu = np.asarray(mu, dtype=float)
    shape = GShape(shape)
    if shape is GShape.G1:
        return 0.25 * (mu - 0.9)
    if shape is GShape.G2:
        return 0.02 * (mu**3 + 1.2)
    return 0.1 * (5.0 * norm.cdf((mu - 2.0) / 0.3) + 1.0)


# degrees of freedom of the quadratic monotone variance spline, per shape
_DF_INDEPENDENT = {GShape.G1: 2, GShape.G2: 3, GShape.G3: 7}
_DF_CLUSTERED = {GShape.G1: 5, GShape.G2: 5, GShape.G3: 7}


@dataclass(frozen=True)
class ScenarioConfig:
    kind: ScenarioKind
    g_shape: GShape
    index_kind: IndexKind = IndexKind.MARGINAL_MEAN
    n_subjects: int = 100
    n_per_subject: int = 5
    n_datasets: int = 200
    n_bootstrap: int = 200
    seed: int = 0
    estimators: tuple = (Estimator.NAIVE, Estimator.PROPOSED)
    level: float = 0.95
    threads: int = 1
    band_grid_size: int = 101

    def __post_init__(self):
        object.__setattr__(self, "kind", ScenarioKind(self.kind))
        object.__setattr__(self, "g_shape", GShape(self.g_shape))
        object.__setattr__(self, "index_kind", IndexKind(self.index_kind))
        object.__setattr__(
            self, "estimators", tuple(Estimator(e) for e in self.estimators)
        )
        if self.n_subjects < 10:
            raise ValueError("n_subjects must be >= 10")
        if self.n_datasets < 1:
            raise ValueError("n_datasets must be >= 1")

    def proposed_template(self) -> VarianceTemplate:
        if self.kind is ScenarioKind.INDEPENDENT:
            return VarianceTemplate(
                Shape.INCREASING_I, IndexKind.MARGINAL_MEAN, 2, _DF_INDEPENDENT[self.g_shape]
            )
        return VarianceTemplate(
            Shape.INCREASING_I, self.index_kind, 2, _DF_CLUSTERED[self.g_shape]
        )

    def index_range(self) -> tuple[float, float]:
        """Theoretical span of the variance index (the mean)."""
        x2_max = 2.0 if self.kind is ScenarioKind.INDEPENDENT else 5.0
        return 1.0, 1.0 + 1.0 + x2_max


def _dataset_rng(config: ScenarioConfig, dataset_index: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(config.seed, spawn_key=(dataset_index,)))
    )


def _dataset_bootstrap_seed(config: ScenarioConfig, dataset_index: int) -> int:
    ss = np.random.SeedSequence(config.seed, spawn_key=(dataset_index, 1))
    return int(ss.generate_state(1)[0])


def generate_independent(
    config: ScenarioConfig, dataset_index: int, return_latents: bool = False
):
    rng = _dataset_rng(config, dataset_index)
    n = config.n_subjects
    x1 = rng.binomial(1, 0.5, size=n).astype(float)
    x2 = rng.uniform(0.0, 2.0, size=n)
    mu = TRUE_BETA[0] + TRUE_BETA[1] * x1 + TRUE_BETA[2] * x2
    noise = rng.standard_normal(n)
    y = mu + noise * g_true(config.g_shape, mu)
    X = np.column_stack([np.ones(n), x1, x2])
    design = IndependentDesign(y, X, t=x2)
    if return_latents:
        return design, {"mu": mu, "noise": noise}
    return design


def generate_clustered(
    config: ScenarioConfig, dataset_index: int, return_latents: bool = False
):
    rng = _dataset_rng(config, dataset_index)
    n, m = config.n_subjects, config.n_per_subject
    x1 = rng.binomial(1, 0.5, size=n).astype(float)
    x2 = rng.uniform(0.0, 5.0, size=(n, m))
    b = rng.standard_normal(n) * TRUE_SIGMA_B
    noise = rng.standard_normal((n, m))
    mu = TRUE_BETA[0] + TRUE_BETA[1] * x1[:, None] + TRUE_BETA[2] * x2
    nu = mu + b[:, None] if config.index_kind is IndexKind.CONDITIONAL_MEAN else mu
    y = mu + b[:, None] + noise * g_true(config.g_shape, nu)
    ids, ys, Xs, Zs, ts = [], [], [], [], []
    for i in range(n):
        ids.append(f"subj{i:04d}")
        ys.append(y[i])
        Xs.append(np.column_stack([np.ones(m), np.full(m, x1[i]), x2[i]]))
        Zs.append(np.ones((m, 1)))
        ts.append(x2[i])
    design = ClusteredDesign.from_blocks(ids, ys, Xs, Zs, ts)
    if return_latents:
        return design, {"mu": mu, "b": b, "noise": noise}
    return design


@dataclass
class EstimatorSummary:
    estimator: Estimator
    estimates: np.ndarray  # (n_done, p)
    se_hat: np.ndarray  # (n_done, p) bootstrap or model-based SEs
    ci: np.ndarray  # (n_done, 2, p)
    sigma_b: np.ndarray | None  # (n_done,) for clustered designs

    @property
    def bias(self) -> np.ndarray:
        return self.estimates.mean(axis=0) - TRUE_BETA

    @property
    def empirical_se(self) -> np.ndarray:
        return self.estimates.std(axis=0, ddof=1)

    @property
    def mean_se_hat(self) -> np.ndarray:
        if np.all(np.isnan(self.se_hat)):
            return np.full(self.se_hat.shape[1], np.nan)
        return np.nanmean(self.se_hat, axis=0)

    @property
    def coverage(self) -> np.ndarray:
        inside = (self.ci[:, 0, :] <= TRUE_BETA) & (TRUE_BETA <= self.ci[:, 1, :])
        valid = ~np.isnan(self.ci[:, 0, :])
        with np.errstate(invalid="ignore"):
            return 100.0 * np.nansum(inside & valid, axis=0) / np.maximum(
                valid.sum(axis=0), 1
            )

    @property
    def sigma_b_bias(self) -> float | None:
        return None if self.sigma_b is None else float(self.sigma_b.mean() - TRUE_SIGMA_B)

    @property
    def sigma_b_se(self) -> float | None:
        return None if self.sigma_b is None else float(self.sigma_b.std(ddof=1))


@dataclass
class ScenarioReport:
    config: ScenarioConfig
    summaries: dict
    n_completed: int
    failures: list
    band_grid: np.ndarray | None = None
    band_lower: np.ndarray | None = None
    band_upper: np.ndarray | None = None
    band_center: np.ndarray | None = None

    def rows(self) -> list[dict]:
        out = []
        for est, s in self.summaries.items():
            for j, name in enumerate(COEF_NAMES):
                out.append(
                    {
                        "estimator": est.value,
                        "coefficient": name,
                        "bias": float(s.bias[j]),
                        "empirical_se": float(s.empirical_se[j]),
                        "mean_se_hat": float(s.mean_se_hat[j]),
                        "coverage_pct": float(s.coverage[j]),
                        "n_completed": self.n_completed,
                    }
                )
            if s.sigma_b is not None:
                out.append(
                    {
                        "estimator": est.value,
                        "coefficient": "sigma_b",
                        "bias": s.sigma_b_bias,
                        "empirical_se": s.sigma_b_se,
                        "mean_se_hat": float("nan"),
                        "coverage_pct": float("nan"),
                        "n_completed": self.n_completed,
                    }
                )
        return out

    def table(self) -> str:
        """Human-readable summary, entries in 1e-2 units like the reports
        this mirrors."""
        lines = [
            f"scenario: {self.config.kind.value} {self.config.g_shape.value} "
            f"index={self.config.index_kind.value} n={self.config.n_subjects} "
            f"datasets={self.n_completed}",
            f"{'estimator':<10} {'coef':<8} {'bias':>8} {'SE':>8} {'SE_hat':>8} {'CP%':>7}",
        ]
        for row in self.rows():
            bias = "" if row["bias"] is None else f"{100 * row['bias']:8.2f}"
            se = "" if row["empirical_se"] is None else f"{100 * row['empirical_se']:8.2f}"
            seh = f"{100 * row['mean_se_hat']:8.2f}" if np.isfinite(row["mean_se_hat"]) else "       -"
            cp = f"{row['coverage_pct']:7.1f}" if np.isfinite(row["coverage_pct"]) else "      -"
            lines.append(
                f"{row['estimator']:<10} {row['coefficient']:<8} {bias} {se} {seh} {cp}"
            )
        return "\n".join(lines)


def _naive_independent(design: IndependentDesign, config: ScenarioConfig):
    fit = irw_fit_independent(
        design, VarianceTemplate(Shape.CONSTANT, IndexKind.MARGINAL_MEAN)
    )
    sigma2 = float(np.mean(fit.residuals**2))
    se = np.sqrt(np.diag(sigma2 * np.linalg.inv(design.X.T @ design.X)))
    z = norm.ppf(0.5 + config.level / 2.0)
    ci = np.stack([fit.beta_hat - z * se, fit.beta_hat + z * se])
    return fit, se, ci


def _naive_clustered(design: ClusteredDesign, config: ScenarioConfig):
    fit = irw_fit_clustered(
        design, VarianceTemplate(Shape.CONSTANT, config.index_kind)
    )
    B = fit.alpha_hat.cov
    sig2 = float(fit.theta_hat[0] ** 2)
    info = np.zeros((design.p, design.p))
    for i in range(design.n_subjects):
        s = design.slice(i)
        Vi = design.Z[s] @ B @ design.Z[s].T + sig2 * np.eye(s.stop - s.start)
        info += design.X[s].T @ np.linalg.solve(Vi, design.X[s])
    se = np.sqrt(np.diag(np.linalg.inv(info)))
    z = norm.ppf(0.5 + config.level / 2.0)
    ci = np.stack([fit.beta_hat - z * se, fit.beta_hat + z * se])
    return fit, se, ci


def _band_grid(config: ScenarioConfig) -> np.ndarray:
    lo, hi = config.index_range()
    span = hi - lo
    return np.linspace(lo + 0.05 * span, hi - 0.05 * span, config.band_grid_size)


def run_scenario(config: ScenarioConfig, irw: IrwConfig | None = None) -> ScenarioReport:
    """Generate, fit, bootstrap, and aggregate one scenario.

    Per-dataset failures are recorded and skipped; the report carries the
    completion count.  Identical configs give bitwise-identical reports.
    """
    irw = irw or IrwConfig()
    clustered = config.kind is ScenarioKind.CLUSTERED
    grid = _band_grid(config)
    results = [None] * config.n_datasets

    def one_dataset(d: int):
        design = (
            generate_clustered(config, d) if clustered else generate_independent(config, d)
        )
        out = {}
        if Estimator.NAIVE in config.estimators:
            fit, se, ci = (
                _naive_clustered(design, config) if clustered
                else _naive_independent(design, config)
            )
            out[Estimator.NAIVE] = (fit.beta_hat, se, ci, fit.sigma_b, None, None)
        if Estimator.PROPOSED in config.estimators:
            template = config.proposed_template()
            fit = (
                irw_fit_clustered(design, template, irw) if clustered
                else irw_fit_independent(design, template, irw)
            )
            if config.n_bootstrap > 0:
                boot = (
                    bootstrap_clustered(
                        fit, design, irw, n_rep=config.n_bootstrap,
                        seed=_dataset_bootstrap_seed(config, d),
                        level=config.level, band_grid=grid,
                    )
                    if clustered
                    else bootstrap_independent(
                        fit, design, irw, n_rep=config.n_bootstrap,
                        seed=_dataset_bootstrap_seed(config, d),
                        level=config.level, band_grid=grid,
                    )
                )
                se, ci = boot.se_beta, boot.ci_beta
                band = boot.g_band
            else:
                p = fit.beta_hat.size
                se, ci, band = np.full(p, np.nan), np.full((2, p), np.nan), None
            out[Estimator.PROPOSED] = (
                fit.beta_hat, se, ci, fit.sigma_b,
                band, fit.variance_model.evaluate(grid),
            )
        return out

    def guarded(d: int):
        try:
            return one_dataset(d)
        except ShapevarError as exc:
            return exc

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(guarded, range(config.n_datasets)))
    else:
        results = [guarded(d) for d in range(config.n_datasets)]

    failures = [(d, str(r)) for d, r in enumerate(results) if isinstance(r, Exception)]
    done = [r for r in results if not isinstance(r, Exception)]

    summaries = {}
    for est in config.estimators:
        rows = [r[est] for r in done]
        if not rows:
            continue
        estimates = np.array([r[0] for r in rows])
        se_hat = np.array([r[1] for r in rows])
        ci = np.array([np.asarray(r[2]) for r in rows])
        sigma_b = (
            np.array([r[3] for r in rows]) if clustered else None
        )
        summaries[est] = EstimatorSummary(est, estimates, se_hat, ci, sigma_b)

    band_lower = band_upper = band_center = None
    prop_rows = [r[Estimator.PROPOSED] for r in done if Estimator.PROPOSED in r]
    bands = [r[4] for r in prop_rows if r[4] is not None]
    if bands:
        band_lower = np.mean([b[0] for b in bands], axis=0)
        band_upper = np.mean([b[1] for b in bands], axis=0)
        band_center = np.mean([r[5] for r in prop_rows], axis=0)

    return ScenarioReport(
        config=config,
        summaries=summaries,
        n_completed=len(done),
        failures=failures,
        band_grid=grid,
        band_lower=band_lower,
        band_upper=band_upper,
        band_center=band_center,
    )
