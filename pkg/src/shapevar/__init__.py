"""Growth-curve analysis with shape-restricted heteroscedastic variance.

Fits linear and mixed-effects growth models whose error SD is a monotone
(or convex/concave) spline function of time, the marginal mean, or the
conditional mean, with constrained iteratively reweighted maximum
likelihood, parametric-bootstrap inference, and AIC/BIC model selection.
"""

from .bootstrap import (
    BootstrapSummary,
    bootstrap_clustered,
    bootstrap_independent,
    variance_band,
)
from .curves import quantile_curves, residual_diagnostics
from .dataio import (
    LongFormatTable,
    ModelFormulaConfig,
    apply_exclusions,
    build_design,
    load_csv,
)
from .designs import (
    ClusteredDesign,
    IndependentDesign,
    RandomEffectsCov,
    conditional_mean,
    marginal_mean,
)
from .fitting import (
    FitResult,
    IrwConfig,
    fit_lmm_ml,
    fit_theta_mle,
    fit_wls,
    irw_fit_clustered,
    irw_fit_independent,
)
from .likelihood import (
    information_criteria,
    loglik_conditional_variance,
    loglik_marginal_variance,
)
from .selection import SelectionReport, select_model
from .simulation import (
    ScenarioConfig,
    ScenarioReport,
    g_true,
    generate_clustered,
    generate_independent,
    run_scenario,
)
from .splines import (
    BasisMatrix,
    Family,
    SplineSpec,
    basis_derivative,
    eval_basis,
    eval_cspline,
    eval_ispline,
    eval_mspline,
    make_even_spec,
)
from .variance import IndexKind, Shape, VarianceModel, VarianceTemplate, eval_g

__version__ = "0.1.0"

__all__ = [
    "BasisMatrix",
    "BootstrapSummary",
    "ClusteredDesign",
    "Family",
    "FitResult",
    "IndependentDesign",
    "IndexKind",
    "IrwConfig",
    "LongFormatTable",
    "ModelFormulaConfig",
    "RandomEffectsCov",
    "ScenarioConfig",
    "ScenarioReport",
    "SelectionReport",
    "Shape",
    "SplineSpec",
    "VarianceModel",
    "VarianceTemplate",
    "apply_exclusions",
    "basis_derivative",
    "bootstrap_clustered",
    "bootstrap_independent",
    "build_design",
    "conditional_mean",
    "eval_basis",
    "eval_cspline",
    "eval_g",
    "eval_ispline",
    "eval_mspline",
    "fit_lmm_ml",
    "fit_theta_mle",
    "fit_wls",
    "g_true",
    "generate_clustered",
    "generate_independent",
    "information_criteria",
    "irw_fit_clustered",
    "irw_fit_independent",
    "load_csv",
    "loglik_conditional_variance",
    "loglik_marginal_variance",
    "make_even_spec",
    "marginal_mean",
    "quantile_curves",
    "residual_diagnostics",
    "run_scenario",
    "select_model",
    "variance_band",
]
