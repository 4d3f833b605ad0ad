"""Model selection over spline configurations and index kinds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .designs import ClusteredDesign, IndependentDesign
from .errors import AllCandidatesFailed, ShapevarError
from .fitting import FitResult, IrwConfig, irw_fit_clustered, irw_fit_independent
from .variance import IndexKind, VarianceTemplate

_INDEX_RANK = {IndexKind.MARGINAL_MEAN: 0, IndexKind.CONDITIONAL_MEAN: 1, IndexKind.TIME: 2}


@dataclass
class CandidateResult:
    template: VarianceTemplate
    loglik: float
    aic: float
    bic: float
    converged: bool
    error: str | None = None
    fit: FitResult | None = None

    @property
    def degree(self) -> int:
        return self.template.degree

    @property
    def df(self) -> int:
        return self.template.df

    @property
    def index_kind(self) -> IndexKind:
        return self.template.index_kind


@dataclass
class SelectionReport:
    candidates: list[CandidateResult]
    winner_aic: CandidateResult
    winner_bic: CandidateResult


def _tie_key(c: CandidateResult) -> tuple:
    return (c.df, c.degree, _INDEX_RANK[c.index_kind])


def select_model(
    design: IndependentDesign | ClusteredDesign,
    candidates: list[VarianceTemplate],
    config: IrwConfig | None = None,
    keep_fits: bool = False,
) -> SelectionReport:
    """Fit every candidate and rank by AIC and BIC among converged fits.

    Ties break toward smaller df, then smaller degree, then the marginal
    mean before the conditional mean; the winners do not depend on the
    order of the candidate list.
    """
    if not candidates:
        raise AllCandidatesFailed("empty candidate list")
    config = config or IrwConfig()
    clustered = isinstance(design, ClusteredDesign)
    results: list[CandidateResult] = []
    for template in candidates:
        try:
            fit = (
                irw_fit_clustered(design, template, config)
                if clustered
                else irw_fit_independent(design, template, config)
            )
            results.append(
                CandidateResult(
                    template=template,
                    loglik=fit.loglik,
                    aic=fit.aic,
                    bic=fit.bic,
                    converged=fit.converged,
                    fit=fit if keep_fits else None,
                )
            )
        except ShapevarError as exc:
            results.append(
                CandidateResult(
                    template=template,
                    loglik=np.nan,
                    aic=np.nan,
                    bic=np.nan,
                    converged=False,
                    error=str(exc),
                )
            )
    usable = [c for c in results if c.converged]
    if not usable:
        raise AllCandidatesFailed("no candidate model converged")
    winner_aic = min(usable, key=lambda c: (c.aic, *_tie_key(c)))
    winner_bic = min(usable, key=lambda c: (c.bic, *_tie_key(c)))
    return SelectionReport(results, winner_aic, winner_bic)
