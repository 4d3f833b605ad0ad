"""Monotone and convex spline bases over clamped, evenly spaced knots.

The family of bases is built in three layers.  The base layer is the
nonnegative density-like basis (each column integrates to 1 over the
boundary interval), defined by the classic two-term recursion on a clamped
knot sequence.  Integrating each column once gives the monotone basis whose
columns rise from 0 to 1; integrating twice gives the convex basis.  All
three are represented internally as exact piecewise polynomials, so basis
values, derivatives, and integrals come out in closed form rather than from
runtime quadrature.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidSpec, OutOfRange


class Family(str, enum.Enum):
    """Basis family: density-like (M), monotone (I), or convex (C)."""

    M = "M"
    I = "I"
    C = "C"


# How many times the base family is integrated to obtain each family.
_INTEGRATION_LEVEL = {Family.M: 0, Family.I: 1, Family.C: 2}


@dataclass(frozen=True)
class SplineSpec:
    """Immutable description of a basis: family, degree, and knot layout.

    ``df`` equals the number of non-degenerate basis columns, which for a
    clamped knot sequence is the internal-knot count plus the degree.
    Degenerate columns whose support collapses onto a repeated boundary
    knot are never exposed.
    """

    family: Family
    degree: int
    df: int
    lower: float
    upper: float
    internal_knots: tuple[float, ...]

    def __post_init__(self):
        if self.degree < 1:
            raise InvalidSpec(f"degree must be >= 1, got {self.degree}")
        if self.df < 1:
            raise InvalidSpec(f"df must be >= 1, got {self.df}")
        if not self.lower < self.upper:
            raise InvalidSpec(
                f"boundary must satisfy lower < upper, got [{self.lower}, {self.upper}]"
            )
        m = len(self.internal_knots)
        if self.df != m + self.degree:
            raise InvalidSpec(
                f"df must equal internal knots + degree: {self.df} != {m} + {self.degree}"
            )
        ks = np.asarray(self.internal_knots, dtype=float)
        if m > 0:
            if np.any(np.diff(ks) <= 0):
                raise InvalidSpec("internal knots must be strictly increasing")
            if ks[0] <= self.lower or ks[-1] >= self.upper:
                raise InvalidSpec("internal knots must lie strictly inside the boundary")

    @property
    def n_internal(self) -> int:
        return len(self.internal_knots)

    @property
    def knots(self) -> np.ndarray:
        """Full clamped sequence: boundary knots repeated ``degree`` times."""
        return np.concatenate(
            [
                np.full(self.degree, self.lower),
                np.asarray(self.internal_knots, dtype=float),
                np.full(self.degree, self.upper),
            ]
        )

    @property
    def breaks(self) -> np.ndarray:
        """Distinct knot values, the breakpoints of the piecewise polynomials."""
        return np.concatenate(
            [[self.lower], np.asarray(self.internal_knots, dtype=float), [self.upper]]
        )


@dataclass
class BasisMatrix:
    """Basis evaluations: one row per input point, one column per basis."""

    values: np.ndarray
    spec: SplineSpec
    eval_points: np.ndarray


def make_even_spec(
    family: Family | str, degree: int, df: int, lower: float, upper: float
) -> SplineSpec:
    """Build a spec with ``df - degree`` evenly spaced internal knots."""
    family = Family(family)
    if degree < 1:
        if family in (Family.I, Family.C):
            raise InvalidSpec(f"{family.value}-splines require degree >= 1 (lowest is linear)")
        raise InvalidSpec("degree must be >= 1")
    if df < degree:
        raise InvalidSpec(f"df must be >= degree, got df={df} degree={degree}")
    if not lower < upper:
        raise InvalidSpec(f"boundary must satisfy lower < upper, got [{lower}, {upper}]")
    m = df - degree
    step = (upper - lower) / (m + 1)
    internal = tuple(lower + j * step for j in range(1, m + 1))
    return SplineSpec(family, degree, df, float(lower), float(upper), internal)


# ---------------------------------------------------------------------------
# Piecewise polynomial engine
# ---------------------------------------------------------------------------
# Coefficient tensors have shape (n_bases, n_intervals, n_coefs) in ascending
# powers of the local variable u = x - breaks[j].


def _base_coefficients(spec: SplineSpec) -> np.ndarray:
    """Exact piecewise polynomials of the degree-``k`` density-like basis.

    Runs the two-term recursion on polynomial coefficients.  Terms whose
    knot span is empty (repeated boundary knots) contribute zero, which is
    the 0/0 convention that makes clamped boundaries well defined.
    """
    knots = spec.knots
    breaks = spec.breaks
    n_intervals = len(breaks) - 1

    # Degree 1: constant 1/span on the single break interval [t_i, t_{i+1}].
    n_bases = len(knots) - 1
    coefs = np.zeros((n_bases, n_intervals, 1))
    for i in range(n_bases):
        span = knots[i + 1] - knots[i]
        if span > 0.0:
            j = int(np.searchsorted(breaks, knots[i]))
            coefs[i, j, 0] = 1.0 / span

    for d in range(2, spec.degree + 1):
        n_bases = len(knots) - d
        new = np.zeros((n_bases, n_intervals, d))
        for i in range(n_bases):
            span = knots[i + d] - knots[i]
            if span <= 0.0:
                continue
            scale = d / ((d - 1) * span)
            left, right = coefs[i], coefs[i + 1]
            for j in range(n_intervals):
                a = breaks[j] - knots[i]  # (x - t_i) = u + a in local coords
                b = knots[i + d] - breaks[j]  # (t_{i+d} - x) = b - u
                acc = np.zeros(d)
                acc[: d - 1] = a * left[j] + b * right[j]
                acc[1:] += left[j] - right[j]
                new[i, j] = scale * acc
        coefs = new
    return coefs


def _antiderivative(coefs: np.ndarray, breaks: np.ndarray) -> np.ndarray:
    """Integrate each piecewise polynomial from the left boundary."""
    n_bases, n_intervals, n_coefs = coefs.shape
    widths = np.diff(breaks)
    out = np.zeros((n_bases, n_intervals, n_coefs + 1))
    out[:, :, 1:] = coefs / np.arange(1, n_coefs + 1)
    full = np.zeros((n_bases, n_intervals))
    for r in range(n_coefs):
        full += coefs[:, :, r] * widths ** (r + 1) / (r + 1)
    cumulative = np.cumsum(full, axis=1)
    out[:, 1:, 0] = cumulative[:, :-1]
    return out


def _poly_derivative(coefs: np.ndarray) -> np.ndarray:
    n_coefs = coefs.shape[2]
    if n_coefs == 1:
        return np.zeros_like(coefs)
    return coefs[:, :, 1:] * np.arange(1, n_coefs)


@lru_cache(maxsize=512)
def _coefficients_for_level(spec: SplineSpec, level: int) -> tuple[np.ndarray, np.ndarray]:
    if level == 0:
        coefs = _base_coefficients(spec)
    else:
        coefs, _ = _coefficients_for_level(spec, level - 1)
        coefs = _antiderivative(coefs, spec.breaks)
    coefs.setflags(write=False)
    return coefs, spec.breaks


def _clamp_to_boundary(spec: SplineSpec, x: np.ndarray) -> np.ndarray:
    """Absorb floating-point drift just outside the boundary; reject more."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    tol = 1e-12 * max(1.0, abs(spec.lower), abs(spec.upper), spec.upper - spec.lower)
    if np.any(x < spec.lower - tol) or np.any(x > spec.upper + tol) or np.any(~np.isfinite(x)):
        bad = x[(x < spec.lower - tol) | (x > spec.upper + tol) | ~np.isfinite(x)]
        raise OutOfRange(
            f"evaluation points outside [{spec.lower}, {spec.upper}]: {bad[:5]!r}"
        )
    return np.clip(x, spec.lower, spec.upper)


def _eval_coefs(coefs: np.ndarray, breaks: np.ndarray, x: np.ndarray) -> np.ndarray:
    idx = np.clip(np.searchsorted(breaks, x, side="right") - 1, 0, len(breaks) - 2)
    u = x - breaks[idx]
    local = coefs[:, idx, :]  # (K, n, D)
    vals = local[:, :, -1]
    for r in range(coefs.shape[2] - 2, -1, -1):
        vals = vals * u + local[:, :, r]
    return np.ascontiguousarray(vals.T)


def eval_basis(spec: SplineSpec, x, kind: Family | str | None = None) -> BasisMatrix:
    """Evaluate a basis at points ``x`` (clamped within boundary drift).

    ``kind`` selects which layer of the integration chain to evaluate and
    defaults to the spec's own family; e.g. a C-family spec can be asked for
    its underlying monotone (I) layer.  ``kind`` must not integrate more
    often than the spec's family does.
    """
    kind = spec.family if kind is None else Family(kind)
    if _INTEGRATION_LEVEL[kind] > _INTEGRATION_LEVEL[spec.family]:
        raise InvalidSpec(f"cannot request {kind.value} values from a {spec.family.value} spec")
    xv = _clamp_to_boundary(spec, x)
    coefs, breaks = _coefficients_for_level(spec, _INTEGRATION_LEVEL[kind])
    return BasisMatrix(values=_eval_coefs(coefs, breaks, xv), spec=spec, eval_points=xv)


def eval_mspline(spec: SplineSpec, x) -> BasisMatrix:
    """Density-like basis values (nonnegative, each column integrates to 1)."""
    if spec.family is not Family.M:
        raise InvalidSpec(f"eval_mspline requires an M-family spec, got {spec.family.value}")
    return eval_basis(spec, x, Family.M)


def eval_ispline(spec: SplineSpec, x) -> BasisMatrix:
    """Monotone basis values: running integrals rising from 0 to 1."""
    if spec.family is not Family.I:
        raise InvalidSpec(f"eval_ispline requires an I-family spec, got {spec.family.value}")
    return eval_basis(spec, x, Family.I)


def eval_cspline(spec: SplineSpec, x) -> BasisMatrix:
    """Convex basis values: running integrals of the monotone basis.

    The returned set has no constant or linear column; callers that need
    them add those terms to their design explicitly.
    """
    if spec.family is not Family.C:
        raise InvalidSpec(f"eval_cspline requires a C-family spec, got {spec.family.value}")
    return eval_basis(spec, x, Family.C)


def basis_derivative(spec: SplineSpec, x) -> BasisMatrix:
    """Elementwise derivative of the spec's own basis.

    For an I-family spec this reproduces the matching M values exactly, and
    for a C-family spec the matching I values, since each family is the
    running integral of the previous one.
    """
    xv = _clamp_to_boundary(spec, x)
    level = _INTEGRATION_LEVEL[spec.family]
    if level > 0:
        coefs, breaks = _coefficients_for_level(spec, level - 1)
    else:
        coefs, breaks = _coefficients_for_level(spec, 0)
        coefs = _poly_derivative(coefs)
    return BasisMatrix(values=_eval_coefs(coefs, breaks, xv), spec=spec, eval_points=xv)
