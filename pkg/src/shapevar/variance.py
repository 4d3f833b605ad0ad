"""Shape-restricted standard-deviation functions g(v; theta).

The error SD is modeled as ``g(v) = theta_0 + sum_k theta_k * basis_k(v)``
where the basis and the admissible sign pattern of the coefficients are
determined by the declared shape.  Monotone shapes use the monotone (I)
basis directly; curvature shapes use the convex (C) basis plus an explicit
linear column, since that basis carries no constant or linear term.

Every shape's constraint set is a box in a suitable linear reparametrization
(computed by :func:`box_coordinates`), which is what the constrained
maximum-likelihood step optimizes over.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InvalidSpec, NonPositiveVariance
from .splines import Family, SplineSpec, eval_basis, make_even_spec

VARIANCE_FLOOR = 1e-8


class IndexKind(str, enum.Enum):
    """What the variance function is indexed by."""

    TIME = "time"
    MARGINAL_MEAN = "marginal_mean"
    CONDITIONAL_MEAN = "conditional_mean"


class Shape(str, enum.Enum):
    INCREASING_I = "increasing_i"
    DECREASING_I = "decreasing_i"
    CONVEX_C = "convex_c"
    CONCAVE_C = "concave_c"
    INCREASING_CONCAVE_C = "increasing_concave_c"
    CONSTANT = "constant"


_SHAPE_FAMILY = {
    Shape.INCREASING_I: Family.I,
    Shape.DECREASING_I: Family.I,
    Shape.CONVEX_C: Family.C,
    Shape.CONCAVE_C: Family.C,
    Shape.INCREASING_CONCAVE_C: Family.C,
    Shape.CONSTANT: None,
}


def family_for_shape(shape: Shape) -> Family | None:
    return _SHAPE_FAMILY[Shape(shape)]


@dataclass(frozen=True)
class VarianceTemplate:
    """Shape, spline size, and indexing choice; the boundary interval is
    determined later from the data (the knots are frozen at the initial fit).
    """

    shape: Shape
    index_kind: IndexKind
    degree: int = 2
    df: int = 3

    def __post_init__(self):
        object.__setattr__(self, "shape", Shape(self.shape))
        object.__setattr__(self, "index_kind", IndexKind(self.index_kind))

    def instantiate(self, lower: float, upper: float) -> "VarianceModel":
        """Concrete model over ``[lower, upper]`` with a neutral theta."""
        if self.shape is Shape.CONSTANT:
            spec = None
            theta = np.array([1.0])
        else:
            spec = make_even_spec(
                family_for_shape(self.shape), self.degree, self.df, lower, upper
            )
            theta = np.zeros(1 + n_basis_columns(self.shape, spec))
            theta[0] = 1.0
        return VarianceModel(self.shape, spec, theta, self.index_kind)


def n_basis_columns(shape: Shape, spec: SplineSpec | None) -> int:
    """Number of non-intercept columns in the natural parametrization."""
    shape = Shape(shape)
    if shape is Shape.CONSTANT:
        return 0
    if family_for_shape(shape) is Family.C:
        return spec.df + 1  # explicit linear column plus the convex columns
    return spec.df


def basis_columns(shape: Shape, spec: SplineSpec | None, v: np.ndarray) -> np.ndarray:
    """Natural non-intercept columns evaluated at ``v`` (clamped to boundary)."""
    shape = Shape(shape)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if shape is Shape.CONSTANT:
        return np.empty((v.size, 0))
    vc = np.clip(v, spec.lower, spec.upper)
    vals = eval_basis(spec, vc).values
    if family_for_shape(shape) is Family.C:
        linear = (vc - spec.lower)[:, None]
        return np.hstack([linear, vals])
    return vals


@dataclass
class VarianceModel:
    """A concrete variance-SD function: shape + spline spec + coefficients."""

    shape: Shape
    spec: SplineSpec | None
    theta: np.ndarray
    index_kind: IndexKind

    def __post_init__(self):
        self.shape = Shape(self.shape)
        self.index_kind = IndexKind(self.index_kind)
        self.theta = np.asarray(self.theta, dtype=float)
        expected = 1 + n_basis_columns(self.shape, self.spec)
        if self.theta.shape != (expected,):
            raise InvalidSpec(
                f"theta must have length {expected} for shape {self.shape.value}, "
                f"got {self.theta.shape}"
            )
        if self.shape is not Shape.CONSTANT and self.spec is None:
            raise InvalidSpec(f"shape {self.shape.value} requires a spline spec")

    def evaluate(self, v) -> np.ndarray:
        """g(v); index values outside the frozen boundary are clamped."""
        v = np.atleast_1d(np.asarray(v, dtype=float))
        cols = basis_columns(self.shape, self.spec, v)
        return self.theta[0] + cols @ self.theta[1:]

    def with_theta(self, theta: np.ndarray) -> "VarianceModel":
        return VarianceModel(self.shape, self.spec, np.asarray(theta, float), self.index_kind)

    def scaled(self, factor: float) -> "VarianceModel":
        """Rescale g by a positive factor (theta is linear in g)."""
        if factor <= 0:
            raise NonPositiveVariance(f"scale factor must be positive, got {factor}")
        return self.with_theta(self.theta * factor)

    @property
    def boundary(self) -> tuple[float, float]:
        if self.spec is None:
            return (-np.inf, np.inf)
        return (self.spec.lower, self.spec.upper)

    def validate(self, floor: float = VARIANCE_FLOOR, grid_size: int = 512) -> None:
        """Check the sign constraints and grid positivity; raise on violation."""
        box = box_coordinates(self.shape, self.spec, floor)
        theta_box = np.linalg.solve(box.transform, self.theta)
        tol = 1e-8 * max(1.0, float(np.max(np.abs(self.theta))))
        if np.any(theta_box < box.lower - tol) or np.any(theta_box > box.upper + tol):
            raise InvalidSpec(
                f"theta violates the {self.shape.value} sign constraints: {self.theta}"
            )
        if self.spec is not None:
            grid = np.linspace(self.spec.lower, self.spec.upper, grid_size)
        else:
            grid = np.zeros(1)
        g = self.evaluate(grid)
        if np.min(g) < floor * (1.0 - 1e-6):
            raise NonPositiveVariance(
                f"g dips to {np.min(g):.3e} below the positivity floor {floor:.0e}"
            )

    def to_dict(self) -> dict:
        out = {
            "shape": self.shape.value,
            "index_kind": self.index_kind.value,
            "theta": [float(t) for t in self.theta],
        }
        if self.spec is not None:
            out["spec"] = {
                "family": self.spec.family.value,
                "degree": self.spec.degree,
                "df": self.spec.df,
                "lower": self.spec.lower,
                "upper": self.spec.upper,
                "internal_knots": list(self.spec.internal_knots),
            }
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "VarianceModel":
        spec = None
        if "spec" in data:
            s = data["spec"]
            spec = SplineSpec(
                Family(s["family"]),
                int(s["degree"]),
                int(s["df"]),
                float(s["lower"]),
                float(s["upper"]),
                tuple(float(k) for k in s["internal_knots"]),
            )
        return cls(
            Shape(data["shape"]),
            spec,
            np.asarray(data["theta"], dtype=float),
            IndexKind(data["index_kind"]),
        )


def eval_g(vm: VarianceModel, v) -> np.ndarray:
    """Elementwise error standard deviations; must stay above the floor."""
    g = vm.evaluate(v)
    if np.min(g) <= VARIANCE_FLOOR:
        raise NonPositiveVariance(
            f"g(v) fell to {np.min(g):.3e} at v={np.asarray(v).ravel()[np.argmin(g)]:.6g}"
        )
    return g


# ---------------------------------------------------------------------------
# Box reparametrizations
# ---------------------------------------------------------------------------


@dataclass
class BoxCoordinates:
    """Linear coordinates in which a shape's constraint set is a box.

    ``theta_natural = transform @ theta_box``; the box is
    ``lower <= theta_box <= upper``.  ``needs_positivity_guard`` marks
    shapes whose box does not by itself keep g above the floor everywhere
    (only the convex shape, whose minimum can be interior).
    """

    transform: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    needs_positivity_guard: bool = False


def box_coordinates(
    shape: Shape, spec: SplineSpec | None, floor: float = VARIANCE_FLOOR
) -> BoxCoordinates:
    shape = Shape(shape)
    n = 1 + n_basis_columns(shape, spec)
    inf = np.inf
    lower = np.full(n, -inf)
    upper = np.full(n, inf)
    A = np.eye(n)

    if shape is Shape.CONSTANT:
        lower[0] = floor
    elif shape is Shape.INCREASING_I:
        # g is nondecreasing, so min g = g(lower) = theta_0
        lower[0] = floor
        lower[1:] = 0.0
    elif shape is Shape.DECREASING_I:
        # coords (g(upper), -theta_1..-theta_K); g(upper) is the minimum
        A = np.zeros((n, n))
        A[0, 0] = 1.0
        A[0, 1:] = 1.0
        A[1:, 1:] = -np.eye(n - 1)
        lower[0] = floor
        lower[1:] = 0.0
    elif shape is Shape.CONVEX_C:
        # theta_0 = g(lower); interior minimum handled by the grid guard
        lower[0] = floor
        lower[2:] = 0.0
        return BoxCoordinates(A, lower, upper, needs_positivity_guard=True)
    elif shape is Shape.CONCAVE_C:
        # coords (g(lower), g(upper), -theta_C); a concave g attains its
        # minimum at an endpoint, so endpoint floors suffice
        width = spec.upper - spec.lower
        c_at_upper = eval_basis(spec, [spec.upper]).values[0]
        A = np.zeros((n, n))
        A[0, 0] = 1.0
        A[1, 0] = -1.0 / width
        A[1, 1] = 1.0 / width
        A[1, 2:] = c_at_upper / width
        A[2:, 2:] = -np.eye(n - 2)
        lower[0] = floor
        lower[1] = floor
        lower[2:] = 0.0
    elif shape is Shape.INCREASING_CONCAVE_C:
        # coords (theta_0, g'(upper), -theta_C): derivative positive at the
        # right end plus concavity gives a nondecreasing g, min at lower
        A = np.zeros((n, n))
        A[0, 0] = 1.0
        A[1, 1] = 1.0
        A[1, 2:] = 1.0
        A[2:, 2:] = -np.eye(n - 2)
        lower[0] = floor
        lower[1:] = 0.0
    else:  # pragma: no cover
        raise InvalidSpec(f"unknown shape {shape}")
    return BoxCoordinates(A, lower, upper)
