"""Exception types shared across the package."""


class ShapevarError(Exception):
    """Base class for all package-specific errors."""


class InvalidSpec(ShapevarError):
    """A spline or model specification violates its constraints."""


class OutOfRange(ShapevarError):
    """Evaluation points fall outside the basis boundary interval."""


class NonPositiveVariance(ShapevarError):
    """The variance function dipped to or below the positivity floor."""


class DimensionMismatch(ShapevarError):
    """Array shapes do not agree with the design."""


class SingularCovariance(ShapevarError):
    """A per-subject covariance matrix is not positive definite."""


class UnsupportedDimension(ShapevarError):
    """Operation restricted to scalar random effects was given q > 1."""


class QuadratureFailure(ShapevarError):
    """Mode finding for the adaptive quadrature did not settle."""


class RankDeficient(ShapevarError):
    """Design matrix does not have full column rank."""


class NonConvergence(ShapevarError):
    """An optimizer exhausted its budget without converging."""


class EmptyReplicates(ShapevarError):
    """No converged bootstrap replicates are available."""


class AllCandidatesFailed(ShapevarError):
    """Every candidate model in a selection grid failed to fit."""


class MissingColumn(ShapevarError):
    """A mapped column is absent from the input table."""


class ParseError(ShapevarError):
    """Input file could not be parsed; message carries the location."""


class EmptyData(ShapevarError):
    """No rows remain after loading or filtering."""


class UnknownSubject(ShapevarError):
    """An exclusion rule references a subject id not in the table."""


class UnsupportedFormula(ShapevarError):
    """Model formula requests a combination the builder cannot assemble."""
