"""Data containers for independent and clustered designs.

Clustered data is stored stacked (one block of rows per subject, in subject
order) with recorded block boundaries; this keeps the per-subject view of
the model intact while letting the numerical code vectorize across rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, RankDeficient


def _as_2d(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    return a


@dataclass
class IndependentDesign:
    """Response, fixed-effect design matrix, and observation times."""

    y: np.ndarray
    X: np.ndarray
    t: np.ndarray
    column_names: list[str] | None = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).ravel()
        self.X = _as_2d(self.X)
        self.t = np.asarray(self.t, dtype=float).ravel()
        n = self.y.size
        if self.X.shape[0] != n or self.t.size != n:
            raise DimensionMismatch(
                f"y ({n}), X ({self.X.shape[0]}), t ({self.t.size}) row counts differ"
            )
        if not (np.all(np.isfinite(self.y)) and np.all(np.isfinite(self.X))):
            raise DimensionMismatch("design contains non-finite values")
        if n <= self.X.shape[1]:
            raise DimensionMismatch(f"need more observations ({n}) than columns ({self.X.shape[1]})")
        if np.linalg.matrix_rank(self.X) < self.X.shape[1]:
            raise RankDeficient("X does not have full column rank")

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass
class ClusteredDesign:
    """Per-subject response/design blocks stacked in subject order."""

    subject_ids: list
    y: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    t: np.ndarray
    sizes: np.ndarray
    column_names: list[str] | None = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).ravel()
        self.X = _as_2d(self.X)
        self.Z = _as_2d(self.Z)
        self.t = np.asarray(self.t, dtype=float).ravel()
        self.sizes = np.asarray(self.sizes, dtype=int).ravel()
        n = self.y.size
        if self.sizes.sum() != n or np.any(self.sizes < 1):
            raise DimensionMismatch("block sizes must be >= 1 and sum to the row count")
        if len(self.subject_ids) != self.sizes.size:
            raise DimensionMismatch("one id per subject block required")
        if self.X.shape[0] != n or self.Z.shape[0] != n or self.t.size != n:
            raise DimensionMismatch("stacked arrays must share the row count")
        if not all(
            np.all(np.isfinite(a)) for a in (self.y, self.X, self.Z, self.t)
        ):
            raise DimensionMismatch("design contains non-finite values")
        if np.linalg.matrix_rank(self.X) < self.X.shape[1]:
            raise RankDeficient("stacked X does not have full column rank")
        self.starts = np.concatenate([[0], np.cumsum(self.sizes)])

    @classmethod
    def from_blocks(cls, subject_ids, ys, Xs, Zs, ts, column_names=None) -> "ClusteredDesign":
        ys = [np.asarray(y, float).ravel() for y in ys]
        Xs = [_as_2d(X) for X in Xs]
        Zs = [_as_2d(Z) for Z in Zs]
        ts = [np.asarray(t, float).ravel() for t in ts]
        if not (len(subject_ids) == len(ys) == len(Xs) == len(Zs) == len(ts)):
            raise DimensionMismatch("block lists must have equal length")
        p = {X.shape[1] for X in Xs}
        q = {Z.shape[1] for Z in Zs}
        if len(p) != 1 or len(q) != 1:
            raise DimensionMismatch("all subjects must share fixed/random design widths")
        return cls(
            subject_ids=list(subject_ids),
            y=np.concatenate(ys),
            X=np.vstack(Xs),
            Z=np.vstack(Zs),
            t=np.concatenate(ts),
            sizes=np.array([len(y) for y in ys]),
            column_names=column_names,
        )

    @property
    def n_subjects(self) -> int:
        return self.sizes.size

    @property
    def n_obs(self) -> int:
        return self.y.size

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.Z.shape[1]

    def slice(self, i: int) -> slice:
        return slice(self.starts[i], self.starts[i + 1])

    def split(self, stacked: np.ndarray) -> list[np.ndarray]:
        return [stacked[self.slice(i)] for i in range(self.n_subjects)]

    def with_response(self, y_new: np.ndarray) -> "ClusteredDesign":
        return ClusteredDesign(
            self.subject_ids, np.asarray(y_new, float), self.X, self.Z, self.t,
            self.sizes, self.column_names,
        )

    def stacked_independent(self) -> IndependentDesign:
        """Forget the grouping (used for degenerate-random-effect checks)."""
        return IndependentDesign(self.y, self.X, self.t, self.column_names)


# ---------------------------------------------------------------------------
# Random-effects covariance, log-Cholesky parameterization
# ---------------------------------------------------------------------------

_DIAG_FLOOR = 1e-12


def alpha_dim(q: int) -> int:
    return q * (q + 1) // 2


def alpha_to_cov(alpha: np.ndarray, q: int) -> np.ndarray:
    """Unpack a log-Cholesky vector into the covariance matrix B = L L'."""
    alpha = np.asarray(alpha, dtype=float).ravel()
    if alpha.size != alpha_dim(q):
        raise DimensionMismatch(f"alpha must have length {alpha_dim(q)} for q={q}")
    L = np.zeros((q, q))
    rows, cols = np.tril_indices(q)
    L[rows, cols] = alpha
    L[np.diag_indices(q)] = np.exp(np.diag(L))
    return L @ L.T


def cov_to_alpha(B: np.ndarray) -> np.ndarray:
    """Log-Cholesky vector of a PSD matrix; diagonals are floored so the
    log stays finite for (numerically) singular B."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    q = B.shape[0]
    try:
        L = np.linalg.cholesky(B + np.eye(q) * 0.0)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh((B + B.T) / 2.0)
        w = np.clip(w, 0.0, None)
        L = np.linalg.cholesky(V @ np.diag(w) @ V.T + np.eye(q) * _DIAG_FLOOR**2)
    d = np.clip(np.diag(L), _DIAG_FLOOR, None)
    L = L.copy()
    L[np.diag_indices(q)] = np.log(d)
    rows, cols = np.tril_indices(q)
    return L[rows, cols]


@dataclass
class RandomEffectsCov:
    """Covariance of the subject-level random effects in log-Cholesky form."""

    alpha: np.ndarray
    q: int

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float).ravel()
        if self.alpha.size != alpha_dim(self.q):
            raise DimensionMismatch(
                f"alpha must have length {alpha_dim(self.q)} for q={self.q}"
            )

    @classmethod
    def from_cov(cls, B: np.ndarray) -> "RandomEffectsCov":
        B = np.atleast_2d(np.asarray(B, dtype=float))
        return cls(cov_to_alpha(B), B.shape[0])

    @property
    def cov(self) -> np.ndarray:
        return alpha_to_cov(self.alpha, self.q)

    @property
    def sigma_b(self) -> float:
        """Random-effect SD for the scalar case (sqrt of B[0, 0])."""
        return float(np.sqrt(self.cov[0, 0]))


# ---------------------------------------------------------------------------
# Mean structures
# ---------------------------------------------------------------------------


def marginal_mean(design: ClusteredDesign, beta: np.ndarray) -> list[np.ndarray]:
    """Per-subject expectation of the response without the random effects."""
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.size != design.p:
        raise DimensionMismatch(f"beta has {beta.size} entries, X has {design.p} columns")
    return design.split(design.X @ beta)


def conditional_mean(
    design: ClusteredDesign, beta: np.ndarray, blups: np.ndarray
) -> list[np.ndarray]:
    """Per-subject expectation given each subject's random effect."""
    beta = np.asarray(beta, dtype=float).ravel()
    blups = _as_2d(blups)
    if beta.size != design.p:
        raise DimensionMismatch(f"beta has {beta.size} entries, X has {design.p} columns")
    if blups.shape != (design.n_subjects, design.q):
        raise DimensionMismatch(
            f"blups must be ({design.n_subjects}, {design.q}), got {blups.shape}"
        )
    out = []
    for i in range(design.n_subjects):
        s = design.slice(i)
        out.append(design.X[s] @ beta + design.Z[s] @ blups[i])
    return out
