"""Long-format table ingestion, model-formula configuration, and design
matrix assembly."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .designs import ClusteredDesign, IndependentDesign
from .errors import (
    EmptyData,
    MissingColumn,
    ParseError,
    RankDeficient,
    UnknownSubject,
    UnsupportedFormula,
)
from .fitting import IrwConfig
from .splines import Family, eval_basis, make_even_spec
from .variance import IndexKind, Shape, VarianceTemplate, family_for_shape

DEFAULT_MAPPING = {"subject": "subject", "time": "time", "response": "response"}


@dataclass
class LongFormatTable:
    """Validated long-format data: one row per (subject, time) observation."""

    data: pd.DataFrame  # canonical columns: subject, time, response, covariates…
    covariates: list[str] = field(default_factory=list)
    exclusion_log: list[str] = field(default_factory=list)

    @property
    def n_rows(self) -> int:
        return len(self.data)

    @property
    def subjects(self) -> list[str]:
        return list(dict.fromkeys(self.data["subject"]))

    @property
    def n_subjects(self) -> int:
        return len(self.subjects)


def load_csv(
    path, mapping: dict | None = None, allow_duplicate_times: bool = False
) -> LongFormatTable:
    """Read and validate a long-format CSV.

    ``mapping`` declares the column names: keys ``subject``, ``time``,
    ``response`` and optionally ``covariates`` (a list of column names to
    carry along).  Values must exist in the header.
    """
    mapping = {**DEFAULT_MAPPING, **(mapping or {})}
    covariates = list(mapping.get("covariates", []))
    try:
        raw = pd.read_csv(path)
    except pd.errors.ParserError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    except pd.errors.EmptyDataError as exc:
        raise EmptyData(f"{path}: no rows") from exc
    if raw.empty:
        raise EmptyData(f"{path}: no rows")
    needed = [mapping["subject"], mapping["time"], mapping["response"], *covariates]
    for col in needed:
        if col not in raw.columns:
            raise MissingColumn(f"{path}: column {col!r} not found in header {list(raw.columns)}")
    data = pd.DataFrame(
        {
            "subject": raw[mapping["subject"]].astype(str),
            "time": _numeric(raw, mapping["time"], path),
            "response": _numeric(raw, mapping["response"], path),
        }
    )
    for cov in covariates:
        col = raw[cov]
        if pd.api.types.is_numeric_dtype(col):
            data[cov] = col.astype(float)
        else:
            data[cov] = col.astype(str)
    if not allow_duplicate_times:
        dup = data.duplicated(subset=["subject", "time"])
        if dup.any():
            row = int(np.argmax(dup.values))
            raise ParseError(
                f"{path}: duplicate (subject, time) pair at data row {row}: "
                f"({data['subject'].iloc[row]!r}, {data['time'].iloc[row]!r})"
            )
    return LongFormatTable(data=data, covariates=covariates)


def _numeric(raw: pd.DataFrame, col: str, path) -> np.ndarray:
    coerced = pd.to_numeric(raw[col], errors="coerce")
    bad = coerced.isna() & raw[col].notna()
    if bad.any() or coerced.isna().any():
        row = int(np.argmax((coerced.isna()).values))
        raise ParseError(f"{path}: column {col!r}, data row {row}: not a number")
    return coerced.astype(float).values


def apply_exclusions(table: LongFormatTable, rules) -> LongFormatTable:
    """Drop the listed subject ids; the log records what was removed."""
    rules = [str(r) for r in rules]
    known = set(table.data["subject"])
    for rule in rules:
        if rule not in known:
            raise UnknownSubject(f"cannot exclude unknown subject {rule!r}")
    if not rules:
        return table
    kept = table.data[~table.data["subject"].isin(rules)].reset_index(drop=True)
    if kept.empty:
        raise EmptyData("all subjects excluded")
    log = table.exclusion_log + [
        f"excluded subject {rule!r}" for rule in rules
    ]
    return LongFormatTable(data=kept, covariates=table.covariates, exclusion_log=log)


# ---------------------------------------------------------------------------
# Model formula
# ---------------------------------------------------------------------------


@dataclass
class MeanSplineConfig:
    family: Family
    degree: int
    df: int


@dataclass
class ModelFormulaConfig:
    """Declarative model description, JSON round-trippable.

    A mean-spline ``degree`` of 0 is accepted as an alias for degree 1
    (the integral of the piecewise-constant density basis is already
    piecewise linear, which is what a zero-degree monotone basis means in
    the convention some references use).
    """

    intercept: bool = True
    linear_time: bool = False
    mean_spline: MeanSplineConfig | None = None
    covariates: list[str] = field(default_factory=list)
    categorical: dict = field(default_factory=dict)  # name -> {"reference": level}
    spline_interactions: list[str] = field(default_factory=list)
    variance_shape: Shape = Shape.CONSTANT
    variance_degree: int = 2
    variance_df: int = 3
    index_kind: IndexKind = IndexKind.MARGINAL_MEAN
    random_effects: str = "none"  # none | intercept | time_slope
    fitting: IrwConfig = field(default_factory=IrwConfig)
    bootstrap_replicates: int = 200
    bootstrap_level: float = 0.95

    def __post_init__(self):
        self.variance_shape = Shape(self.variance_shape)
        self.index_kind = IndexKind(self.index_kind)
        if self.random_effects not in ("none", "intercept", "time_slope"):
            raise UnsupportedFormula(
                f"random_effects must be none, intercept, or time_slope, "
                f"got {self.random_effects!r}"
            )
        if self.random_effects == "none" and self.index_kind is IndexKind.CONDITIONAL_MEAN:
            raise UnsupportedFormula(
                "a conditional-mean variance index requires random effects"
            )
        for name in self.spline_interactions:
            if self.mean_spline is None:
                raise UnsupportedFormula(
                    f"spline interaction with {name!r} declared but there is no mean spline"
                )

    def variance_template(self) -> VarianceTemplate:
        if self.variance_shape is Shape.CONSTANT:
            return VarianceTemplate(Shape.CONSTANT, self.index_kind)
        return VarianceTemplate(
            self.variance_shape, self.index_kind, self.variance_degree, self.variance_df
        )

    @classmethod
    def from_dict(cls, d: dict) -> "ModelFormulaConfig":
        mean = d.get("mean", {})
        spline = mean.get("spline")
        mean_spline = None
        if spline is not None:
            degree = int(spline.get("degree", 1))
            if degree == 0:
                degree = 1  # zero-degree alias, see class docstring
            mean_spline = MeanSplineConfig(
                Family(spline.get("family", "I")), degree, int(spline["df"])
            )
        variance = d.get("variance", {})
        shape = Shape(variance.get("shape", "constant"))
        family = variance.get("family")
        if family is not None and Shape(shape) is not Shape.CONSTANT:
            if Family(family) is not family_for_shape(shape):
                raise UnsupportedFormula(
                    f"variance family {family!r} conflicts with shape {shape!r}"
                )
        fitting = d.get("fitting", {})
        boot = d.get("bootstrap", {})
        return cls(
            intercept=bool(mean.get("intercept", True)),
            linear_time=bool(mean.get("linear_time", False)),
            mean_spline=mean_spline,
            covariates=list(mean.get("covariates", [])),
            categorical=dict(mean.get("categorical", {})),
            spline_interactions=list(mean.get("spline_interactions", [])),
            variance_shape=shape,
            variance_degree=int(variance.get("degree", 2)),
            variance_df=int(variance.get("df", 3)),
            index_kind=IndexKind(variance.get("index", "marginal_mean")),
            random_effects=d.get("random_effects", "none"),
            fitting=IrwConfig(
                max_iter=int(fitting.get("max_iter", 50)),
                beta_rel_tol=float(fitting.get("beta_rel_tol", 1e-6)),
                theta_floor=float(fitting.get("theta_floor", 1e-8)),
                n_quad=int(fitting.get("n_quad", 21)),
                theta_multistarts=int(fitting.get("theta_multistarts", 5)),
                theta_seed=int(fitting.get("theta_seed", 0)),
            ),
            bootstrap_replicates=int(boot.get("replicates", 200)),
            bootstrap_level=float(boot.get("level", 0.95)),
        )

    def to_dict(self) -> dict:
        out = {
            "mean": {
                "intercept": self.intercept,
                "linear_time": self.linear_time,
                "covariates": list(self.covariates),
                "categorical": dict(self.categorical),
                "spline_interactions": list(self.spline_interactions),
            },
            "variance": {
                "shape": self.variance_shape.value,
                "degree": self.variance_degree,
                "df": self.variance_df,
                "index": self.index_kind.value,
            },
            "random_effects": self.random_effects,
            "fitting": {
                "max_iter": self.fitting.max_iter,
                "beta_rel_tol": self.fitting.beta_rel_tol,
                "theta_floor": self.fitting.theta_floor,
                "n_quad": self.fitting.n_quad,
                "theta_multistarts": self.fitting.theta_multistarts,
                "theta_seed": self.fitting.theta_seed,
            },
            "bootstrap": {
                "replicates": self.bootstrap_replicates,
                "level": self.bootstrap_level,
            },
        }
        if self.mean_spline is not None:
            out["mean"]["spline"] = {
                "family": self.mean_spline.family.value,
                "degree": self.mean_spline.degree,
                "df": self.mean_spline.df,
            }
        return out


# ---------------------------------------------------------------------------
# Design assembly
# ---------------------------------------------------------------------------


def canonical_labels(values: pd.Series) -> pd.Series:
    """String labels for categorical values; integral floats become ints."""
    if pd.api.types.is_numeric_dtype(values):
        v = values.to_numpy(dtype=float)
        if np.allclose(v, np.round(v)):
            return pd.Series([str(int(round(x))) for x in v], index=values.index)
    return values.astype(str)


def _dummy_columns(values: pd.Series, name: str, spec: dict):
    values = canonical_labels(values)
    levels = sorted(map(str, dict.fromkeys(values)))
    reference = str(spec.get("reference", levels[0]))
    if reference not in levels:
        raise UnsupportedFormula(
            f"reference level {reference!r} for {name!r} not among levels {levels}"
        )
    cols, names = [], []
    for level in levels:
        if level == reference:
            continue
        cols.append((values.astype(str) == level).to_numpy(dtype=float))
        names.append(f"{name}={level}")
    return cols, names


def _mean_matrix(table: LongFormatTable, formula: ModelFormulaConfig):
    data = table.data
    t = data["time"].to_numpy()
    columns: list[np.ndarray] = []
    names: list[str] = []
    if formula.intercept:
        columns.append(np.ones(len(data)))
        names.append("intercept")
    if formula.linear_time:
        columns.append(t)
        names.append("time")
    spline_block = None
    if formula.mean_spline is not None:
        ms = formula.mean_spline
        lo, hi = float(t.min()), float(t.max())
        if not lo < hi:
            raise UnsupportedFormula("mean spline needs a nondegenerate time range")
        spec = make_even_spec(ms.family, ms.degree, ms.df, lo, hi)
        spline_block = eval_basis(spec, t).values
        label = ms.family.value
        for k in range(spline_block.shape[1]):
            columns.append(spline_block[:, k])
            names.append(f"{label}{k + 1}(time)")
    for cov in formula.covariates:
        if cov not in data.columns:
            raise MissingColumn(f"covariate {cov!r} not in table")
        if cov in formula.categorical or not pd.api.types.is_numeric_dtype(data[cov]):
            cols, labels = _dummy_columns(
                data[cov], cov, formula.categorical.get(cov, {})
            )
            columns.extend(cols)
            names.extend(labels)
        else:
            columns.append(data[cov].to_numpy(dtype=float))
            names.append(cov)
    for cov in formula.spline_interactions:
        if cov not in data.columns:
            raise MissingColumn(f"interaction covariate {cov!r} not in table")
        cols, labels = _dummy_columns(data[cov], cov, formula.categorical.get(cov, {}))
        label = formula.mean_spline.family.value
        for dummy, dummy_name in zip(cols, labels):
            for k in range(spline_block.shape[1]):
                columns.append(spline_block[:, k] * dummy)
                names.append(f"{label}{k + 1}(time):{dummy_name}")
    if not columns:
        raise UnsupportedFormula("mean model has no columns")
    return np.column_stack(columns), names


def _check_rank(X: np.ndarray, names: list[str]) -> None:
    rank = np.linalg.matrix_rank(X)
    if rank == X.shape[1]:
        return
    # name a small set of columns involved in the collinearity via pivoted QR
    from scipy.linalg import qr

    _, R, piv = qr(X, mode="economic", pivoting=True)
    offenders = [names[j] for j in piv[rank:]] if np.diag(R).size else names
    raise RankDeficient(
        f"design has rank {rank} < {X.shape[1]}; dependent columns include {offenders}"
    )


def build_design(table: LongFormatTable, formula: ModelFormulaConfig):
    """Assemble the fixed and random design matrices declared by the formula."""
    X, names = _mean_matrix(table, formula)
    _check_rank(X, names)
    data = table.data
    t = data["time"].to_numpy()
    y = data["response"].to_numpy()
    if formula.random_effects == "none":
        return IndependentDesign(y, X, t, column_names=names)
    subjects = table.subjects
    index_of = {s: i for i, s in enumerate(subjects)}
    order = np.argsort([index_of[s] for s in data["subject"]], kind="stable")
    ys, Xs, Zs, ts = [], [], [], []
    subj_sorted = data["subject"].to_numpy()[order]
    y_s, X_s, t_s = y[order], X[order], t[order]
    for s in subjects:
        sel = subj_sorted == s
        ys.append(y_s[sel])
        Xs.append(X_s[sel])
        ts.append(t_s[sel])
        if formula.random_effects == "intercept":
            Zs.append(np.ones((int(sel.sum()), 1)))
        else:
            Zs.append(t_s[sel][:, None])
    return ClusteredDesign.from_blocks(subjects, ys, Xs, Zs, ts, column_names=names)
