"""Observational dataset, evaluation grids, GATE curves and CSV I/O."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .exceptions import DataError, DimensionError, SchemaError
from .validation import (
    as_float_matrix,
    as_float_vector,
    check_finite,
    check_grid,
    check_treatment,
)

Z_KINDS = ("continuous", "discrete")
# a column with this name holds the subgroup variable and is never a default covariate
DEDICATED_Z = "z"
ESTIMATOR_TAGS = ("MATCH", "MATCH_BC", "IPW", "OR", "AIPW", "PSR")


def _frozen(arr):
    arr = np.array(arr, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable table of outcomes, treatments, covariates and the subgroup variable.

    Use :meth:`from_arrays` to build a validated instance; the raw constructor
    performs no checks so that invalid datasets can be represented and passed
    to :func:`validate`.
    """

    y: np.ndarray
    a: np.ndarray
    x: np.ndarray
    z: np.ndarray
    z_kind: str = "continuous"
    x_names: tuple = ()

    def __post_init__(self):
        x = as_float_matrix(self.x)
        object.__setattr__(self, "y", _frozen(as_float_vector(self.y, "y")))
        object.__setattr__(self, "a", _frozen(np.asarray(self.a)))
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "z", _frozen(as_float_vector(self.z, "z")))
        if not self.x_names:
            names = tuple(f"x{j + 1}" for j in range(x.shape[1]))
            object.__setattr__(self, "x_names", names)
        else:
            object.__setattr__(self, "x_names", tuple(self.x_names))

    @classmethod
    def from_arrays(cls, y, a, x, z, z_kind="continuous", x_names=()):
        d = cls(y=y, a=a, x=x, z=z, z_kind=z_kind, x_names=x_names)
        validate(d)
        object.__setattr__(d, "a", _frozen(check_treatment(d.a)))
        return d

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def p(self):
        return self.x.shape[1]

    @property
    def treated(self):
        return np.flatnonzero(self.a == 1)

    @property
    def control(self):
        return np.flatnonzero(self.a == 0)

    def subset(self, idx):
        """Return the rows ``idx`` (in the given order) as a new Dataset."""
        idx = np.asarray(idx)
        return Dataset(
            y=self.y[idx],
            a=self.a[idx],
            x=self.x[idx],
            z=self.z[idx],
            z_kind=self.z_kind,
            x_names=self.x_names,
        )

    def drop_covariates(self, names):
        keep = [j for j, nm in enumerate(self.x_names) if nm not in set(names)]
        return Dataset(
            y=self.y,
            a=self.a,
            x=self.x[:, keep],
            z=self.z,
            z_kind=self.z_kind,
            x_names=tuple(self.x_names[j] for j in keep),
        )

    def with_treatment(self, a):
        return Dataset.from_arrays(self.y, a, self.x, self.z, self.z_kind, self.x_names)

    def with_outcome(self, y):
        return Dataset.from_arrays(y, self.a, self.x, self.z, self.z_kind, self.x_names)


def validate(d: Dataset) -> None:
    """Check every Dataset invariant, raising on the first violation."""
    n = d.y.shape[0]
    if n < 2:
        raise DataError(f"need at least 2 units, got {n}")
    if d.x.shape[1] < 1:
        raise DimensionError("need at least one covariate")
    for arr, name in ((d.a, "a"), (d.x, "x"), (d.z, "z")):
        if arr.shape[0] != n:
            raise DimensionError(f"{name} has {arr.shape[0]} rows, expected {n}")
    if len(d.x_names) != d.x.shape[1]:
        raise DimensionError("x_names does not match the number of covariates")
    if d.z_kind not in Z_KINDS:
        raise ValueError(f"z_kind must be one of {Z_KINDS}, got {d.z_kind!r}")
    check_finite(d.y, "y")
    check_treatment(d.a)
    check_finite(d.x, "x")
    check_finite(d.z, "z")


@dataclass(frozen=True)
class Schema:
    """Column roles for :func:`load_dataset`.

    ``x`` defaults to every column other than the outcome, the treatment and
    a dedicated subgroup column named ``z``. ``z`` may name a covariate
    column instead, in which case that covariate is kept for matching.
    """

    y: str = "y"
    a: str = "a"
    z: str = "z"
    x: tuple | None = None
    z_kind: str = "continuous"


def load_dataset(path, schema: Schema | Mapping | None = None) -> Dataset:
    """Read a CSV file with a header row into a validated :class:`Dataset`."""
    if schema is None:
        schema = Schema()
    elif isinstance(schema, Mapping):
        schema = Schema(**schema)
    try:
        frame = pd.read_csv(
            path, dtype=str, keep_default_na=False, skip_blank_lines=True, comment=None
        )
    except pd.errors.EmptyDataError as exc:
        raise DataError(f"empty file: {path}") from exc

    if schema.x:
        x_cols = list(schema.x)
    else:
        x_cols = [c for c in frame.columns if c not in (schema.y, schema.a, DEDICATED_Z)]
    if not x_cols:
        raise SchemaError("no covariate columns")
    for col in [schema.y, schema.a, schema.z, *x_cols]:
        if col not in frame.columns:
            raise SchemaError("missing column", column=col)

    def numeric(col):
        raw = frame[col].to_numpy()
        out = np.empty(raw.shape[0])
        for i, cell in enumerate(raw):
            text = cell.strip()
            if text == "":
                raise DataError("missing value", row=i + 1, column=col)
            try:
                val = float(text)
            except ValueError:
                raise DataError(f"not a number: {cell!r}", row=i + 1, column=col) from None
            if not np.isfinite(val):
                raise DataError("non-finite value", row=i + 1, column=col)
            out[i] = val
        return out

    y = numeric(schema.y)
    a_raw = numeric(schema.a)
    a = check_treatment(a_raw, name=schema.a)
    x = np.column_stack([numeric(c) for c in x_cols])
    z = numeric(schema.z)
    return Dataset.from_arrays(y, a, x, z, schema.z_kind, tuple(x_cols))


def export_dataset(d: Dataset, path, z_name="z") -> None:
    """Write ``d`` as CSV (columns y, a, covariates, z) at 17 significant digits."""
    cols = {"y": d.y, "a": d.a.astype(np.int64)}
    for j, name in enumerate(d.x_names):
        cols[name] = d.x[:, j]
    if z_name not in cols:
        cols[z_name] = d.z
    pd.DataFrame(cols).to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


@dataclass(frozen=True)
class EvaluationGrid:
    points: tuple

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(float(p) for p in check_grid(self.points)))

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def asarray(self):
        return np.asarray(self.points, dtype=float)

    @classmethod
    def parse(cls, text: str) -> "EvaluationGrid":
        """Parse ``start:end:step`` (endpoints inclusive) or a comma-separated list."""
        text = text.strip()
        if ":" in text:
            parts = text.split(":")
            if len(parts) != 3:
                raise ValueError(f"grid must be start:end:step, got {text!r}")
            start, end, step = (float(p) for p in parts)
            if step <= 0 or end < start:
                raise ValueError(f"invalid grid range {text!r}")
            k = int(np.floor((end - start) / step + 0.5))
            pts = start + step * np.arange(k + 1)
            pts = pts[pts <= end + step / 2]
            # keep decimal grids readable: 0.20000000000000007 -> 0.2
            return cls(tuple(np.round(pts, 12) + 0.0))
        return cls(tuple(float(p) for p in text.split(",") if p.strip()))


DEFAULT_GRID = EvaluationGrid((-0.4, -0.2, 0.0, 0.2, 0.4))


@dataclass
class GateCurve:
    """Estimated GATE over a grid, with optional confidence bounds."""

    grid: EvaluationGrid
    estimates: np.ndarray
    estimator_tag: str
    bandwidth: float
    ci_lower: np.ndarray | None = None
    ci_upper: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.estimator_tag not in ESTIMATOR_TAGS:
            raise ValueError(f"unknown estimator tag {self.estimator_tag!r}")
        self.estimates = np.asarray(self.estimates, dtype=float)
        if self.estimates.shape != (len(self.grid),):
            raise DimensionError("estimates do not match the grid")

    def to_frame(self) -> pd.DataFrame:
        nan = np.full(len(self.grid), np.nan)
        return pd.DataFrame(
            {
                "z": self.grid.asarray(),
                "estimate": self.estimates,
                "ci_lower": nan if self.ci_lower is None else self.ci_lower,
                "ci_upper": nan if self.ci_upper is None else self.ci_upper,
                "estimator": self.estimator_tag,
                "bandwidth": self.bandwidth,
            }
        )


CURVE_COLUMNS = ("z", "estimate", "ci_lower", "ci_upper", "estimator", "bandwidth")


def format_header(config: Mapping, diagnostics: Mapping | None = None) -> str:
    """Comment header lines (``# key=value``) embedding a resolved config."""
    lines = [f"# {k}={_fmt_value(v)}" for k, v in config.items()]
    for k, v in (diagnostics or {}).items():
        lines.append(f"# diagnostic.{k}={_fmt_value(v)}")
    return "".join(line + "\n" for line in lines)


def _fmt_value(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt_value(x) for x in v)
    return str(v)


def curves_to_csv(curves: Sequence[GateCurve], header: str = "") -> str:
    frame = pd.concat([c.to_frame() for c in curves], ignore_index=True)
    buf = io.StringIO()
    buf.write(header)
    frame.to_csv(buf, index=False, float_format="%.17g", na_rep="", lineterminator="\n")
    return buf.getvalue()


def read_commented_csv(path) -> tuple[dict, pd.DataFrame]:
    """Split a file written with a ``# key=value`` header into (header, frame)."""
    header = {}
    body = []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#") and not body:
                key, _, value = line[1:].strip().partition("=")
                header[key] = value
            else:
                body.append(line)
    frame = pd.read_csv(io.StringIO("".join(body)), float_precision="round_trip")
    return header, frame


__all__ = [
    "CURVE_COLUMNS",
    "DEFAULT_GRID",
    "Dataset",
    "EvaluationGrid",
    "GateCurve",
    "Schema",
    "curves_to_csv",
    "export_dataset",
    "format_header",
    "load_dataset",
    "read_commented_csv",
    "validate",
]
