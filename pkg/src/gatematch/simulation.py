"""Simulation designs C1-C12, true GATE curves and the Monte Carlo harness.

Covariates are ``X1 ~ U(-1/2, 1/2)``, ``X2`` uniform on ``{0, 1, 2}`` and
``X3 ~ N(0, 1)``. Treatment follows one of three logistic mechanisms.
Potential outcomes are ``Y0 = g(X) + e0`` and ``Y1 = g(X) + tau(X1) + e1``
with ``g(X) = X2 + X1 X2 + (X3^3 + X3) / 2`` and standard normal noise. The
subgroup variable is ``Z = X1``.

Every replicate draws from its own counter-based (Philox) stream keyed by
``(master_seed, replicate)``. Results therefore do not depend on how
replicates are scheduled across workers.
"""

from __future__ import annotations

import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy.special import expit

from .data import DEFAULT_GRID, Dataset, EvaluationGrid
from .estimators import TAGS, EstimatorConfig, estimate_many, normalize_tag
from .inference import SubsampleConfig, subsample_ci_many
from .nuisance import DesignSpec

MECHANISMS = {
    # (use squared covariates, alpha)
    "A": (True, np.array([0.5, 0.25, -0.125])),
    "B": (True, np.array([8.0, 0.5, -1.25])),
    "C": (False, np.array([5.0, 0.25, -0.125])),
}
STUDIES = ("I", "II", "III")
COVARIATE_NAMES = ("x1", "x2", "x3")


def true_gate(study, z):
    """True GATE ``tau(z)`` of a study (scalar or array input).

    >>> true_gate("I", 0.4)
    0.32000000000000006
    >>> true_gate("II", 0.0)
    0.0
    """
    z = np.asarray(z, dtype=float)
    if study == "I":
        out = 2.0 * z**2
    elif study == "II":
        out = z * (1.0 + 2.0 * z) ** 2 * (z - 1.0) ** 2
    elif study == "III":
        out = np.cos(3.0 * z) * np.log(z + 2.0) * np.exp(z)
    else:
        raise ValueError(f"study must be one of {STUDIES}, got {study!r}")
    return float(out) if out.ndim == 0 else out


def propensity_true(mechanism, x):
    """True treatment probability under a mechanism, for covariate rows ``x``."""
    squared, alpha = MECHANISMS[mechanism]
    x = np.atleast_2d(np.asarray(x, dtype=float))
    terms = x * x if squared else x
    return expit(terms @ alpha)


def baseline(x):
    x1, x2, x3 = x[:, 0], x[:, 1], x[:, 2]
    return x2 + x1 * x2 + 0.5 * (x3**3 + x3)


def _drop_column(spec: DesignSpec, j: int) -> DesignSpec:
    terms = tuple(
        tuple(k - (k > j) for k in t) for t in spec.terms if j not in t
    )
    return DesignSpec(terms, spec.intercept)


@dataclass(frozen=True)
class CaseSpec:
    """One simulation design.

    ``fit_propensity_spec`` and ``fit_outcome_spec`` are the working models
    handed to the estimators, indexed over ``(x1, x2, x3)``. With
    ``drop_x2`` the data are generated as usual but ``x2`` is removed from
    the observed covariates, so neither matching nor the nuisance models see it.
    """

    case_id: str
    mechanism: str
    study: str
    fit_propensity_spec: DesignSpec = field(default_factory=lambda: DesignSpec.main_effects(3))
    fit_outcome_spec: DesignSpec = field(default_factory=lambda: DesignSpec.main_effects(3))
    drop_x2: bool = False

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"unknown mechanism {self.mechanism!r}")
        if self.study not in STUDIES:
            raise ValueError(f"unknown study {self.study!r}")

    @property
    def label(self):
        return self.case_id + ("-noX2" if self.drop_x2 else "")

    def without_x2(self) -> "CaseSpec":
        return replace(self, drop_x2=True)

    def propensity_spec(self) -> DesignSpec:
        spec = self.fit_propensity_spec
        return _drop_column(spec, 1) if self.drop_x2 else spec

    def outcome_spec(self) -> DesignSpec:
        spec = self.fit_outcome_spec
        return _drop_column(spec, 1) if self.drop_x2 else spec

    def tau(self, z):
        return true_gate(self.study, z)


def _build_cases():
    cases = {}
    for i, mech in enumerate("ABC"):
        for j, study in enumerate(STUDIES):
            cid = f"C{3 * i + j + 1}"
            cases[cid] = CaseSpec(cid, mech, study)
    for j, study in enumerate(STUDIES):
        cid = f"C{10 + j}"
        cases[cid] = CaseSpec(cid, "B", study, fit_propensity_spec=DesignSpec.squares(3))
    return cases


CASES = _build_cases()


@dataclass(frozen=True, eq=False)
class GeneratedCase:
    """A simulated dataset with the quantities only a simulation knows."""

    dataset: Dataset
    pi_true: np.ndarray
    y0: np.ndarray
    y1: np.ndarray
    spec: CaseSpec


def case_rng(seed):
    """Philox generator for an int seed or a :class:`numpy.random.SeedSequence`."""
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def generate_case(spec: CaseSpec, n: int, seed) -> GeneratedCase:
    """Draw one dataset of size ``n`` from a case.

    Draw order is fixed: X1, X2, X3, the treatment uniforms, e0, e1. Hence
    the three studies share covariates, treatments and ``Y0`` for a given seed.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    rng = case_rng(seed)
    x1 = rng.uniform(-0.5, 0.5, n)
    x2 = rng.integers(0, 3, n).astype(float)
    x3 = rng.standard_normal(n)
    u = rng.uniform(0.0, 1.0, n)
    e0 = rng.standard_normal(n)
    e1 = rng.standard_normal(n)
    x = np.column_stack([x1, x2, x3])
    pi = propensity_true(spec.mechanism, x)
    a = (u < pi).astype(np.int64)
    g = baseline(x)
    y0 = g + e0
    y1 = g + true_gate(spec.study, x1) + e1
    y = np.where(a == 1, y1, y0)
    d = Dataset.from_arrays(y, a, x, x1, x_names=COVARIATE_NAMES)
    if spec.drop_x2:
        d = d.drop_covariates(["x2"])
    return GeneratedCase(d, pi, y0, y1, spec)


def _seed_seq(master_seed, r, stream):
    return np.random.SeedSequence(master_seed, spawn_key=(r, stream))


def _stream_int(master_seed, r, stream):
    return int(_seed_seq(master_seed, r, stream).generate_state(1, np.uint64)[0] >> 1)


def resolve_estimators(spec: CaseSpec, estimators):
    """Configs for the case: tags become default configs and unset working models take the case's."""
    out = []
    for e in estimators:
        cfg = EstimatorConfig(e) if isinstance(e, str) else e
        if cfg.propensity_spec is None:
            cfg = replace(cfg, propensity_spec=spec.propensity_spec())
        if cfg.outcome_spec is None:
            cfg = replace(cfg, outcome_spec=spec.outcome_spec())
        out.append(cfg)
    tags = [c.estimator for c in out]
    if len(set(tags)) != len(tags):
        raise ValueError("each estimator may appear once per run")
    return out


@dataclass(frozen=True)
class _Job:
    spec: CaseSpec
    n: int
    estimators: tuple
    grid: EvaluationGrid
    master_seed: int
    sub: SubsampleConfig | None


def _replicate(job: _Job, r: int):
    """Estimates (E, G), CI bounds (E, G) or None, and failure flags (E,) for replicate ``r``."""
    case = generate_case(job.spec, job.n, _seed_seq(job.master_seed, r, 0))
    cfgs = [
        replace(c, seed=_stream_int(job.master_seed, r, 1)) if not c.deterministic else c
        for c in job.estimators
    ]
    e, g = len(cfgs), len(job.grid)
    est = np.full((e, g), np.nan)
    failed = np.zeros(e, dtype=bool)
    curves = estimate_many(case.dataset, job.grid, cfgs)
    for i, c in enumerate(cfgs):
        res = curves[c.estimator]
        if isinstance(res, Exception):
            failed[i] = True
        else:
            est[i] = res.estimates
    lo = hi = None
    if job.sub is not None:
        lo = np.full((e, g), np.nan)
        hi = np.full((e, g), np.nan)
        sub = replace(job.sub, seed=_stream_int(job.master_seed, r, 2))
        cis = subsample_ci_many(case.dataset, cfgs, job.grid, sub)
        for i, c in enumerate(cfgs):
            lo[i] = cis[c.estimator].lower
            hi[i] = cis[c.estimator].upper
    return est, lo, hi, failed


def _replicate_star(args):
    return _replicate(*args)


@dataclass
class SimulationReport:
    """Raw Monte Carlo output for one case plus derived metrics.

    ``estimates`` has shape ``(reps, E, G)``. ``ci_lower``/``ci_upper`` match
    it when intervals were computed and are ``None`` otherwise.
    """

    case_id: str
    n: int
    reps: int
    seed: int
    grid: EvaluationGrid
    estimators: tuple
    truth: np.ndarray
    estimates: np.ndarray
    ci_lower: np.ndarray | None = None
    ci_upper: np.ndarray | None = None
    failures: np.ndarray | None = None

    def _index(self, tag):
        return self.estimators.index(normalize_tag(tag))

    def missing(self, tag):
        return np.count_nonzero(np.isnan(self.estimates[:, self._index(tag)]), axis=0)

    def bias(self, tag):
        vals = self.estimates[:, self._index(tag)]
        return _nanmean(vals) - self.truth

    def sd(self, tag):
        vals = self.estimates[:, self._index(tag)]
        ok = np.count_nonzero(~np.isnan(vals), axis=0)
        out = np.full(vals.shape[1], np.nan)
        keep = ok >= 2
        if keep.any():
            out[keep] = np.nanstd(vals[:, keep], axis=0, ddof=1)
        return out

    def mse(self, tag):
        vals = self.estimates[:, self._index(tag)]
        return _nanmean((vals - self.truth) ** 2)

    def mse_avg(self, tag):
        return float(np.mean(self.mse(tag)))

    def coverage(self, tag):
        """Per-grid-point fraction of replicates whose interval covers the truth."""
        if self.ci_lower is None:
            return np.full(len(self.grid), np.nan)
        i = self._index(tag)
        lo, hi = self.ci_lower[:, i], self.ci_upper[:, i]
        ok = ~(np.isnan(lo) | np.isnan(hi))
        cover = (lo <= self.truth) & (self.truth <= hi)
        n_ok = ok.sum(axis=0)
        with np.errstate(invalid="ignore"):
            return np.where(n_ok > 0, (cover & ok).sum(axis=0) / n_ok, np.nan)

    def cp95(self, tag):
        """Coverage averaged over the grid points."""
        return float(np.mean(self.coverage(tag)))

    def frame(self) -> pd.DataFrame:
        """Tidy metrics table, one row per (estimator, z)."""
        rows = []
        for tag in self.estimators:
            bias, sd, mse = self.bias(tag), self.sd(tag), self.mse(tag)
            cov, miss = self.coverage(tag), self.missing(tag)
            for k, z in enumerate(self.grid):
                rows.append({
                    "case": self.case_id, "estimator": tag, "z": z,
                    "bias": bias[k], "sd": sd[k], "mse": mse[k], "cp95": cov[k],
                    "n": self.n, "reps": self.reps, "seed": self.seed,
                    "missing": int(miss[k]),
                })
        return pd.DataFrame(rows, columns=list(TIDY_COLUMNS))


TIDY_COLUMNS = ("case", "estimator", "z", "bias", "sd", "mse", "cp95", "n", "reps", "seed",
                "missing")


def _nanmean(vals):
    ok = np.count_nonzero(~np.isnan(vals), axis=0)
    out = np.full(vals.shape[1], np.nan)
    keep = ok > 0
    out[keep] = np.nansum(vals[:, keep], axis=0) / ok[keep]
    return out


def run_monte_carlo(spec: CaseSpec, n: int, reps: int, estimators=TAGS, grid=DEFAULT_GRID,
                    master_seed: int = 0, with_ci: bool = False,
                    sub: SubsampleConfig | None = None, workers: int = 1) -> SimulationReport:
    """Monte Carlo evaluation of ``estimators`` on ``reps`` datasets from ``spec``.

    Replicate ``r`` uses streams derived from ``(master_seed, r)`` only, and
    results are collected in replicate order. Output is therefore identical
    for any ``workers``. With ``with_ci`` each replicate also runs subsampling
    (``sub`` or the default :class:`SubsampleConfig`) to measure coverage.
    """
    if reps < 2:
        raise ValueError("reps must be at least 2")
    grid = grid if isinstance(grid, EvaluationGrid) else EvaluationGrid(tuple(grid))
    cfgs = tuple(resolve_estimators(spec, estimators))
    if with_ci and sub is None:
        sub = SubsampleConfig()
    job = _Job(spec, n, cfgs, grid, int(master_seed), sub if with_ci else None)
    args = [(job, r) for r in range(reps)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate_star, args, chunksize=max(1, reps // (4 * workers))))
    else:
        results = [_replicate_star(a) for a in args]
    est = np.stack([res[0] for res in results])
    lo = hi = None
    if with_ci:
        lo = np.stack([res[1] for res in results])
        hi = np.stack([res[2] for res in results])
    failures = np.stack([res[3] for res in results])
    return SimulationReport(
        case_id=spec.label, n=n, reps=reps, seed=int(master_seed), grid=grid,
        estimators=tuple(c.estimator for c in cfgs), truth=spec.tau(grid.asarray()),
        estimates=est, ci_lower=lo, ci_upper=hi, failures=failures,
    )


def compare_metrics(reports) -> dict:
    """Assemble comparison tables from one or more reports.

    Accepts :class:`SimulationReport` objects or tidy frames (as written by
    the ``simulate`` command). Returns a dict of DataFrames:

    ``tidy``
        Concatenated per-(case, estimator, z) metrics.
    ``bias_sd``
        Wide layout with one row per (case, z) and ``<EST>_bias``/``<EST>_sd`` columns.
    ``mse``
        One row per (case, z) with an MSE column per estimator, plus an
        ``avg`` row per case holding the mean over grid points.
    ``ranking``
        Estimators per case ordered by average MSE (ties keep input order).
    """
    frames = [r.frame() if isinstance(r, SimulationReport) else r for r in reports]
    if not frames:
        raise ValueError("no reports to compare")
    tidy = pd.concat(frames, ignore_index=True)
    missing = [c for c in ("case", "estimator", "z", "bias", "sd", "mse") if c not in tidy]
    if missing:
        raise ValueError(f"report is missing columns {missing}")
    cases = list(dict.fromkeys(tidy["case"]))
    bias_rows, mse_rows, rank_rows = [], [], []
    for case in cases:
        sub = tidy[tidy["case"] == case]
        tags = list(dict.fromkeys(sub["estimator"]))
        zs = list(dict.fromkeys(sub["z"]))
        for z in zs:
            at = sub[sub["z"] == z].set_index("estimator")
            brow = {"case": case, "z": z}
            mrow = {"case": case, "z": z}
            for tag in tags:
                brow[f"{tag}_bias"] = at.at[tag, "bias"]
                brow[f"{tag}_sd"] = at.at[tag, "sd"]
                mrow[tag] = at.at[tag, "mse"]
            bias_rows.append(brow)
            mse_rows.append(mrow)
        avgs = {tag: float(sub.loc[sub["estimator"] == tag, "mse"].mean()) for tag in tags}
        mse_rows.append({"case": case, "z": "avg", **avgs})
        order = sorted(range(len(tags)), key=lambda i: (avgs[tags[i]], i))
        for rank, i in enumerate(order, start=1):
            rank_rows.append({"case": case, "rank": rank, "estimator": tags[i],
                              "mse_avg": avgs[tags[i]]})
    return {
        "tidy": tidy,
        "bias_sd": pd.DataFrame(bias_rows),
        "mse": pd.DataFrame(mse_rows),
        "ranking": pd.DataFrame(rank_rows),
    }


def frame_to_csv(frame: pd.DataFrame, header: str = "") -> str:
    """CSV text with a comment header, 17 significant digits and empty cells for NaN."""
    buf = io.StringIO()
    buf.write(header)
    frame.to_csv(buf, index=False, float_format="%.17g", na_rep="", lineterminator="\n")
    return buf.getvalue()
