"""Parametric nuisance models: logistic propensity scores and OLS outcome regressions."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .data import Dataset
from .exceptions import DimensionError, FoldError, RankError
from .validation import as_float_matrix, as_float_vector

_TERM_RE = re.compile(r"^\s*([A-Za-z_][\w.]*)\s*(?:(\^)\s*2|(\*)\s*([A-Za-z_][\w.]*))?\s*$")


@dataclass(frozen=True)
class DesignSpec:
    """Model form as a list of covariate transforms.

    Each term is a tuple of column indices whose product forms one design
    column: ``(j,)`` is column ``j``, ``(j, j)`` its square and ``(j, k)`` an
    interaction.
    """

    terms: tuple = ()
    intercept: bool = True

    def __post_init__(self):
        terms = tuple(tuple(int(j) for j in t) for t in self.terms)
        for t in terms:
            if not 1 <= len(t) <= 2 or min(t) < 0:
                raise ValueError(f"invalid design term {t!r}")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def main_effects(cls, p):
        return cls(tuple((j,) for j in range(p)))

    @classmethod
    def squares(cls, p):
        return cls(tuple((j, j) for j in range(p)))

    @classmethod
    def parse(cls, text, names):
        """Parse ``"x1, x2"``, ``"x1^2, x3^2"``, ``"x1*x2"`` against column ``names``.

        ``"1"`` or an empty string gives an intercept-only model.
        """
        names = list(names)
        terms = []
        for raw in text.split(","):
            if raw.strip() in ("", "1"):
                continue
            m = _TERM_RE.match(raw)
            if m is None:
                raise ValueError(f"cannot parse design term {raw.strip()!r}")
            first, square, star, second = m.groups()
            cols = [first] + ([first] if square else []) + ([second] if star else [])
            for c in cols:
                if c not in names:
                    raise ValueError(f"design term refers to unknown column {c!r}")
            terms.append(tuple(names.index(c) for c in cols))
        return cls(tuple(terms))

    def describe(self, names):
        parts = []
        for t in self.terms:
            if len(t) == 1:
                parts.append(names[t[0]])
            elif t[0] == t[1]:
                parts.append(f"{names[t[0]]}^2")
            else:
                parts.append(f"{names[t[0]]}*{names[t[1]]}")
        return ", ".join(parts) if parts else "1"

    def check(self, p):
        for t in self.terms:
            if max(t) >= p:
                raise DimensionError(f"design term {t!r} refers to a column >= p={p}")

    def build(self, x):
        x = as_float_matrix(x)
        self.check(x.shape[1])
        cols = [np.ones(x.shape[0])] if self.intercept else []
        for t in self.terms:
            col = x[:, t[0]].copy()
            for j in t[1:]:
                col = col * x[:, j]
            cols.append(col)
        if not cols:
            raise ValueError("design has no columns")
        return np.column_stack(cols)


def _check_rank(design):
    if design.shape[0] < design.shape[1] or np.linalg.matrix_rank(design) < design.shape[1]:
        raise RankError(
            f"design matrix of shape {design.shape} is not of full column rank"
        )


@dataclass
class LogisticFit:
    coef: np.ndarray
    converged: bool
    n_iter: int
    grad_norm: float

    def predict(self, design):
        return expit(design @ self.coef)


def fit_logistic(design, a, tol=1e-8, max_iter=100):
    """Maximum-likelihood logistic regression by iteratively reweighted least squares.

    Starts from zero coefficients. Convergence requires the score norm
    ``||X'(a - p)||`` to be at most ``tol`` and the last Newton step to be
    small. Under separation the score vanishes while the steps stay large.
    The last iterate is then returned with ``converged=False``.
    """
    design = as_float_matrix(design)
    a = as_float_vector(a, "a")
    if design.shape[0] != a.size:
        raise DimensionError("design and a differ in length")
    _check_rank(design)
    beta = np.zeros(design.shape[1])
    converged = False
    grad_norm = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        p = expit(design @ beta)
        grad = design.T @ (a - p)
        w = p * (1.0 - p)
        hess = design.T @ (design * w[:, None])
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)):
            break
        beta = beta + step
        p = expit(design @ beta)
        grad_norm = float(np.linalg.norm(design.T @ (a - p)))
        if grad_norm <= tol and np.max(np.abs(step)) <= 1e-6 * (1.0 + np.max(np.abs(beta))):
            converged = True
            break
    return LogisticFit(beta, converged, it, grad_norm)


def fit_ols(design, y):
    """Least-squares coefficients via an orthogonal (SVD-based) solver."""
    design = as_float_matrix(design)
    y = as_float_vector(y, "y")
    if design.shape[0] != y.size:
        raise DimensionError("design and y differ in length")
    _check_rank(design)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return coef


@dataclass
class PropensityFit:
    pi_hat: np.ndarray
    clip_count: int
    converged: bool
    coef: np.ndarray


def estimate_propensity(d: Dataset, spec: DesignSpec | None = None, clip_eps=1e-12,
                        tol=1e-8, max_iter=100) -> PropensityFit:
    """Fitted P(A=1 | X) clipped into ``[clip_eps, 1 - clip_eps]``."""
    if not 0 < clip_eps < 0.5:
        raise ValueError(f"clip_eps must lie in (0, 0.5), got {clip_eps!r}")
    spec = DesignSpec.main_effects(d.p) if spec is None else spec
    design = spec.build(d.x)
    fit = fit_logistic(design, d.a, tol=tol, max_iter=max_iter)
    raw = fit.predict(design)
    pi_hat, n_clipped = clip_propensity(raw, clip_eps)
    return PropensityFit(pi_hat, n_clipped, fit.converged, fit.coef)


def clip_propensity(pi, clip_eps):
    pi = np.asarray(pi, dtype=float)
    clipped = np.clip(pi, clip_eps, 1.0 - clip_eps)
    return clipped, int(np.count_nonzero(clipped != pi))


def fit_outcome_models(d: Dataset, spec: DesignSpec | None = None):
    """Full-sample, arm-wise OLS predictions (mu0_hat, mu1_hat) for every unit."""
    spec = DesignSpec.main_effects(d.p) if spec is None else spec
    design = spec.build(d.x)
    preds = []
    for arm in (0, 1):
        rows = d.a == arm
        coef = fit_ols(design[rows], d.y[rows])
        preds.append(design @ coef)
    return preds[0], preds[1]


def fold_assignment(n, k_folds, seed):
    """Seeded uniform random partition of ``range(n)`` into ``k_folds`` folds."""
    rng = np.random.default_rng(seed)
    folds = np.empty(n, dtype=np.int64)
    folds[rng.permutation(n)] = np.arange(n) % k_folds
    return folds


@dataclass
class CrossFit:
    mu0_hat: np.ndarray
    mu1_hat: np.ndarray
    folds: np.ndarray
    k_folds: int
    diagnostics: dict = field(default_factory=dict)


def cross_fit_outcome_models(d: Dataset, spec: DesignSpec | None = None, k_folds=5,
                             seed=None) -> CrossFit:
    """Out-of-fold arm-wise OLS predictions.

    Unit ``i`` receives predictions from models trained on every fold except
    its own, separately within each arm.
    """
    if k_folds < 2:
        raise ValueError("k_folds must be at least 2")
    spec = DesignSpec.main_effects(d.p) if spec is None else spec
    design = spec.build(d.x)
    folds = fold_assignment(d.n, k_folds, seed)
    for f in range(k_folds):
        for arm in (0, 1):
            if not np.any((folds == f) & (d.a == arm)):
                raise FoldError(f"fold {f} has no units in arm {arm}")
    mu = np.empty((2, d.n))
    for f in range(k_folds):
        test = folds == f
        for arm in (0, 1):
            train = (~test) & (d.a == arm)
            coef = fit_ols(design[train], d.y[train])
            mu[arm, test] = design[test] @ coef
    return CrossFit(mu[0], mu[1], folds, k_folds)
