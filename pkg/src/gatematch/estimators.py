"""Group average treatment effect estimators.

Every estimator follows the same two-stage shape. ``fit`` builds one
pseudo-outcome per unit. These are matched contrasts, inverse-probability
scores, outcome-model contrasts, or propensity-score-regression contrasts.
``predict`` smooths the pseudo-outcomes over the subgroup variable ``z``
with a local-constant kernel regression. For a discrete ``z`` it takes cell
means instead.

The classes follow the scikit-learn estimator conventions (``get_params``,
``set_params``, fitted attributes with a trailing underscore) so they can be
cloned and grid-searched like any other estimator.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .data import Dataset, EvaluationGrid, GateCurve
from .exceptions import FoldError, GateError
from .kernels import (
    discrete_means,
    kernel_weights,
    local_constant,
    select_bandwidth,
    weighted_means,
)
from .matching import MatchConfig, imputed_from_matches, match_all
from .nuisance import (
    DesignSpec,
    cross_fit_outcome_models,
    estimate_propensity,
    fit_outcome_models,
)
from .validation import check_injected

TAGS = ("MATCH", "MATCH_BC", "IPW", "OR", "AIPW", "PSR")
DETERMINISTIC = ("MATCH", "IPW", "OR", "AIPW", "PSR")


def _resolve_spec(terms, names):
    if terms is None:
        return DesignSpec.main_effects(len(names))
    if isinstance(terms, DesignSpec):
        return terms
    return DesignSpec.parse(terms, names)


def _as_dataset(X, a, y, z, z_kind):
    names = ()
    if hasattr(X, "columns"):
        names = tuple(str(c) for c in X.columns)
        X = X.to_numpy(dtype=float)
    return Dataset.from_arrays(y, a, X, z, z_kind=z_kind, x_names=names)


class BaseGATE(BaseEstimator):
    """Shared fit/predict plumbing. Subclasses implement ``_pseudo_outcomes``."""

    tag = None

    def fit(self, X, a, y, z, **nuisance):
        """Fit on covariates ``X``, treatment ``a``, outcome ``y`` and subgroup variable ``z``.

        Keyword arguments inject precomputed nuisances (``propensity``,
        ``mu0``, ``mu1``, ``match_sets``) where the estimator accepts them.
        """
        d = _as_dataset(X, a, y, z, getattr(self, "z_kind", "continuous"))
        return self.fit_dataset(d, **nuisance)

    def fit_dataset(self, d: Dataset, **nuisance):
        if d.z_kind != self.z_kind:
            d = replace(d, z_kind=self.z_kind)
        self.diagnostics_ = {}
        self.n_features_in_ = d.p
        self.feature_names_in_ = np.asarray(d.x_names, dtype=object)
        zs, vs = self._pseudo_outcomes(d, **nuisance)
        self.z_ = zs
        self.pseudo_outcomes_ = vs
        if self.z_kind == "discrete":
            self.bandwidth_ = float("nan")
        else:
            method = "rule_of_thumb" if self.bandwidth is None else float(self.bandwidth)
            self.bandwidth_ = select_bandwidth(zs, vs, method)
        return self

    def _check_fitted(self):
        if not hasattr(self, "pseudo_outcomes_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted yet")

    def predict(self, z):
        """Estimated GATE at each value of ``z``; NaN where no data supports it."""
        self._check_fitted()
        pts = np.atleast_1d(np.asarray(z, dtype=float))
        if self.z_kind == "discrete":
            return discrete_means(self.z_, self.pseudo_outcomes_, pts)
        return local_constant(self.z_, self.pseudo_outcomes_, pts, self.bandwidth_, self.kernel)

    def curve(self, grid) -> GateCurve:
        if not isinstance(grid, EvaluationGrid):
            grid = EvaluationGrid(tuple(grid))
        est = self.predict(grid.asarray())
        diag = dict(self.diagnostics_)
        key = "empty_cells" if self.z_kind == "discrete" else "empty_windows"
        diag[key] = int(np.count_nonzero(np.isnan(est)))
        return GateCurve(grid, est, self.tag, self.bandwidth_, diagnostics=diag)


class _MatchingMixin:
    def _match_config(self):
        return MatchConfig(self.n_matches, self.metric, self.standardize)

    def _imputed(self, d, match_sets):
        if match_sets is None:
            match_sets = match_all(d, self._match_config())
        self.imputed_ = imputed_from_matches(d, match_sets)
        return self.imputed_


class MatchingGATE(_MatchingMixin, BaseGATE):
    """Matching-based GATE estimator.

    Imputes each unit's missing potential outcome by the mean outcome of its
    ``n_matches`` nearest opposite-arm neighbours (with replacement) and
    smooths the imputed contrasts over ``z``. No nuisance model is fitted.

    Parameters
    ----------
    n_matches : int
        Matches per unit.
    metric : {"euclidean", "manhattan", "canberra"}
    standardize : bool
        Scale covariates to unit sample standard deviation before matching.
    kernel : {"epanechnikov", "gaussian"}
    bandwidth : float or None
        Fixed bandwidth; ``None`` selects one by the rule of thumb.
    z_kind : {"continuous", "discrete"}
    """

    tag = "MATCH"

    def __init__(self, n_matches=5, metric="euclidean", standardize=False,
                 kernel="epanechnikov", bandwidth=None, z_kind="continuous"):
        self.n_matches = n_matches
        self.metric = metric
        self.standardize = standardize
        self.kernel = kernel
        self.bandwidth = bandwidth
        self.z_kind = z_kind

    def _pseudo_outcomes(self, d, match_sets=None):
        io = self._imputed(d, match_sets)
        return d.z, io.y1_hat - io.y0_hat


class BiasCorrectedMatchingGATE(_MatchingMixin, BaseGATE):
    """Matching estimator with outcome-regression bias correction.

    Each matched average is shifted by ``mu(X_i) - mean_j mu(X_j)``, where the
    mean runs over the unit's matches and ``mu`` is the outcome regression
    of the imputed arm. The regressions are cross-fitted over ``n_folds``
    folds. If a fold leaves an arm empty, fitting retries with one fold fewer,
    down to two.
    """

    tag = "MATCH_BC"

    def __init__(self, n_matches=5, metric="euclidean", standardize=False,
                 outcome_terms=None, n_folds=5, random_state=None,
                 kernel="epanechnikov", bandwidth=None, z_kind="continuous"):
        self.n_matches = n_matches
        self.metric = metric
        self.standardize = standardize
        self.outcome_terms = outcome_terms
        self.n_folds = n_folds
        self.random_state = random_state
        self.kernel = kernel
        self.bandwidth = bandwidth
        self.z_kind = z_kind

    def _cross_fit(self, d):
        spec = _resolve_spec(self.outcome_terms, d.x_names)
        k = self.n_folds
        while True:
            try:
                cf = cross_fit_outcome_models(d, spec, k, self.random_state)
            except FoldError:
                if k <= 2:
                    raise
                k -= 1
                self.diagnostics_["fold_retries"] = self.diagnostics_.get("fold_retries", 0) + 1
                continue
            self.diagnostics_["k_folds"] = k
            return cf.mu0_hat, cf.mu1_hat

    def _pseudo_outcomes(self, d, mu0=None, mu1=None, match_sets=None):
        mu0 = check_injected(mu0, d.n, "mu0")
        mu1 = check_injected(mu1, d.n, "mu1")
        if mu0 is None or mu1 is None:
            fit0, fit1 = self._cross_fit(d)
            mu0 = fit0 if mu0 is None else mu0
            mu1 = fit1 if mu1 is None else mu1
        io = self._imputed(d, match_sets)
        treated = d.a == 1
        sets = io.match_sets
        # the imputed arm is 0 for treated units and 1 for controls, and the
        # matches' regression values come from that same arm
        own = np.where(treated, mu0, mu1)
        matched = np.where(treated, mu0[sets].mean(axis=1), mu1[sets].mean(axis=1))
        correction = own - matched
        y1 = np.where(treated, io.y1_hat, io.y1_hat + correction)
        y0 = np.where(treated, io.y0_hat + correction, io.y0_hat)
        self.mu0_ = mu0
        self.mu1_ = mu1
        return d.z, y1 - y0


class _PropensityMixin:
    def _propensity(self, d, propensity):
        pi = check_injected(propensity, d.n, "propensity", open_unit=True)
        if pi is not None:
            self.diagnostics_["clipped_propensities"] = 0
            return pi
        spec = _resolve_spec(self.propensity_terms, d.x_names)
        fit = estimate_propensity(d, spec, self.clip_eps)
        self.diagnostics_["clipped_propensities"] = fit.clip_count
        self.diagnostics_["propensity_converged"] = fit.converged
        self.propensity_coef_ = fit.coef
        return fit.pi_hat


class _OutcomeMixin:
    def _outcomes(self, d, mu0, mu1):
        mu0 = check_injected(mu0, d.n, "mu0")
        mu1 = check_injected(mu1, d.n, "mu1")
        if mu0 is None or mu1 is None:
            spec = _resolve_spec(self.outcome_terms, d.x_names)
            fit0, fit1 = fit_outcome_models(d, spec)
            mu0 = fit0 if mu0 is None else mu0
            mu1 = fit1 if mu1 is None else mu1
        self.mu0_ = mu0
        self.mu1_ = mu1
        return mu0, mu1


def ipw_scores(a, y, pi):
    return a * y / pi - (1 - a) * y / (1.0 - pi)


def aipw_scores(a, y, pi, mu0, mu1):
    return a * (y - mu1) / pi - (1 - a) * (y - mu0) / (1.0 - pi) + (mu1 - mu0)


class IPWGATE(_PropensityMixin, BaseGATE):
    """Inverse probability weighted GATE estimator with a logistic propensity model."""

    tag = "IPW"

    def __init__(self, propensity_terms=None, clip_eps=1e-12, kernel="epanechnikov",
                 bandwidth=None, z_kind="continuous"):
        self.propensity_terms = propensity_terms
        self.clip_eps = clip_eps
        self.kernel = kernel
        self.bandwidth = bandwidth
        self.z_kind = z_kind

    def _pseudo_outcomes(self, d, propensity=None):
        pi = self._propensity(d, propensity)
        self.propensity_ = pi
        return d.z, ipw_scores(d.a, d.y, pi)


class OutcomeRegressionGATE(_OutcomeMixin, BaseGATE):
    """Smooths the contrast of full-sample arm-wise OLS predictions over ``z``."""

    tag = "OR"

    def __init__(self, outcome_terms=None, kernel="epanechnikov", bandwidth=None,
                 z_kind="continuous"):
        self.outcome_terms = outcome_terms
        self.kernel = kernel
        self.bandwidth = bandwidth
        self.z_kind = z_kind

    def _pseudo_outcomes(self, d, mu0=None, mu1=None):
        mu0, mu1 = self._outcomes(d, mu0, mu1)
        return d.z, mu1 - mu0


class AIPWGATE(_PropensityMixin, _OutcomeMixin, BaseGATE):
    """Augmented inverse probability weighted (doubly robust) GATE estimator."""

    tag = "AIPW"

    def __init__(self, propensity_terms=None, outcome_terms=None, clip_eps=1e-12,
                 kernel="epanechnikov", bandwidth=None, z_kind="continuous"):
        self.propensity_terms = propensity_terms
        self.outcome_terms = outcome_terms
        self.clip_eps = clip_eps
        self.kernel = kernel
        self.bandwidth = bandwidth
        self.z_kind = z_kind

    def _pseudo_outcomes(self, d, propensity=None, mu0=None, mu1=None):
        pi = self._propensity(d, propensity)
        mu0, mu1 = self._outcomes(d, mu0, mu1)
        self.propensity_ = pi
        return d.z, aipw_scores(d.a, d.y, pi, mu0, mu1)


class PSRGATE(_PropensityMixin, BaseGATE):
    """Propensity score regression GATE estimator.

    Step one fits a parametric propensity score. Step two estimates
    ``E[Y | A=a, Z, pi]`` in each arm with a product-kernel regression on
    ``(z, pi_hat)`` and evaluates the arm contrast at every observation.
    Step three smooths these contrasts over ``z``. An observation whose
    step-two window is empty in either arm is dropped from step three and
    counted in ``diagnostics_["excluded_observations"]``.

    ``bandwidth`` fixes the ``z`` bandwidth in both smoothing steps and
    ``pi_bandwidth`` fixes the propensity bandwidth. When left as ``None``,
    each is chosen per arm by the rule of thumb. A propensity that is
    constant within an arm gets bandwidth 1, since its kernel factor is then
    constant and cancels.
    """

    tag = "PSR"

    def __init__(self, propensity_terms=None, clip_eps=1e-12, kernel="epanechnikov",
                 bandwidth=None, pi_bandwidth=None, z_kind="continuous"):
        self.propensity_terms = propensity_terms
        self.clip_eps = clip_eps
        self.kernel = kernel
        self.bandwidth = bandwidth
        self.pi_bandwidth = pi_bandwidth
        self.z_kind = z_kind

    def _arm_bandwidths(self, z_arm, pi_arm):
        if self.z_kind == "discrete":
            hz = float("nan")
        elif self.bandwidth is not None:
            hz = float(self.bandwidth)
        else:
            hz = select_bandwidth(z_arm)
        if self.pi_bandwidth is not None:
            hp = float(self.pi_bandwidth)
        elif np.ptp(pi_arm) == 0:
            hp = 1.0
        else:
            hp = select_bandwidth(pi_arm)
        return hz, hp

    def _pseudo_outcomes(self, d, propensity=None):
        pi = self._propensity(d, propensity)
        self.propensity_ = pi
        arm_fit = np.empty((2, d.n))
        self.step_bandwidths_ = {}
        for arm in (0, 1):
            rows = d.a == arm
            hz, hp = self._arm_bandwidths(d.z[rows], pi[rows])
            self.step_bandwidths_[arm] = (hz, hp)
            wp = kernel_weights(pi[rows], pi, hp, self.kernel)
            if self.z_kind == "discrete":
                wz = (d.z[rows][None, :] == d.z[:, None]).astype(float)
            else:
                wz = kernel_weights(d.z[rows], d.z, hz, self.kernel)
            arm_fit[arm] = weighted_means(wz * wp, d.y[rows])
        contrast = arm_fit[1] - arm_fit[0]
        keep = ~np.isnan(contrast)
        self.diagnostics_["excluded_observations"] = int(np.count_nonzero(~keep))
        self.unit_effects_ = contrast
        if not keep.any():
            raise GateError("propensity score regression: every observation has an empty window")
        return d.z[keep], contrast[keep]


ESTIMATOR_CLASSES = {
    "MATCH": MatchingGATE,
    "MATCH_BC": BiasCorrectedMatchingGATE,
    "IPW": IPWGATE,
    "OR": OutcomeRegressionGATE,
    "AIPW": AIPWGATE,
    "PSR": PSRGATE,
}


def normalize_tag(name: str) -> str:
    """Map user spellings (``match.bc``, ``match_bc``, ``aipw``...) to canonical tags."""
    tag = name.strip().upper().replace(".", "_").replace("-", "_")
    if tag not in ESTIMATOR_CLASSES:
        raise ValueError(f"unknown estimator {name!r}; choose from {', '.join(TAGS)}")
    return tag


@dataclass(frozen=True)
class EstimatorConfig:
    """Everything needed to run one estimator.

    ``propensity_spec`` and ``outcome_spec`` default to main effects of all
    covariates. ``bandwidth=None`` selects the rule of thumb.
    """

    estimator: str = "MATCH"
    match: MatchConfig = field(default_factory=MatchConfig)
    propensity_spec: DesignSpec | None = None
    outcome_spec: DesignSpec | None = None
    bandwidth: float | None = None
    pi_bandwidth: float | None = None
    kernel: str = "epanechnikov"
    k_folds: int = 5
    clip_eps: float = 1e-12
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "estimator", normalize_tag(self.estimator))

    def make(self, z_kind="continuous") -> BaseGATE:
        common = dict(kernel=self.kernel, bandwidth=self.bandwidth, z_kind=z_kind)
        m = self.match
        tag = self.estimator
        if tag == "MATCH":
            return MatchingGATE(m.m, m.metric, m.standardize, **common)
        if tag == "MATCH_BC":
            return BiasCorrectedMatchingGATE(
                m.m, m.metric, m.standardize, self.outcome_spec, self.k_folds, self.seed,
                **common,
            )
        if tag == "IPW":
            return IPWGATE(self.propensity_spec, self.clip_eps, **common)
        if tag == "OR":
            return OutcomeRegressionGATE(self.outcome_spec, **common)
        if tag == "AIPW":
            return AIPWGATE(self.propensity_spec, self.outcome_spec, self.clip_eps, **common)
        return PSRGATE(self.propensity_spec, self.clip_eps, pi_bandwidth=self.pi_bandwidth,
                       **common)

    @property
    def uses_matching(self):
        return self.estimator in ("MATCH", "MATCH_BC")

    @property
    def deterministic(self):
        return self.estimator in DETERMINISTIC


def _grid(grid):
    return grid if isinstance(grid, EvaluationGrid) else EvaluationGrid(tuple(grid))


def estimate(d: Dataset, grid, cfg: EstimatorConfig, **nuisance) -> GateCurve:
    """Fit the configured estimator on ``d`` and evaluate it on ``grid``."""
    return cfg.make(d.z_kind).fit_dataset(d, **nuisance).curve(_grid(grid))


def estimate_match(d, grid, cfg=None, **nuisance):
    cfg = EstimatorConfig("MATCH") if cfg is None else replace(cfg, estimator="MATCH")
    return estimate(d, grid, cfg, **nuisance)


def estimate_match_bc(d, grid, cfg=None, **nuisance):
    cfg = EstimatorConfig("MATCH_BC") if cfg is None else replace(cfg, estimator="MATCH_BC")
    return estimate(d, grid, cfg, **nuisance)


def estimate_ipw(d, grid, cfg=None, **nuisance):
    cfg = EstimatorConfig("IPW") if cfg is None else replace(cfg, estimator="IPW")
    return estimate(d, grid, cfg, **nuisance)


def estimate_or(d, grid, cfg=None, **nuisance):
    cfg = EstimatorConfig("OR") if cfg is None else replace(cfg, estimator="OR")
    return estimate(d, grid, cfg, **nuisance)


def estimate_aipw(d, grid, cfg=None, **nuisance):
    cfg = EstimatorConfig("AIPW") if cfg is None else replace(cfg, estimator="AIPW")
    return estimate(d, grid, cfg, **nuisance)


def estimate_psr(d, grid, cfg=None, **nuisance):
    cfg = EstimatorConfig("PSR") if cfg is None else replace(cfg, estimator="PSR")
    return estimate(d, grid, cfg, **nuisance)


def estimate_many(d: Dataset, grid, cfgs) -> dict:
    """Run several estimators on one dataset, computing shared stages once.

    Match sets, full-sample propensity fits and full-sample outcome fits are
    cached by configuration. Returns ``{tag: GateCurve or GateError}``. A
    failing estimator does not stop the others.
    """
    grid = _grid(grid)
    cache = {}
    out = {}
    for cfg in cfgs:
        try:
            inject = {}
            extra_diag = {}
            if cfg.uses_matching:
                key = ("match", cfg.match)
                if key not in cache:
                    cache[key] = match_all(d, cfg.match)
                inject["match_sets"] = cache[key]
            if cfg.estimator in ("IPW", "AIPW", "PSR"):
                spec = cfg.propensity_spec or DesignSpec.main_effects(d.p)
                key = ("ps", spec, cfg.clip_eps)
                if key not in cache:
                    cache[key] = estimate_propensity(d, spec, cfg.clip_eps)
                fit = cache[key]
                inject["propensity"] = fit.pi_hat
                extra_diag = {"clipped_propensities": fit.clip_count,
                              "propensity_converged": fit.converged}
            if cfg.estimator in ("OR", "AIPW"):
                spec = cfg.outcome_spec or DesignSpec.main_effects(d.p)
                key = ("or", spec)
                if key not in cache:
                    cache[key] = fit_outcome_models(d, spec)
                inject["mu0"], inject["mu1"] = cache[key]
            curve = estimate(d, grid, cfg, **inject)
            curve.diagnostics.update(extra_diag)
            out[cfg.estimator] = curve
        except GateError as exc:
            out[cfg.estimator] = exc
    return out
