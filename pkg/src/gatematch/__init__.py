"""Group average treatment effect estimation by nearest-neighbour matching.

The package provides matching and bias-corrected matching estimators of
``tau(z) = E[Y1 - Y0 | Z = z]``, four competing estimators (IPW, outcome
regression, AIPW, propensity score regression), subsampling confidence
intervals and a Monte Carlo harness for the simulation designs C1-C12.
"""

__version__ = "0.1.0"

from .data import (  # noqa: E402
    DEFAULT_GRID,
    Dataset,
    EvaluationGrid,
    GateCurve,
    Schema,
    export_dataset,
    load_dataset,
)
from .estimators import (  # noqa: E402
    AIPWGATE,
    IPWGATE,
    PSRGATE,
    BiasCorrectedMatchingGATE,
    EstimatorConfig,
    MatchingGATE,
    OutcomeRegressionGATE,
    estimate_aipw,
    estimate_ipw,
    estimate_many,
    estimate_match,
    estimate_match_bc,
    estimate_or,
    estimate_psr,
)
from .exceptions import (  # noqa: E402
    BandwidthError,
    DataError,
    DimensionError,
    EmptyArmError,
    EmptyCellError,
    FoldError,
    GateError,
    InsufficientMatchesError,
    RankError,
    SchemaError,
    SubsampleError,
    TreatmentError,
)
from .inference import SubsampleConfig, subsample_ci  # noqa: E402
from .matching import MatchConfig, find_matches, impute_potential_outcomes  # noqa: E402
from .nuisance import DesignSpec, estimate_propensity  # noqa: E402
from .simulation import CASES, compare_metrics, generate_case, run_monte_carlo, true_gate  # noqa: E402
