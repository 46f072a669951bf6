"""Identification and estimator selection for linear path diagrams.

The package answers three questions about a treatment ``x`` and outcome
``y``: which covariate, instrument or mediator sets identify the total
effect; which of those estimators has the smallest asymptotic variance; and
whether that ordering can be certified from the graph alone.
"""

__version__ = "0.1.0"

from .errors import (
    CovarianceError,
    CycleError,
    GraphError,
    GraphParseError,
    IdSelectError,
    InvalidStrategyError,
    OverlappingSetsError,
    PathBudgetExceeded,
    SimulationError,
    SingularBlockError,
    WeakInstrumentError,
)
from .graph import (
    PathDiagram,
    d_separated,
    directed_paths,
    format_path_diagram,
    parse_path_diagram,
    read_path_diagram,
    remove_incoming,
    remove_outgoing,
    surgery,
    vertex_relations,
)
from .gaussian import (
    CovarianceMatrix,
    conditional_cov,
    implied_covariance,
    parse_covariance_csv,
    partial_corr,
    read_covariance_csv,
    regression_coeffs,
    regression_identity_residuals,
)
from .strategy import Strategy
from .estimators import (
    EstimateReport,
    back_door,
    compare_estimators,
    conditional_iv,
    estimate,
    front_door,
    total_effect_paths,
)
from .identification import (
    Basis,
    CriterionCertificate,
    DominanceVerdict,
    Rule,
    check_criterion,
    check_strategy,
    enumerate_criterion,
    graphical_dominance,
    recommend,
)
from .simulation import monte_carlo_variances, sample_mvn, sample_sem
from .datasets import embedded_dataset, published_report

__all__ = sorted(
    name for name, obj in globals().items() if not name.startswith("_") and not hasattr(obj, "__path__") and not hasattr(obj, "__file__")
)
