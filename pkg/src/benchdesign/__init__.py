"""Design, sample and analyse comparative experiments on algorithms."""
__version__ = "0.1.0"

from .analysis import (
    ComparisonResult,
    PairedDifferenceVector,
    analyze,
    holm_stepdown,
    joint_confidence_intervals,
    paired_differences,
    summarize,
    t_test_paired,
)
from .dist import DistParams, nct_cdf, nct_quantile, t_cdf, t_quantile
from .errors import (
    ApproximationWarning,
    BenchDesignError,
    ConfigError,
    DomainError,
    IncompleteDesignError,
    InsufficientDataError,
    PositivityError,
    RunError,
    SampleSizeOverflow,
)
from .kernels import BACKEND
from .power import (
    DesignResult,
    DesignSpec,
    PowerCurvePoint,
    design,
    fwer,
    holm_levels,
    n_paired_t,
    power_curve,
    power_paired_t,
)
from .runner import RunnerSpec, RunRecord, run_once
from .sampler import (
    InstanceSampleReport,
    ObservationSet,
    PairEstimate,
    SamplingConfig,
    SummaryStats,
    bootstrap_se,
    choose_next,
    plan_allocation,
    ratio_opt,
    sample_instance,
    se_percent_all,
    se_percent_one,
    se_simple,
)
from .state import ExperimentState, ResultsExport
from .validation import TruthConfig, validate_design
