"""Convolutional non-homogeneous Poisson processes on linear networks."""

from .convolution import (
    ConvCovariates,
    CovariatePanel,
    HistoryError,
    conv_covariate_matrix,
    conv_covariate_window,
    nc_apply,
    nc_nfold,
)
from .estimation import (
    FitError,
    FitResult,
    SolverConfig,
    fit_cnhpp,
    fit_hpp,
    fit_nhpp,
    hpp_log_likelihood,
    optimize_beta,
)
from .model import (
    EventLog,
    IntensityField,
    IntensityOverflowError,
    ModelParams,
    event_probability,
    gradient_bptt,
    log_intensity_recurrence,
    log_intensity_series,
    log_intensity_window,
    log_likelihood,
    nhpp_log_likelihood,
    nhpp_score,
    predict_intensity,
    subnet_count_distribution,
)
from .network import (
    LinearNetwork,
    NeighborConfig,
    Segment,
    WeightMatrix,
    build_network,
    build_weights,
    enumerate_walks,
    generation_neighbors,
    matrix_power_apply,
)
from .simulate import (
    RecoveryReport,
    Scenario,
    ScenarioConfig,
    gen_covariates,
    gen_network,
    recovery_experiment,
    sample_events,
    simulate_scenario,
    write_bundle,
)
from .validation import model_comparison, percentile_rank

__version__ = "0.1.0"
