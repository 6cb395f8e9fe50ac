"""Differentially private estimation under structured Gaussian dependence."""

from .budget import PrivacyBudget, compose_advanced, compose_basic
from .histograms import (
    BinGrid,
    HistogramEstimate,
    IntervalMode,
    ProjectionInterval,
    bin_index,
    projection_interval_central,
    projection_interval_local,
    randomized_histogram,
    stable_histogram,
)
from .means import (
    ConcentrationSpec,
    MeanEstimate,
    concentration_radius,
    winsorized_mean_1d_central,
    winsorized_mean_1d_local,
    winsorized_mean_hd_central,
    winsorized_mean_hd_local,
    winsorized_mean_split,
)
from .mechanisms import (
    LaplaceNoiseSpec,
    laplace_mechanism,
    laplace_sample,
    randomized_response,
    response_probability,
)
from .rng import RngStream
from .synth import (
    CovarianceSpec,
    DependenceInfo,
    PowerIterationError,
    build_covariance,
    covariance_diagonal,
    covariance_matvec,
    log_sobolev_constant,
    sample_fixed_design,
    sample_gaussian,
    sample_random_effects,
    sample_regression,
    sample_user_level,
)
from .userlevel import (
    GlsCovariances,
    RegressionDataset,
    SingularDesignError,
    UserDataMatrix,
    gls_covariances,
    load_group_labels,
    load_regression_csv,
    longitudinal_radius,
    per_user_gls,
    per_user_ols,
    private_longitudinal_regression,
    random_effects_location,
    random_effects_rho,
    user_averages,
    user_level_mean_central,
    user_level_mean_local,
)
from .nonparam import (
    BoundaryError,
    FixedDesign,
    KernelSpec,
    contribution_vector,
    gaussian_kernel,
    interior_band,
    priestley_chao,
    private_regression_point,
    regression_radius,
    select_bandwidth,
    write_curve_csv,
)
from .varplugin import (
    VarianceSearchState,
    adaptive_coinpress,
    coverage,
    refine_midpoint,
    refine_variance,
    variance_bisection,
)
from .harness import (
    ConfigError,
    ExperimentConfig,
    SummaryStats,
    bias_variance_decompose,
    emit_results,
    parse_config,
    run_experiment,
)

__version__ = "0.1.0"
