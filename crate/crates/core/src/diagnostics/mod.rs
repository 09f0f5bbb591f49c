//! Chain efficiency, posterior comparisons and the estimator error-scaling study.

pub mod compare;
pub mod efficiency;
pub mod scaling;

pub use compare::{compare_columns, compare_posteriors, ks_statistic, DensityBin, ParameterComparison, PosteriorComparison};
pub use efficiency::{
    autocorrelations, efficiency_from_columns, efficiency_report, inefficiency_factor, monte_carlo_standard_error,
    EfficiencyReport, RelativeEfficiency,
};
pub use scaling::{error_scaling_study, log_mean_exp, ScalingCell, ScalingStudy, MIN_REPLICATIONS};
