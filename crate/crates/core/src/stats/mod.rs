//! Untransformed two-sample statistics and their calibration.
//!
//! * [`components`]: per-coordinate U-statistics `T_nk`, squared mean
//!   differences and standardisers;
//! * [`sum`]: the CQ, BS and Oracle sum statistics and their normal tests;
//! * [`threshold`]: single- and multi-level thresholding statistics;
//! * [`gumbel`]: extreme-value critical values for the multi-level tests;
//! * [`boundary`] and [`snr`]: analysis-only detection boundaries and
//!   signal-to-noise ratios.

pub mod boundary;
pub mod components;
pub mod gumbel;
pub mod outcome;
pub mod snr;
pub mod sum;
pub mod threshold;

pub use boundary::{detection_boundary, DetectionPoint};
pub use components::{component_stats, ComponentStats, Standardization};
pub use gumbel::{gumbel_a, gumbel_b, gumbel_critical, gumbel_pvalue};
pub use outcome::{Method, PValueSource, TestOutcome};
pub use snr::{cq_null_variance, snr_analysis, CorrelationModel, SnrKind};
pub use sum::{
    bs_statistic, bs_test, cq_null_variance_estimate, cq_statistic, cq_test,
    null_variance_estimate_on, oracle_statistic, oracle_test, DEFAULT_VARIANCE_BAND,
};
pub use threshold::{
    candidate_grid, multi_threshold_statistic, multi_threshold_test, null_moments,
    single_level_test, threshold_level, threshold_statistic, Exceedances, MultiLevel, NullMoments,
    ThresholdConfig, Variant, DEFAULT_ETA,
};
