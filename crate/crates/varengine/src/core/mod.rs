//! Foundational data types, rolling-window construction, sample statistics,
//! and the probability-distribution utilities shared by all estimators.

pub mod dist;
pub mod seed;
pub mod series;
pub mod stats;

pub use dist::{std_normal_cdf, std_normal_quantile, student_t_cdf, student_t_quantile};
pub use seed::derive_seed;
pub use series::{make_windows, ReturnSeries, SplitPlan, WindowPlan};
pub use stats::{sample_mean, sample_std, sample_variance};
