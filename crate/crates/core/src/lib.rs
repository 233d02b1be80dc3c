//! Equivalence tests for the mean and variance functions of two samples of
//! functional data, based on the maximal deviation from an equivalence band
//! and bootstrap approximations on estimated extremal sets.
//!
//! * [`fdata`]: grid-discretized curves and the sup-norm algebra
//! * [`mean_test`]: two-sample mean test (iid and multiplier block bootstrap)
//! * [`random_effects`]: mean and variance tests for paired random-effects data
//! * [`tost`]: the pointwise TOST baseline
//! * [`simgen`]: simulation designs
//! * [`harness`]: Monte Carlo size/power experiments
//! * [`io`]: CSV formats

pub mod error;
pub mod fdata;
pub mod harness;
pub mod io;
pub mod random_effects;
pub mod rng;
pub mod simgen;
pub mod tost;

pub use error::{Error, Result};
pub use fdata::{
    empirical_quantile, estimate_extremal_sets, masked_max, mean_function, pointwise_variance,
    sup_deviation, EquivalenceBand, ExtremalSetMask, FunctionalSample, Grid, GridFunction,
};
pub use mean_test::{
    iid_bootstrap_path, mean_test, multiplier_block_path, BlockLengths, BootstrapMode,
    MeanTestConfig, TestResult,
};
pub use random_effects::{
    group_means, pooled_variance, re_mean_test, re_variance_test, Device, GroupRecord,
    PairedRESample, RETestConfig,
};
pub use tost::{tost_re_mean, tost_re_variance, tost_test, TostResult, TostVariant};
