//! Specification testing for parametric regression models.
//!
//! Does E(Y|X) really follow a posited parametric form g(θ, X)? This crate
//! answers with a split-sample, conditionally studentized lack-of-fit test:
//! the sample is divided into two disjoint parts, the model is fitted on
//! each part (and on the full sample) by damped Gauss–Newton, the two
//! residual sets are linked through a nonnegative weight kernel into a
//! cross-sample U-statistic, and that numerator is studentized by a
//! standard deviation estimated conditionally on the second part. Under a
//! correct model the statistic is asymptotically standard normal — p-values
//! are plain normal tails, with no resampling — and the construction keeps
//! working when the predictor dimension grows with the sample size.
//!
//! The main entry point is [`cost_statistic`]. Around it:
//!
//! - [`model`] — datasets, the model abstraction, and nine built-in
//!   families (from plain linear to block-sine forms for q ≫ p);
//! - [`nls`] — the damped Gauss–Newton least-squares fitter;
//! - [`weights`] — weight kernels and the h = c·n^{−0.2} bandwidth rule;
//! - [`engine`] — splitting, the statistic, p-values, and the
//!   non-studentized pairwise diagnostic [`un_statistic`];
//! - [`brute`] — a scalar-loop oracle ([`brute_force_statistic`]) used to
//!   cross-check the engine;
//! - [`sim`] — a reproducible Monte Carlo harness with ten built-in
//!   size/power scenarios;
//! - [`io`] — CSV/TOML front-ends backing the `cost` binary.
//!
//! ```
//! use cost_core::{cost_statistic, make_model, Dataset, FitOptions,
//!                 ModelFamily, ModelSpec, SplitSpec, WeightSpec};
//!
//! // Twelve points with a mild bend; is a straight line through the
//! // origin an adequate mean?
//! let xs: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 / 2.0 - 3.0]).collect();
//! let ys: Vec<f64> = xs.iter().map(|r| 2.0 * r[0] + 0.3 * (r[0]).sin()).collect();
//! let data = Dataset::from_rows(xs, ys)?;
//! let model = make_model(&ModelSpec { family: ModelFamily::Linear, q: 1, beta: None })?;
//! let result = cost_statistic(&model, &data, &WeightSpec::default(),
//!                             &SplitSpec::default(), &FitOptions::default())?;
//! assert!(result.p_value_two_sided > 0.0 && result.p_value_two_sided <= 1.0);
//! assert_eq!(result.split.n1 + result.split.n2, 12);
//! # Ok::<(), cost_core::CostError>(())
//! ```

pub mod brute;
pub mod engine;
pub mod error;
pub mod io;
pub mod model;
pub mod nls;
pub mod normal;
pub mod sim;
pub mod weights;

pub use brute::brute_force_statistic;
pub use engine::{
    cost_statistic, cost_statistic_with, numerator_stat, p_value, sigma_hat, split_sample,
    un_statistic, Sided, SplitMode, SplitPlan, SplitSpec, TestResult, DEGENERATE_SD,
};
pub use error::{CostError, Result};
pub use model::{
    finite_difference_gradient, make_model, Dataset, ModelFamily, ModelSpec, ParametricModel,
};
pub use nls::{fit, FitOptions, FitResult};
pub use normal::{std_normal_cdf, std_normal_pdf};
pub use sim::{
    covariance_matrix, generate_scenario, rep_rng, run_grid, run_grid_with, run_study,
    run_study_detailed, sample_predictors, CovKind, RepOutcome, SimResult, Study, StudyConfig,
};
pub use weights::{bandwidth, eval_weight, weight_matrix, WeightKind, WeightSpec};
