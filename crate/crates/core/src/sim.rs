//! Monte Carlo size/power harness.
//!
//! Ten built-in scenarios (H11–H42) pair a data-generating process with the
//! null model to be fitted. Each generates Y = m₀(X) + a·l(X) + ε with
//! ε ~ N(0, 1) and X ~ N(0, Σ), where m₀ is the null mean, l the departure
//! direction, and a its magnitude — a = 0 measures empirical size, a > 0
//! empirical power. Σ is the identity or the AR(1)-type matrix 0.5^{|i−j|}.
//!
//! Replications are reproducible *streams*: replication r draws from a
//! generator keyed by (seed, r), so results do not depend on how many other
//! replications run or on the parallel schedule. Each replication draws, in
//! order: the n·q predictor normals (row by row), the n noise normals, a
//! split seed, and a restart seed for multi-start fitting.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{cost_statistic, Sided, SplitSpec};
use crate::error::{CostError, Result};
use crate::model::{make_model, Dataset, ModelFamily, ModelSpec, ParametricModel};
use crate::nls::FitOptions;
use crate::weights::WeightSpec;

/// The built-in simulation scenarios.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Study {
    /// Linear null β₁ᵀX; departure (β₂ᵀX)².
    H11,
    /// Null X₁ + cos(2X₂); departure exp(3X₂).
    H12,
    /// Linear null β₀ᵀX; departure exp(β₀ᵀX).
    H21,
    /// Null β₁ᵀX + exp(β₂ᵀX); departure exp(−β₀ᵀX).
    H22,
    /// Null X₁ + cos(2X₂); departure Σᵢ exp(3Xᵢ).
    H31,
    /// Null Σᵢ sin(β₀ᵢXᵢ); departure Σᵢ exp(3Xᵢ).
    H32,
    /// Null Σᵢ XᵢX_{i+1}; departure cos(β₀ᵀX).
    H33,
    /// Null Σᵢ XᵢX_{i+1}sin(πX_{i+2}); departure (β₀ᵀX)³.
    H34,
    /// Block-product sine null; departure (β₁ᵀX)².
    H41,
    /// Block-sum sine null; departure (β₁ᵀX)².
    H42,
}

impl Study {
    /// Stable identifier used in configs and result tables.
    pub fn id(&self) -> &'static str {
        match self {
            Study::H11 => "H11",
            Study::H12 => "H12",
            Study::H21 => "H21",
            Study::H22 => "H22",
            Study::H31 => "H31",
            Study::H32 => "H32",
            Study::H33 => "H33",
            Study::H34 => "H34",
            Study::H41 => "H41",
            Study::H42 => "H42",
        }
    }

    /// All studies, in reporting order.
    pub fn all() -> [Study; 10] {
        [
            Study::H11,
            Study::H12,
            Study::H21,
            Study::H22,
            Study::H31,
            Study::H32,
            Study::H33,
            Study::H34,
            Study::H41,
            Study::H42,
        ]
    }

    /// Parses a study identifier.
    pub fn parse(s: &str) -> Result<Study> {
        Study::all()
            .into_iter()
            .find(|st| st.id().eq_ignore_ascii_case(s))
            .ok_or_else(|| CostError::Config(format!("unknown study id {s:?}")))
    }

    fn needs_explicit_p(&self) -> bool {
        matches!(self, Study::H41 | Study::H42)
    }

    /// Smallest q the study's formulas make sense for.
    fn min_q(&self) -> usize {
        match self {
            Study::H11 | Study::H12 | Study::H22 | Study::H31 | Study::H33 => 2,
            Study::H21 | Study::H32 => 1,
            Study::H34 => 3,
            Study::H41 | Study::H42 => 2,
        }
    }
}

/// Predictor covariance: identity or 0.5^{|i−j|}.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovKind {
    /// Independent standard-normal coordinates.
    #[default]
    Identity,
    /// AR(1)-type decay, entry (i, j) = 0.5^{|i−j|}.
    ArHalf,
}

impl CovKind {
    /// Stable identifier used in configs and result tables.
    pub fn id(&self) -> &'static str {
        match self {
            CovKind::Identity => "identity",
            CovKind::ArHalf => "ar_half",
        }
    }
}

/// One Monte Carlo scenario: what to generate, what to fit, how to test.
#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig {
    /// Which built-in scenario.
    pub study: Study,
    /// Sample size per replication.
    pub n: usize,
    /// Predictor dimension.
    pub q: usize,
    /// Parameter dimension; required for H41/H42, derived from q elsewhere
    /// (must match the derived value when supplied).
    pub p: Option<usize>,
    /// Departure magnitude; 0 measures size, > 0 power.
    pub a: f64,
    /// Predictor covariance.
    pub sigma_kind: CovKind,
    /// Number of replications.
    pub reps: usize,
    /// Rejection level.
    pub alpha: f64,
    /// Master seed; replication r uses the stream keyed by (seed, r).
    pub seed: u64,
    /// Split fraction and mode (the per-replication split seed comes from
    /// the replication stream; the `seed` field here is ignored).
    pub split: SplitSpec,
    /// Weight function.
    pub weight: WeightSpec,
    /// Fit options (the per-replication restart seed comes from the
    /// replication stream; `restart_seed` here is ignored).
    pub fit: FitOptions,
    /// p-value convention used for rejection decisions.
    pub sided: Sided,
}

impl StudyConfig {
    /// A config with the reporting defaults: a = 0, identity covariance,
    /// 1000 replications at α = 0.05, hybrid weight with c = 1, 25% of the
    /// sample in N2, two-sided p-values, and five restarts whenever the
    /// study's null family recommends multi-start fitting (the cosine-index
    /// and block-sine families; see
    /// [`ModelFamily::multistart_recommended`]).
    pub fn new(study: Study, n: usize, q: usize) -> Self {
        let restarts = match study {
            Study::H12 | Study::H31 | Study::H41 | Study::H42 => 5,
            _ => 0,
        };
        Self {
            study,
            n,
            q,
            p: None,
            a: 0.0,
            sigma_kind: CovKind::Identity,
            reps: 1000,
            alpha: 0.05,
            seed: 0,
            split: SplitSpec::default(),
            weight: WeightSpec::default(),
            fit: FitOptions {
                restarts,
                ..FitOptions::default()
            },
            sided: Sided::Two,
        }
    }

    /// The parameter count of the fitted null model.
    pub fn fitted_p(&self) -> Result<usize> {
        let derived = match self.study {
            Study::H11 | Study::H21 => Some(self.q),
            Study::H12 | Study::H31 => Some(2),
            Study::H22 => Some(2 * self.q),
            Study::H32 => Some(self.q),
            Study::H33 => Some(self.q.saturating_sub(1)),
            Study::H34 => Some(self.q.saturating_sub(2)),
            Study::H41 | Study::H42 => None,
        };
        match (derived, self.p) {
            (Some(d), None) => Ok(d),
            (Some(d), Some(given)) if given == d => Ok(d),
            (Some(d), Some(given)) => Err(CostError::Config(format!(
                "study {} with q = {} implies p = {d}, but p = {given} was supplied",
                self.study.id(),
                self.q
            ))),
            (None, Some(given)) => Ok(given),
            (None, None) => Err(CostError::Config(format!(
                "study {} requires an explicit p",
                self.study.id()
            ))),
        }
    }

    /// Checks the configuration against the study's requirements.
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(CostError::Config("reps must be >= 1".into()));
        }
        if !(self.a >= 0.0 && self.a.is_finite()) {
            return Err(CostError::Config(format!(
                "departure magnitude a must be finite and >= 0, got {}",
                self.a
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CostError::Config(format!(
                "alpha must lie strictly in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.n < 4 {
            return Err(CostError::Config(format!(
                "simulation needs n >= 4, got {}",
                self.n
            )));
        }
        if self.q < self.study.min_q() {
            return Err(CostError::Config(format!(
                "study {} needs q >= {}, got {}",
                self.study.id(),
                self.study.min_q(),
                self.q
            )));
        }
        let p = self.fitted_p()?;
        if self.study.needs_explicit_p() && (p < 2 || p > self.q) {
            return Err(CostError::Config(format!(
                "study {} needs 2 <= p <= q, got p = {p}, q = {}",
                self.study.id(),
                self.q
            )));
        }
        self.weight.validate().map_err(|e| CostError::Config(e.to_string()))?;
        self.fit.validate().map_err(|e| CostError::Config(e.to_string()))?;
        // Building the model catches the remaining family constraints
        // (e.g. block widths too small for the sum-sine family).
        self.null_model()?;
        Ok(())
    }

    /// The null model fitted in every replication.
    pub fn null_model(&self) -> Result<ParametricModel> {
        let p = self.fitted_p()?;
        let family = match self.study {
            Study::H11 | Study::H21 => ModelFamily::Linear,
            Study::H12 | Study::H31 => ModelFamily::SingleIndexCosine,
            Study::H22 => ModelFamily::LinearPlusExpIndex,
            Study::H32 => ModelFamily::SineCoordinates,
            Study::H33 => ModelFamily::PairwiseInteraction,
            Study::H34 => ModelFamily::TripleInteractionSine,
            Study::H41 => ModelFamily::BlockProductSine { p },
            Study::H42 => ModelFamily::BlockSumSine { p },
        };
        make_model(&ModelSpec {
            family,
            q: self.q,
            beta: None,
        })
    }
}

/// Outcome of one completed replication.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RepOutcome {
    /// The studentized statistic.
    pub statistic: f64,
    /// Its p-value under the configured convention.
    pub p_value: f64,
    /// Whether p ≤ α.
    pub rejected: bool,
}

/// Aggregate over all replications of one config.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimResult {
    /// Fraction of completed replications with p ≤ α.
    pub rejection_rate: f64,
    /// √(r(1−r)/completed), the binomial Monte Carlo standard error.
    pub mc_standard_error: f64,
    /// Replications that produced a statistic.
    pub reps_completed: usize,
    /// Replications aborted by numeric errors (excluded from the rate).
    pub failures: usize,
    /// Mean statistic over completed replications.
    pub mean_statistic: f64,
    /// Sample standard deviation (n−1) of the statistic; 0 when fewer than
    /// two replications completed.
    pub sd_statistic: f64,
}

/// Covariance matrix for the predictor law.
pub fn covariance_matrix(kind: CovKind, q: usize) -> DMatrix<f64> {
    match kind {
        CovKind::Identity => DMatrix::identity(q, q),
        CovKind::ArHalf => DMatrix::from_fn(q, q, |i, j| {
            0.5f64.powi((i as i32 - j as i32).abs())
        }),
    }
}

/// Draws n rows i.i.d. N(0, Σ) as L·z with L the Cholesky factor of Σ.
/// Consumes exactly n·q standard normals from the generator, row by row.
pub fn sample_predictors(
    n: usize,
    sigma: &DMatrix<f64>,
    rng: &mut ChaCha12Rng,
) -> Result<DMatrix<f64>> {
    let q = sigma.nrows();
    if sigma.ncols() != q {
        return Err(CostError::Argument(format!(
            "covariance must be square, got {}x{}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    let identity = sigma.is_identity(0.0);
    let chol = if identity {
        None
    } else {
        Some(Cholesky::new(sigma.clone()).ok_or_else(|| {
            CostError::Numeric("predictor covariance is not positive definite".into())
        })?)
    };
    let mut out = DMatrix::zeros(n, q);
    let mut z = DVector::zeros(q);
    for i in 0..n {
        for k in 0..q {
            z[k] = rng.sample(StandardNormal);
        }
        match &chol {
            None => {
                for k in 0..q {
                    out[(i, k)] = z[k];
                }
            }
            Some(ch) => {
                let x = ch.l() * &z;
                for k in 0..q {
                    out[(i, k)] = x[k];
                }
            }
        }
    }
    Ok(out)
}

/// β₀ = (1, …, 1)ᵀ/√q.
pub(crate) fn beta_uniform(q: usize) -> Vec<f64> {
    vec![1.0 / (q as f64).sqrt(); q]
}

/// β₁ = (1, …, 1, 0, …, 0)ᵀ/√q₁ with q₁ = ⌊q/2⌋ leading ones.
pub(crate) fn beta_leading(q: usize) -> Vec<f64> {
    let q1 = q / 2;
    let v = 1.0 / (q1 as f64).sqrt();
    let mut b = vec![0.0; q];
    b[..q1].fill(v);
    b
}

/// β₂ = (0, …, 0, 1, …, 1)ᵀ/√q₁ with q₁ = ⌊q/2⌋ trailing ones.
pub(crate) fn beta_trailing(q: usize) -> Vec<f64> {
    let q1 = q / 2;
    let v = 1.0 / (q1 as f64).sqrt();
    let mut b = vec![0.0; q];
    b[q - q1..].fill(v);
    b
}

/// Study 4's β₁: a q-vector whose first p₁ = ⌊p/2⌋ entries are 1/√p₁.
pub(crate) fn beta_study4(q: usize, p: usize) -> Vec<f64> {
    let p1 = p / 2;
    let v = 1.0 / (p1 as f64).sqrt();
    let mut b = vec![0.0; q];
    b[..p1].fill(v);
    b
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The true parameter at which the null model reproduces the null mean.
fn theta_null(cfg: &StudyConfig) -> Result<Vec<f64>> {
    let q = cfg.q;
    Ok(match cfg.study {
        Study::H11 => beta_leading(q),
        Study::H12 | Study::H31 => vec![1.0, 2.0],
        Study::H21 => beta_uniform(q),
        Study::H22 => {
            let mut t = beta_leading(q);
            t.extend(beta_trailing(q));
            t
        }
        Study::H32 => beta_uniform(q),
        Study::H33 => vec![1.0; q - 1],
        Study::H34 => vec![1.0; q - 2],
        Study::H41 | Study::H42 => {
            let p = cfg.fitted_p()?;
            beta_study4(q, p)[..p].to_vec()
        }
    })
}

/// The departure a·l(x) added to the null mean.
fn departure(cfg: &StudyConfig, x: &[f64]) -> Result<f64> {
    let q = cfg.q;
    let l = match cfg.study {
        Study::H11 => dot(&beta_trailing(q), x).powi(2),
        Study::H12 => (3.0 * x[1]).exp(),
        Study::H21 => dot(&beta_uniform(q), x).exp(),
        Study::H22 => (-dot(&beta_uniform(q), x)).exp(),
        Study::H31 | Study::H32 => x.iter().map(|v| (3.0 * v).exp()).sum(),
        Study::H33 => dot(&beta_uniform(q), x).cos(),
        Study::H34 => dot(&beta_uniform(q), x).powi(3),
        Study::H41 | Study::H42 => {
            let p = cfg.fitted_p()?;
            dot(&beta_study4(q, p), x).powi(2)
        }
    };
    Ok(cfg.a * l)
}

/// Generates one replication's dataset and the null model to fit.
pub fn generate_scenario(
    cfg: &StudyConfig,
    rng: &mut ChaCha12Rng,
) -> Result<(Dataset, ParametricModel)> {
    generate_scenario_scaled(cfg, rng, 1.0)
}

/// As [`generate_scenario`] with the noise multiplied by `noise_scale`
/// (0 gives the noiseless mean surface; the normal draws are consumed
/// either way so streams stay aligned).
pub(crate) fn generate_scenario_scaled(
    cfg: &StudyConfig,
    rng: &mut ChaCha12Rng,
    noise_scale: f64,
) -> Result<(Dataset, ParametricModel)> {
    let model = cfg.null_model()?;
    let theta0 = theta_null(cfg)?;
    let sigma = covariance_matrix(cfg.sigma_kind, cfg.q);
    let x = sample_predictors(cfg.n, &sigma, rng)?;

    let mut predictors = Vec::with_capacity(cfg.n * cfg.q);
    for i in 0..cfg.n {
        for k in 0..cfg.q {
            predictors.push(x[(i, k)]);
        }
    }
    let mut responses = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let row = &predictors[i * cfg.q..(i + 1) * cfg.q];
        let eps: f64 = rng.sample(StandardNormal);
        let y = model.eval_mean(&theta0, row)? + departure(cfg, row)? + noise_scale * eps;
        responses.push(y);
    }
    let data = Dataset::from_row_major(predictors, cfg.n, cfg.q, responses)?;
    Ok((data, model))
}

/// The generator stream for replication `rep` of a run seeded with `seed`.
///
/// The 32-byte ChaCha key holds the seed, the replication index, and a
/// domain tag, so streams are independent across replications and runs.
pub fn rep_rng(seed: u64, rep: u64) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&rep.to_le_bytes());
    key[16..24].copy_from_slice(b"COSTREP0");
    ChaCha12Rng::from_seed(key)
}

/// Runs a single replication.
fn run_rep(cfg: &StudyConfig, rep: u64) -> Result<RepOutcome> {
    let mut rng = rep_rng(cfg.seed, rep);
    let (data, model) = generate_scenario(cfg, &mut rng)?;
    let split_seed: u64 = rng.random();
    let restart_seed: u64 = rng.random();
    let split = SplitSpec {
        fraction_n2: cfg.split.fraction_n2,
        mode: cfg.split.mode,
        seed: split_seed,
    };
    let fit_opts = FitOptions {
        restart_seed,
        ..cfg.fit.clone()
    };
    let res = cost_statistic(&model, &data, &cfg.weight, &split, &fit_opts)?;
    let p = res.p_value(cfg.sided);
    Ok(RepOutcome {
        statistic: res.statistic,
        p_value: p,
        rejected: p <= cfg.alpha,
    })
}

/// Runs all replications and aggregates, also returning the per-replication
/// outcomes (`None` where the replication failed), indexed by replication.
pub fn run_study_detailed(cfg: &StudyConfig) -> Result<(SimResult, Vec<Option<RepOutcome>>)> {
    cfg.validate()?;
    let runs: Vec<std::result::Result<RepOutcome, CostError>> = (0..cfg.reps as u64)
        .into_par_iter()
        .map(|rep| run_rep(cfg, rep))
        .collect();

    let failures = runs.iter().filter(|r| r.is_err()).count();
    if failures * 5 > cfg.reps {
        let first = runs
            .iter()
            .find_map(|r| r.as_ref().err())
            .map(|e| e.to_string())
            .unwrap_or_default();
        return Err(CostError::Harness(format!(
            "{failures} of {} replications failed for study {} (first failure: {first})",
            cfg.reps,
            cfg.study.id()
        )));
    }
    let outcomes: Vec<Option<RepOutcome>> = runs.into_iter().map(|r| r.ok()).collect();
    let completed: Vec<&RepOutcome> = outcomes.iter().flatten().collect();
    let m = completed.len();
    let rejection_rate = completed.iter().filter(|o| o.rejected).count() as f64 / m as f64;
    let mc_standard_error = (rejection_rate * (1.0 - rejection_rate) / m as f64).sqrt();
    let mean_statistic = completed.iter().map(|o| o.statistic).sum::<f64>() / m as f64;
    let sd_statistic = if m < 2 {
        0.0
    } else {
        let ss = completed
            .iter()
            .map(|o| (o.statistic - mean_statistic).powi(2))
            .sum::<f64>();
        (ss / (m - 1) as f64).sqrt()
    };
    Ok((
        SimResult {
            rejection_rate,
            mc_standard_error,
            reps_completed: m,
            failures,
            mean_statistic,
            sd_statistic,
        },
        outcomes,
    ))
}

/// Runs all replications of one config and aggregates.
pub fn run_study(cfg: &StudyConfig) -> Result<SimResult> {
    run_study_detailed(cfg).map(|(summary, _)| summary)
}

/// Runs a grid of configs in order, invoking `on_row` as each row finishes
/// (for incremental emission). Row errors abort the run and propagate.
pub fn run_grid_with<F>(cfgs: &[StudyConfig], mut on_row: F) -> Result<Vec<SimResult>>
where
    F: FnMut(usize, &StudyConfig, &SimResult),
{
    if cfgs.is_empty() {
        return Err(CostError::Config("simulation grid is empty".into()));
    }
    let mut rows = Vec::with_capacity(cfgs.len());
    for (idx, cfg) in cfgs.iter().enumerate() {
        let row = run_study(cfg)?;
        on_row(idx, cfg, &row);
        rows.push(row);
    }
    Ok(rows)
}

/// Runs a grid of configs in order.
pub fn run_grid(cfgs: &[StudyConfig]) -> Result<Vec<SimResult>> {
    run_grid_with(cfgs, |_, _, _| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn covariance_shapes_and_entries() {
        let id = covariance_matrix(CovKind::Identity, 3);
        assert_eq!(id, DMatrix::identity(3, 3));
        let ar = covariance_matrix(CovKind::ArHalf, 4);
        assert_relative_eq!(ar[(0, 2)], 0.25, max_relative = 1e-15);
        assert_relative_eq!(ar[(3, 3)], 1.0, max_relative = 1e-15);
        assert_relative_eq!(ar[(1, 0)], 0.5, max_relative = 1e-15);
        // Positive definite: Cholesky succeeds at q = 8.
        assert!(Cholesky::new(covariance_matrix(CovKind::ArHalf, 8)).is_some());
    }

    #[test]
    fn predictor_sampling_is_deterministic_and_matches_moments() {
        let sigma = covariance_matrix(CovKind::ArHalf, 3);
        let a = sample_predictors(50, &sigma, &mut rep_rng(7, 0)).unwrap();
        let b = sample_predictors(50, &sigma, &mut rep_rng(7, 0)).unwrap();
        assert_eq!(a, b);

        let n = 200_000;
        let x = sample_predictors(n, &sigma, &mut rep_rng(7, 1)).unwrap();
        for k in 0..3 {
            let mean: f64 = (0..n).map(|i| x[(i, k)]).sum::<f64>() / n as f64;
            assert!(mean.abs() <= 0.01, "column {k} mean {mean}");
        }
        for a in 0..3 {
            for b in 0..3 {
                let cov: f64 =
                    (0..n).map(|i| x[(i, a)] * x[(i, b)]).sum::<f64>() / n as f64;
                assert!(
                    (cov - sigma[(a, b)]).abs() <= 0.02,
                    "cov({a},{b}) = {cov}, want {}",
                    sigma[(a, b)]
                );
            }
        }
    }

    #[test]
    fn direction_vectors_match_published_pins() {
        let s2 = 2f64.sqrt();
        assert_eq!(beta_leading(5), vec![1.0 / s2, 1.0 / s2, 0.0, 0.0, 0.0]);
        assert_eq!(beta_trailing(5), vec![0.0, 0.0, 0.0, 1.0 / s2, 1.0 / s2]);
        for v in beta_uniform(5) {
            assert_relative_eq!(v, 1.0 / 5f64.sqrt(), max_relative = 1e-15);
        }
        let b4 = beta_study4(9, 4);
        assert_eq!(&b4[..2], &[1.0 / s2, 1.0 / s2]);
        assert!(b4[2..].iter().all(|&v| v == 0.0));
        assert_eq!(b4.len(), 9);
    }

    /// Independent transcription of each study's displayed formula, with
    /// its own inline index arithmetic.
    fn transcribed_mean(cfg: &StudyConfig, x: &[f64]) -> f64 {
        let q = cfg.q;
        let a = cfg.a;
        let b0 = beta_uniform(q);
        let b1 = beta_leading(q);
        let b2 = beta_trailing(q);
        let sum_exp3 = |x: &[f64]| x.iter().map(|v| (3.0 * v).exp()).sum::<f64>();
        match cfg.study {
            Study::H11 => dot(&b1, x) + a * dot(&b2, x).powi(2),
            Study::H12 => x[0] + (2.0 * x[1]).cos() + a * (3.0 * x[1]).exp(),
            Study::H21 => dot(&b0, x) + a * dot(&b0, x).exp(),
            Study::H22 => dot(&b1, x) + dot(&b2, x).exp() + a * (-dot(&b0, x)).exp(),
            Study::H31 => x[0] + (2.0 * x[1]).cos() + a * sum_exp3(x),
            Study::H32 => {
                x.iter().zip(&b0).map(|(xi, bi)| (bi * xi).sin()).sum::<f64>() + a * sum_exp3(x)
            }
            Study::H33 => {
                (0..q - 1).map(|i| x[i] * x[i + 1]).sum::<f64>() + a * dot(&b0, x).cos()
            }
            Study::H34 => {
                (0..q - 2)
                    .map(|i| x[i] * x[i + 1] * (PI * x[i + 2]).sin())
                    .sum::<f64>()
                    + a * dot(&b0, x).powi(3)
            }
            Study::H41 => {
                let p = cfg.p.unwrap();
                let r = q.div_ceil(p);
                let beta = beta_study4(q, p);
                let null: f64 = (0..p)
                    .map(|i| {
                        let prod: f64 = (i * r..((i + 1) * r).min(q)).map(|j| x[j]).product();
                        (beta[i] * prod).sin()
                    })
                    .sum();
                null + a * dot(&beta, x).powi(2)
            }
            Study::H42 => {
                let p = cfg.p.unwrap();
                let r = q.div_ceil(p);
                let r1 = r / 2;
                let beta = beta_study4(q, p);
                let null: f64 = (0..p)
                    .map(|i| {
                        let start = i * r;
                        let end = ((i + 1) * r).min(q);
                        let mid = (start + r1).min(end);
                        let s1: f64 = (start..mid).map(|j| x[j]).sum();
                        let s2: f64 = (mid..end).map(|j| x[j]).sum();
                        (beta[i] * s1 + s2).sin()
                    })
                    .sum();
                null + a * dot(&beta, x).powi(2)
            }
        }
    }

    #[test]
    fn noiseless_scenarios_match_display_transcriptions() {
        let cases: Vec<StudyConfig> = vec![
            StudyConfig::new(Study::H11, 9, 5),
            StudyConfig::new(Study::H12, 9, 3),
            StudyConfig::new(Study::H21, 9, 4),
            StudyConfig::new(Study::H22, 9, 5),
            StudyConfig::new(Study::H31, 9, 4),
            StudyConfig::new(Study::H32, 9, 3),
            StudyConfig::new(Study::H33, 9, 4),
            StudyConfig::new(Study::H34, 9, 5),
            StudyConfig {
                p: Some(3),
                ..StudyConfig::new(Study::H41, 9, 7)
            },
            StudyConfig {
                p: Some(3),
                ..StudyConfig::new(Study::H42, 9, 11)
            },
        ];
        for base in cases {
            for (a, sigma_kind) in [(0.0, CovKind::Identity), (0.7, CovKind::ArHalf)] {
                let cfg = StudyConfig {
                    a,
                    sigma_kind,
                    ..base.clone()
                };
                let mut rng = rep_rng(42, 0);
                let (data, _) = generate_scenario_scaled(&cfg, &mut rng, 0.0).unwrap();
                for i in 0..data.n() {
                    let want = transcribed_mean(&cfg, data.row(i));
                    let got = data.response(i);
                    assert!(
                        (want - got).abs() <= 1e-12 * (1.0 + want.abs()),
                        "{} a={a}: row {i}: {got} vs {want}",
                        cfg.study.id()
                    );
                }
            }
        }
    }

    #[test]
    fn noise_draws_are_consumed_even_when_scaled_out() {
        // The noiseless hook must leave the stream in the same state as the
        // noisy path, so split/restart seeds downstream are unaffected.
        let cfg = StudyConfig::new(Study::H11, 8, 2);
        let mut r1 = rep_rng(3, 0);
        let mut r2 = rep_rng(3, 0);
        generate_scenario_scaled(&cfg, &mut r1, 0.0).unwrap();
        generate_scenario(&cfg, &mut r2).unwrap();
        assert_eq!(r1.random::<u64>(), r2.random::<u64>());
    }

    #[test]
    fn config_validation_rejects_inconsistencies() {
        let ok = StudyConfig::new(Study::H11, 60, 4);
        ok.validate().unwrap();

        let mut bad = StudyConfig::new(Study::H11, 60, 4);
        bad.reps = 0;
        assert!(matches!(bad.validate(), Err(CostError::Config(_))));

        let mut bad = StudyConfig::new(Study::H11, 60, 4);
        bad.a = -0.5;
        assert!(matches!(bad.validate(), Err(CostError::Config(_))));

        let mut bad = StudyConfig::new(Study::H11, 60, 4);
        bad.alpha = 0.0;
        assert!(matches!(bad.validate(), Err(CostError::Config(_))));

        let mut bad = StudyConfig::new(Study::H34, 60, 2);
        bad.reps = 5;
        assert!(matches!(bad.validate(), Err(CostError::Config(_))));

        // H41 requires an explicit p within [2, q].
        assert!(matches!(
            StudyConfig::new(Study::H41, 60, 4).validate(),
            Err(CostError::Config(_))
        ));
        let mut h41 = StudyConfig::new(Study::H41, 60, 4);
        h41.p = Some(1);
        assert!(matches!(h41.validate(), Err(CostError::Config(_))));
        h41.p = Some(2);
        h41.validate().unwrap();

        // Supplied p must match the derived value elsewhere.
        let mut h11 = StudyConfig::new(Study::H11, 60, 4);
        h11.p = Some(3);
        assert!(matches!(h11.validate(), Err(CostError::Config(_))));
        h11.p = Some(4);
        h11.validate().unwrap();

        // Block-sum needs blocks of width >= 2: q = p gives width 1.
        let mut h42 = StudyConfig::new(Study::H42, 60, 4);
        h42.p = Some(4);
        assert!(matches!(h42.validate(), Err(CostError::Config(_))));
    }

    #[test]
    fn study_parse_roundtrips() {
        for s in Study::all() {
            assert_eq!(Study::parse(s.id()).unwrap(), s);
            assert_eq!(Study::parse(&s.id().to_lowercase()).unwrap(), s);
        }
        assert!(matches!(Study::parse("H99"), Err(CostError::Config(_))));
    }

    #[test]
    fn multistart_null_families_default_to_restarts() {
        assert_eq!(StudyConfig::new(Study::H41, 100, 16).fit.restarts, 5);
        assert_eq!(StudyConfig::new(Study::H42, 100, 16).fit.restarts, 5);
        assert_eq!(StudyConfig::new(Study::H12, 100, 2).fit.restarts, 5);
        assert_eq!(StudyConfig::new(Study::H31, 100, 8).fit.restarts, 5);
        assert_eq!(StudyConfig::new(Study::H11, 100, 4).fit.restarts, 0);
        assert_eq!(StudyConfig::new(Study::H32, 100, 4).fit.restarts, 0);
    }

    #[test]
    fn run_study_is_deterministic_and_consistent() {
        let mut cfg = StudyConfig::new(Study::H11, 40, 2);
        cfg.reps = 8;
        cfg.seed = 11;
        let (r1, o1) = run_study_detailed(&cfg).unwrap();
        let (r2, o2) = run_study_detailed(&cfg).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(o1, o2);
        assert_eq!(r1.reps_completed + r1.failures, 8);
        assert!((0.0..=1.0).contains(&r1.rejection_rate));
        let want_se = (r1.rejection_rate * (1.0 - r1.rejection_rate)
            / r1.reps_completed as f64)
            .sqrt();
        assert_relative_eq!(r1.mc_standard_error, want_se, max_relative = 1e-15);
    }

    #[test]
    fn replication_streams_are_independent_of_rep_count() {
        let mut short = StudyConfig::new(Study::H11, 40, 2);
        short.reps = 3;
        short.seed = 5;
        let mut long = short.clone();
        long.reps = 6;
        let (_, o_short) = run_study_detailed(&short).unwrap();
        let (_, o_long) = run_study_detailed(&long).unwrap();
        assert_eq!(&o_short[..], &o_long[..3]);
    }

    #[test]
    fn grid_preserves_order_and_emits_incrementally() {
        let mut a = StudyConfig::new(Study::H11, 40, 2);
        a.reps = 4;
        let mut b = a.clone();
        b.a = 0.25;
        let mut seen = Vec::new();
        let rows = run_grid_with(&[a.clone(), b.clone()], |idx, cfg, row| {
            seen.push((idx, cfg.a, row.reps_completed));
        })
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(seen[0].0, 0);
        assert_eq!(seen[1].0, 1);
        assert_eq!(seen[0].1, 0.0);
        assert_eq!(seen[1].1, 0.25);
        assert_eq!(rows[0], run_study(&a).unwrap());

        assert!(matches!(run_grid(&[]), Err(CostError::Config(_))));
    }

    #[test]
    fn systematic_breakage_is_a_harness_error() {
        // n = 4 at fraction 0.25 leaves n2 = 1 < 2, so every replication
        // fails and the failure share crosses the 20% threshold.
        let mut cfg = StudyConfig::new(Study::H11, 4, 2);
        cfg.reps = 5;
        let err = run_study(&cfg).unwrap_err();
        assert!(matches!(err, CostError::Harness(_)), "{err}");
        assert!(err.to_string().contains("5 of 5"), "{err}");
    }
}
