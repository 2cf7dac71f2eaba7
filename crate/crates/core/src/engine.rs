//! The conditionally studentized specification test.
//!
//! Given a dataset split into disjoint subsamples N1 and N2, the statistic is
//! the ratio of a cross-sample U-statistic numerator
//!
//! ```text
//! U = (1 / √(n1·n2)) · Σ_{i∈N1} Σ_{j∈N2} ê_i ê_j w_ij,
//! ```
//!
//! built from subsample-specific least-squares residuals, to a standard
//! deviation estimated conditionally on N2:
//!
//! ```text
//! w̃_i  = (1/√n2) Σ_{j∈N2} ê_j · [w_ij − ġ(θ̂, X_i)ᵀ Σ̂⁻¹ a_j],
//! a_j  = (1/n1) Σ_{i∈N1} ġ(θ̂, X_i) · w_ij,
//! Σ̂    = (1/n) Σ_{i=1}^{n} ġ(θ̂, X_i) ġ(θ̂, X_i)ᵀ,
//! sd   = √[(1/n1) Σ_{i∈N1} {ê_i w̃_i − mean(ê w̃)}²],
//! ```
//!
//! with θ̂ the full-data estimator. Under a correctly specified model the
//! ratio V = U/sd is asymptotically standard normal, so p-values come from
//! Φ; under misspecification V drifts to +∞, which is why a one-sided
//! p-value is also offered.
//!
//! [`cost_statistic`] runs the whole pipeline from a [`WeightSpec`];
//! [`cost_statistic_with`] accepts an arbitrary weight function for custom
//! kernels. [`un_statistic`] computes the classical non-studentized
//! full-sample U-statistic as a diagnostic (its null distribution is not
//! pivotal, so it carries no p-value).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CostError, Result};
use crate::model::{Dataset, ParametricModel};
use crate::nls::{fit, FitOptions, FitResult};
use crate::normal::std_normal_cdf;
use crate::weights::{bandwidth, eval_weight_raw, WeightSpec};

/// Conditional standard deviations below this make the ratio meaningless.
pub const DEGENERATE_SD: f64 = 1e-12;

/// Condition-number cap beyond which Σ̂ gets a ridge before inversion.
const CONDITION_CAP: f64 = 1e12;

/// How observations are assigned to the two subsamples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Permute row indices with a seeded generator, then take the first n1
    /// as N1. Safe on datasets whose row order carries structure.
    #[default]
    SeededShuffle,
    /// Rows 1..n1 become N1, the remainder N2, in file order.
    AsOrdered,
}

impl SplitMode {
    /// Stable identifier used in configs and reports.
    pub fn id(&self) -> &'static str {
        match self {
            SplitMode::SeededShuffle => "seeded_shuffle",
            SplitMode::AsOrdered => "as_ordered",
        }
    }
}

/// Which tail(s) of the normal limit the p-value integrates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sided {
    /// 1 − Φ(v): misspecification drives the statistic to +∞.
    One,
    /// 2·(1 − Φ(|v|)), the reporting convention for real data.
    #[default]
    Two,
}

impl Sided {
    /// Stable identifier used in configs and reports.
    pub fn id(&self) -> &'static str {
        match self {
            Sided::One => "one",
            Sided::Two => "two",
        }
    }
}

/// Requested split: target N2 fraction, assignment mode, shuffle seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Fraction of observations assigned to N2, in (0, 1). Default 0.25.
    pub fraction_n2: f64,
    /// Assignment mode. Default seeded shuffle.
    pub mode: SplitMode,
    /// Seed for the shuffle (ignored by `as_ordered`).
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            fraction_n2: 0.25,
            mode: SplitMode::SeededShuffle,
            seed: 0,
        }
    }
}

/// A realized split: sizes plus the row indices of each subsample.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitPlan {
    /// Size of N1.
    pub n1: usize,
    /// Size of N2.
    pub n2: usize,
    /// Mode that produced the assignment.
    pub mode: SplitMode,
    /// Seed used (meaningful only for the shuffle mode).
    pub seed: u64,
    /// Fraction requested for N2.
    pub fraction_n2: f64,
    /// Original row indices (0-based) assigned to N1, in subsample order.
    pub indices_n1: Vec<usize>,
    /// Original row indices (0-based) assigned to N2, in subsample order.
    pub indices_n2: Vec<usize>,
}

/// Everything a single test run produces.
#[derive(Clone, Debug)]
pub struct TestResult {
    /// The studentized statistic V = numerator / conditional_sd.
    pub statistic: f64,
    /// The cross-sample U-statistic numerator.
    pub numerator: f64,
    /// The conditional standard-deviation estimate (≥ 1e-12).
    pub conditional_sd: f64,
    /// 2·(1 − Φ(|V|)).
    pub p_value_two_sided: f64,
    /// 1 − Φ(V).
    pub p_value_one_sided: f64,
    /// Least-squares estimate on N1.
    pub theta_hat_1: Vec<f64>,
    /// Least-squares estimate on N2.
    pub theta_hat_2: Vec<f64>,
    /// Least-squares estimate on the full sample (used in Σ̂ and w̃).
    pub theta_hat_full: Vec<f64>,
    /// The realized split.
    pub split: SplitPlan,
    /// Bandwidth h fed to the weight function.
    pub bandwidth_used: f64,
    /// Whether the N1 fit converged within its iteration budget.
    pub converged_1: bool,
    /// Whether the N2 fit converged within its iteration budget.
    pub converged_2: bool,
    /// Whether the full-sample fit converged within its iteration budget.
    pub converged_full: bool,
}

impl TestResult {
    /// True when all three least-squares fits converged.
    pub fn converged(&self) -> bool {
        self.converged_1 && self.converged_2 && self.converged_full
    }

    /// The p-value under the requested convention.
    pub fn p_value(&self, sided: Sided) -> f64 {
        match sided {
            Sided::One => self.p_value_one_sided,
            Sided::Two => self.p_value_two_sided,
        }
    }
}

/// Splits a dataset into disjoint subsamples N1 and N2.
///
/// n2 = round(fraction_n2 · n), n1 = n − n2. `p` is the parameter count of
/// the model to be fitted on each part; subsamples smaller than max(2, p)
/// are rejected as underdetermined.
pub fn split_sample(
    data: &Dataset,
    spec: &SplitSpec,
    p: usize,
) -> Result<(Dataset, Dataset, SplitPlan)> {
    let n = data.n();
    if n < 4 {
        return Err(CostError::Argument(format!(
            "splitting requires n >= 4, got {n}"
        )));
    }
    if !(spec.fraction_n2 > 0.0 && spec.fraction_n2 < 1.0) {
        return Err(CostError::Argument(format!(
            "fraction_n2 must lie strictly in (0, 1), got {}",
            spec.fraction_n2
        )));
    }
    let n2 = (spec.fraction_n2 * n as f64).round() as usize;
    let n1 = n - n2;
    let floor = p.max(2);
    if n1 < floor || n2 < floor {
        return Err(CostError::Underdetermined(format!(
            "split of n = {n} at fraction {} gives n1 = {n1}, n2 = {n2}; \
             both parts must have at least max(2, p) = {floor} rows",
            spec.fraction_n2
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    if spec.mode == SplitMode::SeededShuffle {
        let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
        order.shuffle(&mut rng);
    }
    let indices_n1 = order[..n1].to_vec();
    let indices_n2 = order[n1..].to_vec();
    let d1 = data.subset(&indices_n1)?;
    let d2 = data.subset(&indices_n2)?;
    Ok((
        d1,
        d2,
        SplitPlan {
            n1,
            n2,
            mode: spec.mode,
            seed: spec.seed,
            fraction_n2: spec.fraction_n2,
            indices_n1,
            indices_n2,
        },
    ))
}

/// Sample Gram matrix of model gradients, Σ̂ = (1/n) Σᵢ ġ(θ, Xᵢ) ġ(θ, Xᵢ)ᵀ.
pub fn sigma_hat(model: &ParametricModel, theta: &[f64], data: &Dataset) -> Result<DMatrix<f64>> {
    if data.n() == 0 {
        return Err(CostError::Argument("sigma_hat needs a nonempty dataset".into()));
    }
    if data.q() != model.q() {
        return Err(CostError::Argument(format!(
            "dataset has q = {}, model expects q = {}",
            data.q(),
            model.q()
        )));
    }
    if theta.len() != model.p() {
        return Err(CostError::Argument(format!(
            "theta has length {}, expected p = {}",
            theta.len(),
            model.p()
        )));
    }
    let p = model.p();
    let mut acc = DMatrix::zeros(p, p);
    let mut g = vec![0.0; p];
    for i in 0..data.n() {
        model.gradient_into(theta, data.row(i), &mut g);
        for a in 0..p {
            for b in 0..p {
                acc[(a, b)] += g[a] * g[b];
            }
        }
    }
    acc /= data.n() as f64;
    Ok(acc)
}

/// The cross-sample numerator (1/√(n1·n2)) Σᵢ Σⱼ ê₁ᵢ ê₂ⱼ W_ij.
pub fn numerator_stat(e1: &[f64], e2: &[f64], w: &DMatrix<f64>) -> Result<f64> {
    let (n1, n2) = (e1.len(), e2.len());
    if w.nrows() != n1 || w.ncols() != n2 {
        return Err(CostError::Argument(format!(
            "weight matrix is {}x{}, residuals imply {}x{}",
            w.nrows(),
            w.ncols(),
            n1,
            n2
        )));
    }
    if n1 == 0 || n2 == 0 {
        return Err(CostError::Argument("numerator needs nonempty residual vectors".into()));
    }
    let mut sum = 0.0;
    for i in 0..n1 {
        let mut row = 0.0;
        for j in 0..n2 {
            row += e2[j] * w[(i, j)];
        }
        sum += e1[i] * row;
    }
    Ok(sum / ((n1 * n2) as f64).sqrt())
}

/// Cholesky factorization of a symmetric PSD matrix, adding a ridge when its
/// eigenvalue condition estimate exceeds 1e12.
///
/// The ridge starts at 1e-8·trace/p and escalates tenfold up to 1e-2·trace/p;
/// if no rung produces an acceptably conditioned, factorizable matrix the
/// matrix is reported as singular.
pub(crate) fn regularized_cholesky(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let p = m.nrows();
    if m.iter().any(|v| !v.is_finite()) {
        return Err(CostError::Numeric(
            "gradient Gram matrix has non-finite entries".into(),
        ));
    }
    let eigs = m.clone().symmetric_eigenvalues();
    let lambda_min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
    let lambda_max = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lambda_min > 0.0 && lambda_max / lambda_min <= CONDITION_CAP {
        if let Some(ch) = Cholesky::new(m.clone()) {
            return Ok(ch);
        }
    }
    let trace = m.trace();
    if trace.is_nan() || trace <= 0.0 {
        return Err(CostError::SingularMatrix(format!(
            "gradient Gram matrix has non-positive trace {trace}; no ridge can fix it"
        )));
    }
    let mut ridge = 1e-8 * trace / p as f64;
    let ridge_cap = 1e-2 * trace / p as f64;
    loop {
        let conditioned = lambda_min + ridge > 0.0
            && (lambda_max + ridge) / (lambda_min + ridge) <= CONDITION_CAP;
        if conditioned {
            let mut damped = m.clone();
            for k in 0..p {
                damped[(k, k)] += ridge;
            }
            if let Some(ch) = Cholesky::new(damped) {
                return Ok(ch);
            }
        }
        if ridge >= ridge_cap {
            return Err(CostError::SingularMatrix(format!(
                "gradient Gram matrix stayed numerically singular up to ridge {ridge:e} \
                 (condition estimate {:e})",
                lambda_max / lambda_min.max(f64::MIN_POSITIVE)
            )));
        }
        ridge = (ridge * 10.0).min(ridge_cap);
    }
}

/// Runs the full test with a weight function described by a [`WeightSpec`],
/// using the bandwidth rule h = c·n^{−0.2}.
pub fn cost_statistic(
    model: &ParametricModel,
    data: &Dataset,
    weight: &WeightSpec,
    split: &SplitSpec,
    fit_opts: &FitOptions,
) -> Result<TestResult> {
    weight.validate()?;
    let h = bandwidth(weight.c, data.n());
    cost_statistic_with(model, data, split, fit_opts, h, |a, b| {
        eval_weight_raw(weight, a, b, h)
    })
}

/// Runs the full test with an arbitrary weight function.
///
/// `weight_fn(xi, xj)` must be symmetric, nonnegative, and finite; it is
/// evaluated on predictor-row pairs (N1 row, N2 row). `bandwidth_used` is
/// recorded in the result and is otherwise the caller's business (a custom
/// kernel captures whatever bandwidth it needs).
pub fn cost_statistic_with<F>(
    model: &ParametricModel,
    data: &Dataset,
    split: &SplitSpec,
    fit_opts: &FitOptions,
    bandwidth_used: f64,
    weight_fn: F,
) -> Result<TestResult>
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    if data.q() != model.q() {
        return Err(CostError::Argument(format!(
            "dataset has q = {}, model expects q = {}",
            data.q(),
            model.q()
        )));
    }
    let (d1, d2, plan) = split_sample(data, split, model.p())?;
    let (n, n1, n2, p) = (data.n(), plan.n1, plan.n2, model.p());

    let fit1 = fit(model, &d1, fit_opts)?;
    let fit2 = fit(model, &d2, fit_opts)?;
    let fit_full = fit(model, data, fit_opts)?;

    let e1 = model.residual_vector(&fit1.theta_hat, &d1)?;
    let e2 = model.residual_vector(&fit2.theta_hat, &d2)?;
    for (label, e) in [("N1", &e1), ("N2", &e2)] {
        if e.iter().any(|v| !v.is_finite()) {
            return Err(CostError::Numeric(format!(
                "non-finite residuals on {label} while testing {}",
                model.label()
            )));
        }
    }

    let w = DMatrix::from_fn(n1, n2, |i, j| weight_fn(d1.row(i), d2.row(j)));
    if w.iter().any(|v| !v.is_finite()) {
        return Err(CostError::Numeric("weight function produced non-finite values".into()));
    }

    let numerator = numerator_stat(&e1, &e2, &w)?;

    // Projection part of the conditional variance: Σ̂ from the full data at
    // the full-data estimate, a_j batched as (1/n1)·G1ᵀW.
    let sigma = sigma_hat(model, &fit_full.theta_hat, data)?;
    let chol = regularized_cholesky(&sigma)?;
    let mut g1 = DMatrix::zeros(n1, p);
    let mut buf = vec![0.0; p];
    for i in 0..n1 {
        model.gradient_into(&fit_full.theta_hat, d1.row(i), &mut buf);
        for k in 0..p {
            g1[(i, k)] = buf[k];
        }
    }
    let a = g1.transpose() * &w / n1 as f64; // p × n2
    let sia = chol.solve(&a); // Σ̂⁻¹ a_j, column per j
    let proj = &g1 * &sia; // (i,j) ↦ ġ(θ̂,Xᵢ)ᵀ Σ̂⁻¹ a_j
    let wtt = (&w - &proj) * DVector::from_column_slice(&e2) / (n2 as f64).sqrt();

    // sd² = (1/n1) Σᵢ (êᵢw̃ᵢ − mean)².
    let s: Vec<f64> = (0..n1).map(|i| e1[i] * wtt[i]).collect();
    let mean = s.iter().sum::<f64>() / n1 as f64;
    let var = s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n1 as f64;
    let conditional_sd = var.sqrt();
    if !conditional_sd.is_finite() || !numerator.is_finite() {
        return Err(CostError::Numeric(format!(
            "non-finite statistic parts (numerator {numerator}, sd {conditional_sd}) \
             while testing {}",
            model.label()
        )));
    }
    if conditional_sd < DEGENERATE_SD {
        return Err(CostError::DegenerateVariance(format!(
            "conditional standard deviation {conditional_sd:e} is below {DEGENERATE_SD:e} \
             (n = {n}, n1 = {n1}, n2 = {n2})"
        )));
    }

    let statistic = numerator / conditional_sd;
    Ok(TestResult {
        statistic,
        numerator,
        conditional_sd,
        p_value_two_sided: p_value(statistic, Sided::Two),
        p_value_one_sided: p_value(statistic, Sided::One),
        theta_hat_1: fit1.theta_hat,
        theta_hat_2: fit2.theta_hat,
        theta_hat_full: fit_full.theta_hat,
        split: plan,
        bandwidth_used,
        converged_1: fit1.converged,
        converged_2: fit2.converged,
        converged_full: fit_full.converged,
    })
}

/// The classical non-studentized U-statistic over the full sample,
/// (1/√(n(n−1))) Σ_{i≠j} êᵢ êⱼ w_ij with residuals from the full-sample fit.
///
/// Diagnostic only: its null distribution depends on unknowns, so no
/// p-value accompanies it. Returns the statistic and the full-sample fit.
pub fn un_statistic(
    model: &ParametricModel,
    data: &Dataset,
    weight: &WeightSpec,
    fit_opts: &FitOptions,
) -> Result<(f64, FitResult)> {
    weight.validate()?;
    let n = data.n();
    if n < 2 {
        return Err(CostError::Argument(format!(
            "the pairwise statistic requires n >= 2, got {n}"
        )));
    }
    let fit_full = fit(model, data, fit_opts)?;
    let e = model.residual_vector(&fit_full.theta_hat, data)?;
    let h = bandwidth(weight.c, n);
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += e[i] * e[j] * eval_weight_raw(weight, data.row(i), data.row(j), h);
            }
        }
    }
    let stat = sum / ((n * (n - 1)) as f64).sqrt();
    if !stat.is_finite() {
        return Err(CostError::Numeric(format!(
            "non-finite pairwise statistic while testing {}",
            model.label()
        )));
    }
    Ok((stat, fit_full))
}

/// Normal-limit p-value: two-sided 2(1 − Φ(|v|)), one-sided 1 − Φ(v).
pub fn p_value(statistic: f64, sided: Sided) -> f64 {
    match sided {
        Sided::Two => 2.0 * (1.0 - std_normal_cdf(statistic.abs())),
        Sided::One => 1.0 - std_normal_cdf(statistic),
    }
}
