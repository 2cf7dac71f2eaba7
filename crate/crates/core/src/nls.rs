//! Nonlinear least squares by damped Gauss–Newton (Levenberg–Marquardt).
//!
//! Minimizes L(θ) = Σᵢ {yᵢ − g(θ, xᵢ)}². Each iteration solves the damped
//! normal equations
//!
//! ```text
//! (JᵀJ + λI) δ = Jᵀê,     J = [ġ(θ, xᵢ)ᵀ]ᵢ,   ê = y − g(θ, ·),
//! ```
//!
//! accepts the step when it does not increase the loss (λ ← λ/2), rejects
//! it otherwise (λ ← 10λ), and stops on a relative loss decrease below
//! `loss_tolerance`, a step below `step_tolerance`, or the iteration
//! budget. A failed Cholesky factorization escalates λ tenfold up to 1e6
//! before reporting a numeric error, so rank-deficient JᵀJ is handled by
//! the damping itself.
//!
//! Multimodal fits (the block-sine families) can enable multi-start:
//! `restarts` extra runs from standard-normal initial points drawn from a
//! deterministic generator seeded with `restart_seed`, keeping the lowest
//! final loss. Random starts with a non-finite initial loss are skipped; a
//! non-finite loss at the configured initial point is always an error.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{CostError, Result};
use crate::model::{Dataset, ParametricModel};

/// Damping ceiling for the solve-failure escalation path.
const DAMPING_CEILING: f64 = 1e6;

/// Options controlling the fit.
#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    /// Iteration budget (each iteration is one jacobian build + one solve +
    /// one candidate evaluation). Default 200.
    pub max_iterations: usize,
    /// Stop when an accepted step decreases the loss by at most this
    /// fraction of the previous loss. Default 1e-10.
    pub loss_tolerance: f64,
    /// Stop when the proposed step satisfies ‖δ‖ ≤ tol·(1 + ‖θ‖).
    /// Default 1e-10.
    pub step_tolerance: f64,
    /// Starting point (length p); all-zeros when absent.
    pub initial_point: Option<Vec<f64>>,
    /// Initial damping λ. Default 1e-3.
    pub damping_initial: f64,
    /// Extra seeded random starts; the best final loss wins. Default 0.
    pub restarts: usize,
    /// Seed for the random-start generator (only used when restarts > 0).
    pub restart_seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            loss_tolerance: 1e-10,
            step_tolerance: 1e-10,
            initial_point: None,
            damping_initial: 1e-3,
            restarts: 0,
            restart_seed: 0,
        }
    }
}

impl FitOptions {
    /// Validates the option invariants.
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(CostError::Argument("max_iterations must be >= 1".into()));
        }
        for (name, v) in [
            ("loss_tolerance", self.loss_tolerance),
            ("step_tolerance", self.step_tolerance),
            ("damping_initial", self.damping_initial),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CostError::Argument(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if let Some(t) = &self.initial_point {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(CostError::Argument(
                    "initial_point has non-finite entries".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Result of a fit.
#[derive(Clone, Debug)]
pub struct FitResult {
    /// The fitted parameter vector (length p), always finite.
    pub theta_hat: Vec<f64>,
    /// Sum of squared residuals at `theta_hat`.
    pub final_loss: f64,
    /// Iterations consumed (by the winning start, under multi-start).
    pub iterations: usize,
    /// False only when the iteration budget ran out before a tolerance hit.
    pub converged: bool,
}

fn loss_at(model: &ParametricModel, data: &Dataset, theta: &[f64]) -> f64 {
    (0..data.n())
        .map(|i| {
            let e = data.response(i) - model.mean_raw(theta, data.row(i));
            e * e
        })
        .sum()
}

/// One damped Gauss–Newton run from `theta0` (whose loss `loss0` is already
/// known to be finite). Returns the accepted-iterate loss trace alongside
/// the result so tests can assert monotonicity.
fn fit_single(
    model: &ParametricModel,
    data: &Dataset,
    theta0: Vec<f64>,
    loss0: f64,
    opts: &FitOptions,
) -> Result<(FitResult, Vec<f64>)> {
    let n = data.n();
    let p = model.p();
    let mut theta = DVector::from_vec(theta0);
    let mut loss = loss0;
    let mut lambda = opts.damping_initial;
    let mut converged = false;
    let mut iterations = 0;
    let mut trace = vec![loss];

    let mut grad_buf = vec![0.0; p];
    while iterations < opts.max_iterations {
        iterations += 1;

        // Residuals and jacobian at the current iterate.
        let mut resid = DVector::zeros(n);
        let mut jac = DMatrix::zeros(n, p);
        for i in 0..n {
            let x = data.row(i);
            resid[i] = data.response(i) - model.mean_raw(theta.as_slice(), x);
            model.gradient_into(theta.as_slice(), x, &mut grad_buf);
            for (k, &g) in grad_buf.iter().enumerate() {
                jac[(i, k)] = g;
            }
        }
        let jtj = jac.transpose() * &jac;
        let jte = jac.transpose() * &resid;
        if jtj.iter().any(|v| !v.is_finite()) || jte.iter().any(|v| !v.is_finite()) {
            return Err(CostError::Numeric(format!(
                "non-finite jacobian while fitting {}",
                model.label()
            )));
        }

        // Solve (JᵀJ + λI) δ = Jᵀê, escalating λ on factorization failure.
        let delta = loop {
            let mut damped = jtj.clone();
            for k in 0..p {
                damped[(k, k)] += lambda;
            }
            match Cholesky::new(damped) {
                Some(ch) => break ch.solve(&jte),
                None => {
                    if lambda >= DAMPING_CEILING {
                        return Err(CostError::Numeric(format!(
                            "damped normal equations unsolvable at λ = {DAMPING_CEILING:e} \
                             while fitting {}",
                            model.label()
                        )));
                    }
                    lambda = (lambda * 10.0).min(DAMPING_CEILING);
                }
            }
        };

        if delta.norm() <= opts.step_tolerance * (1.0 + theta.norm()) {
            converged = true;
            break;
        }

        let candidate = &theta + &delta;
        let candidate_loss = loss_at(model, data, candidate.as_slice());
        if candidate_loss.is_finite() && candidate_loss <= loss {
            let drop = loss - candidate_loss;
            theta = candidate;
            loss = candidate_loss;
            trace.push(loss);
            lambda *= 0.5;
            if drop <= opts.loss_tolerance * trace[trace.len() - 2] {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
        }
    }

    Ok((
        FitResult {
            theta_hat: theta.as_slice().to_vec(),
            final_loss: loss,
            iterations,
            converged,
        },
        trace,
    ))
}

/// Fits θ̂ = argmin Σᵢ {yᵢ − g(θ, xᵢ)}² on a dataset (or subsample).
///
/// Errors: fewer rows than parameters → underdetermined; non-finite loss at
/// the configured initial point, or an unsolvable damped system → numeric.
pub fn fit(model: &ParametricModel, data: &Dataset, opts: &FitOptions) -> Result<FitResult> {
    opts.validate()?;
    let p = model.p();
    if data.q() != model.q() {
        return Err(CostError::Argument(format!(
            "dataset has q = {}, model expects q = {}",
            data.q(),
            model.q()
        )));
    }
    if data.n() < p {
        return Err(CostError::Underdetermined(format!(
            "{} observations cannot identify {} parameters for {}",
            data.n(),
            p,
            model.label()
        )));
    }
    let primary = match &opts.initial_point {
        Some(t) if t.len() != p => {
            return Err(CostError::Argument(format!(
                "initial_point has length {}, expected p = {}",
                t.len(),
                p
            )))
        }
        Some(t) => t.clone(),
        None => vec![0.0; p],
    };

    let loss0 = loss_at(model, data, &primary);
    if !loss0.is_finite() {
        return Err(CostError::Numeric(format!(
            "non-finite loss at the initial point while fitting {}",
            model.label()
        )));
    }
    let (mut best, _) = fit_single(model, data, primary, loss0, opts)?;

    if opts.restarts > 0 {
        let mut rng = ChaCha12Rng::seed_from_u64(opts.restart_seed);
        for _ in 0..opts.restarts {
            let start: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
            let start_loss = loss_at(model, data, &start);
            if !start_loss.is_finite() {
                continue;
            }
            if let Ok((candidate, _)) = fit_single(model, data, start, start_loss, opts) {
                if candidate.final_loss < best.final_loss {
                    best = candidate;
                }
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_model, ModelFamily, ModelSpec};
    use rand::RngExt;

    fn model(family: ModelFamily, q: usize) -> crate::model::ParametricModel {
        make_model(&ModelSpec {
            family,
            q,
            beta: None,
        })
        .unwrap()
    }

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    /// Noisy data from a linear model, plus its normal-equations solution
    /// computed independently (Cholesky on XᵀX assembled by loops).
    fn linear_instance(seed: u64, n: usize, q: usize) -> (Dataset, Vec<f64>) {
        let mut r = rng(seed);
        let theta0: Vec<f64> = (0..q).map(|_| r.random_range(-2.0..2.0)).collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..q).map(|_| r.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let ys: Vec<f64> = rows
            .iter()
            .map(|row| {
                let m: f64 = row.iter().zip(&theta0).map(|(&x, &t)| x * t).sum();
                m + 0.3 * r.sample::<f64, _>(StandardNormal)
            })
            .collect();
        // Normal equations XᵀX θ = Xᵀy, solved with nalgebra on an
        // independently assembled system.
        let mut xtx = DMatrix::zeros(q, q);
        let mut xty = DVector::zeros(q);
        for (row, &y) in rows.iter().zip(&ys) {
            for a in 0..q {
                xty[a] += row[a] * y;
                for b in 0..q {
                    xtx[(a, b)] += row[a] * row[b];
                }
            }
        }
        let sol = Cholesky::new(xtx).unwrap().solve(&xty);
        (
            Dataset::from_rows(rows, ys).unwrap(),
            sol.as_slice().to_vec(),
        )
    }

    #[test]
    fn linear_fit_matches_normal_equations() {
        for seed in [1u64, 2, 3] {
            let (data, want) = linear_instance(seed, 60, 4);
            let m = model(ModelFamily::Linear, 4);
            let res = fit(&m, &data, &FitOptions::default()).unwrap();
            assert!(res.converged);
            for (a, b) in res.theta_hat.iter().zip(&want) {
                assert!((a - b).abs() <= 1e-8, "seed {seed}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn linear_single_step_reaches_normal_equations_as_damping_vanishes() {
        let (data, want) = linear_instance(7, 50, 3);
        let m = model(ModelFamily::Linear, 3);
        let opts = FitOptions {
            max_iterations: 1,
            damping_initial: 1e-12,
            initial_point: Some(vec![0.9, -1.7, 0.4]),
            ..FitOptions::default()
        };
        let res = fit(&m, &data, &opts).unwrap();
        for (a, b) in res.theta_hat.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_noise_sine_recovery() {
        let m = model(ModelFamily::SineCoordinates, 3);
        let theta0 = [0.8, -0.5, 0.3];
        let mut r = rng(11);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..3).map(|_| r.random_range(-2.0..2.0)).collect())
            .collect();
        let ys: Vec<f64> = rows
            .iter()
            .map(|row| m.eval_mean(&theta0, row).unwrap())
            .collect();
        let data = Dataset::from_rows(rows, ys).unwrap();
        let res = fit(&m, &data, &FitOptions::default()).unwrap();
        assert!(res.final_loss <= 1e-12, "loss {}", res.final_loss);
        for (a, b) in res.theta_hat.iter().zip(&theta0) {
            assert!((a - b).abs() <= 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn scalar_sine_matches_grid_search() {
        // One-parameter problem g(θ, x) = sin(θx) where a dense grid over
        // [-3, 3] plus one parabolic refinement is an independent oracle
        // for the least-squares minimizer.
        let m = model(ModelFamily::SineCoordinates, 1);
        let mut r = rng(23);
        let theta_true = 1.3;
        let rows: Vec<Vec<f64>> = (0..30).map(|_| vec![r.random_range(-2.0..2.0)]).collect();
        let ys: Vec<f64> = rows
            .iter()
            .map(|row| (theta_true * row[0]).sin() + 0.1 * r.sample::<f64, _>(StandardNormal))
            .collect();
        let data = Dataset::from_rows(rows.clone(), ys.clone()).unwrap();

        let sse = |t: f64| -> f64 {
            rows.iter()
                .zip(&ys)
                .map(|(row, &y)| {
                    let e = y - (t * row[0]).sin();
                    e * e
                })
                .sum()
        };
        // Grid over [-3, 3] at step 1e-4, refined by a parabolic step.
        let mut best_t = -3.0;
        let mut best_v = f64::INFINITY;
        let mut k = 0;
        loop {
            let t = -3.0 + 1e-4 * k as f64;
            if t > 3.0 {
                break;
            }
            let v = sse(t);
            if v < best_v {
                best_v = v;
                best_t = t;
            }
            k += 1;
        }
        let (a, b, c) = (sse(best_t - 1e-4), best_v, sse(best_t + 1e-4));
        let denom = a - 2.0 * b + c;
        let refined = if denom > 0.0 {
            best_t + 1e-4 * 0.5 * (a - c) / denom
        } else {
            best_t
        };

        let opts = FitOptions {
            initial_point: Some(vec![0.5]),
            ..FitOptions::default()
        };
        let res = fit(&m, &data, &opts).unwrap();
        assert!(
            (res.theta_hat[0] - refined).abs() <= 2e-4,
            "NLS {} vs grid {refined}",
            res.theta_hat[0]
        );
    }

    #[test]
    fn accepted_loss_trace_is_monotone() {
        let m = model(ModelFamily::LinearPlusExpIndex, 2);
        let mut r = rng(31);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..2).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        let ys: Vec<f64> = rows
            .iter()
            .map(|row| {
                0.5 * row[0] - 0.25 * row[1] + (0.4 * row[0] + 0.2 * row[1]).exp()
                    + 0.2 * r.sample::<f64, _>(StandardNormal)
            })
            .collect();
        let data = Dataset::from_rows(rows, ys).unwrap();
        let start = vec![0.0; 4];
        let loss0 = loss_at(&m, &data, &start);
        let (_, trace) = fit_single(&m, &data, start, loss0, &FitOptions::default()).unwrap();
        assert!(trace.len() > 1);
        for w in trace.windows(2) {
            assert!(w[1] <= w[0], "loss increased: {w:?}");
        }
    }

    #[test]
    fn row_permutation_leaves_theta_unchanged() {
        let (data, _) = linear_instance(41, 45, 3);
        let m = model(ModelFamily::Linear, 3);
        let base = fit(&m, &data, &FitOptions::default()).unwrap();
        // Reverse is a permutation; rebuild the dataset in that order.
        let idx: Vec<usize> = (0..data.n()).rev().collect();
        let permuted = data.subset(&idx).unwrap();
        let perm = fit(&m, &permuted, &FitOptions::default()).unwrap();
        // Each run stops within step_tolerance·(1+‖θ‖) of the optimum, so
        // cross-ordering agreement is only of that order, not exact.
        for (a, b) in base.theta_hat.iter().zip(&perm.theta_hat) {
            assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn underdetermined_and_nonfinite_start_errors() {
        let m = model(ModelFamily::Linear, 3);
        let data = Dataset::from_rows(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]], vec![1.0, 2.0])
            .unwrap();
        assert!(matches!(
            fit(&m, &data, &FitOptions::default()),
            Err(CostError::Underdetermined(_))
        ));

        // exp overflows at the chosen start → non-finite initial loss.
        let me = model(ModelFamily::LinearPlusExpIndex, 1);
        let d = Dataset::from_rows(vec![vec![400.0], vec![500.0]], vec![0.0, 0.0]).unwrap();
        let opts = FitOptions {
            initial_point: Some(vec![0.0, 3.0]),
            ..FitOptions::default()
        };
        assert!(matches!(fit(&me, &d, &opts), Err(CostError::Numeric(_))));
    }

    #[test]
    fn restarts_never_worsen_the_loss() {
        let m = model(ModelFamily::BlockProductSine { p: 2 }, 4);
        let mut r = rng(53);
        let theta0 = [1.9, -1.4];
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..4).map(|_| r.random_range(-1.5..1.5)).collect())
            .collect();
        let ys: Vec<f64> = rows
            .iter()
            .map(|row| m.eval_mean(&theta0, row).unwrap() + 0.1 * r.sample::<f64, _>(StandardNormal))
            .collect();
        let data = Dataset::from_rows(rows, ys).unwrap();
        let plain = fit(&m, &data, &FitOptions::default()).unwrap();
        for seed in 0..4u64 {
            let opts = FitOptions {
                restarts: 5,
                restart_seed: seed,
                ..FitOptions::default()
            };
            let multi = fit(&m, &data, &opts).unwrap();
            assert!(multi.final_loss <= plain.final_loss + 1e-12);
        }
    }

    #[test]
    fn budget_exhaustion_reports_converged_false() {
        let (data, _) = linear_instance(61, 40, 3);
        let m = model(ModelFamily::Linear, 3);
        let opts = FitOptions {
            max_iterations: 1,
            ..FitOptions::default()
        };
        let res = fit(&m, &data, &opts).unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations, 1);
    }
}
