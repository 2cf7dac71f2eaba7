//! Brute-force reference implementation of the studentized statistic.
//!
//! Same contract as [`cost_statistic`](crate::engine::cost_statistic), but
//! every quantity — residuals, the double-sum numerator, Σ̂, its inverse,
//! the projected weights w̃_i, and the conditional variance — is computed by
//! straight-line scalar loops over `Vec<Vec<f64>>`, with a hand-rolled
//! Gauss–Jordan inverse and Jacobi eigenvalue sweep instead of the batched
//! matrix algebra in the engine. The two paths share only the pieces whose
//! contracts are fixed elsewhere (the least-squares fit, the split, the
//! scalar weight evaluation, the normal CDF), so agreement between them
//! catches transcription errors in either.
//!
//! Guarded to n ≤ 500: this path is for verification, not production runs.

// Index loops here mirror the subscripted formulas on purpose; iterator
// rewrites would defeat the point of an independent transcription.
#![allow(clippy::needless_range_loop)]

use crate::engine::{p_value, split_sample, Sided, SplitSpec, TestResult, DEGENERATE_SD};
use crate::error::{CostError, Result};
use crate::model::{Dataset, ParametricModel};
use crate::nls::{fit, FitOptions};
use crate::weights::{bandwidth, eval_weight_raw, WeightSpec};

/// Largest sample size the brute-force path accepts.
const BRUTE_MAX_N: usize = 500;

/// Inverts a square matrix by Gauss–Jordan elimination with partial
/// pivoting. Errors on an effectively zero pivot.
pub(crate) fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    // Augmented system [A | I].
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = a[i].clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..n {
        let mut pivot_row = col;
        for r in col + 1..n {
            if m[r][col].abs() > m[pivot_row][col].abs() {
                pivot_row = r;
            }
        }
        let pivot = m[pivot_row][col];
        if !pivot.is_finite() || pivot.abs() < 1e-300 {
            return Err(CostError::Numeric(format!(
                "Gauss–Jordan pivot {pivot} in column {col}"
            )));
        }
        m.swap(col, pivot_row);
        for j in 0..2 * n {
            m[col][j] /= pivot;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for j in 0..2 * n {
                        m[r][j] -= f * m[col][j];
                    }
                }
            }
        }
    }
    Ok(m.into_iter().map(|row| row[n..].to_vec()).collect())
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub(crate) fn jacobi_eigenvalues(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let frob2: f64 = m.iter().flatten().map(|v| v * v).sum();
    let tol = 1e-28 * (1.0 + frob2);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() <= 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // Rotate columns then rows p and q.
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eigs: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    eigs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    eigs
}

/// Same ridge ladder as the engine, decided from Jacobi eigenvalues and
/// applied to a plain nested-vector copy of Σ̂.
fn ridge_for(sigma: &[Vec<f64>]) -> Result<f64> {
    let p = sigma.len();
    let eigs = jacobi_eigenvalues(sigma);
    let (lambda_min, lambda_max) = (eigs[0], eigs[p - 1]);
    if lambda_min > 0.0 && lambda_max / lambda_min <= 1e12 {
        return Ok(0.0);
    }
    let trace: f64 = (0..p).map(|i| sigma[i][i]).sum();
    if trace.is_nan() || trace <= 0.0 {
        return Err(CostError::SingularMatrix(format!(
            "gradient Gram matrix has non-positive trace {trace}; no ridge can fix it"
        )));
    }
    let mut ridge = 1e-8 * trace / p as f64;
    let cap = 1e-2 * trace / p as f64;
    loop {
        if lambda_min + ridge > 0.0 && (lambda_max + ridge) / (lambda_min + ridge) <= 1e12 {
            return Ok(ridge);
        }
        if ridge >= cap {
            return Err(CostError::SingularMatrix(format!(
                "gradient Gram matrix stayed numerically singular up to ridge {ridge:e}"
            )));
        }
        ridge = (ridge * 10.0).min(cap);
    }
}

/// Reference implementation of the studentized test (n ≤ 500).
pub fn brute_force_statistic(
    model: &ParametricModel,
    data: &Dataset,
    weight: &WeightSpec,
    split: &SplitSpec,
    fit_opts: &FitOptions,
) -> Result<TestResult> {
    weight.validate()?;
    let n = data.n();
    if n > BRUTE_MAX_N {
        return Err(CostError::Argument(format!(
            "brute-force path is capped at n = {BRUTE_MAX_N}, got {n}"
        )));
    }
    if data.q() != model.q() {
        return Err(CostError::Argument(format!(
            "dataset has q = {}, model expects q = {}",
            data.q(),
            model.q()
        )));
    }
    let p = model.p();
    let (d1, d2, plan) = split_sample(data, split, p)?;
    let (n1, n2) = (plan.n1, plan.n2);

    let fit1 = fit(model, &d1, fit_opts)?;
    let fit2 = fit(model, &d2, fit_opts)?;
    let fit_full = fit(model, data, fit_opts)?;

    // ê_i = Y_i − g(θ̂₁, X_i) on N1; ê_j = Y_j − g(θ̂₂, X_j) on N2.
    let mut e1 = vec![0.0; n1];
    for i in 0..n1 {
        e1[i] = d1.response(i) - model.eval_mean(&fit1.theta_hat, d1.row(i))?;
    }
    let mut e2 = vec![0.0; n2];
    for j in 0..n2 {
        e2[j] = d2.response(j) - model.eval_mean(&fit2.theta_hat, d2.row(j))?;
    }
    if e1.iter().chain(&e2).any(|v| !v.is_finite()) {
        return Err(CostError::Numeric(format!(
            "non-finite residuals while testing {}",
            model.label()
        )));
    }

    let h = bandwidth(weight.c, n);
    let mut w = vec![vec![0.0; n2]; n1];
    for i in 0..n1 {
        for j in 0..n2 {
            w[i][j] = eval_weight_raw(weight, d1.row(i), d2.row(j), h);
        }
    }

    // U = (1/√(n1·n2)) Σᵢ Σⱼ ê_i ê_j w_ij.
    let mut numerator = 0.0;
    for i in 0..n1 {
        for j in 0..n2 {
            numerator += e1[i] * e2[j] * w[i][j];
        }
    }
    numerator /= ((n1 * n2) as f64).sqrt();

    // Σ̂ = (1/n) Σ over the full data of ġ(θ̂)ġ(θ̂)ᵀ.
    let mut sigma = vec![vec![0.0; p]; p];
    for i in 0..n {
        let g = model.eval_gradient(&fit_full.theta_hat, data.row(i))?;
        for a in 0..p {
            for b in 0..p {
                sigma[a][b] += g[a] * g[b] / n as f64;
            }
        }
    }
    let ridge = ridge_for(&sigma)?;
    let mut ridged = sigma.clone();
    for k in 0..p {
        ridged[k][k] += ridge;
    }
    let sigma_inv = gauss_jordan_inverse(&ridged)?;

    // Gradients on N1 at the full-data estimate.
    let mut g1 = vec![vec![0.0; p]; n1];
    for (i, row) in g1.iter_mut().enumerate() {
        *row = model.eval_gradient(&fit_full.theta_hat, d1.row(i))?;
    }
    // a_j = (1/n1) Σᵢ ġ(θ̂, X_i) w_ij.
    let mut a = vec![vec![0.0; p]; n2];
    for j in 0..n2 {
        for k in 0..p {
            let mut sum = 0.0;
            for i in 0..n1 {
                sum += g1[i][k] * w[i][j];
            }
            a[j][k] = sum / n1 as f64;
        }
    }
    // w̃_i = (1/√n2) Σⱼ ê_j [w_ij − ġ(θ̂, X_i)ᵀ Σ̂⁻¹ a_j].
    let mut wtt = vec![0.0; n1];
    for i in 0..n1 {
        let mut sum = 0.0;
        for j in 0..n2 {
            let mut quad = 0.0;
            for k in 0..p {
                for l in 0..p {
                    quad += g1[i][k] * sigma_inv[k][l] * a[j][l];
                }
            }
            sum += e2[j] * (w[i][j] - quad);
        }
        wtt[i] = sum / (n2 as f64).sqrt();
    }

    // sd = √[(1/n1) Σᵢ (ê_i w̃_i − mean)²].
    let mut mean = 0.0;
    for i in 0..n1 {
        mean += e1[i] * wtt[i];
    }
    mean /= n1 as f64;
    let mut var = 0.0;
    for i in 0..n1 {
        let d = e1[i] * wtt[i] - mean;
        var += d * d;
    }
    var /= n1 as f64;
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
        bandwidth_used: h,
        converged_1: fit1.converged,
        converged_2: fit2.converged,
        converged_full: fit_full.converged,
    })
}
