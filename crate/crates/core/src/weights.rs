//! Weight functions W(x, x′) and the bandwidth rule.
//!
//! Four kinds are provided:
//!
//! * `inverse_sqrt` — 1/√(‖x−x′‖² + 1), a global-smoothing weight;
//! * `gaussian` — exp(−‖x−x′‖²/2);
//! * `kernel_sum` — Σ_{k=1}^{q} φ((x_k−x′_k)/h)/h with φ the standard
//!   Gaussian density, a coordinate-summed local-smoothing weight that keeps
//!   working as q grows (no 1/hᵠ factor: studentization cancels it);
//! * `hybrid` — 0.5·(inverse_sqrt + kernel_sum), the default used in all
//!   reported simulations.
//!
//! With `normalize_by_q` (the default for `kernel_sum` and `hybrid`) the
//! kernel sum is divided by q so its moments stay bounded as the dimension
//! grows. The bandwidth follows h = c·n^{−0.2} with default c = 1, where n
//! is the full sample size.
//!
//! All weights are symmetric in (x, x′) and nonnegative.

use nalgebra::DMatrix;

use crate::error::{CostError, Result};
use crate::model::Dataset;
use crate::normal::std_normal_pdf;

/// The weight-kernel kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    InverseSqrt,
    Gaussian,
    KernelSum,
    Hybrid,
}

impl WeightKind {
    /// Whether the kernel sum is divided by q by default for this kind.
    pub fn default_normalize_by_q(self) -> bool {
        matches!(self, WeightKind::KernelSum | WeightKind::Hybrid)
    }

    /// Identifier string as used by the CLI and config files.
    pub fn id(self) -> &'static str {
        match self {
            WeightKind::InverseSqrt => "inverse_sqrt",
            WeightKind::Gaussian => "gaussian",
            WeightKind::KernelSum => "kernel_sum",
            WeightKind::Hybrid => "hybrid",
        }
    }
}

/// Weight configuration: kind, bandwidth constant c, and the kernel-sum
/// normalization flag.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightSpec {
    pub kind: WeightKind,
    /// Bandwidth constant in h = c·n^{−0.2}; must be positive.
    pub c: f64,
    /// Divide the kernel sum by q (defaults to true for `kernel_sum` and
    /// `hybrid`, false otherwise, where it has no effect).
    pub normalize_by_q: bool,
}

impl WeightSpec {
    /// A spec with c = 1 and the kind's default normalization.
    pub fn new(kind: WeightKind) -> Self {
        Self {
            kind,
            c: 1.0,
            normalize_by_q: kind.default_normalize_by_q(),
        }
    }

    /// Validates the invariants (c positive and finite).
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(CostError::Argument(format!(
                "bandwidth constant c must be positive and finite, got {}",
                self.c
            )));
        }
        Ok(())
    }
}

impl Default for WeightSpec {
    /// The hybrid weight with c = 1, as used in the reported simulations.
    fn default() -> Self {
        Self::new(WeightKind::Hybrid)
    }
}

/// Bandwidth rule h = c·n^{−0.2}.
///
/// Requires c > 0 and n ≥ 1.
pub fn bandwidth(c: f64, n: usize) -> f64 {
    assert!(c > 0.0 && c.is_finite(), "bandwidth constant must be positive");
    assert!(n >= 1, "bandwidth needs a positive sample size");
    c * (n as f64).powf(-0.2)
}

/// Σ_k φ((xi_k − xj_k)/h)/h, divided by q when requested.
fn kernel_sum(xi: &[f64], xj: &[f64], h: f64, normalize_by_q: bool) -> f64 {
    let total: f64 = xi
        .iter()
        .zip(xj)
        .map(|(&a, &b)| std_normal_pdf((a - b) / h) / h)
        .sum();
    if normalize_by_q {
        total / xi.len() as f64
    } else {
        total
    }
}

fn squared_distance(xi: &[f64], xj: &[f64]) -> f64 {
    xi.iter()
        .zip(xj)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum()
}

/// Weight evaluation without argument checks (callers validate once).
pub(crate) fn eval_weight_raw(spec: &WeightSpec, xi: &[f64], xj: &[f64], h: f64) -> f64 {
    match spec.kind {
        WeightKind::InverseSqrt => 1.0 / (squared_distance(xi, xj) + 1.0).sqrt(),
        WeightKind::Gaussian => (-0.5 * squared_distance(xi, xj)).exp(),
        WeightKind::KernelSum => kernel_sum(xi, xj, h, spec.normalize_by_q),
        WeightKind::Hybrid => {
            0.5 * (1.0 / (squared_distance(xi, xj) + 1.0).sqrt()
                + kernel_sum(xi, xj, h, spec.normalize_by_q))
        }
    }
}

/// Evaluates the weight W(xi, xj) at bandwidth h. Always nonnegative.
pub fn eval_weight(spec: &WeightSpec, xi: &[f64], xj: &[f64], h: f64) -> Result<f64> {
    spec.validate()?;
    if xi.len() != xj.len() {
        return Err(CostError::Argument(format!(
            "weight arguments have different lengths ({} vs {})",
            xi.len(),
            xj.len()
        )));
    }
    if xi.is_empty() {
        return Err(CostError::Argument("weight arguments are empty".into()));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(CostError::Argument(format!(
            "bandwidth must be positive and finite, got {h}"
        )));
    }
    Ok(eval_weight_raw(spec, xi, xj, h))
}

/// The n1×n2 matrix with entry (i, j) = W(aᵢ, bⱼ) over the predictor rows
/// of two datasets.
pub fn weight_matrix(
    spec: &WeightSpec,
    a: &Dataset,
    b: &Dataset,
    h: f64,
) -> Result<DMatrix<f64>> {
    spec.validate()?;
    if a.q() != b.q() {
        return Err(CostError::Argument(format!(
            "weight_matrix needs matching predictor dimensions ({} vs {})",
            a.q(),
            b.q()
        )));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(CostError::Argument(format!(
            "bandwidth must be positive and finite, got {h}"
        )));
    }
    let (n1, n2) = (a.n(), b.n());
    Ok(DMatrix::from_fn(n1, n2, |i, j| {
        eval_weight_raw(spec, a.row(i), b.row(j), h)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(rows: Vec<Vec<f64>>) -> Dataset {
        let n = rows.len();
        Dataset::from_rows(rows, vec![0.0; n]).unwrap()
    }

    #[test]
    fn bandwidth_formula_values() {
        // Frozen from mpmath: 100^{-0.2} and 1.5·400^{-0.2}.
        assert!((bandwidth(1.0, 100) - 0.3981071705534972).abs() < 1e-15);
        assert!((bandwidth(1.5, 400) - 0.4525632252408872).abs() < 1e-15);
        assert_eq!(bandwidth(1.0, 1), 1.0);
    }

    #[test]
    fn inverse_sqrt_is_one_at_coincidence() {
        let spec = WeightSpec::new(WeightKind::InverseSqrt);
        let x = [0.3, -1.2, 4.0];
        assert_eq!(eval_weight(&spec, &x, &x, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn gaussian_closed_form() {
        let spec = WeightSpec::new(WeightKind::Gaussian);
        // ‖xi−xj‖² = 2 → e^{−1}
        let w = eval_weight(&spec, &[1.0, 1.0], &[0.0, 0.0], 1.0).unwrap();
        assert!((w - 0.36787944117144233).abs() < 1e-15);
    }

    #[test]
    fn hybrid_hand_value_at_coincidence() {
        // q=4, xi=xj, h=0.398107, normalize_by_q → 0.5·(1 + φ(0)/h);
        // hand value frozen from mpmath: 1.0010490652028634.
        let spec = WeightSpec::new(WeightKind::Hybrid);
        let x = [0.1, 0.2, 0.3, 0.4];
        let w = eval_weight(&spec, &x, &x, 0.398107).unwrap();
        assert!((w - 1.0010490652028634).abs() < 1e-12, "got {w}");
        // and with the exact h = 100^{-0.2}: 1.0010488505479245
        let w2 = eval_weight(&spec, &x, &x, bandwidth(1.0, 100)).unwrap();
        assert!((w2 - 1.0010488505479245).abs() < 1e-12, "got {w2}");
    }

    #[test]
    fn kernel_sum_normalization_bounds() {
        // With normalize_by_q the value at coincidence is φ(0)/h for every q.
        let h = 0.7;
        for q in 1..8 {
            let spec = WeightSpec::new(WeightKind::KernelSum);
            let x = vec![0.25; q];
            let w = eval_weight(&spec, &x, &x, h).unwrap();
            assert!((w - std_normal_pdf(0.0) / h).abs() < 1e-14);
        }
        // Without normalization the raw sum scales with q.
        let spec = WeightSpec {
            kind: WeightKind::KernelSum,
            c: 1.0,
            normalize_by_q: false,
        };
        let x = vec![0.25; 5];
        let w = eval_weight(&spec, &x, &x, h).unwrap();
        assert!((w - 5.0 * std_normal_pdf(0.0) / h).abs() < 1e-13);
    }

    #[test]
    fn weights_are_symmetric_and_nonnegative() {
        let xs = [
            vec![0.0, 0.0, 0.0],
            vec![1.0, -2.0, 0.5],
            vec![10.0, 10.0, -10.0],
            vec![0.3, 0.31, 0.29],
        ];
        for kind in [
            WeightKind::InverseSqrt,
            WeightKind::Gaussian,
            WeightKind::KernelSum,
            WeightKind::Hybrid,
        ] {
            let spec = WeightSpec::new(kind);
            for a in &xs {
                for b in &xs {
                    let wab = eval_weight(&spec, a, b, 0.4).unwrap();
                    let wba = eval_weight(&spec, b, a, 0.4).unwrap();
                    assert_eq!(wab.to_bits(), wba.to_bits(), "{kind:?}");
                    assert!(wab >= 0.0);
                }
            }
        }
    }

    #[test]
    fn coincidence_maximizes_bounded_kinds() {
        for kind in [WeightKind::InverseSqrt, WeightKind::Gaussian] {
            let spec = WeightSpec::new(kind);
            let a = [0.5, -0.5];
            assert_eq!(eval_weight(&spec, &a, &a, 1.0).unwrap(), 1.0);
            for b in [[0.6, -0.5], [2.0, 1.0], [-3.0, 4.0]] {
                assert!(eval_weight(&spec, &a, &b, 1.0).unwrap() <= 1.0);
            }
        }
    }

    #[test]
    fn weight_matrix_matches_scalar_evaluation() {
        let spec = WeightSpec::default();
        let a = dataset(vec![vec![0.0, 1.0], vec![2.0, -1.0], vec![0.5, 0.5]]);
        let b = dataset(vec![vec![1.0, 1.0], vec![-2.0, 0.0]]);
        let h = 0.6;
        let w = weight_matrix(&spec, &a, &b, h).unwrap();
        assert_eq!((w.nrows(), w.ncols()), (3, 2));
        for i in 0..3 {
            for j in 0..2 {
                let scalar = eval_weight(&spec, a.row(i), b.row(j), h).unwrap();
                assert_eq!(w[(i, j)].to_bits(), scalar.to_bits());
            }
        }
    }

    #[test]
    fn weight_matrix_of_identical_rows_is_ones_and_symmetric() {
        let spec = WeightSpec::new(WeightKind::InverseSqrt);
        let a = dataset(vec![vec![1.0, 2.0], vec![1.0, 2.0]]);
        let w = weight_matrix(&spec, &a, &a, 1.0).unwrap();
        for v in w.iter() {
            assert_eq!(*v, 1.0);
        }
        // A=B ⇒ symmetric
        let b = dataset(vec![vec![0.1, 0.0], vec![1.4, -0.3], vec![2.0, 2.0]]);
        let w = weight_matrix(&spec, &b, &b, 1.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((w[(i, j)] - w[(j, i)]).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn argument_errors() {
        let spec = WeightSpec::default();
        assert!(matches!(
            eval_weight(&spec, &[1.0], &[1.0, 2.0], 1.0),
            Err(CostError::Argument(_))
        ));
        assert!(eval_weight(&spec, &[1.0], &[2.0], 0.0).is_err());
        let bad = WeightSpec {
            kind: WeightKind::Hybrid,
            c: -1.0,
            normalize_by_q: true,
        };
        assert!(bad.validate().is_err());
        let a = dataset(vec![vec![0.0, 1.0]]);
        let b = dataset(vec![vec![0.0]]);
        assert!(weight_matrix(&spec, &a, &b, 1.0).is_err());
    }
}
