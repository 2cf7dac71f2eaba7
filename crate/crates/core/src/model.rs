//! Parametric regression models.
//!
//! A model is a mean function g(θ, x) with analytic gradient
//! ġ(θ, x) = ∂g/∂θ, a parameter dimension `p`, and a predictor dimension
//! `q`. The built-in families cover:
//!
//! * `linear` — g = θᵀx, p = q
//! * `single_index_cosine` — g = θ₁x₁ + cos(θ₂x₂), p = 2
//! * `linear_plus_exp_index` — g = θ₍₁₎ᵀx + exp(θ₍₂₎ᵀx), p = 2q
//! * `sine_coordinates` — g = Σᵢ sin(θᵢxᵢ), p = q
//! * `pairwise_interaction` — g = Σᵢ θᵢ xᵢ xᵢ₊₁, p = q − 1
//! * `triple_interaction_sine` — g = Σᵢ θᵢ xᵢ xᵢ₊₁ sin(πxᵢ₊₂), p = q − 2
//! * `block_product_sine` — g = Σᵢ sin(θᵢ Πⱼ∈Bᵢ xⱼ) over p contiguous blocks
//! * `block_sum_sine` — g = Σᵢ sin(θᵢ S₁ᵢ + S₂ᵢ) where S₁ᵢ/S₂ᵢ split block Bᵢ
//! * `fixed_direction_polynomial` — g = θ₁ + θ₂(βᵀx) + θ₃(βᵀx)², p = 3,
//!   with a caller-supplied direction β of length q
//!
//! Block families partition the q coordinates into p contiguous blocks of
//! width r = ⌈q/p⌉; block i covers indices (i−1)r+1 .. min(ir, q) (1-based),
//! and the final block is truncated at q. For `block_sum_sine` each block is
//! further split after its first r₁ = ⌊r/2⌋ entries: the θ-weighted sum S₁
//! runs over those entries and the unweighted sum S₂ over the remainder
//! (both clamped to the block, so a truncated final block never reads past
//! the end).
//!
//! All gradients are supplied analytically; [`finite_difference_gradient`]
//! is a test utility for validating them, not a runtime fallback.

use std::ops::Range;

use crate::error::{CostError, Result};

/// A regression sample: an n×q predictor matrix plus an n-vector of
/// responses. Immutable after construction; all entries are finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// Row-major n×q predictor values.
    predictors: Vec<f64>,
    responses: Vec<f64>,
    n: usize,
    q: usize,
}

impl Dataset {
    /// Builds a dataset from predictor rows and responses.
    ///
    /// Errors with a data error if the row count does not match the number
    /// of responses, rows have unequal lengths, the predictor dimension is
    /// zero, or any entry is non-finite.
    pub fn from_rows(rows: Vec<Vec<f64>>, responses: Vec<f64>) -> Result<Self> {
        if rows.is_empty() {
            return Err(CostError::Data("dataset has no rows".into()));
        }
        let q = rows[0].len();
        let n = rows.len();
        let mut flat = Vec::with_capacity(n * q);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != q {
                return Err(CostError::Data(format!(
                    "predictor row {} has {} columns, expected {}",
                    i + 1,
                    row.len(),
                    q
                )));
            }
            flat.extend_from_slice(row);
        }
        Self::from_row_major(flat, n, q, responses)
    }

    /// Builds a dataset from a row-major predictor buffer of length n·q.
    pub fn from_row_major(
        predictors: Vec<f64>,
        n: usize,
        q: usize,
        responses: Vec<f64>,
    ) -> Result<Self> {
        if n == 0 || q == 0 {
            return Err(CostError::Data(format!(
                "dataset dimensions must be positive, got n={n}, q={q}"
            )));
        }
        if predictors.len() != n * q {
            return Err(CostError::Data(format!(
                "predictor buffer has {} entries, expected n*q = {}",
                predictors.len(),
                n * q
            )));
        }
        if responses.len() != n {
            return Err(CostError::Data(format!(
                "{} responses for {} predictor rows",
                responses.len(),
                n
            )));
        }
        if let Some(pos) = predictors.iter().position(|v| !v.is_finite()) {
            return Err(CostError::Data(format!(
                "non-finite predictor at row {}, column {}",
                pos / q + 1,
                pos % q + 1
            )));
        }
        if let Some(pos) = responses.iter().position(|v| !v.is_finite()) {
            return Err(CostError::Data(format!(
                "non-finite response at row {}",
                pos + 1
            )));
        }
        Ok(Self {
            predictors,
            responses,
            n,
            q,
        })
    }

    /// Number of observations.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Predictor dimension.
    pub fn q(&self) -> usize {
        self.q
    }

    /// The i-th predictor row (0-based).
    pub fn row(&self, i: usize) -> &[f64] {
        &self.predictors[i * self.q..(i + 1) * self.q]
    }

    /// The i-th response (0-based).
    pub fn response(&self, i: usize) -> f64 {
        self.responses[i]
    }

    /// All responses.
    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    /// Row-major predictor buffer (length n·q).
    pub fn predictors_row_major(&self) -> &[f64] {
        &self.predictors
    }

    /// A new dataset containing the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(CostError::Argument("empty subset of dataset".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n) {
            return Err(CostError::Argument(format!(
                "subset index {bad} out of range for n={}",
                self.n
            )));
        }
        let mut predictors = Vec::with_capacity(indices.len() * self.q);
        let mut responses = Vec::with_capacity(indices.len());
        for &i in indices {
            predictors.extend_from_slice(self.row(i));
            responses.push(self.responses[i]);
        }
        Ok(Self {
            predictors,
            responses,
            n: indices.len(),
            q: self.q,
        })
    }
}

/// The built-in model families. Block families carry their parameter count
/// `p`; every other family derives p from q.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModelFamily {
    Linear,
    SingleIndexCosine,
    LinearPlusExpIndex,
    SineCoordinates,
    PairwiseInteraction,
    TripleInteractionSine,
    BlockProductSine { p: usize },
    BlockSumSine { p: usize },
    FixedDirectionPolynomial,
}

impl ModelFamily {
    /// The family's identifier string (as used by the CLI and config files).
    pub fn id(&self) -> &'static str {
        match self {
            ModelFamily::Linear => "linear",
            ModelFamily::SingleIndexCosine => "single_index_cosine",
            ModelFamily::LinearPlusExpIndex => "linear_plus_exp_index",
            ModelFamily::SineCoordinates => "sine_coordinates",
            ModelFamily::PairwiseInteraction => "pairwise_interaction",
            ModelFamily::TripleInteractionSine => "triple_interaction_sine",
            ModelFamily::BlockProductSine { .. } => "block_product_sine",
            ModelFamily::BlockSumSine { .. } => "block_sum_sine",
            ModelFamily::FixedDirectionPolynomial => "fixed_direction_polynomial",
        }
    }

    /// Whether least-squares fits of this family should default to a small
    /// multi-start budget. True for families whose mean surface is flat or
    /// degenerate along some parameter directions at the all-zero start:
    /// `single_index_cosine` has ∂g/∂θ₂ = −x₂·sin(θ₂x₂) ≡ 0 there, so a
    /// single Gauss–Newton run can never leave θ₂ = 0, and the block-sine
    /// families have many well-separated local minima.
    pub fn multistart_recommended(&self) -> bool {
        matches!(
            self,
            ModelFamily::SingleIndexCosine
                | ModelFamily::BlockProductSine { .. }
                | ModelFamily::BlockSumSine { .. }
        )
    }
}

/// Everything needed to instantiate a model: the family, the predictor
/// dimension, and (for `fixed_direction_polynomial` only) the direction β.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub family: ModelFamily,
    pub q: usize,
    /// Fixed direction β of length q; required by
    /// `fixed_direction_polynomial`, rejected elsewhere.
    pub beta: Option<Vec<f64>>,
}

/// A concrete parametric regression model: mean g(θ, x), gradient ġ(θ, x),
/// and dimensions (p, q). Immutable; evaluation is pure and deterministic.
#[derive(Clone, Debug)]
pub struct ParametricModel {
    family: ModelFamily,
    p: usize,
    q: usize,
    /// Direction vector for `fixed_direction_polynomial`; empty otherwise.
    beta: Vec<f64>,
    /// Contiguous coordinate blocks for the block families; empty otherwise.
    blocks: Vec<Range<usize>>,
    label: String,
}

/// Contiguous blocks of width r = ⌈q/p⌉; the last block truncates at q.
/// Errors if any block would be empty (possible when p ∤ q leaves the last
/// start index at or past q).
fn block_ranges(p: usize, q: usize) -> Result<Vec<Range<usize>>> {
    let r = q.div_ceil(p);
    let mut blocks = Vec::with_capacity(p);
    for i in 0..p {
        let start = i * r;
        let end = ((i + 1) * r).min(q);
        if start >= end {
            return Err(CostError::Config(format!(
                "block {} of {} is empty for q={} (block width {})",
                i + 1,
                p,
                q,
                r
            )));
        }
        blocks.push(start..end);
    }
    Ok(blocks)
}

/// Instantiates a [`ParametricModel`] from a [`ModelSpec`], validating the
/// (family, q, β) combination.
pub fn make_model(spec: &ModelSpec) -> Result<ParametricModel> {
    let q = spec.q;
    if q == 0 {
        return Err(CostError::Config("predictor dimension q must be positive".into()));
    }
    let family = spec.family.clone();
    if spec.beta.is_some() && family != ModelFamily::FixedDirectionPolynomial {
        return Err(CostError::Config(format!(
            "a fixed direction β is only meaningful for fixed_direction_polynomial, not {}",
            family.id()
        )));
    }
    let mut beta = Vec::new();
    let mut blocks = Vec::new();
    let p = match family {
        ModelFamily::Linear => q,
        ModelFamily::SingleIndexCosine => {
            if q < 2 {
                return Err(CostError::Config(format!(
                    "single_index_cosine reads x1 and x2, needs q >= 2, got q={q}"
                )));
            }
            2
        }
        ModelFamily::LinearPlusExpIndex => 2 * q,
        ModelFamily::SineCoordinates => q,
        ModelFamily::PairwiseInteraction => {
            if q < 2 {
                return Err(CostError::Config(format!(
                    "pairwise_interaction needs q >= 2, got q={q}"
                )));
            }
            q - 1
        }
        ModelFamily::TripleInteractionSine => {
            if q < 3 {
                return Err(CostError::Config(format!(
                    "triple_interaction_sine needs q >= 3, got q={q}"
                )));
            }
            q - 2
        }
        ModelFamily::BlockProductSine { p } => {
            if p == 0 {
                return Err(CostError::Config("block_product_sine needs p >= 1".into()));
            }
            blocks = block_ranges(p, q)?;
            p
        }
        ModelFamily::BlockSumSine { p } => {
            if p == 0 {
                return Err(CostError::Config("block_sum_sine needs p >= 1".into()));
            }
            blocks = block_ranges(p, q)?;
            // The θ-weighted prefix has r1 = ⌊r/2⌋ coordinates; width-1
            // blocks would leave it empty and θ unidentifiable.
            if blocks[0].len() < 2 {
                return Err(CostError::Config(format!(
                    "block_sum_sine needs block width >= 2, got width {} (p={p}, q={q})",
                    blocks[0].len()
                )));
            }
            p
        }
        ModelFamily::FixedDirectionPolynomial => {
            let b = spec.beta.as_ref().ok_or_else(|| {
                CostError::Config(
                    "fixed_direction_polynomial requires a direction vector β".into(),
                )
            })?;
            if b.len() != q {
                return Err(CostError::Config(format!(
                    "direction β has length {}, expected q = {}",
                    b.len(),
                    q
                )));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(CostError::Config("direction β has non-finite entries".into()));
            }
            beta = b.clone();
            3
        }
    };
    let label = format!("{}(p={}, q={})", family.id(), p, q);
    Ok(ParametricModel {
        family,
        p,
        q,
        beta,
        blocks,
        label,
    })
}

impl ParametricModel {
    /// Parameter dimension.
    pub fn p(&self) -> usize {
        self.p
    }

    /// Predictor dimension.
    pub fn q(&self) -> usize {
        self.q
    }

    /// Human-readable identifier, e.g. `linear(p=3, q=3)`.
    pub fn label(&self) -> &str {
        &self.label
    }

    /// The family this model was built from.
    pub fn family(&self) -> &ModelFamily {
        &self.family
    }

    /// The fixed direction β (empty unless `fixed_direction_polynomial`).
    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    fn check_dims(&self, theta: &[f64], x: &[f64]) -> Result<()> {
        if theta.len() != self.p {
            return Err(CostError::Argument(format!(
                "θ has length {}, expected p = {}",
                theta.len(),
                self.p
            )));
        }
        if x.len() != self.q {
            return Err(CostError::Argument(format!(
                "x has length {}, expected q = {}",
                x.len(),
                self.q
            )));
        }
        Ok(())
    }

    /// Evaluates the mean function g(θ, x).
    pub fn eval_mean(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        self.check_dims(theta, x)?;
        Ok(self.mean_raw(theta, x))
    }

    /// Evaluates the gradient ġ(θ, x) = ∂g/∂θ, a vector of length p.
    pub fn eval_gradient(&self, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(theta, x)?;
        let mut out = vec![0.0; self.p];
        self.gradient_into(theta, x, &mut out);
        Ok(out)
    }

    /// Residuals êᵢ = yᵢ − g(θ, xᵢ) over a whole dataset.
    pub fn residual_vector(&self, theta: &[f64], data: &Dataset) -> Result<Vec<f64>> {
        if data.q() != self.q {
            return Err(CostError::Argument(format!(
                "dataset has q = {}, model expects q = {}",
                data.q(),
                self.q
            )));
        }
        if theta.len() != self.p {
            return Err(CostError::Argument(format!(
                "θ has length {}, expected p = {}",
                theta.len(),
                self.p
            )));
        }
        Ok((0..data.n())
            .map(|i| data.response(i) - self.mean_raw(theta, data.row(i)))
            .collect())
    }

    /// Mean evaluation without dimension checks (callers validate once).
    pub(crate) fn mean_raw(&self, theta: &[f64], x: &[f64]) -> f64 {
        match &self.family {
            ModelFamily::Linear => dot(theta, x),
            ModelFamily::SingleIndexCosine => theta[0] * x[0] + (theta[1] * x[1]).cos(),
            ModelFamily::LinearPlusExpIndex => {
                let (lin, idx) = theta.split_at(self.q);
                dot(lin, x) + dot(idx, x).exp()
            }
            ModelFamily::SineCoordinates => theta
                .iter()
                .zip(x)
                .map(|(&t, &xi)| (t * xi).sin())
                .sum(),
            ModelFamily::PairwiseInteraction => theta
                .iter()
                .enumerate()
                .map(|(i, &t)| t * x[i] * x[i + 1])
                .sum(),
            ModelFamily::TripleInteractionSine => theta
                .iter()
                .enumerate()
                .map(|(i, &t)| t * x[i] * x[i + 1] * (std::f64::consts::PI * x[i + 2]).sin())
                .sum(),
            ModelFamily::BlockProductSine { .. } => self
                .blocks
                .iter()
                .zip(theta)
                .map(|(b, &t)| (t * product(&x[b.clone()])).sin())
                .sum(),
            ModelFamily::BlockSumSine { .. } => self
                .blocks
                .iter()
                .zip(theta)
                .map(|(b, &t)| {
                    let (s1, s2) = self.block_sums(b, x);
                    (t * s1 + s2).sin()
                })
                .sum(),
            ModelFamily::FixedDirectionPolynomial => {
                let u = dot(&self.beta, x);
                theta[0] + theta[1] * u + theta[2] * u * u
            }
        }
    }

    /// Gradient evaluation without dimension checks; writes into `out`
    /// (length p).
    pub(crate) fn gradient_into(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        match &self.family {
            ModelFamily::Linear => out.copy_from_slice(x),
            ModelFamily::SingleIndexCosine => {
                out[0] = x[0];
                out[1] = -x[1] * (theta[1] * x[1]).sin();
            }
            ModelFamily::LinearPlusExpIndex => {
                let idx = &theta[self.q..];
                let e = dot(idx, x).exp();
                let (lin_out, idx_out) = out.split_at_mut(self.q);
                lin_out.copy_from_slice(x);
                for (o, &xi) in idx_out.iter_mut().zip(x) {
                    *o = xi * e;
                }
            }
            ModelFamily::SineCoordinates => {
                for ((o, &t), &xi) in out.iter_mut().zip(theta).zip(x) {
                    *o = xi * (t * xi).cos();
                }
            }
            ModelFamily::PairwiseInteraction => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = x[i] * x[i + 1];
                }
            }
            ModelFamily::TripleInteractionSine => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = x[i] * x[i + 1] * (std::f64::consts::PI * x[i + 2]).sin();
                }
            }
            ModelFamily::BlockProductSine { .. } => {
                for ((o, b), &t) in out.iter_mut().zip(&self.blocks).zip(theta) {
                    let pr = product(&x[b.clone()]);
                    *o = pr * (t * pr).cos();
                }
            }
            ModelFamily::BlockSumSine { .. } => {
                for ((o, b), &t) in out.iter_mut().zip(&self.blocks).zip(theta) {
                    let (s1, s2) = self.block_sums(b, x);
                    *o = s1 * (t * s1 + s2).cos();
                }
            }
            ModelFamily::FixedDirectionPolynomial => {
                let u = dot(&self.beta, x);
                out[0] = 1.0;
                out[1] = u;
                out[2] = u * u;
            }
        }
    }

    /// The θ-weighted prefix sum S₁ and unweighted suffix sum S₂ of a block
    /// for `block_sum_sine`. The prefix has r₁ = ⌊r/2⌋ coordinates, where r
    /// is the nominal block width (the width of the first, untruncated
    /// block), clamped so a short final block never reads out of range.
    fn block_sums(&self, block: &Range<usize>, x: &[f64]) -> (f64, f64) {
        let r1 = self.blocks[0].len() / 2;
        let split = (block.start + r1).min(block.end);
        let s1: f64 = x[block.start..split].iter().sum();
        let s2: f64 = x[split..block.end].iter().sum();
        (s1, s2)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn product(xs: &[f64]) -> f64 {
    xs.iter().product()
}

/// Central finite-difference approximation to ġ(θ, x), with per-coordinate
/// step 1e-6·(1+|θᵢ|). A test utility for validating the analytic
/// gradients; do not use as a runtime substitute.
pub fn finite_difference_gradient(
    model: &ParametricModel,
    theta: &[f64],
    x: &[f64],
) -> Result<Vec<f64>> {
    model.check_dims(theta, x)?;
    let mut grad = vec![0.0; theta.len()];
    let mut work = theta.to_vec();
    for i in 0..theta.len() {
        let h = 1e-6 * (1.0 + theta[i].abs());
        work[i] = theta[i] + h;
        let up = model.mean_raw(&work, x);
        work[i] = theta[i] - h;
        let down = model.mean_raw(&work, x);
        work[i] = theta[i];
        grad[i] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}
