//! C interface to the conditionally studentized specification test.
//!
//! The API follows the usual C conventions: opaque handles created and
//! destroyed through paired `_new`/`_free` calls, plain `#[repr(C)]`
//! structs for options and results, and a status code from every fallible
//! call. On any non-[`CostStatus::Ok`] return, a human-readable message is
//! stored in thread-local storage and can be read with
//! [`cost_last_error_message`]. Panics never cross the boundary; they are
//! caught and surfaced as [`CostStatus::InternalError`].
//!
//! The matching header, `include/cost.h`, is generated by the build script
//! and committed alongside the sources.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use cost_core::io::parse_model_family;
use cost_core::{
    bandwidth, cost_statistic, make_model, p_value, un_statistic, CostError, Dataset, FitOptions,
    ModelSpec, ParametricModel, Sided, SplitMode, SplitSpec, WeightKind, WeightSpec,
};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument value was out of range or internally inconsistent.
    InvalidArgument = 2,
    /// The model or options were misconfigured.
    ConfigError = 3,
    /// The data was malformed (sizes, non-finite values).
    DataError = 4,
    /// A numerical procedure failed to produce a finite answer.
    NumericError = 5,
    /// The conditional variance estimate was numerically zero.
    DegenerateVariance = 6,
    /// The gradient Gram matrix could not be inverted.
    SingularMatrix = 7,
    /// Fewer observations than parameters somewhere.
    Underdetermined = 8,
    /// An internal invariant broke (a caught panic).
    InternalError = 9,
}

/// Weight function linking residual pairs.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostWeightKind {
    /// 1/√(‖x−x′‖² + 1).
    InverseSqrt = 0,
    /// exp(−‖x−x′‖²/2).
    Gaussian = 1,
    /// Coordinate-summed Gaussian kernel at bandwidth h = c·n^(−1/5).
    KernelSum = 2,
    /// Average of the inverse-square-root and kernel-sum weights.
    Hybrid = 3,
}

/// How rows are assigned to the two subsamples.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostSplitMode {
    /// Seeded pseudo-random assignment (reproducible).
    SeededShuffle = 0,
    /// First n1 rows form N1, the rest N2.
    AsOrdered = 1,
}

/// Options for [`cost_run_test`]; obtain defaults from
/// [`cost_test_options_default`] and override selectively.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct CostTestOptions {
    pub weight_kind: CostWeightKind,
    /// Bandwidth constant c in h = c·n^(−1/5); must be positive.
    pub bandwidth_c: f64,
    /// Divide the kernel sum by q: 1 = yes, 0 = no, −1 = the kind's default.
    pub normalize_by_q: i32,
    /// Fraction of rows assigned to N2, strictly between 0 and 1.
    pub split_fraction_n2: f64,
    pub split_mode: CostSplitMode,
    /// Seed for the shuffle assignment (ignored for as-ordered splits).
    pub split_seed: u64,
    /// Iteration budget for each least-squares fit.
    pub max_iterations: usize,
    /// Stop when the loss improves by less than this relative amount.
    pub loss_tolerance: f64,
    /// Stop when the step is this small relative to the parameter norm.
    pub step_tolerance: f64,
    /// Extra random starts per fit (0 = single start at the origin).
    pub restarts: usize,
    /// Seed for the random starts.
    pub restart_seed: u64,
}

/// Scalar summary of one test run.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct CostTestResult {
    /// The studentized statistic.
    pub statistic: f64,
    /// Cross-sample U-statistic numerator.
    pub numerator: f64,
    /// Conditional standard-deviation estimate.
    pub conditional_sd: f64,
    pub p_value_two_sided: f64,
    pub p_value_one_sided: f64,
    /// Bandwidth h fed to the weight function.
    pub bandwidth: f64,
    /// Size of the first subsample.
    pub n1: usize,
    /// Size of the second subsample.
    pub n2: usize,
    /// Whether all three least-squares fits converged in budget.
    pub converged: bool,
}

/// Opaque dataset handle.
pub struct CostDataset(Dataset);

/// Opaque model handle.
pub struct CostModel(ParametricModel);

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|e| {
        let mut e = e.borrow_mut();
        e.clear();
        e.extend_from_slice(msg.as_bytes());
    });
}

fn fail(status: CostStatus, msg: &str) -> CostStatus {
    set_error(msg);
    status
}

fn status_of(err: &CostError) -> CostStatus {
    match err {
        CostError::Config(_) => CostStatus::ConfigError,
        CostError::Argument(_) => CostStatus::InvalidArgument,
        CostError::Data(_) | CostError::Io(_) => CostStatus::DataError,
        CostError::Numeric(_) => CostStatus::NumericError,
        CostError::DegenerateVariance(_) => CostStatus::DegenerateVariance,
        CostError::SingularMatrix(_) => CostStatus::SingularMatrix,
        CostError::Underdetermined(_) => CostStatus::Underdetermined,
        CostError::Harness(_) => CostStatus::InternalError,
    }
}

fn from_error(err: &CostError) -> CostStatus {
    fail(status_of(err), &err.to_string())
}

/// Runs `body` with panics converted to [`CostStatus::InternalError`] and
/// clears the error slot on success.
fn guarded(body: impl FnOnce() -> CostStatus) -> CostStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => {
            if status == CostStatus::Ok {
                set_error("");
            }
            status
        }
        Err(_) => fail(CostStatus::InternalError, "internal panic"),
    }
}

impl CostTestOptions {
    fn weight_spec(&self) -> WeightSpec {
        let kind = match self.weight_kind {
            CostWeightKind::InverseSqrt => WeightKind::InverseSqrt,
            CostWeightKind::Gaussian => WeightKind::Gaussian,
            CostWeightKind::KernelSum => WeightKind::KernelSum,
            CostWeightKind::Hybrid => WeightKind::Hybrid,
        };
        WeightSpec {
            kind,
            c: self.bandwidth_c,
            normalize_by_q: match self.normalize_by_q {
                0 => false,
                1 => true,
                _ => kind.default_normalize_by_q(),
            },
        }
    }

    fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            fraction_n2: self.split_fraction_n2,
            mode: match self.split_mode {
                CostSplitMode::SeededShuffle => SplitMode::SeededShuffle,
                CostSplitMode::AsOrdered => SplitMode::AsOrdered,
            },
            seed: self.split_seed,
        }
    }

    fn fit_options(&self) -> FitOptions {
        FitOptions {
            max_iterations: self.max_iterations,
            loss_tolerance: self.loss_tolerance,
            step_tolerance: self.step_tolerance,
            restarts: self.restarts,
            restart_seed: self.restart_seed,
            ..FitOptions::default()
        }
    }
}

/// Returns the library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn cost_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copies the message of the most recent failure on this thread into
/// `buf` (nul-terminated, truncated to `cap` bytes including the nul) and
/// returns the full message length in bytes, excluding the nul. Query the
/// required capacity by passing a null `buf`.
///
/// # Safety
/// `buf` must be null or point to at least `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn cost_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let take = msg.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, take);
            *buf.add(take) = 0;
        }
        msg.len()
    })
}

/// Builds a dataset from a row-major n×q predictor buffer and n responses.
/// On success stores a heap-allocated handle in `out`; release it with
/// [`cost_dataset_free`].
///
/// # Safety
/// `predictors` must point to n·q readable doubles, `responses` to n, and
/// `out` must be a valid destination pointer.
#[no_mangle]
pub unsafe extern "C" fn cost_dataset_new(
    predictors: *const f64,
    n: usize,
    q: usize,
    responses: *const f64,
    out: *mut *mut CostDataset,
) -> CostStatus {
    guarded(|| {
        if predictors.is_null() || responses.is_null() || out.is_null() {
            return fail(CostStatus::NullPointer, "cost_dataset_new: null pointer argument");
        }
        if n == 0 || q == 0 || n.checked_mul(q).is_none() {
            return fail(
                CostStatus::DataError,
                "cost_dataset_new: dimensions must be positive and n*q must not overflow",
            );
        }
        let flat = std::slice::from_raw_parts(predictors, n * q).to_vec();
        let ys = std::slice::from_raw_parts(responses, n).to_vec();
        match Dataset::from_row_major(flat, n, q, ys) {
            Ok(data) => {
                *out = Box::into_raw(Box::new(CostDataset(data)));
                CostStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// Releases a dataset handle. Null is a no-op.
///
/// # Safety
/// `ds` must be a pointer previously returned by [`cost_dataset_new`]
/// (or null) and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cost_dataset_free(ds: *mut CostDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Instantiates a model family by its identifier (e.g. `"linear"`,
/// `"single_index_cosine"`, `"block_product_sine"`) for q predictors.
/// `p` supplies the parameter count for the block families and must be 0
/// elsewhere. `beta` (nullable) supplies the q fixed direction entries
/// required by `"fixed_direction_polynomial"`. Release the handle with
/// [`cost_model_free`].
///
/// # Safety
/// `family` must be a nul-terminated string, `beta` null or q readable
/// doubles, and `out` a valid destination pointer.
#[no_mangle]
pub unsafe extern "C" fn cost_model_new(
    family: *const c_char,
    q: usize,
    p: usize,
    beta: *const f64,
    out: *mut *mut CostModel,
) -> CostStatus {
    guarded(|| {
        if family.is_null() || out.is_null() {
            return fail(CostStatus::NullPointer, "cost_model_new: null pointer argument");
        }
        let name = match CStr::from_ptr(family).to_str() {
            Ok(s) => s,
            Err(_) => {
                return fail(CostStatus::InvalidArgument, "cost_model_new: family is not UTF-8")
            }
        };
        let parsed = match parse_model_family(name, if p == 0 { None } else { Some(p) }) {
            Ok(f) => f,
            Err(e) => return from_error(&e),
        };
        let beta = if beta.is_null() {
            None
        } else {
            Some(std::slice::from_raw_parts(beta, q).to_vec())
        };
        match make_model(&ModelSpec { family: parsed, q, beta }) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(CostModel(model)));
                CostStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// Releases a model handle. Null is a no-op.
///
/// # Safety
/// `model` must be a pointer previously returned by [`cost_model_new`]
/// (or null) and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cost_model_free(model: *mut CostModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Stores the model's parameter count in `out`.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cost_model_param_count(
    model: *const CostModel,
    out: *mut usize,
) -> CostStatus {
    guarded(|| {
        if model.is_null() || out.is_null() {
            return fail(CostStatus::NullPointer, "cost_model_param_count: null pointer argument");
        }
        *out = (*model).0.p();
        CostStatus::Ok
    })
}

/// Fills `out` with the default options: hybrid weight with c = 1 and the
/// kind's kernel normalization, a seeded 25% shuffle split, and the
/// standard fit budget with no restarts.
///
/// # Safety
/// `out` must be a valid destination pointer.
#[no_mangle]
pub unsafe extern "C" fn cost_test_options_default(out: *mut CostTestOptions) -> CostStatus {
    guarded(|| {
        if out.is_null() {
            return fail(CostStatus::NullPointer, "cost_test_options_default: null pointer");
        }
        let weight = WeightSpec::default();
        let split = SplitSpec::default();
        let fit = FitOptions::default();
        *out = CostTestOptions {
            weight_kind: CostWeightKind::Hybrid,
            bandwidth_c: weight.c,
            normalize_by_q: -1,
            split_fraction_n2: split.fraction_n2,
            split_mode: CostSplitMode::SeededShuffle,
            split_seed: split.seed,
            max_iterations: fit.max_iterations,
            loss_tolerance: fit.loss_tolerance,
            step_tolerance: fit.step_tolerance,
            restarts: fit.restarts,
            restart_seed: fit.restart_seed,
        };
        CostStatus::Ok
    })
}

/// Runs the specification test and fills `out` with the scalar summary.
///
/// # Safety
/// All pointers must be valid for the duration of the call.
#[no_mangle]
pub unsafe extern "C" fn cost_run_test(
    model: *const CostModel,
    data: *const CostDataset,
    opts: *const CostTestOptions,
    out: *mut CostTestResult,
) -> CostStatus {
    guarded(|| {
        if model.is_null() || data.is_null() || opts.is_null() || out.is_null() {
            return fail(CostStatus::NullPointer, "cost_run_test: null pointer argument");
        }
        let opts = &*opts;
        match cost_statistic(
            &(*model).0,
            &(*data).0,
            &opts.weight_spec(),
            &opts.split_spec(),
            &opts.fit_options(),
        ) {
            Ok(r) => {
                *out = CostTestResult {
                    statistic: r.statistic,
                    numerator: r.numerator,
                    conditional_sd: r.conditional_sd,
                    p_value_two_sided: r.p_value_two_sided,
                    p_value_one_sided: r.p_value_one_sided,
                    bandwidth: r.bandwidth_used,
                    n1: r.split.n1,
                    n2: r.split.n2,
                    converged: r.converged(),
                };
                CostStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// Computes the full-sample pairwise diagnostic (no splitting, no
/// p-value) and stores it in `out`.
///
/// # Safety
/// All pointers must be valid for the duration of the call.
#[no_mangle]
pub unsafe extern "C" fn cost_un_statistic(
    model: *const CostModel,
    data: *const CostDataset,
    opts: *const CostTestOptions,
    out: *mut f64,
) -> CostStatus {
    guarded(|| {
        if model.is_null() || data.is_null() || opts.is_null() || out.is_null() {
            return fail(CostStatus::NullPointer, "cost_un_statistic: null pointer argument");
        }
        let opts = &*opts;
        match un_statistic(&(*model).0, &(*data).0, &opts.weight_spec(), &opts.fit_options()) {
            Ok((value, _)) => {
                *out = value;
                CostStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// The asymptotic p-value for a statistic value: 2·(1 − Φ(|v|)) when
/// `two_sided`, 1 − Φ(v) otherwise.
#[no_mangle]
pub extern "C" fn cost_p_value(statistic: f64, two_sided: bool) -> f64 {
    p_value(statistic, if two_sided { Sided::Two } else { Sided::One })
}

/// The bandwidth rule h = c·n^(−1/5). Returns NaN when c is not a
/// positive finite number or n is zero.
#[no_mangle]
pub extern "C" fn cost_bandwidth(c: f64, n: usize) -> f64 {
    if !(c > 0.0 && c.is_finite()) || n == 0 {
        return f64::NAN;
    }
    bandwidth(c, n)
}
