//! File formats and command drivers: CSV ingestion, the TOML simulation
//! config, the structured test report, and exit-code mapping.
//!
//! Two commands sit on top of the library. `cmd_test` runs the test on a
//! CSV dataset and writes a `report.toml` (statistic, p-values, fitted
//! parameters, config echo) plus a `residuals.csv` of (fitted, residual)
//! pairs for diagnostic plots. `cmd_simulate` reads a TOML scenario config
//! and emits one CSV row of size/power results per departure magnitude.
//!
//! Exit codes separate failure classes: 1 = usage/configuration, 2 =
//! data/IO, 3 = numerical failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{cost_statistic, Sided, SplitMode, SplitSpec};
use crate::error::{CostError, Result};
use crate::model::{make_model, Dataset, ModelFamily, ModelSpec};
use crate::nls::FitOptions;
use crate::sim::{run_grid_with, CovKind, Study, StudyConfig};
use crate::weights::{WeightKind, WeightSpec};

/// Header of the simulation results CSV.
pub const RESULTS_HEADER: &str =
    "study,n,q,p,a,sigma,reps,completed,failures,rejection_rate,mc_se,mean_stat,sd_stat";

/// A CSV dataset plus the provenance of its columns.
#[derive(Clone, Debug)]
pub struct LoadedCsv {
    /// The numeric data, response column removed from the predictors.
    pub dataset: Dataset,
    /// Header name of the response column.
    pub response_name: String,
    /// 0-based position of the response column in the file.
    pub response_index: usize,
    /// Header names of the predictor columns, in file order.
    pub predictor_names: Vec<String>,
}

/// Reads a CSV file with a header row and an all-numeric body.
///
/// `response` selects the response column by header name; if no header
/// matches, it is read as a 0-based column index. Remaining columns become
/// predictors in file order. Blank or non-numeric cells are data errors
/// naming the row and column — nothing is imputed.
pub fn load_csv(path: &Path, response: &str) -> Result<LoadedCsv> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.len() < 2 {
        return Err(CostError::Data(format!(
            "{}: need at least two columns (a response and one predictor), found {}",
            path.display(),
            headers.len()
        )));
    }
    let response_index = headers
        .iter()
        .position(|h| h == response)
        .or_else(|| {
            response
                .parse::<usize>()
                .ok()
                .filter(|&i| i < headers.len())
        })
        .ok_or_else(|| {
            CostError::Data(format!(
                "{}: no column named {response:?} (and it is not a valid 0-based index); \
                 columns are {headers:?}",
                path.display()
            ))
        })?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut responses: Vec<f64> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let file_row = i + 2; // 1-based, counting the header as row 1
        let record = record.map_err(|e| {
            CostError::Data(format!("{}: row {file_row}: {e}", path.display()))
        })?;
        let mut row = Vec::with_capacity(headers.len() - 1);
        let mut y = f64::NAN;
        for (j, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| {
                CostError::Data(format!(
                    "{}: row {file_row}, column {:?}: cannot parse {cell:?} as a number",
                    path.display(),
                    headers[j]
                ))
            })?;
            if j == response_index {
                y = value;
            } else {
                row.push(value);
            }
        }
        rows.push(row);
        responses.push(y);
    }
    if rows.is_empty() {
        return Err(CostError::Data(format!(
            "{}: no data rows after the header",
            path.display()
        )));
    }
    let dataset = Dataset::from_rows(rows, responses)?;
    let predictor_names = headers
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != response_index)
        .map(|(_, h)| h.clone())
        .collect();
    Ok(LoadedCsv {
        dataset,
        response_name: headers[response_index].clone(),
        response_index,
        predictor_names,
    })
}

fn csv_error(path: &Path, e: csv::Error) -> CostError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => CostError::Io(io),
            _ => unreachable!("is_io_error guarantees an Io kind"),
        }
    } else {
        CostError::Data(format!("{}: {e}", path.display()))
    }
}

/// Resolves a model-family identifier. The block families need the
/// parameter count `p`; everyone else must not be given one.
pub fn parse_model_family(name: &str, p: Option<usize>) -> Result<ModelFamily> {
    let family = match name {
        "linear" => ModelFamily::Linear,
        "single_index_cosine" => ModelFamily::SingleIndexCosine,
        "linear_plus_exp_index" => ModelFamily::LinearPlusExpIndex,
        "sine_coordinates" => ModelFamily::SineCoordinates,
        "pairwise_interaction" => ModelFamily::PairwiseInteraction,
        "triple_interaction_sine" => ModelFamily::TripleInteractionSine,
        "block_product_sine" => ModelFamily::BlockProductSine {
            p: p.ok_or_else(|| {
                CostError::Config("block_product_sine requires --p".into())
            })?,
        },
        "block_sum_sine" => ModelFamily::BlockSumSine {
            p: p.ok_or_else(|| CostError::Config("block_sum_sine requires --p".into()))?,
        },
        "fixed_direction_polynomial" => ModelFamily::FixedDirectionPolynomial,
        other => {
            return Err(CostError::Config(format!(
                "unknown model family {other:?}; known families: linear, \
                 single_index_cosine, linear_plus_exp_index, sine_coordinates, \
                 pairwise_interaction, triple_interaction_sine, block_product_sine, \
                 block_sum_sine, fixed_direction_polynomial"
            )))
        }
    };
    if p.is_some()
        && !matches!(
            family,
            ModelFamily::BlockProductSine { .. } | ModelFamily::BlockSumSine { .. }
        )
    {
        return Err(CostError::Config(format!(
            "--p only applies to the block families, not {name}"
        )));
    }
    Ok(family)
}

/// Reads a whitespace- or comma-separated list of numbers.
pub fn load_beta_file(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let beta: Vec<f64> = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>().map_err(|_| {
                CostError::Data(format!(
                    "{}: cannot parse {t:?} as a number",
                    path.display()
                ))
            })
        })
        .collect::<Result<_>>()?;
    if beta.is_empty() {
        return Err(CostError::Data(format!(
            "{}: no numbers found",
            path.display()
        )));
    }
    Ok(beta)
}

// ---------------------------------------------------------------------------
// Simulation config (TOML).
// ---------------------------------------------------------------------------

fn default_a_list() -> Vec<f64> {
    vec![0.0]
}
fn default_reps() -> usize {
    1000
}
fn default_alpha() -> f64 {
    0.05
}

/// `[split]` section of the simulation config.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub fraction_n2: Option<f64>,
    pub mode: Option<SplitMode>,
}

/// `[weight]` section of the simulation config.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSection {
    pub kind: Option<WeightKind>,
    pub c: Option<f64>,
    pub normalize_by_q: Option<bool>,
}

impl WeightSection {
    /// The weight spec, with `normalize_by_q` defaulting per kind.
    pub fn to_spec(&self) -> WeightSpec {
        let kind = self.kind.unwrap_or(WeightKind::Hybrid);
        WeightSpec {
            kind,
            c: self.c.unwrap_or(1.0),
            normalize_by_q: self
                .normalize_by_q
                .unwrap_or_else(|| kind.default_normalize_by_q()),
        }
    }
}

/// `[fit]` section of the simulation config.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub max_iterations: Option<usize>,
    pub loss_tolerance: Option<f64>,
}

/// The simulation config file: one scenario swept over a list of departure
/// magnitudes `a`. Unknown fields are rejected.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfigFile {
    /// Study identifier (H11 … H42).
    pub study: String,
    pub n: usize,
    pub q: usize,
    #[serde(default)]
    pub p: Option<usize>,
    /// Departure magnitudes; one results row per entry.
    #[serde(default = "default_a_list")]
    pub a: Vec<f64>,
    #[serde(default)]
    pub sigma_kind: CovKind,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sided: Sided,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub weight: WeightSection,
    #[serde(default)]
    pub fit: FitSection,
}

impl SimConfigFile {
    /// Parses a TOML string.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CostError::Config(format!("config file: {e}")))
    }

    /// Expands into one validated `StudyConfig` per `a` value.
    pub fn to_configs(&self) -> Result<Vec<StudyConfig>> {
        if self.a.is_empty() {
            return Err(CostError::Config("field `a` must list at least one value".into()));
        }
        let study = Study::parse(&self.study)?;
        let mut base = StudyConfig::new(study, self.n, self.q);
        base.p = self.p;
        base.sigma_kind = self.sigma_kind;
        base.reps = self.reps;
        base.alpha = self.alpha;
        base.seed = self.seed;
        base.sided = self.sided;
        if let Some(f) = self.split.fraction_n2 {
            base.split.fraction_n2 = f;
        }
        if let Some(m) = self.split.mode {
            base.split.mode = m;
        }
        base.weight = self.weight.to_spec();
        if let Some(it) = self.fit.max_iterations {
            base.fit.max_iterations = it;
        }
        if let Some(tol) = self.fit.loss_tolerance {
            base.fit.loss_tolerance = tol;
        }
        let configs: Vec<StudyConfig> = self
            .a
            .iter()
            .map(|&a| StudyConfig {
                a,
                ..base.clone()
            })
            .collect();
        for cfg in &configs {
            cfg.validate()?;
        }
        Ok(configs)
    }
}

/// Formats one results row (matching [`RESULTS_HEADER`]).
pub fn results_row(cfg: &StudyConfig, row: &crate::sim::SimResult) -> String {
    let p = cfg.fitted_p().expect("validated config");
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        cfg.study.id(),
        cfg.n,
        cfg.q,
        p,
        cfg.a,
        cfg.sigma_kind.id(),
        cfg.reps,
        row.reps_completed,
        row.failures,
        row.rejection_rate,
        row.mc_standard_error,
        row.mean_statistic,
        row.sd_statistic
    )
}

/// Arguments of the simulate command.
#[derive(Clone, Debug)]
pub struct SimulateArgs {
    /// Path of the TOML scenario config.
    pub config: PathBuf,
    /// Results CSV destination; stdout when absent.
    pub out: Option<PathBuf>,
}

/// Runs the scenario grid described by a config file, writing the results
/// CSV incrementally (a row becomes visible as soon as it is computed).
pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let text = fs::read_to_string(&args.config)?;
    let file = SimConfigFile::from_toml(&text)?;
    let configs = file.to_configs()?;

    let mut out: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(fs::File::create(path)?),
        None => Box::new(std::io::stdout().lock()),
    };
    writeln!(out, "{RESULTS_HEADER}")?;
    out.flush()?;
    let mut write_err: Option<std::io::Error> = None;
    run_grid_with(&configs, |_, cfg, row| {
        if write_err.is_none() {
            let res = writeln!(out, "{}", results_row(cfg, row)).and_then(|_| out.flush());
            if let Err(e) = res {
                write_err = Some(e);
            }
        }
    })?;
    match write_err {
        Some(e) => Err(CostError::Io(e)),
        None => Ok(()),
    }
}

// ---------------------------------------------------------------------------
// Test command and its report.
// ---------------------------------------------------------------------------

/// Arguments of the test command.
#[derive(Clone, Debug)]
pub struct TestArgs {
    /// CSV file with a header row and numeric body.
    pub data: PathBuf,
    /// Response column, by header name or 0-based index.
    pub response: String,
    /// Model family identifier.
    pub model: String,
    /// Parameter count (block families only).
    pub p: Option<usize>,
    /// File of numbers for the fixed direction β.
    pub beta_file: Option<PathBuf>,
    /// Weight kind.
    pub weight: WeightKind,
    /// Bandwidth constant in h = c·n^{−0.2}.
    pub c: f64,
    /// Divide the kernel sum by q; defaults per weight kind.
    pub normalize_by_q: Option<bool>,
    /// Fraction of rows assigned to N2.
    pub split_frac: f64,
    /// Split assignment mode.
    pub split_mode: SplitMode,
    /// Seed for the split shuffle (and any multi-start restarts).
    pub seed: u64,
    /// p-value convention to headline.
    pub sided: Sided,
    /// Output directory for report.toml and residuals.csv.
    pub out: PathBuf,
}

impl TestArgs {
    /// Arguments with the standard defaults: hybrid weight with c = 1,
    /// seeded-shuffle split at 25%, seed 0, two-sided p-values.
    pub fn new(data: impl Into<PathBuf>, response: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            data: data.into(),
            response: response.into(),
            model: model.into(),
            p: None,
            beta_file: None,
            weight: WeightKind::Hybrid,
            c: 1.0,
            normalize_by_q: None,
            split_frac: 0.25,
            split_mode: SplitMode::SeededShuffle,
            seed: 0,
            sided: Sided::Two,
            out: PathBuf::from("cost_report"),
        }
    }
}

/// `[test]` section of the report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportTest {
    pub statistic: f64,
    pub numerator: f64,
    pub conditional_sd: f64,
    pub p_value_two_sided: f64,
    pub p_value_one_sided: f64,
    /// The convention requested on the command line.
    pub sided: String,
    /// The p-value under that convention.
    pub p_value: f64,
    pub n: usize,
    pub n1: usize,
    pub n2: usize,
    pub bandwidth: f64,
    pub converged_1: bool,
    pub converged_2: bool,
    pub converged_full: bool,
    pub theta_hat_1: Vec<f64>,
    pub theta_hat_2: Vec<f64>,
    pub theta_hat_full: Vec<f64>,
}

/// `[model]` section of the report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportModel {
    pub family: String,
    pub label: String,
    pub p: usize,
    pub q: usize,
}

/// `[data]` section of the report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportData {
    pub path: String,
    pub n: usize,
    pub q: usize,
    pub response: String,
    pub response_index: usize,
    /// Name of the (fitted, residual) CSV written next to the report.
    pub residuals_file: String,
}

/// `[config]` section of the report: everything needed to repeat the run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportConfig {
    pub response: String,
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    /// The fixed direction, inlined so the report is self-contained.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    pub weight: String,
    pub c: f64,
    pub normalize_by_q: bool,
    pub split_frac: f64,
    pub split_mode: String,
    pub seed: u64,
    pub sided: String,
}

/// The full report written by the test command.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub test: ReportTest,
    pub model: ReportModel,
    pub data: ReportData,
    pub config: ReportConfig,
    /// (fitted, residual) pairs in original row order; written to the
    /// residuals CSV rather than the TOML report.
    #[serde(skip)]
    pub residual_pairs: Vec<(f64, f64)>,
}

impl RunReport {
    /// Parses the TOML form (residual pairs live in their own CSV).
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CostError::Data(format!("report file: {e}")))
    }
}

/// Runs the test on a CSV dataset and writes `report.toml` and
/// `residuals.csv` into `args.out`, returning the report.
pub fn cmd_test(args: &TestArgs) -> Result<RunReport> {
    let loaded = load_csv(&args.data, &args.response)?;
    let data = &loaded.dataset;

    let family = parse_model_family(&args.model, args.p)?;
    let beta = match &args.beta_file {
        Some(path) => Some(load_beta_file(path)?),
        None => None,
    };
    let model = make_model(&ModelSpec {
        family: family.clone(),
        q: data.q(),
        beta: beta.clone(),
    })?;

    let weight = WeightSpec {
        kind: args.weight,
        c: args.c,
        normalize_by_q: args
            .normalize_by_q
            .unwrap_or_else(|| args.weight.default_normalize_by_q()),
    };
    let split = SplitSpec {
        fraction_n2: args.split_frac,
        mode: args.split_mode,
        seed: args.seed,
    };
    // Families with degenerate or multimodal zero starts get the same
    // seeded multi-start budget the simulation harness uses.
    let restarts = if family.multistart_recommended() { 5 } else { 0 };
    let fit_opts = FitOptions {
        restarts,
        restart_seed: args.seed,
        ..FitOptions::default()
    };

    let result = cost_statistic(&model, data, &weight, &split, &fit_opts)?;

    let mut residual_pairs = Vec::with_capacity(data.n());
    for i in 0..data.n() {
        let fitted = model.eval_mean(&result.theta_hat_full, data.row(i))?;
        residual_pairs.push((fitted, data.response(i) - fitted));
    }

    let report = RunReport {
        test: ReportTest {
            statistic: result.statistic,
            numerator: result.numerator,
            conditional_sd: result.conditional_sd,
            p_value_two_sided: result.p_value_two_sided,
            p_value_one_sided: result.p_value_one_sided,
            sided: args.sided.id().into(),
            p_value: result.p_value(args.sided),
            n: data.n(),
            n1: result.split.n1,
            n2: result.split.n2,
            bandwidth: result.bandwidth_used,
            converged_1: result.converged_1,
            converged_2: result.converged_2,
            converged_full: result.converged_full,
            theta_hat_1: result.theta_hat_1.clone(),
            theta_hat_2: result.theta_hat_2.clone(),
            theta_hat_full: result.theta_hat_full.clone(),
        },
        model: ReportModel {
            family: family.id().into(),
            label: model.label().into(),
            p: model.p(),
            q: model.q(),
        },
        data: ReportData {
            path: args.data.display().to_string(),
            n: data.n(),
            q: data.q(),
            response: loaded.response_name.clone(),
            response_index: loaded.response_index,
            residuals_file: "residuals.csv".into(),
        },
        config: ReportConfig {
            response: args.response.clone(),
            model: args.model.clone(),
            p: args.p,
            beta,
            weight: args.weight.id().into(),
            c: args.c,
            normalize_by_q: weight.normalize_by_q,
            split_frac: args.split_frac,
            split_mode: args.split_mode.id().into(),
            seed: args.seed,
            sided: args.sided.id().into(),
        },
        residual_pairs,
    };

    fs::create_dir_all(&args.out)?;
    let toml_text = toml::to_string_pretty(&report)
        .map_err(|e| CostError::Io(std::io::Error::other(e)))?;
    fs::write(args.out.join("report.toml"), toml_text)?;
    let mut residuals = String::from("fitted,residual\n");
    for (fitted, residual) in &report.residual_pairs {
        residuals.push_str(&format!("{fitted},{residual}\n"));
    }
    fs::write(args.out.join(report.data.residuals_file.as_str()), residuals)?;
    Ok(report)
}

/// Process exit code for an error: 1 usage/configuration, 2 data/IO,
/// 3 numerical failure.
pub fn exit_code_for(err: &CostError) -> i32 {
    match err {
        CostError::Config(_) | CostError::Argument(_) => 1,
        CostError::Data(_) | CostError::Io(_) => 2,
        CostError::Numeric(_)
        | CostError::DegenerateVariance(_)
        | CostError::SingularMatrix(_)
        | CostError::Underdetermined(_)
        | CostError::Harness(_) => 3,
    }
}
