//! `cost` — specification testing for parametric regression models.
//!
//! Two subcommands: `test` runs the studentized lack-of-fit test on a CSV
//! dataset and writes a structured report plus residual diagnostics;
//! `simulate` runs Monte Carlo size/power scenarios from a TOML config and
//! emits a results CSV.
//!
//! Exit codes: 0 success, 1 usage/configuration error, 2 data/IO error,
//! 3 numerical failure.

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use cost_core::io::{cmd_simulate, cmd_test, exit_code_for, SimulateArgs, TestArgs};
use cost_core::{Sided, SplitMode, WeightKind};

#[derive(Parser)]
#[command(
    name = "cost",
    version,
    about = "Specification testing for parametric regression models",
    long_about = "Tests whether E(Y|X) follows a parametric form g(theta, X) using a \
                  split-sample, conditionally studentized U-statistic with standard-normal \
                  p-values."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test a CSV dataset against a parametric mean model.
    Test(TestCli),
    /// Run Monte Carlo size/power scenarios from a TOML config.
    Simulate(SimulateCli),
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum WeightArg {
    InverseSqrt,
    Gaussian,
    KernelSum,
    Hybrid,
}

impl From<WeightArg> for WeightKind {
    fn from(w: WeightArg) -> Self {
        match w {
            WeightArg::InverseSqrt => WeightKind::InverseSqrt,
            WeightArg::Gaussian => WeightKind::Gaussian,
            WeightArg::KernelSum => WeightKind::KernelSum,
            WeightArg::Hybrid => WeightKind::Hybrid,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum SplitModeArg {
    SeededShuffle,
    AsOrdered,
}

impl From<SplitModeArg> for SplitMode {
    fn from(m: SplitModeArg) -> Self {
        match m {
            SplitModeArg::SeededShuffle => SplitMode::SeededShuffle,
            SplitModeArg::AsOrdered => SplitMode::AsOrdered,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum SidedArg {
    One,
    Two,
}

impl From<SidedArg> for Sided {
    fn from(s: SidedArg) -> Self {
        match s {
            SidedArg::One => Sided::One,
            SidedArg::Two => Sided::Two,
        }
    }
}

#[derive(Args)]
struct TestCli {
    /// CSV file with a header row and numeric body.
    #[arg(long)]
    data: PathBuf,
    /// Response column, by header name or 0-based index (names win).
    #[arg(long)]
    response: String,
    /// Model family: linear, single_index_cosine, linear_plus_exp_index,
    /// sine_coordinates, pairwise_interaction, triple_interaction_sine,
    /// block_product_sine, block_sum_sine, fixed_direction_polynomial.
    #[arg(long)]
    model: String,
    /// Parameter count (block families only).
    #[arg(long)]
    p: Option<usize>,
    /// File of whitespace- or comma-separated numbers for the fixed
    /// direction beta (fixed_direction_polynomial).
    #[arg(long)]
    beta_file: Option<PathBuf>,
    /// Weight function linking residual pairs.
    #[arg(long, value_enum, default_value_t = WeightArg::Hybrid)]
    weight: WeightArg,
    /// Bandwidth constant in h = c * n^(-0.2).
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Divide the kernel sum by q (defaults per weight kind).
    #[arg(long)]
    normalize_by_q: Option<bool>,
    /// Fraction of rows assigned to the second subsample.
    #[arg(long, default_value_t = 0.25)]
    split_frac: f64,
    /// How rows are assigned to the subsamples.
    #[arg(long, value_enum, default_value_t = SplitModeArg::SeededShuffle)]
    split_mode: SplitModeArg,
    /// Seed for the split shuffle (and any multi-start restarts).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// p-value convention to headline.
    #[arg(long, value_enum, default_value_t = SidedArg::Two)]
    sided: SidedArg,
    /// Output directory for report.toml and residuals.csv.
    #[arg(long, default_value = "cost_report")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateCli {
    /// TOML scenario config.
    config: PathBuf,
    /// Results CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run_test(cli: TestCli) -> cost_core::Result<()> {
    let args = TestArgs {
        data: cli.data,
        response: cli.response,
        model: cli.model,
        p: cli.p,
        beta_file: cli.beta_file,
        weight: cli.weight.into(),
        c: cli.c,
        normalize_by_q: cli.normalize_by_q,
        split_frac: cli.split_frac,
        split_mode: cli.split_mode.into(),
        seed: cli.seed,
        sided: cli.sided.into(),
        out: cli.out,
    };
    let report = cmd_test(&args)?;
    if !(report.test.converged_1 && report.test.converged_2 && report.test.converged_full) {
        eprintln!("warning: a least-squares fit hit its iteration budget; see the report");
    }
    println!("model:       {}", report.model.label);
    println!(
        "data:        {} ({} rows, {} predictors, response {:?})",
        report.data.path, report.data.n, report.data.q, report.data.response
    );
    println!(
        "split:       n1 = {}, n2 = {} ({})",
        report.test.n1, report.test.n2, report.config.split_mode
    );
    println!("bandwidth:   {}", report.test.bandwidth);
    println!("statistic:   {}", report.test.statistic);
    println!(
        "p-value:     {} ({}-sided)",
        report.test.p_value, report.test.sided
    );
    println!("report:      {}", args.out.join("report.toml").display());
    println!("residuals:   {}", args.out.join("residuals.csv").display());
    Ok(())
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match cli.command {
        Command::Test(t) => run_test(t),
        Command::Simulate(s) => cmd_simulate(&SimulateArgs {
            config: s.config,
            out: s.out,
        }),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(exit_code_for(&err));
    }
}
