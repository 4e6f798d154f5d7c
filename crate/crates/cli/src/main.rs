mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use twinmeter::estimate::{DeadTimeMode, SpreadMode};
use twinmeter::phasematch::PumpAngle;

/// Coincidence-based transmittance measurement: simulation, analysis and table reproduction.
#[derive(Parser)]
#[command(name = "twinmeter", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Phase-matched emission angle versus signal wavelength.
    PmCurve(PmCurveArgs),
    /// Generate detector timestamps (dead time applied).
    Simulate(SimulateArgs),
    /// Count coincidences per gate from a timestamp file.
    Count(CountArgs),
    /// Normalised signal-idler delay histogram from a timestamp file.
    G2(G2Args),
    /// Transmittance from reference and sample count files, or from a bundled table.
    Estimate(EstimateArgs),
    /// Fit the two-exponential concentration model.
    Fit(FitArgs),
    /// Concentration and its uncertainty from a fitted model.
    Concentration(ConcentrationArgs),
    /// Recompute a bundled result table next to the printed values.
    ReproduceTable(TableArgs),
    /// Simulate, count, correct and estimate a reference and a sample run.
    Run(RunArgs),
}

#[derive(Args)]
struct PmCurveArgs {
    #[arg(long, default_value_t = 780.0)]
    lambda_min_nm: f64,
    #[arg(long, default_value_t = 840.0)]
    lambda_max_nm: f64,
    #[arg(long, default_value_t = 61)]
    steps: usize,
    #[arg(long, default_value_t = 405.0)]
    pump_nm: f64,
    #[arg(long, default_value_t = 29.3)]
    cut_angle_deg: f64,
    #[arg(long, default_value_t = 0.5)]
    length_mm: f64,
    /// `cut-angle` or `signal-tilted`.
    #[arg(long, default_value = "cut-angle")]
    pump_angle: PumpAngle,
    #[arg(long, default_value = "brent")]
    root_finder: String,
    /// Sellmeier coefficient file (TOML); bundled BBO values otherwise.
    #[arg(long)]
    coefficients: Option<PathBuf>,
    /// CSV output; stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SourceArgs {
    /// Run configuration (TOML); table-scale defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_gates: Option<usize>,
    #[arg(long)]
    gate_s: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Sample transmittance; the configured value (or 100) when absent.
    #[arg(long)]
    transmittance_pct: Option<f64>,
    #[arg(long, default_value_t = 0)]
    first_gate: u64,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct CountArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.3)]
    gate_s: f64,
    #[arg(long, default_value_t = 7.1)]
    tau_cc_ns: f64,
    #[arg(long, default_value = "greedy")]
    counter: String,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct G2Args {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.3)]
    gate_s: f64,
    #[arg(long, default_value_t = 1.0)]
    bin_ns: f64,
    #[arg(long, default_value_t = 41.0)]
    range_ns: f64,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CorrectionArgs {
    #[arg(long, default_value_t = 0.0)]
    dark1_cps: f64,
    #[arg(long, default_value_t = 0.0)]
    dark2_cps: f64,
    #[arg(long, default_value_t = 0.0)]
    tau_dead_ns: f64,
    #[arg(long, default_value_t = 7.1)]
    tau_cc_ns: f64,
    #[arg(long, default_value_t = 0.3)]
    gate_s: f64,
    /// `divide` or `literal-multiply`.
    #[arg(long, default_value = "divide")]
    dead_time: DeadTimeMode,
    /// Skip the coincidence live-time correction.
    #[arg(long)]
    no_coincidence_live_time: bool,
    /// `sample-std` or `standard-error`.
    #[arg(long, default_value = "sample-std")]
    spread: SpreadMode,
}

#[derive(Args)]
struct EstimateArgs {
    /// Per-gate counts of the sample run.
    #[arg(long, required_unless_present = "paper_table", conflicts_with = "paper_table")]
    sample: Option<PathBuf>,
    /// Per-gate counts of the reference (no-sample) run.
    #[arg(long, required_unless_present = "paper_table")]
    reference: Option<PathBuf>,
    #[command(flatten)]
    corrections: CorrectionArgs,
    /// Estimate every row of bundled table 1, 2 or 3 instead.
    #[arg(long, alias = "table")]
    paper_table: Option<u8>,
    #[arg(long, requires = "paper_table")]
    reference_label: Option<String>,
    #[arg(long, requires = "paper_table")]
    data_dir: Option<PathBuf>,
    /// JSON output; stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// CSV with `concentration_ng_ul,transmittance_pct,dT_pct`.
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ConcentrationArgs {
    /// Fit output or bare model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Measured transmittance, percent.
    #[arg(long = "t", alias = "t-pct", allow_negative_numbers = true)]
    t_pct: f64,
    /// Its uncertainty, percent points.
    #[arg(long = "dt", alias = "dt-pct", default_value_t = 0.0)]
    dt_pct: f64,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum TableFormat {
    Text,
    Csv,
    Json,
}

#[derive(Args)]
struct TableArgs {
    #[arg(long, alias = "paper-table")]
    table: u8,
    /// Row used as reference; the first row when absent.
    #[arg(long)]
    reference_label: Option<String>,
    /// Directory holding `table{1,2,3}.csv`; bundled copies otherwise.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: TableFormat,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Report path; overrides the configured one. Stdout when neither is set.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::PmCurve(a) => commands::pm_curve(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Count(a) => commands::count(a),
        Command::G2(a) => commands::g2(a),
        Command::Estimate(a) => commands::estimate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Concentration(a) => commands::concentration(a),
        Command::ReproduceTable(a) => commands::reproduce_table(a),
        Command::Run(a) => commands::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = e.downcast_ref::<twinmeter::Error>().map_or(2, |e| e.exit_code());
            ExitCode::from(code as u8)
        }
    }
}
