//! `memgrad`: device characterization, training, aging, energy accounting,
//! statistics and gradient checks from the command line.
//!
//! Exit codes: 0 success, 1 a check failed (gradcheck), 2 configuration or
//! usage error, 3 data error (missing/malformed files), 4 runtime error.

mod commands;
mod failure;
mod overrides;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "memgrad", version, about = "Memristor crossbar training simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pearson histogram and endurance cycling of a trajectory bank.
    Characterize(CharacterizeArgs),
    /// Train a network and write run artifacts.
    Train(TrainArgs),
    /// Monte-Carlo retention drift of a trained run.
    Age(AgeArgs),
    /// Re-cost a run's energy ledger under several device technologies.
    Energy(EnergyArgs),
    /// Welch t-tests with Holm-Bonferroni correction between accuracy groups.
    Stats(StatsArgs),
    /// Finite-difference checks of the learning-rule gradients.
    Gradcheck(GradcheckArgs),
    /// Plain-text summary of a run directory.
    Report(ReportArgs),
}

/// Options shared by commands that read a run configuration.
#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    /// JSON run configuration; unknown keys are rejected.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set device.kappa=1e5`; value is JSON or a bare string.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Seed (falls back to MEMGRAD_SEED, then the config).
    #[arg(long, env = "MEMGRAD_SEED")]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct CharacterizeArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory.
    #[arg(long, short)]
    out: PathBuf,
    /// Measured bank (`device_id,pulse_index,conductance_uS`); default synthesizes one.
    #[arg(long)]
    bank: Option<PathBuf>,
    #[arg(long, default_value_t = 40)]
    bins: usize,
    /// Points per trajectory in the coefficient (default: shortest trajectory).
    #[arg(long)]
    p_max: Option<usize>,
    #[arg(long, default_value_t = 300)]
    cycles: usize,
    #[arg(long, default_value_t = 5000)]
    pulses_per_cycle: usize,
    /// Keep every n-th pulse of the endurance trace.
    #[arg(long, default_value_t = 100)]
    stride: usize,
    /// Also write the bank as `bank.csv`.
    #[arg(long)]
    write_bank: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum TaskArg {
    Synthetic,
    Csv,
    Idx,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory (one subdirectory per seed with --repeat).
    #[arg(long, short)]
    out: PathBuf,
    /// bp, sff, cf, float-bp, float-sff or float-cf.
    #[arg(long)]
    algo: Option<String>,
    /// perceptron or two-layer (backpropagation only).
    #[arg(long)]
    arch: Option<String>,
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    /// Feature CSV (csv task) or IDX image file (idx task).
    #[arg(long)]
    data: Option<PathBuf>,
    /// IDX label file.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Epochs per phase, comma-separated.
    #[arg(long, value_delimiter = ',')]
    epochs: Option<Vec<usize>>,
    /// Update threshold per layer, comma-separated.
    #[arg(long, value_delimiter = ',')]
    tau: Option<Vec<f64>>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Tech profile: large-array, mac-array, mac-array-fast-read.
    #[arg(long)]
    tech: Option<String>,
    #[arg(long)]
    kappa: Option<f64>,
    /// Measured trajectory bank.
    #[arg(long)]
    bank: Option<PathBuf>,
    /// Enable multiplicative read noise with this relative sigma.
    #[arg(long)]
    read_noise: Option<f64>,
    /// Number of seeds (`seed`, `seed+1`, ...), run concurrently.
    #[arg(long, default_value_t = 1)]
    repeat: usize,
}

#[derive(Args, Debug)]
struct AgeArgs {
    /// Completed run directory.
    run: PathBuf,
    /// Checkpoints in days, comma-separated (default from the run config).
    #[arg(long, value_delimiter = ',')]
    days: Option<Vec<f64>>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long, env = "MEMGRAD_SEED")]
    seed: Option<u64>,
    /// Output directory (default: `<run>/aging`).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EnergyArgs {
    /// Run directory or a `ledger.json` file.
    source: PathBuf,
    /// Tech profiles to cost, comma-separated; the first is the reference.
    #[arg(long, value_delimiter = ',', default_value = "large-array,mac-array")]
    tech: Vec<String>,
    /// Array efficiency used for the MAC projection (operations per joule).
    #[arg(long, default_value_t = memgrad_core::energy::DEFAULT_OPS_PER_JOULE)]
    ops_per_joule: f64,
    /// Program-and-verify energy per weight update (J).
    #[arg(long, default_value_t = memgrad_core::energy::PV_ENERGY_PER_UPDATE)]
    pv_energy: f64,
    /// Output file (default: `energy.json` next to the ledger).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StatsArgs {
    /// Accuracy files: plain numbers (group = file stem), a JSON object of
    /// named lists, or a `summary.json` from `train --repeat`.
    files: Vec<PathBuf>,
    /// Inline group, e.g. `--group bp=0.9,0.91,0.89`.
    #[arg(long = "group", value_name = "NAME=V1,V2,...")]
    groups: Vec<String>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, short, default_value = "stats.json")]
    out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum RuleArg {
    All,
    Sff,
    Cf,
    Bp,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum VariantArg {
    Offset,
    Temperature,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, value_enum, default_value = "all")]
    rule: RuleArg,
    /// CF variant (default: both).
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Randomized configurations per suite.
    #[arg(long, default_value_t = 100)]
    configs: usize,
    #[arg(long, default_value_t = 1e-5)]
    rtol: f64,
    #[arg(long, env = "MEMGRAD_SEED", default_value_t = 0)]
    seed: u64,
    /// Also write the report as JSON.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Run directory (or a `--repeat` output directory).
    run: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Characterize(a) => commands::characterize(a),
        Command::Train(a) => commands::train(a),
        Command::Age(a) => commands::age(a),
        Command::Energy(a) => commands::energy(a),
        Command::Stats(a) => commands::stats(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("memgrad: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
