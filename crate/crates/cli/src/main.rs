use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use athres::distributed::{merge_with, waste_report, MergeStrategy, SampleEnvelope};
use athres::estimate::{estimate_by_name, EstimatorArgs};
use athres::harness::{
    check_factorization, draw_sample, ingest_path, render, run_distributed_waste, run_logistic_sim,
    verify_unbiasedness, Design, DistributedWasteSpec, ExperimentConfig, InputFormat,
    LogisticSimSpec, PilotMode, Population, Report, ReportFormat,
};
use athres::rng::seeded;
use athres::PriorityFamily;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "athres", version, about = "Adaptive threshold sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a JSONL or CSV item stream into an envelope.
    Sample(SampleArgs),
    /// Run a named estimator on an envelope.
    Estimate(EstimateArgs),
    /// Merge node envelopes.
    Merge(MergeArgs),
    /// Monte-Carlo design checks.
    #[command(subcommand)]
    Check(CheckCommand),
    /// Monte-Carlo estimator checks.
    #[command(subcommand)]
    Verify(VerifyCommand),
    /// Simulation experiments.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Subcommand)]
enum CheckCommand {
    /// Check that inverse inclusion products have expectation one.
    Factorization(FactorArgs),
}

#[derive(Subcommand)]
enum VerifyCommand {
    /// Compare estimator means with population values.
    Unbiasedness(UnbiasedArgs),
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Min-merge versus naive top-k over simulated nodes.
    DistributedWaste(WasteArgs),
    /// Streaming logistic regression with forward-decay samplers.
    Logistic(LogisticArgs),
}

#[derive(Args)]
struct ReportOpts {
    /// Report rendering: text or json.
    #[arg(long, default_value = "text")]
    report: ReportFormat,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    /// Input file, `-` for stdin.
    #[arg(default_value = "-")]
    input: PathBuf,
    /// Input format: jsonl or csv.
    #[arg(long, default_value = "jsonl")]
    format: InputFormat,
    /// Sampler or threshold rule, e.g. `heap:100`, `fast:100`, `fixed_k:10`.
    #[arg(long, default_value = "heap:100")]
    design: Design,
    /// Priority family: uniform, exponential or lomax:<a>.
    #[arg(long, default_value = "uniform")]
    family: PriorityFamily,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Variance-adapted rules use the `mean^2 / (eps^2 sd^2)` size formula.
    #[arg(long)]
    paper_formula: bool,
    /// Envelope destination; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    envelope: PathBuf,
    /// ht, variance, threshold_inclusion, cdf, quantile, mean, u_variance,
    /// stratum_ht or objective_ht.
    #[arg(long)]
    estimator: String,
    #[arg(long)]
    at: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    /// Known population weight total for `cdf`.
    #[arg(long)]
    alpha: Option<f64>,
    /// Population size for `u_variance`.
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    stratum: Option<String>,
    #[arg(long, default_value_t = 0)]
    column: usize,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MergeArgs {
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// min or naive.
    #[arg(long, default_value = "min")]
    strategy: MergeStrategy,
    /// Merged envelope destination; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FactorArgs {
    /// Sampler or threshold rule.
    #[arg(long)]
    design: Design,
    /// Population: linear:<n>, skewed:<n>, pairs:<n>, strata:<n>:<s> or file:<path>.
    #[arg(long, default_value = "linear:6")]
    population: String,
    #[arg(long, default_value = "uniform")]
    family: PriorityFamily,
    /// Largest index-set size checked.
    #[arg(long, short = 'v', default_value_t = 2)]
    degree: usize,
    /// Variance-adapted rules use the `mean^2 / (eps^2 sd^2)` size formula.
    #[arg(long)]
    paper_formula: bool,
    #[arg(long, default_value_t = 100_000)]
    replicates: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    report: ReportOpts,
}

#[derive(Args)]
struct UnbiasedArgs {
    /// JSON experiment config; when given, the other experiment flags are ignored.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "linear:6")]
    population: String,
    #[arg(long, default_value = "fixed_k:3")]
    design: String,
    #[arg(long, default_value = "uniform")]
    family: String,
    /// Comma-separated estimator names.
    #[arg(long, default_value = "ht", value_delimiter = ',')]
    estimators: Vec<String>,
    #[arg(long, default_value_t = 100_000)]
    replicates: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    report: ReportOpts,
}

#[derive(Args)]
struct WasteArgs {
    #[arg(long, default_value_t = 10)]
    nodes: usize,
    #[arg(long, default_value_t = 100)]
    k: usize,
    #[arg(long, default_value_t = 10_000)]
    n_per_node: u64,
    /// Independent repetitions of the whole experiment.
    #[arg(long, default_value_t = 1)]
    replicates: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Expected mean merged threshold to check against.
    #[arg(long)]
    reference_tau_min: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    relative_tolerance: f64,
    #[command(flatten)]
    report: ReportOpts,
}

#[derive(Args)]
struct LogisticArgs {
    #[arg(long, default_value_t = 1_000_000)]
    n_points: usize,
    #[arg(long, default_value_t = 2.8)]
    c: f64,
    #[arg(long, default_value_t = 50)]
    batch: usize,
    /// Forward-decay rate; defaults to a half-life of 0.1.
    #[arg(long)]
    decay: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    k: usize,
    /// Independent runs, seeded consecutively.
    #[arg(long, default_value_t = 1)]
    replicates: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use p = 1/2 as pilot instead of the running fit.
    #[arg(long)]
    half_pilot: bool,
    #[arg(long)]
    min_ratio: Option<f64>,
    #[arg(long)]
    reference_bayes_error: Option<f64>,
    /// Write the first run's evaluation series here as CSV.
    #[arg(long)]
    series: Option<PathBuf>,
    #[command(flatten)]
    report: ReportOpts,
}

type CliResult = Result<ExitCode, Box<dyn std::error::Error>>;

fn write_out(path: Option<&Path>, text: &str) -> io::Result<()> {
    match path {
        Some(p) => fs::write(p, text),
        None => io::stdout().lock().write_all(text.as_bytes()),
    }
}

fn emit<R: Report>(report: &R, opts: &ReportOpts) -> CliResult {
    write_out(opts.out.as_deref(), &render(report, opts.report)?)?;
    Ok(if report.verdict().passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn sample(a: SampleArgs) -> CliResult {
    let ingested = ingest_path(&a.input, a.format)?;
    for (line, reason) in &ingested.problems {
        eprintln!("line {line}: rejected: {reason}");
    }
    let population = Population {
        name: a.input.display().to_string(),
        items: ingested.items,
    };
    let design = if a.paper_formula { a.design.with_paper_formula() } else { a.design };
    let mut rng = seeded(a.seed);
    let mut sample = draw_sample(&design, &population, a.family, &mut rng)?;
    sample.seed = a.seed;
    let envelope = SampleEnvelope::new(sample);
    write_out(a.out.as_deref(), &envelope.to_jsonl())?;
    Ok(ExitCode::SUCCESS)
}

fn estimate(a: EstimateArgs) -> CliResult {
    let envelope = SampleEnvelope::read_file(&a.envelope)?;
    let args = EstimatorArgs {
        at: a.at,
        q: a.q,
        alpha: a.alpha,
        population: a.population,
        stratum: a.stratum,
        column: a.column,
    };
    let est = estimate_by_name(&envelope.sample, &a.estimator, &args)?;
    let mut text = serde_json::to_string(&est)?;
    text.push('\n');
    write_out(a.out.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

fn merge(a: MergeArgs) -> CliResult {
    let envelopes = a
        .files
        .iter()
        .map(SampleEnvelope::read_file)
        .collect::<athres::Result<Vec<_>>>()?;
    let merged = merge_with(&envelopes, a.strategy)?;
    let waste = waste_report(&envelopes, a.strategy)?;
    eprintln!(
        "{} merge of {} nodes: kept {} of {} transferred items ({:.4})",
        waste.strategy, waste.nodes, waste.retained, waste.transferred, waste.retention
    );
    write_out(a.out.as_deref(), &merged.to_jsonl())?;
    Ok(ExitCode::SUCCESS)
}

fn factorization(a: FactorArgs) -> CliResult {
    let population = Population::parse(&a.population)?;
    let design = if a.paper_formula { a.design.with_paper_formula() } else { a.design };
    let report = check_factorization(&design, &population, a.family, a.degree, a.replicates, a.seed)?;
    emit(&report, &a.report)
}

fn unbiasedness(a: UnbiasedArgs) -> CliResult {
    let config = match &a.config {
        Some(path) => ExperimentConfig::from_json(&fs::read_to_string(path)?)?,
        None => {
            let names: Vec<&str> = a.estimators.iter().map(String::as_str).collect();
            let mut c = ExperimentConfig::new(&a.population, &a.design, &names);
            c.family = a.family;
            c.replicates = a.replicates;
            c.seed = a.seed;
            c
        }
    };
    let report = verify_unbiasedness(&config)?;
    let out = a.report.out.clone().or_else(|| config.output.as_ref().map(PathBuf::from));
    emit(&report, &ReportOpts { report: a.report.report, out })
}

fn waste(a: WasteArgs) -> CliResult {
    let spec = DistributedWasteSpec {
        runs: a.replicates,
        seed: a.seed,
        reference_tau_min: a.reference_tau_min,
        relative_tolerance: a.relative_tolerance,
        ..DistributedWasteSpec::new(a.nodes, a.k, a.n_per_node)
    };
    emit(&run_distributed_waste(&spec)?, &a.report)
}

fn logistic(a: LogisticArgs) -> CliResult {
    let defaults = LogisticSimSpec::default();
    let spec = LogisticSimSpec {
        n_points: a.n_points,
        c: a.c,
        batch: a.batch,
        decay: a.decay.unwrap_or(defaults.decay),
        k: a.k,
        seed: a.seed,
        replicates: a.replicates,
        pilot: if a.half_pilot { PilotMode::Half } else { PilotMode::Fitted },
        min_ratio: a.min_ratio,
        reference_bayes_error: a.reference_bayes_error,
        ..defaults
    };
    let report = run_logistic_sim(&spec)?;
    if let Some(path) = &a.series {
        fs::write(path, report.series_csv())?;
    }
    emit(&report, &a.report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sample(a) => sample(a),
        Command::Estimate(a) => estimate(a),
        Command::Merge(a) => merge(a),
        Command::Check(CheckCommand::Factorization(a)) => factorization(a),
        Command::Verify(VerifyCommand::Unbiasedness(a)) => unbiasedness(a),
        Command::Experiment(ExperimentCommand::DistributedWaste(a)) => waste(a),
        Command::Experiment(ExperimentCommand::Logistic(a)) => logistic(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })
}
