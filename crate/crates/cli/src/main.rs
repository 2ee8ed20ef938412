use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;

use clap::error::ErrorKind;
use clap::Parser;

use privmean_cli::config::{DatasetRef, DistName, Experiment, ExperimentConfig, FitOn};
use privmean_cli::experiments::{cmd_adhoc, cmd_type1, cmd_type2, summarize, CliError};
use privmean_core::harness::{Schedule, SimHarness, Transcript};
use privmean_core::mean_protocols::{MeanProtocolConfig, Mode, ProtocolInstance, ProtocolKind};
use privmean_core::monte_carlo::ClockSpec;
use privmean_core::report::ReportFormat;

/// Benchmarks two privacy-preserving distributed mean protocols and
/// estimates their client/server runtimes by Monte Carlo simulation.
#[derive(Debug, Parser)]
#[command(name = "privmean", version)]
struct Cli {
    /// JSON configuration file; every flag below overrides its fields
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Experiment to run: type1 (fixed datasets), type2 (sweep), adhoc
    #[arg(long)]
    experiment: Option<Experiment>,

    /// Protocols to run, comma separated: he,mpc
    #[arg(long, value_delimiter = ',')]
    protocol: Option<Vec<String>>,

    /// Monte Carlo iteration counts, comma separated
    #[arg(long, value_delimiter = ',')]
    m: Option<Vec<usize>>,

    /// Sweep dataset sizes, comma separated
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,

    /// Sweep distributions: uniform,normal,gamma,beta
    #[arg(long = "dist", value_delimiter = ',')]
    distributions: Option<Vec<DistName>>,

    /// MPC computing parties
    #[arg(long)]
    parties: Option<usize>,

    /// Paillier modulus size in bits
    #[arg(long = "key-bits")]
    key_bits: Option<usize>,

    /// Secret-sharing modulus q
    #[arg(long)]
    modulus: Option<u64>,

    /// Output semantics: paper_faithful or exact
    #[arg(long)]
    mode: Option<String>,

    /// Master seed for the whole experiment
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory for reports and raw samples
    #[arg(long = "out")]
    out_dir: Option<PathBuf>,

    /// Report format: markdown, csv or json
    #[arg(long)]
    format: Option<String>,

    /// Time source: monotonic, or fake[:STEP_NS] for deterministic runs
    #[arg(long)]
    clock: Option<String>,

    /// Party scheduling: sequential or concurrent
    #[arg(long)]
    schedule: Option<String>,

    /// Inline dataset for adhoc runs, comma separated
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<u64>>,

    /// CSV dataset path (replaces the configured dataset list)
    #[arg(long, requires = "column")]
    dataset: Option<PathBuf>,

    /// Column of --dataset to average
    #[arg(long)]
    column: Option<String>,

    /// Scale iteration counts and sizes down 100x for CI
    #[arg(long)]
    smoke: bool,

    /// Run grid cells on threads (correctness-only; timings lose fidelity)
    #[arg(long = "parallel-cells")]
    parallel_cells: bool,

    /// Fit the sweep model on samples or aggregates
    #[arg(long = "fit-on")]
    fit_on: Option<FitOn>,

    /// Print per-party server timings and the protocol transcript
    #[arg(long)]
    verbose: bool,
}

fn parse_protocols(raw: &[String]) -> Result<Vec<ProtocolKind>, String> {
    raw.iter()
        .map(|p| match p.to_ascii_lowercase().as_str() {
            "he" => Ok(ProtocolKind::He),
            "mpc" => Ok(ProtocolKind::Mpc),
            other => Err(format!("unknown protocol '{other}', expected he or mpc")),
        })
        .collect()
}

fn parse_mode(raw: &str) -> Result<Mode, String> {
    match raw.to_ascii_lowercase().as_str() {
        "paper_faithful" | "paper-faithful" => Ok(Mode::PaperFaithful),
        "exact" => Ok(Mode::Exact),
        other => Err(format!(
            "unknown mode '{other}', expected paper_faithful or exact"
        )),
    }
}

fn parse_clock(raw: &str) -> Result<ClockSpec, String> {
    let lower = raw.to_ascii_lowercase();
    if lower == "monotonic" {
        return Ok(ClockSpec::Monotonic);
    }
    if lower == "fake" {
        return Ok(ClockSpec::Fake { step_ns: 1_000 });
    }
    if let Some(step) = lower.strip_prefix("fake:") {
        let step_ns = step
            .parse()
            .map_err(|_| format!("bad fake clock step '{step}'"))?;
        return Ok(ClockSpec::Fake { step_ns });
    }
    Err(format!(
        "unknown clock '{raw}', expected monotonic or fake[:STEP_NS]"
    ))
}

fn parse_schedule(raw: &str) -> Result<Schedule, String> {
    match raw.to_ascii_lowercase().as_str() {
        "sequential" => Ok(Schedule::Sequential),
        "concurrent" => Ok(Schedule::Concurrent),
        other => Err(format!(
            "unknown schedule '{other}', expected sequential or concurrent"
        )),
    }
}

/// Builds the effective configuration: file (or defaults), then flags.
fn merge(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut errors = Vec::new();
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| CliError::Validation(vec![e]))?,
        None => ExperimentConfig::default(),
    };

    if let Some(experiment) = cli.experiment {
        cfg.experiment = experiment;
    }
    if let Some(raw) = &cli.protocol {
        match parse_protocols(raw) {
            Ok(protocols) => cfg.protocols = protocols,
            Err(e) => errors.push(e),
        }
    }
    if let Some(m) = &cli.m {
        cfg.m = m.clone();
    }
    if let Some(sizes) = &cli.sizes {
        cfg.sizes = sizes.clone();
    }
    if let Some(distributions) = &cli.distributions {
        cfg.distributions = distributions.clone();
    }
    if let Some(parties) = cli.parties {
        cfg.parties = parties;
    }
    if let Some(key_bits) = cli.key_bits {
        cfg.key_bits = key_bits;
    }
    if let Some(modulus) = cli.modulus {
        cfg.modulus = modulus;
    }
    if let Some(raw) = &cli.mode {
        match parse_mode(raw) {
            Ok(mode) => cfg.mode = mode,
            Err(e) => errors.push(e),
        }
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out_dir) = &cli.out_dir {
        cfg.out_dir = out_dir.clone();
    }
    if let Some(raw) = &cli.format {
        match ReportFormat::from_str(raw) {
            Ok(format) => cfg.format = format,
            Err(e) => errors.push(e.to_string()),
        }
    }
    if let Some(raw) = &cli.clock {
        match parse_clock(raw) {
            Ok(clock) => cfg.clock = clock,
            Err(e) => errors.push(e),
        }
    }
    if let Some(raw) = &cli.schedule {
        match parse_schedule(raw) {
            Ok(schedule) => cfg.schedule = schedule,
            Err(e) => errors.push(e),
        }
    }
    if let Some(values) = &cli.values {
        cfg.values = Some(values.clone());
        // An inline dataset replaces the configured files for adhoc runs.
        if cfg.experiment == Experiment::Adhoc && cli.dataset.is_none() {
            cfg.datasets.clear();
        }
    }
    if let (Some(path), Some(column)) = (&cli.dataset, &cli.column) {
        cfg.datasets = vec![DatasetRef {
            path: path.clone(),
            column: column.clone(),
        }];
    }
    if let Some(fit_on) = cli.fit_on {
        cfg.fit_on = fit_on;
    }
    if cli.smoke {
        cfg.smoke = true;
        cfg.apply_smoke();
    }
    if cli.parallel_cells {
        cfg.parallel_cells = true;
    }
    if cli.verbose {
        cfg.verbose = true;
    }

    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Validation(errors))
    }
}

/// One verbose protocol run with a transcript recorder attached.
fn verbose_dump(cfg: &ExperimentConfig, values: &[u64]) -> Result<String, CliError> {
    use privmean_core::monte_carlo::split_seed;
    use rand::SeedableRng;

    let protocol = *cfg.protocols.first().expect("validated");
    let protocol_cfg = match protocol {
        ProtocolKind::He => MeanProtocolConfig::he(cfg.key_bits, cfg.mode),
        ProtocolKind::Mpc => MeanProtocolConfig::mpc(cfg.parties, cfg.modulus, cfg.mode),
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(split_seed(cfg.seed, 0));
    let instance =
        ProtocolInstance::setup(&protocol_cfg, &mut rng).map_err(|e| CliError::Runtime(e.to_string()))?;
    let transcript = Arc::new(Transcript::new());
    let harness = SimHarness::new(
        cfg.schedule,
        Arc::new(privmean_core::harness::MonotonicClock::new()),
    )
    .with_transcript(Arc::clone(&transcript));
    let result = instance
        .run(values, &harness, &mut rng, 0)
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    let mut dump = format!(
        "per-party server ms: {:?}\nserver broadcasts: {}\n",
        result.per_party_srv_ms, result.server_broadcasts
    );
    let lines = transcript.to_json_lines();
    if !lines.is_empty() {
        dump.push_str(&lines);
        dump.push('\n');
    }
    Ok(dump)
}

fn execute(cli: &Cli) -> Result<Vec<String>, CliError> {
    let cfg = merge(cli)?;
    match cfg.experiment {
        Experiment::Type1 => {
            let output = cmd_type1(&cfg)?;
            print!("{}", summarize(&output));
            Ok(output.failures)
        }
        Experiment::Type2 => {
            let output = cmd_type2(&cfg)?;
            print!("{}", summarize(&output));
            Ok(output.failures)
        }
        Experiment::Adhoc => {
            let output = cmd_adhoc(&cfg)?;
            println!("value: {}", output.value);
            println!(
                "t_cli: theta_hat = {:.6} ms, var_hat = {:.6e} (M = {})",
                output.client.theta_hat, output.client.var_hat, output.client.m
            );
            println!(
                "t_srv: theta_hat = {:.6} ms, var_hat = {:.6e} (M = {})",
                output.server.theta_hat, output.server.var_hat, output.server.m
            );
            if cfg.verbose {
                let values = match &cfg.values {
                    Some(values) => values.clone(),
                    None => {
                        let dataset = cfg.datasets.first().expect("validated");
                        privmean_core::data_gen::load_csv(&dataset.path, &dataset.column)
                            .map_err(|e| CliError::Runtime(e.to_string()))?
                            .values
                    }
                };
                print!("{}", verbose_dump(&cfg, &values)?);
            }
            Ok(Vec::new())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            // Flag misuse is a validation failure: exit 1 with usage text.
            let _ = e.print();
            return ExitCode::from(1);
        }
    };

    match execute(&cli) {
        Ok(failures) if failures.is_empty() => ExitCode::SUCCESS,
        Ok(failures) => {
            eprintln!("{} cell(s) failed:", failures.len());
            for failure in &failures {
                eprintln!("  {failure}");
            }
            ExitCode::from(2)
        }
        Err(error @ CliError::Validation(_)) => {
            eprintln!("{error}");
            ExitCode::from(1)
        }
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(2)
        }
    }
}
