//! Experiment orchestration: expands a configuration into grid cells, runs
//! the Monte Carlo estimates per cell, writes raw-sample CSVs and report
//! files, and fits the runtime-versus-size model for the sweep experiment.

use std::fmt::Write as _;
use std::path::PathBuf;

use num_bigint::BigUint;

use privmean_core::data_gen::{load_csv, Dataset, DistSpec};
use privmean_core::mean_protocols::{MeanProtocolConfig, ProtocolKind};
use privmean_core::monte_carlo::{
    estimate, samples_to_csv, DatasetSource, McEstimate, McRun, RunnerSpec,
};
use privmean_core::report::{fit_ols, RegressionFit, ReportFormat, ReportRow, ReportTable};

use crate::config::{DatasetRef, Experiment, ExperimentConfig, FitOn};

/// A failure that should abort the whole run, as opposed to a single cell.
#[derive(Debug)]
pub enum CliError {
    /// Configuration problems; exit code 1. Every violation is listed.
    Validation(Vec<String>),
    /// Everything failed or output could not be written; exit code 2.
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(errors) => {
                writeln!(f, "invalid configuration:")?;
                for error in errors {
                    writeln!(f, "  - {error}")?;
                }
                Ok(())
            }
            CliError::Runtime(message) => write!(f, "{message}"),
        }
    }
}

impl std::error::Error for CliError {}

/// One grid cell: a dataset source crossed with a protocol and an
/// iteration count.
struct Cell {
    /// Report-row label, e.g. `dow_jones (750 instances)`.
    label: String,
    /// File-name slug, e.g. `type1-dow_jones-he-m1000`.
    slug: String,
    protocol: ProtocolKind,
    m: usize,
    source: DatasetSource,
    /// Dataset size, the sweep regression predictor.
    size: usize,
}

/// A finished cell: its report row plus the per-iteration samples.
pub struct CellResult {
    pub row: ReportRow,
    pub raw_csv: PathBuf,
    samples: McRun,
    size: usize,
    protocol: ProtocolKind,
}

/// Outcome of a type1/type2 run: the table, per-protocol fits (type2), the
/// files written, and any cells that failed.
pub struct ExperimentOutput {
    pub table: ReportTable,
    pub fits: Vec<(ProtocolKind, RegressionFit)>,
    pub report_path: Option<PathBuf>,
    pub fits_path: Option<PathBuf>,
    pub raw_csv_paths: Vec<PathBuf>,
    pub failures: Vec<String>,
}

/// Ad-hoc single-cell outcome.
pub struct AdhocOutput {
    pub value: BigUint,
    pub client: McEstimate,
    pub server: McEstimate,
}

fn protocol_config(cfg: &ExperimentConfig, protocol: ProtocolKind) -> MeanProtocolConfig {
    match protocol {
        ProtocolKind::He => MeanProtocolConfig::he(cfg.key_bits, cfg.mode),
        ProtocolKind::Mpc => MeanProtocolConfig::mpc(cfg.parties, cfg.modulus, cfg.mode),
    }
}

fn protocol_slug(protocol: ProtocolKind) -> &'static str {
    match protocol {
        ProtocolKind::He => "he",
        ProtocolKind::Mpc => "mpc",
    }
}

fn runner_spec(cfg: &ExperimentConfig, cell: &Cell) -> RunnerSpec {
    RunnerSpec {
        config: protocol_config(cfg, cell.protocol),
        source: cell.source.clone(),
        master_seed: cfg.seed,
        schedule: cfg.schedule,
        clock: cfg.clock,
    }
}

fn run_cell(cfg: &ExperimentConfig, cell: &Cell) -> Result<CellResult, String> {
    let spec = runner_spec(cfg, cell);
    let mut runner = spec
        .prepare()
        .map_err(|e| format!("cell {}: setup failed: {e}", cell.slug))?;
    let run = estimate(&mut runner, cell.m)
        .map_err(|e| format!("cell {}: {e}", cell.slug))?;

    let raw_csv = cfg.out_dir.join(format!("{}-raw.csv", cell.slug));
    std::fs::write(&raw_csv, samples_to_csv(&run.records))
        .map_err(|e| format!("cell {}: cannot write {}: {e}", cell.slug, raw_csv.display()))?;

    Ok(CellResult {
        row: ReportRow {
            dataset: cell.label.clone(),
            protocol: cell.protocol.to_string(),
            m: cell.m,
            theta_cli_ms: run.client.theta_hat,
            var_cli: run.client.var_hat,
            theta_srv_ms: run.server.theta_hat,
            var_srv: run.server.var_hat,
        },
        raw_csv,
        samples: run,
        size: cell.size,
        protocol: cell.protocol,
    })
}

/// Runs every cell, serially by default or on threads with
/// `parallel_cells`. Cell failures are collected, not fatal.
fn run_cells(
    cfg: &ExperimentConfig,
    cells: &[Cell],
) -> (Vec<CellResult>, Vec<String>) {
    let outcomes: Vec<Result<CellResult, String>> = if cfg.parallel_cells {
        std::thread::scope(|scope| {
            let handles: Vec<_> = cells
                .iter()
                .map(|cell| scope.spawn(move || run_cell(cfg, cell)))
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join()
                        .unwrap_or_else(|_| Err("cell worker panicked".to_string()))
                })
                .collect()
        })
    } else {
        cells.iter().map(|cell| run_cell(cfg, cell)).collect()
    };

    let mut results = Vec::new();
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(result) => results.push(result),
            Err(message) => failures.push(message),
        }
    }
    (results, failures)
}

fn ensure_out_dir(cfg: &ExperimentConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| {
        CliError::Runtime(format!(
            "cannot create output directory {}: {e}",
            cfg.out_dir.display()
        ))
    })
}

fn timestamp() -> String {
    chrono::Utc::now().format("%Y%m%d%H%M%S").to_string()
}

fn write_report(
    cfg: &ExperimentConfig,
    experiment: Experiment,
    table: &ReportTable,
) -> Result<PathBuf, CliError> {
    let name = format!("{}-{}.{}", experiment, timestamp(), cfg.format.extension());
    let path = cfg.out_dir.join(name);
    let rendered = table
        .render(cfg.format)
        .map_err(|e| CliError::Runtime(format!("cannot render report: {e}")))?;
    std::fs::write(&path, rendered)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn load_fixed_datasets(cfg: &ExperimentConfig) -> Result<Vec<(DatasetRef, Dataset)>, CliError> {
    let mut errors = Vec::new();
    let mut loaded = Vec::new();
    for dataset_ref in &cfg.datasets {
        match load_csv(&dataset_ref.path, &dataset_ref.column) {
            Ok(dataset) => loaded.push((dataset_ref.clone(), dataset)),
            Err(e) => errors.push(format!("{}: {e}", dataset_ref.path.display())),
        }
    }
    if errors.is_empty() {
        Ok(loaded)
    } else {
        Err(CliError::Validation(errors))
    }
}

/// Experiment type 1: fixed datasets crossed with the selected protocols
/// and iteration counts.
pub fn cmd_type1(cfg: &ExperimentConfig) -> Result<ExperimentOutput, CliError> {
    cfg.validate().map_err(CliError::Validation)?;
    ensure_out_dir(cfg)?;
    let datasets = load_fixed_datasets(cfg)?;

    let mut cells = Vec::new();
    for (dataset_ref, dataset) in &datasets {
        let stem = dataset_ref.stem();
        let label = format!("{} ({} instances)", stem, dataset.len());
        for &protocol in &cfg.protocols {
            for &m in &cfg.m {
                cells.push(Cell {
                    label: label.clone(),
                    slug: format!("type1-{}-{}-m{}", stem, protocol_slug(protocol), m),
                    protocol,
                    m,
                    source: DatasetSource::Fixed(dataset.values.clone()),
                    size: dataset.len(),
                });
            }
        }
    }

    finish_experiment(cfg, Experiment::Type1, cells)
}

/// Experiment type 2: the distribution-by-size sweep, plus one
/// `t_cli ~ β₀ + β₁·ℓ` fit per protocol.
pub fn cmd_type2(cfg: &ExperimentConfig) -> Result<ExperimentOutput, CliError> {
    cfg.validate().map_err(CliError::Validation)?;
    ensure_out_dir(cfg)?;

    let mut cells = Vec::new();
    for (name, size, spec) in cfg.sweep_specs() {
        for &protocol in &cfg.protocols {
            for &m in &cfg.m {
                cells.push(Cell {
                    label: format!("{} l={}", spec.label(), size),
                    slug: format!(
                        "type2-{}-l{}-{}-m{}",
                        name.slug(),
                        size,
                        protocol_slug(protocol),
                        m
                    ),
                    protocol,
                    m,
                    source: DatasetSource::Sampled(spec),
                    size,
                });
            }
        }
    }

    finish_experiment(cfg, Experiment::Type2, cells)
}

fn finish_experiment(
    cfg: &ExperimentConfig,
    experiment: Experiment,
    cells: Vec<Cell>,
) -> Result<ExperimentOutput, CliError> {
    let (results, failures) = run_cells(cfg, &cells);
    if results.is_empty() {
        return Err(CliError::Runtime(format!(
            "every cell failed:\n{}",
            failures.join("\n")
        )));
    }

    let mut table = ReportTable::default();
    for result in &results {
        table.push(result.row.clone());
    }
    let report_path = write_report(cfg, experiment, &table)?;

    let (fits, fits_path) = if experiment == Experiment::Type2 {
        let fits = fit_runtime_model(cfg, &results);
        let path = if fits.is_empty() {
            None
        } else {
            Some(write_fits(cfg, &fits)?)
        };
        (fits, path)
    } else {
        (Vec::new(), None)
    };

    Ok(ExperimentOutput {
        table,
        fits,
        report_path: Some(report_path),
        fits_path,
        raw_csv_paths: results.iter().map(|r| r.raw_csv.clone()).collect(),
        failures,
    })
}

/// Fits client runtime against dataset size per protocol. With
/// `FitOn::Samples` every iteration contributes a point; with
/// `FitOn::Aggregates` each cell contributes its mean estimate.
fn fit_runtime_model(
    cfg: &ExperimentConfig,
    results: &[CellResult],
) -> Vec<(ProtocolKind, RegressionFit)> {
    let mut fits = Vec::new();
    for &protocol in &cfg.protocols {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for result in results.iter().filter(|r| r.protocol == protocol) {
            match cfg.fit_on {
                FitOn::Samples => {
                    for record in &result.samples.records {
                        x.push(result.size as f64);
                        y.push(record.t_cli_ms);
                    }
                }
                FitOn::Aggregates => {
                    x.push(result.size as f64);
                    y.push(result.samples.client.theta_hat);
                }
            }
        }
        if let Ok(fit) = fit_ols(&x, &y) {
            fits.push((protocol, fit));
        }
    }
    fits
}

#[derive(serde::Serialize)]
struct FitRecord<'a> {
    protocol: String,
    fit: &'a RegressionFit,
}

fn write_fits(
    cfg: &ExperimentConfig,
    fits: &[(ProtocolKind, RegressionFit)],
) -> Result<PathBuf, CliError> {
    let records: Vec<FitRecord> = fits
        .iter()
        .map(|(protocol, fit)| FitRecord {
            protocol: protocol.to_string(),
            fit,
        })
        .collect();
    let path = cfg.out_dir.join(format!("type2-{}-fits.json", timestamp()));
    let text = serde_json::to_string_pretty(&records)
        .map_err(|e| CliError::Runtime(format!("cannot serialize fits: {e}")))?;
    std::fs::write(&path, text)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

/// Ad-hoc run: one protocol, one dataset, one iteration count; the value
/// and the estimate pair go to standard output.
pub fn cmd_adhoc(cfg: &ExperimentConfig) -> Result<AdhocOutput, CliError> {
    cfg.validate().map_err(CliError::Validation)?;

    let values = match (&cfg.values, cfg.datasets.first()) {
        (Some(values), _) => values.clone(),
        (None, Some(dataset_ref)) => load_csv(&dataset_ref.path, &dataset_ref.column)
            .map_err(|e| CliError::Validation(vec![e.to_string()]))?
            .values,
        (None, None) => unreachable!("validate() checked"),
    };
    let protocol = *cfg
        .protocols
        .first()
        .expect("validate() requires a protocol");
    let m = *cfg.m.first().expect("validate() requires an entry");

    let spec = RunnerSpec {
        config: protocol_config(cfg, protocol),
        source: DatasetSource::Fixed(values),
        master_seed: cfg.seed,
        schedule: cfg.schedule,
        clock: cfg.clock,
    };
    let mut runner = spec
        .prepare()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let value = runner
        .run_value(0)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let run = estimate(&mut runner, m).map_err(|e| CliError::Runtime(e.to_string()))?;

    Ok(AdhocOutput {
        value,
        client: run.client,
        server: run.server,
    })
}

/// Renders the human-facing summary printed after a type1/type2 run.
pub fn summarize(output: &ExperimentOutput) -> String {
    let mut text = String::new();
    let _ = writeln!(
        text,
        "{}",
        output
            .table
            .render(ReportFormat::Markdown)
            .unwrap_or_default()
    );
    for (protocol, fit) in &output.fits {
        let _ = writeln!(text, "t_cli ~ b0 + b1*l [{protocol}]: {fit}");
    }
    if let Some(path) = &output.report_path {
        let _ = writeln!(text, "report: {}", path.display());
    }
    if let Some(path) = &output.fits_path {
        let _ = writeln!(text, "fits: {}", path.display());
    }
    let _ = writeln!(text, "raw samples: {} file(s)", output.raw_csv_paths.len());
    text
}
