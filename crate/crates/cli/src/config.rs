//! Declarative experiment configuration: a single JSON file, overridable
//! field by field from the command line. Validation reports every problem
//! at once rather than stopping at the first.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use privmean_core::data_gen::{DistFamily, DistSpec};
use privmean_core::harness::Schedule;
use privmean_core::mean_protocols::{Mode, ProtocolKind};
use privmean_core::monte_carlo::ClockSpec;
use privmean_core::report::ReportFormat;

/// Which experiment the run reproduces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
#[clap(rename_all = "lowercase")]
pub enum Experiment {
    /// Fixed datasets crossed with both protocols and iteration counts.
    Type1,
    /// Distribution and size sweep plus runtime-versus-size fits.
    Type2,
    /// One ad-hoc estimate printed to standard output.
    Adhoc,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Experiment::Type1 => write!(f, "type1"),
            Experiment::Type2 => write!(f, "type2"),
            Experiment::Adhoc => write!(f, "adhoc"),
        }
    }
}

/// The four sweep distributions by name; parameters follow the reported
/// tables and can be customized via `dist_specs` in the config file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
#[clap(rename_all = "lowercase")]
pub enum DistName {
    Uniform,
    Normal,
    Gamma,
    Beta,
}

impl DistName {
    pub fn family(&self) -> DistFamily {
        match self {
            DistName::Uniform => DistFamily::Uniform { low: 80, high: 160 },
            DistName::Normal => DistFamily::Normal {
                mean: 120.0,
                std_dev: 30.0,
            },
            DistName::Gamma => DistFamily::Gamma {
                shape: 2.0,
                scale: 2.0,
            },
            DistName::Beta => DistFamily::Beta {
                alpha: 30.0,
                beta: 2.0,
            },
        }
    }

    pub fn slug(&self) -> &'static str {
        match self {
            DistName::Uniform => "uniform",
            DistName::Normal => "normal",
            DistName::Gamma => "gamma",
            DistName::Beta => "beta",
        }
    }
}

/// A fixed dataset reference: CSV path plus the numeric column to average.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub path: PathBuf,
    pub column: String,
}

impl DatasetRef {
    /// Short name used in report rows and raw-sample file names.
    pub fn stem(&self) -> String {
        self.path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".to_string())
    }
}

/// Whether the runtime-versus-size model is fit on pooled per-iteration
/// samples (honest p-values) or on the per-cell aggregates (the published
/// three-point reading).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
#[clap(rename_all = "lowercase")]
pub enum FitOn {
    Samples,
    Aggregates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub protocols: Vec<ProtocolKind>,
    /// Monte Carlo iteration counts, one estimate per entry.
    pub m: Vec<usize>,
    /// Dataset sizes for the sweep experiment.
    pub sizes: Vec<usize>,
    pub distributions: Vec<DistName>,
    /// Fixed datasets for the type1 experiment.
    pub datasets: Vec<DatasetRef>,
    /// Inline dataset for ad-hoc runs.
    pub values: Option<Vec<u64>>,
    /// MPC computing parties.
    pub parties: usize,
    /// Paillier modulus bits.
    pub key_bits: usize,
    /// Secret-sharing modulus q.
    pub modulus: u64,
    pub mode: Mode,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub format: ReportFormat,
    pub clock: ClockSpec,
    pub schedule: Schedule,
    /// Scale iteration counts and sizes down 100x for CI runs.
    pub smoke: bool,
    pub fit_on: FitOn,
    /// Run independent grid cells on threads. Timings lose fidelity, so
    /// this is for correctness-only runs.
    pub parallel_cells: bool,
    /// Dump per-party server timings and protocol transcripts.
    pub verbose: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: Experiment::Adhoc,
            protocols: vec![ProtocolKind::He, ProtocolKind::Mpc],
            m: vec![1000, 5000],
            sizes: vec![50, 500, 1000],
            distributions: vec![
                DistName::Uniform,
                DistName::Normal,
                DistName::Gamma,
                DistName::Beta,
            ],
            datasets: vec![
                DatasetRef {
                    path: PathBuf::from("data/dow_jones.csv"),
                    column: "volume".to_string(),
                },
                DatasetRef {
                    path: PathBuf::from("data/bank_marketing.csv"),
                    column: "balance".to_string(),
                },
            ],
            values: None,
            parties: 3,
            key_bits: 2048,
            modulus: privmean_core::secret_sharing::DEFAULT_MODULUS,
            mode: Mode::PaperFaithful,
            seed: 42,
            out_dir: PathBuf::from("out"),
            format: ReportFormat::Markdown,
            clock: ClockSpec::Monotonic,
            schedule: Schedule::Sequential,
            smoke: false,
            fit_on: FitOn::Samples,
            parallel_cells: false,
            verbose: false,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| format!("malformed config {}: {e}", path.display()))
    }

    /// Applies the CI scale-down: iteration counts and sweep sizes shrink
    /// 100x (but never below one).
    pub fn apply_smoke(&mut self) {
        let shrink = |v: usize| (v / 100).max(1);
        self.m = self.m.iter().map(|&m| shrink(m)).collect();
        self.sizes = self.sizes.iter().map(|&s| shrink(s)).collect();
    }

    /// Sweep cells as fully parameterized distribution specs.
    pub fn sweep_specs(&self) -> Vec<(DistName, usize, DistSpec)> {
        let mut specs = Vec::new();
        for &name in &self.distributions {
            for &size in &self.sizes {
                specs.push((name, size, DistSpec::new(name.family(), size)));
            }
        }
        specs
    }

    /// Checks the whole configuration and returns every violation found.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut errors = Vec::new();

        if self.protocols.is_empty() {
            errors.push("at least one protocol must be selected".to_string());
        }
        if self.m.is_empty() {
            errors.push("the iteration list m must be nonempty".to_string());
        }
        if self.m.iter().any(|&m| m == 0) {
            errors.push("iteration counts must be at least 1".to_string());
        }
        if self.parties < 2 {
            errors.push(format!(
                "MPC needs at least 2 computing parties (got {})",
                self.parties
            ));
        }
        if self.key_bits < 16 || self.key_bits % 2 != 0 {
            errors.push(format!(
                "key_bits must be even and at least 16 (got {})",
                self.key_bits
            ));
        }
        if self.modulus < 2 {
            errors.push(format!("modulus must be at least 2 (got {})", self.modulus));
        }

        match self.experiment {
            Experiment::Type1 => {
                if self.datasets.is_empty() {
                    errors.push("type1 needs at least one dataset".to_string());
                }
                for dataset in &self.datasets {
                    if !dataset.path.exists() {
                        errors.push(format!(
                            "dataset file not found: {}",
                            dataset.path.display()
                        ));
                    }
                }
            }
            Experiment::Type2 => {
                if self.sizes.is_empty() {
                    errors.push("type2 needs at least one dataset size".to_string());
                }
                if self.sizes.iter().any(|&s| s == 0) {
                    errors.push("dataset sizes must be at least 1".to_string());
                }
                if self.distributions.is_empty() {
                    errors.push("type2 needs at least one distribution".to_string());
                }
            }
            Experiment::Adhoc => {
                let has_values = self.values.as_ref().is_some_and(|v| !v.is_empty());
                let has_dataset = !self.datasets.is_empty();
                if !has_values && !has_dataset {
                    errors.push(
                        "adhoc needs an inline dataset (--values) or a CSV (--dataset/--column)"
                            .to_string(),
                    );
                }
                if has_values && has_dataset {
                    errors.push(
                        "adhoc takes either --values or --dataset/--column, not both".to_string(),
                    );
                }
                if has_dataset {
                    for dataset in &self.datasets {
                        if !dataset.path.exists() {
                            errors.push(format!(
                                "dataset file not found: {}",
                                dataset.path.display()
                            ));
                        }
                    }
                }
            }
        }

        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }
}
