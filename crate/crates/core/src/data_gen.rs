//! Dataset acquisition: CSV ingestion for the fixed-dataset experiments and
//! seeded distribution samplers for the distribution sweep.
//!
//! Continuous draws are rounded half-up to integers because the protocols
//! operate on nonnegative residues; normal draws that round negative are
//! resampled. Samplers are pure functions of `(spec, seed)` and reproduce
//! bit-for-bit under a fixed seed.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::secret_sharing::sample_below;

/// Default multiplier applied to gamma and beta draws in the sweep
/// experiment, which otherwise produce values too small to be interesting
/// dataset entries.
pub const DEFAULT_SCALE_FACTOR: f64 = 120.0;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot open {path}: {source}")]
    MissingFile {
        path: String,
        source: std::io::Error,
    },
    #[error("column '{column}' not found in {path}")]
    MissingColumn { column: String, path: String },
    #[error("row {row}: cell '{cell}' in column '{column}' is not numeric")]
    NonNumericCell {
        row: usize,
        column: String,
        cell: String,
    },
    #[error("row {row}: value {value} in column '{column}' is negative; plaintexts are nonnegative")]
    NegativeValue {
        row: usize,
        column: String,
        value: f64,
    },
    #[error("malformed CSV record at row {row}: {source}")]
    MalformedRecord { row: usize, source: csv::Error },
    #[error("invalid distribution parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The distribution family of one sweep cell, with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DistFamily {
    /// Integer-uniform on the half-open range `[low, high)`.
    Uniform { low: u64, high: u64 },
    Normal { mean: f64, std_dev: f64 },
    Gamma { shape: f64, scale: f64 },
    Beta { alpha: f64, beta: f64 },
}

impl fmt::Display for DistFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistFamily::Uniform { low, high } => write!(f, "Uniform({low}, {high})"),
            DistFamily::Normal { mean, std_dev } => write!(f, "Normal({mean}, {std_dev})"),
            DistFamily::Gamma { shape, scale } => write!(f, "Gamma({shape}, {scale})"),
            DistFamily::Beta { alpha, beta } => write!(f, "Beta({alpha}, {beta})"),
        }
    }
}

/// A fully specified sampling task: family, post-scaling, and draw count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistSpec {
    pub family: DistFamily,
    /// Multiplier applied to each continuous draw before rounding.
    pub scale_factor: f64,
    /// Number of values to draw.
    pub size: usize,
}

impl DistSpec {
    pub fn new(family: DistFamily, size: usize) -> Self {
        let scale_factor = match family {
            DistFamily::Gamma { .. } | DistFamily::Beta { .. } => DEFAULT_SCALE_FACTOR,
            _ => 1.0,
        };
        DistSpec {
            family,
            scale_factor,
            size,
        }
    }

    /// The four sweep distributions in their reported parameterizations.
    pub fn sweep_presets(size: usize) -> Vec<DistSpec> {
        vec![
            DistSpec::new(DistFamily::Uniform { low: 80, high: 160 }, size),
            DistSpec::new(
                DistFamily::Normal {
                    mean: 120.0,
                    std_dev: 30.0,
                },
                size,
            ),
            DistSpec::new(
                DistFamily::Gamma {
                    shape: 2.0,
                    scale: 2.0,
                },
                size,
            ),
            DistSpec::new(
                DistFamily::Beta {
                    alpha: 30.0,
                    beta: 2.0,
                },
                size,
            ),
        ]
    }

    /// Row label used in reports, e.g. `Gamma(2, 2)x120`.
    pub fn label(&self) -> String {
        if self.scale_factor == 1.0 {
            self.family.to_string()
        } else {
            format!("{}x{}", self.family, self.scale_factor)
        }
    }

    fn validate(&self) -> Result<(), DataError> {
        let bad = |msg: String| Err(DataError::InvalidParams(msg));
        if self.size == 0 {
            return bad("size must be at least 1".into());
        }
        if !(self.scale_factor > 0.0) {
            return bad(format!("scale factor must be positive, got {}", self.scale_factor));
        }
        match self.family {
            DistFamily::Uniform { low, high } if low >= high => {
                bad(format!("uniform requires low < high, got [{low}, {high})"))
            }
            DistFamily::Normal { std_dev, .. } if !(std_dev > 0.0) => {
                bad(format!("normal requires positive std dev, got {std_dev}"))
            }
            DistFamily::Gamma { shape, scale } if !(shape > 0.0 && scale > 0.0) => {
                bad(format!("gamma requires positive shape and scale, got ({shape}, {scale})"))
            }
            DistFamily::Beta { alpha, beta } if !(alpha > 0.0 && beta > 0.0) => {
                bad(format!("beta requires positive shape parameters, got ({alpha}, {beta})"))
            }
            _ => Ok(()),
        }
    }
}

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    File { path: String, column: String },
    Distribution { spec: DistSpec, seed: u64 },
    Inline,
}

/// An ordered vector of nonnegative integer values plus its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub values: Vec<u64>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn inline(values: Vec<u64>) -> Self {
        Dataset {
            values,
            provenance: Provenance::Inline,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Rounds half-up to the nearest integer; `2.5` becomes `3`.
fn round_half_up(v: f64) -> f64 {
    (v + 0.5).floor()
}

/// Loads one numeric column from an RFC-4180-style CSV file with a header
/// row. Cells are rounded half-up; negative values are rejected.
pub fn load_csv(path: impl AsRef<Path>, column_name: &str) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| DataError::MissingFile {
        path: path_str.clone(),
        source,
    })?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers().map_err(|source| DataError::MalformedRecord {
        row: 0,
        source,
    })?;
    let column = headers
        .iter()
        .position(|h| h == column_name)
        .ok_or_else(|| DataError::MissingColumn {
            column: column_name.to_string(),
            path: path_str.clone(),
        })?;

    let mut values = Vec::new();
    for (index, record) in reader.records().enumerate() {
        let row = index + 1;
        let record = record.map_err(|source| DataError::MalformedRecord { row, source })?;
        let cell = record.get(column).unwrap_or("");
        let parsed: f64 = cell
            .trim()
            .parse()
            .map_err(|_| DataError::NonNumericCell {
                row,
                column: column_name.to_string(),
                cell: cell.to_string(),
            })?;
        let rounded = round_half_up(parsed);
        if rounded < 0.0 {
            return Err(DataError::NegativeValue {
                row,
                column: column_name.to_string(),
                value: parsed,
            });
        }
        values.push(rounded as u64);
    }
    Ok(Dataset {
        values,
        provenance: Provenance::File {
            path: path_str,
            column: column_name.to_string(),
        },
    })
}

/// Writes a dataset in the same single-column CSV shape the loader accepts.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let column = match &dataset.provenance {
        Provenance::File { column, .. } => column.as_str(),
        _ => "value",
    };
    let mut out = String::with_capacity(dataset.values.len() * 8 + 16);
    out.push_str(column);
    out.push('\n');
    for v in &dataset.values {
        out.push_str(&v.to_string());
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Draws `spec.size` i.i.d. values. Deterministic for a fixed seed.
pub fn sample(spec: &DistSpec, seed: u64) -> Result<Dataset, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(spec.size);
    for _ in 0..spec.size {
        values.push(draw_one(spec, &mut rng));
    }
    Ok(Dataset {
        values,
        provenance: Provenance::Distribution { spec: *spec, seed },
    })
}

fn draw_one<R: Rng + ?Sized>(spec: &DistSpec, rng: &mut R) -> u64 {
    match spec.family {
        DistFamily::Uniform { low, high } => low + sample_below(high - low, rng),
        DistFamily::Normal { mean, std_dev } => loop {
            let v = round_half_up(mean + std_dev * standard_normal(rng));
            if v >= 0.0 {
                break v as u64;
            }
        },
        DistFamily::Gamma { shape, scale } => {
            round_half_up(gamma_draw(shape, rng) * scale * spec.scale_factor) as u64
        }
        DistFamily::Beta { alpha, beta } => {
            let x = gamma_draw(alpha, rng);
            let y = gamma_draw(beta, rng);
            round_half_up(x / (x + y) * spec.scale_factor) as u64
        }
    }
}

/// Uniform on (0, 1]: 53 random mantissa bits, shifted off zero so logs are
/// safe.
fn uniform_open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal via the Box–Muller transform (cosine branch).
fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1 = uniform_open01(rng);
    let u2 = uniform_open01(rng);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Unit-scale Gamma(shape) via Marsaglia–Tsang, with the `U^{1/shape}`
/// boost for shape < 1.
fn gamma_draw<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape < 1.0 {
        let boost = uniform_open01(rng).powf(1.0 / shape);
        return gamma_draw(shape + 1.0, rng) * boost;
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = standard_normal(rng);
        let cube_root = 1.0 + c * x;
        if cube_root <= 0.0 {
            continue;
        }
        let v = cube_root * cube_root * cube_root;
        let u = uniform_open01(rng);
        let x_sq = x * x;
        if u < 1.0 - 0.0331 * x_sq * x_sq
            || u.ln() < 0.5 * x_sq + d * (1.0 - v + v.ln())
        {
            return d * v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_and_var(values: &[u64]) -> (f64, f64) {
        let n = values.len() as f64;
        let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = values
            .iter()
            .map(|&v| (v as f64 - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let spec = DistSpec::new(
            DistFamily::Gamma {
                shape: 2.0,
                scale: 2.0,
            },
            500,
        );
        let a = sample(&spec, 99).unwrap();
        let b = sample(&spec, 99).unwrap();
        let c = sample(&spec, 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn uniform_draws_stay_in_the_half_open_range() {
        let spec = DistSpec::new(DistFamily::Uniform { low: 80, high: 160 }, 1000);
        for seed in 0..5 {
            let data = sample(&spec, seed).unwrap();
            assert_eq!(data.len(), 1000);
            assert!(data.values.iter().all(|&v| (80..160).contains(&v)));
        }
    }

    #[test]
    fn scaled_beta_matches_its_moments() {
        let spec = DistSpec::new(
            DistFamily::Beta {
                alpha: 30.0,
                beta: 2.0,
            },
            10_000,
        );
        let data = sample(&spec, 7).unwrap();
        let (mean, _) = mean_and_var(&data.values);
        // 120 · 30/32 = 112.5
        assert!((mean - 112.5).abs() < 1.0, "beta mean {mean}");
    }

    #[test]
    fn scaled_gamma_matches_its_moments() {
        let spec = DistSpec::new(
            DistFamily::Gamma {
                shape: 2.0,
                scale: 2.0,
            },
            10_000,
        );
        let data = sample(&spec, 8).unwrap();
        let (mean, _) = mean_and_var(&data.values);
        // 120 · 2 · 2 = 480
        assert!((mean - 480.0).abs() < 10.0, "gamma mean {mean}");
    }

    #[test]
    fn all_families_pass_three_sigma_moment_checks_at_1e5() {
        let n = 100_000usize;
        let root_n = (n as f64).sqrt();
        // (spec, analytic mean, analytic var, kurtosis) per family; the
        // variance bound uses se(s²) ≈ σ²·sqrt((κ − 1)/n).
        let cases = [
            (
                DistSpec::new(DistFamily::Uniform { low: 80, high: 160 }, n),
                119.5,
                (80.0f64 * 80.0 - 1.0) / 12.0,
                1.8,
            ),
            (
                DistSpec::new(
                    DistFamily::Normal {
                        mean: 120.0,
                        std_dev: 30.0,
                    },
                    n,
                ),
                120.0,
                900.0,
                3.0,
            ),
            (
                DistSpec::new(
                    DistFamily::Gamma {
                        shape: 2.0,
                        scale: 2.0,
                    },
                    n,
                ),
                480.0,
                115_200.0,
                6.0,
            ),
            (
                DistSpec::new(
                    DistFamily::Beta {
                        alpha: 30.0,
                        beta: 2.0,
                    },
                    n,
                ),
                112.5,
                25.568,
                5.01,
            ),
        ];
        for (i, (spec, mu, sigma_sq, kurtosis)) in cases.iter().enumerate() {
            let data = sample(spec, 1000 + i as u64).unwrap();
            let (mean, var) = mean_and_var(&data.values);
            let mean_se = sigma_sq.sqrt() / root_n;
            // Rounding to integers adds roughly uniform(-1/2, 1/2) noise.
            let rounding_var = 1.0 / 12.0;
            let var_se = sigma_sq * ((kurtosis - 1.0) / n as f64).sqrt();
            assert!(
                (mean - mu).abs() < 3.0 * mean_se + 0.01,
                "{}: mean {mean} vs {mu}",
                spec.label()
            );
            assert!(
                (var - sigma_sq - rounding_var).abs() < 3.0 * var_se + 0.5,
                "{}: var {var} vs {sigma_sq}",
                spec.label()
            );
        }
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let bad = [
            DistSpec::new(DistFamily::Uniform { low: 5, high: 5 }, 10),
            DistSpec::new(
                DistFamily::Normal {
                    mean: 0.0,
                    std_dev: 0.0,
                },
                10,
            ),
            DistSpec::new(
                DistFamily::Gamma {
                    shape: -1.0,
                    scale: 2.0,
                },
                10,
            ),
            DistSpec::new(
                DistFamily::Beta {
                    alpha: 0.0,
                    beta: 2.0,
                },
                10,
            ),
            DistSpec::new(DistFamily::Uniform { low: 0, high: 10 }, 0),
        ];
        for spec in bad {
            assert!(
                matches!(sample(&spec, 0), Err(DataError::InvalidParams(_))),
                "accepted {spec:?}"
            );
        }
    }

    #[test]
    fn csv_round_half_up_rule() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.csv");
        std::fs::write(&path, "v\n1.4\n2.6\n").unwrap();
        let data = load_csv(&path, "v").unwrap();
        assert_eq!(data.values, vec![1, 3]);
    }

    #[test]
    fn csv_errors_are_distinct_and_carry_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");

        assert!(matches!(
            load_csv(dir.path().join("absent.csv"), "v"),
            Err(DataError::MissingFile { .. })
        ));

        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(matches!(
            load_csv(&path, "v"),
            Err(DataError::MissingColumn { .. })
        ));

        std::fs::write(&path, "v\n1\noops\n").unwrap();
        match load_csv(&path, "v") {
            Err(DataError::NonNumericCell { row, cell, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(cell, "oops");
            }
            other => panic!("expected non-numeric cell error, got {other:?}"),
        }

        std::fs::write(&path, "v\n1\n-3\n").unwrap();
        match load_csv(&path, "v") {
            Err(DataError::NegativeValue { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected negative value error, got {other:?}"),
        }
    }

    #[test]
    fn written_datasets_reload_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exported.csv");
        let spec = DistSpec::new(DistFamily::Uniform { low: 1, high: 1000 }, 200);
        let data = sample(&spec, 5).unwrap();
        write_csv(&data, &path).unwrap();
        let reloaded = load_csv(&path, "value").unwrap();
        assert_eq!(reloaded.values, data.values);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn every_draw_is_in_support(seed in 0u64..500, size in 1usize..50) {
                for spec in DistSpec::sweep_presets(size) {
                    let data = sample(&spec, seed).unwrap();
                    prop_assert_eq!(data.len(), size);
                    if let DistFamily::Beta { .. } = spec.family {
                        // Beta support is [0, 1], scaled by 120.
                        prop_assert!(data.values.iter().all(|&v| v <= 120));
                    }
                }
            }
        }
    }
}
