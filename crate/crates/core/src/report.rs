//! Post-experiment statistics: least-squares fits of runtime against
//! dataset size, with coefficient p-values, and rendering of the
//! experiment report tables.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReportError {
    #[error("regression needs at least 3 points (got {0})")]
    TooFewPoints(usize),
    #[error("singular design: the predictor has zero variance")]
    SingularDesign,
    #[error("x and y must have equal length ({x} vs {y})")]
    LengthMismatch { x: usize, y: usize },
    #[error("cannot render an empty table")]
    EmptyTable,
    #[error("unknown report format '{0}', expected markdown, csv or json")]
    UnknownFormat(String),
    #[error("malformed report JSON: {0}")]
    BadJson(String),
}

/// Conventional reporting floor for p-values.
pub const P_VALUE_FLOOR: f64 = 2.2e-16;

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

/// ln Γ(z) for z > 0 via the Lanczos approximation.
fn ln_gamma(z: f64) -> f64 {
    const COEFFS: [f64; 6] = [
        76.18009172947146,
        -86.50532032941677,
        24.01409824083091,
        -1.231739572450155,
        0.1208650973866179e-2,
        -0.5395239384953e-5,
    ];
    let mut sum = 1.000000000190015;
    for (i, c) in COEFFS.iter().enumerate() {
        sum += c / (z + i as f64 + 1.0);
    }
    let tmp = z + 5.5;
    (z + 0.5) * tmp.ln() - tmp + (2.5066282746310005 * sum / z).ln()
}

/// Regularized incomplete beta Iₓ(a, b), evaluated by Lentz's modified
/// continued fraction to a 1e-12 tolerance.
pub fn inc_beta(x: f64, a: f64, b: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) || a <= 0.0 || b <= 0.0 {
        return f64::NAN;
    }
    if x == 0.0 {
        return 0.0;
    }
    if x == 1.0 {
        return 1.0;
    }
    // Symmetry keeps the continued fraction in its fast-converging region.
    if x > (a + 1.0) / (a + b + 2.0) {
        return 1.0 - inc_beta(1.0 - x, b, a);
    }

    let ln_beta = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
    let front = (a * x.ln() + b * (1.0 - x).ln() - ln_beta).exp();

    const EPSILON: f64 = 1e-12;
    const TINY: f64 = 1e-30;
    let mut f = 1.0;
    let mut c = 1.0;
    let mut d = 0.0;

    let apply = |coeff: f64, c: &mut f64, d: &mut f64| -> f64 {
        *d = 1.0 + coeff * *d;
        if d.abs() < TINY {
            *d = TINY;
        }
        *d = 1.0 / *d;
        *c = 1.0 + coeff / *c;
        if c.abs() < TINY {
            *c = TINY;
        }
        *c * *d
    };

    for m in 0..300 {
        let m_f = m as f64;
        let odd = -(a + m_f) * (a + b + m_f) * x / ((a + 2.0 * m_f) * (a + 2.0 * m_f + 1.0));
        let delta = apply(odd, &mut c, &mut d);
        f *= delta;
        if (delta - 1.0).abs() < EPSILON {
            break;
        }
        let even =
            (m_f + 1.0) * (b - m_f - 1.0) * x / ((a + 2.0 * m_f + 1.0) * (a + 2.0 * m_f + 2.0));
        let delta = apply(even, &mut c, &mut d);
        f *= delta;
        if (delta - 1.0).abs() < EPSILON {
            break;
        }
    }
    front / (f * a)
}

/// Two-sided p-value of a t statistic with `df` degrees of freedom:
/// `I_{df/(df + t²)}(df/2, 1/2)`.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    inc_beta(df / (df + t * t), 0.5 * df, 0.5)
}

// ---------------------------------------------------------------------------
// Ordinary least squares
// ---------------------------------------------------------------------------

/// A fitted `y ~ β₀ + β₁·x` model with standard errors, two-sided t-test
/// p-values, and R².
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegressionFit {
    pub beta0: f64,
    pub beta1: f64,
    pub stderr0: f64,
    pub stderr1: f64,
    pub t0: f64,
    pub t1: f64,
    pub p0: f64,
    pub p1: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

/// Formats a p-value, clamping anything below the conventional floor to
/// `<2.2e-16`.
pub fn format_p(p: f64) -> String {
    if p < P_VALUE_FLOOR {
        "<2.2e-16".to_string()
    } else {
        format!("{p:.4e}")
    }
}

impl fmt::Display for RegressionFit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "beta0 = {:.4} (se {:.4}, p {}), beta1 = {:.6} (se {:.6}, p {}), R² = {:.4}, n = {}",
            self.beta0,
            self.stderr0,
            format_p(self.p0),
            self.beta1,
            self.stderr1,
            format_p(self.p1),
            self.r_squared,
            self.n_points
        )
    }
}

/// Applies one Householder reflection that zeroes `column[start + 1..]`,
/// updating the other columns in step, and returns the diagonal entry.
fn householder_step(start: usize, column: &mut [f64], others: &mut [&mut [f64]]) -> f64 {
    let norm = column[start..].iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return 0.0;
    }
    // Choose the sign that avoids cancellation in v = x − alpha·e1.
    let alpha = if column[start] > 0.0 { -norm } else { norm };
    let mut v: Vec<f64> = column[start..].to_vec();
    v[0] -= alpha;
    let v_norm_sq: f64 = v.iter().map(|x| x * x).sum();
    if v_norm_sq == 0.0 {
        return alpha;
    }

    let reflect = |target: &mut [f64]| {
        let dot: f64 = v
            .iter()
            .zip(&target[start..])
            .map(|(vi, ti)| vi * ti)
            .sum();
        let scale = 2.0 * dot / v_norm_sq;
        for (vi, ti) in v.iter().zip(&mut target[start..]) {
            *ti -= scale * vi;
        }
    };

    for other in others.iter_mut() {
        reflect(other);
    }
    reflect(column);
    alpha
}

/// Fits `y ~ β₀ + β₁·x` by Householder QR on the `[1, x]` design matrix.
///
/// P-values come from two-sided t-tests with `n − 2` degrees of freedom,
/// with the t CDF evaluated through the regularized incomplete beta.
pub fn fit_ols(x: &[f64], y: &[f64]) -> Result<RegressionFit, ReportError> {
    let n = x.len();
    if n != y.len() {
        return Err(ReportError::LengthMismatch { x: n, y: y.len() });
    }
    if n < 3 {
        return Err(ReportError::TooFewPoints(n));
    }
    if x.iter().all(|&v| v == x[0]) {
        return Err(ReportError::SingularDesign);
    }

    let mut col0 = vec![1.0; n];
    let mut col1 = x.to_vec();
    let mut rhs = y.to_vec();

    let r00 = householder_step(0, &mut col0, &mut [&mut col1, &mut rhs]);
    let r01 = col1[0];
    let r11 = householder_step(1, &mut col1, &mut [&mut rhs]);
    if r00 == 0.0 || r11 == 0.0 {
        return Err(ReportError::SingularDesign);
    }

    // Back substitution on the 2x2 triangular system R·β = Qᵀy.
    let beta1 = rhs[1] / r11;
    let beta0 = (rhs[0] - r01 * beta1) / r00;

    let residuals: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| yi - beta0 - beta1 * xi)
        .collect();
    let ssr: f64 = residuals.iter().map(|e| e * e).sum();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|&yi| (yi - y_mean).powi(2)).sum();

    let df = (n - 2) as f64;
    let sigma_sq = ssr / df;
    // (XᵀX)⁻¹ = R⁻¹·R⁻ᵀ from the triangular factor.
    let cov00 = 1.0 / (r00 * r00) + (r01 * r01) / (r00 * r00 * r11 * r11);
    let cov11 = 1.0 / (r11 * r11);
    let stderr0 = (sigma_sq * cov00).sqrt();
    let stderr1 = (sigma_sq * cov11).sqrt();

    let t0 = beta0 / stderr0;
    let t1 = beta1 / stderr1;

    Ok(RegressionFit {
        beta0,
        beta1,
        stderr0,
        stderr1,
        t0,
        t1,
        p0: t_two_sided_p(t0, df),
        p1: t_two_sided_p(t1, df),
        r_squared: if sst > 0.0 { 1.0 - ssr / sst } else { f64::NAN },
        n_points: n,
    })
}

// ---------------------------------------------------------------------------
// Report tables
// ---------------------------------------------------------------------------

/// One estimate cell: a dataset (or distribution and size) crossed with a
/// protocol and an iteration count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub protocol: String,
    pub m: usize,
    pub theta_cli_ms: f64,
    pub var_cli: f64,
    pub theta_srv_ms: f64,
    pub var_srv: f64,
}

/// Rows keyed by (dataset, protocol, M), mirroring the experiment tables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
}

/// Output encodings for a rendered table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

impl ReportFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            ReportFormat::Markdown => "md",
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(ReportError::UnknownFormat(other.to_string())),
        }
    }
}

/// Mean estimates keep a fixed point; variances drop to scientific
/// notation below 1e-3, matching the published table style.
fn format_mean(v: f64) -> String {
    format!("{v:.3}")
}

fn format_var(v: f64) -> String {
    if v == 0.0 {
        "0.0".to_string()
    } else if v.abs() < 1e-3 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

impl ReportTable {
    pub fn push(&mut self, row: ReportRow) {
        self.rows.push(row);
    }

    /// Rows sorted by (dataset, protocol, M): the deterministic render order.
    fn sorted_rows(&self) -> Vec<&ReportRow> {
        let mut rows: Vec<&ReportRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| {
            (&a.dataset, &a.protocol, a.m).cmp(&(&b.dataset, &b.protocol, b.m))
        });
        rows
    }

    /// Renders the table in the requested format with deterministic row
    /// ordering.
    pub fn render(&self, format: ReportFormat) -> Result<String, ReportError> {
        if self.rows.is_empty() {
            return Err(ReportError::EmptyTable);
        }
        let rows = self.sorted_rows();
        Ok(match format {
            ReportFormat::Markdown => {
                let mut out = String::from(
                    "| Dataset | Protocol | M | theta_cli (ms) | var_cli | theta_srv (ms) | var_srv |\n\
                     |---|---|---|---|---|---|---|\n",
                );
                for row in rows {
                    out.push_str(&format!(
                        "| {} | {} | {} | {} | {} | {} | {} |\n",
                        row.dataset,
                        row.protocol,
                        row.m,
                        format_mean(row.theta_cli_ms),
                        format_var(row.var_cli),
                        format_mean(row.theta_srv_ms),
                        format_var(row.var_srv),
                    ));
                }
                out
            }
            ReportFormat::Csv => {
                let mut out =
                    String::from("dataset,protocol,m,theta_cli_ms,var_cli,theta_srv_ms,var_srv\n");
                for row in rows {
                    out.push_str(&format!(
                        "{},{},{},{},{},{},{}\n",
                        row.dataset,
                        row.protocol,
                        row.m,
                        row.theta_cli_ms,
                        row.var_cli,
                        row.theta_srv_ms,
                        row.var_srv,
                    ));
                }
                out
            }
            ReportFormat::Json => {
                let sorted = ReportTable {
                    rows: rows.into_iter().cloned().collect(),
                };
                let mut text =
                    serde_json::to_string_pretty(&sorted).expect("table serializes");
                text.push('\n');
                text
            }
        })
    }

    /// Parses a table previously rendered as JSON.
    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        serde_json::from_str(text).map_err(|e| ReportError::BadJson(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_line_is_recovered_exactly() {
        let fit = fit_ols(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert!(fit.beta0.abs() < 1e-12, "beta0 = {}", fit.beta0);
        assert!((fit.beta1 - 2.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn synthetic_noise_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x: Vec<f64> = (0..100).map(|i| i as f64 / 10.0).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&xi| {
                // N(0, 0.01) noise via Box–Muller on two uniforms.
                let u1: f64 = rng.gen_range(1e-12..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                let noise = 0.1 * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
                3.0 + 2.0 * xi + noise
            })
            .collect();
        let fit = fit_ols(&x, &y).unwrap();
        assert!((2.9..=3.1).contains(&fit.beta0), "beta0 = {}", fit.beta0);
        assert!((1.99..=2.01).contains(&fit.beta1), "beta1 = {}", fit.beta1);
        assert!(fit.p1 < 1e-10, "p1 = {}", fit.p1);
    }

    #[test]
    fn slope_agrees_with_the_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..50).map(|_| rng.gen_range(0.0..100.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&xi| 1.5 * xi - 4.0 + rng.gen_range(-5.0..5.0))
            .collect();
        let fit = fit_ols(&x, &y).unwrap();

        let x_mean = x.iter().sum::<f64>() / x.len() as f64;
        let y_mean = y.iter().sum::<f64>() / y.len() as f64;
        let slope_num: f64 = x
            .iter()
            .zip(&y)
            .map(|(&xi, &yi)| (xi - x_mean) * (yi - y_mean))
            .sum();
        let slope_den: f64 = x.iter().map(|&xi| (xi - x_mean).powi(2)).sum();
        let textbook = slope_num / slope_den;
        assert!(
            ((fit.beta1 - textbook) / textbook).abs() < 1e-10,
            "qr {} vs closed form {textbook}",
            fit.beta1
        );
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert_eq!(
            fit_ols(&[1.0, 2.0], &[1.0, 2.0]).unwrap_err(),
            ReportError::TooFewPoints(2)
        );
        assert_eq!(
            fit_ols(&[3.0, 3.0, 3.0], &[1.0, 2.0, 3.0]).unwrap_err(),
            ReportError::SingularDesign
        );
        assert_eq!(
            fit_ols(&[1.0, 2.0, 3.0], &[1.0, 2.0]).unwrap_err(),
            ReportError::LengthMismatch { x: 3, y: 2 }
        );
    }

    #[test]
    fn residuals_are_orthogonal_to_the_design() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..200).map(|_| rng.gen_range(0.0..1000.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&xi| 0.3 * xi + 20.0 + rng.gen_range(-10.0..10.0))
            .collect();
        let fit = fit_ols(&x, &y).unwrap();
        let residuals: Vec<f64> = x
            .iter()
            .zip(&y)
            .map(|(&xi, &yi)| yi - fit.beta0 - fit.beta1 * xi)
            .collect();
        let scale: f64 = y.iter().map(|v| v.abs()).sum();
        let e_sum: f64 = residuals.iter().sum();
        let ex_sum: f64 = residuals.iter().zip(&x).map(|(e, xi)| e * xi).sum();
        assert!(e_sum.abs() < 1e-8 * scale, "sum e = {e_sum}");
        assert!(
            ex_sum.abs() < 1e-8 * scale * 1000.0,
            "sum e·x = {ex_sum}"
        );

        // R² must agree with an independent SSR/SST computation.
        let ssr: f64 = residuals.iter().map(|e| e * e).sum();
        let y_mean = y.iter().sum::<f64>() / y.len() as f64;
        let sst: f64 = y.iter().map(|&yi| (yi - y_mean).powi(2)).sum();
        assert!((fit.r_squared - (1.0 - ssr / sst)).abs() < 1e-12);
    }

    #[test]
    fn p_values_are_monotone_in_the_statistic() {
        let df = 18.0;
        let mut last = 1.0;
        for t in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0] {
            let p = t_two_sided_p(t, df);
            assert!(p <= last, "p({t}) = {p} rose above {last}");
            last = p;
        }
    }

    #[test]
    fn t_cdf_matches_reference_values() {
        // Classic table entry: P(|T| > 2.086) = 0.05 at df = 20.
        assert!((t_two_sided_p(2.086, 20.0) - 0.05).abs() < 5e-4);
        // Normal limit: P(|T| > 1.96) ≈ 0.05 for large df.
        assert!((t_two_sided_p(1.96, 100_000.0) - 0.05).abs() < 5e-4);
    }

    #[test]
    fn p_floor_formatting() {
        assert_eq!(format_p(1e-20), "<2.2e-16");
        assert_eq!(format_p(0.05), "5.0000e-2");
    }

    fn sample_row(dataset: &str, protocol: &str, m: usize) -> ReportRow {
        ReportRow {
            dataset: dataset.into(),
            protocol: protocol.into(),
            m,
            theta_cli_ms: 12.5,
            var_cli: 0.25,
            theta_srv_ms: 1.5,
            var_srv: 4.77e-5,
        }
    }

    #[test]
    fn one_row_table_renders_header_plus_row() {
        let mut table = ReportTable::default();
        table.push(sample_row("toy", "he", 10));
        let text = table.render(ReportFormat::Markdown).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.contains("| toy | he | 10 |"));
        // Small variances switch to scientific notation.
        assert!(text.contains("4.77e-5"));
    }

    #[test]
    fn table_i_shape_has_eight_rows() {
        let mut table = ReportTable::default();
        for dataset in ["bank", "dow"] {
            for protocol in ["he", "mpc"] {
                for m in [1000, 5000] {
                    table.push(sample_row(dataset, protocol, m));
                }
            }
        }
        let text = table.render(ReportFormat::Markdown).unwrap();
        assert_eq!(text.lines().count(), 2 + 8);
    }

    #[test]
    fn json_round_trips_through_parse_and_render() {
        let mut table = ReportTable::default();
        table.push(sample_row("b", "mpc", 50));
        table.push(sample_row("a", "he", 10));
        let first = table.render(ReportFormat::Json).unwrap();
        let reparsed = ReportTable::from_json(&first).unwrap();
        let second = reparsed.render(ReportFormat::Json).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn render_order_is_deterministic() {
        let mut forward = ReportTable::default();
        forward.push(sample_row("a", "he", 10));
        forward.push(sample_row("b", "mpc", 50));
        let mut backward = ReportTable::default();
        backward.push(sample_row("b", "mpc", 50));
        backward.push(sample_row("a", "he", 10));
        assert_eq!(
            forward.render(ReportFormat::Csv).unwrap(),
            backward.render(ReportFormat::Csv).unwrap()
        );
    }

    #[test]
    fn empty_table_is_an_error() {
        assert_eq!(
            ReportTable::default().render(ReportFormat::Csv).unwrap_err(),
            ReportError::EmptyTable
        );
    }
}
