//! Monte Carlo estimation of expected protocol runtimes.
//!
//! Runs a protocol `M` times with fresh per-iteration randomness, records
//! `(t_cli, t_srv)` per iteration, and aggregates each role into the sample
//! mean `θ̂ = (1/M) Σ tᵢ` with the estimator variance
//! `V̂ar(θ̂) = (1/M²) Σ (tᵢ − θ̂)²`. Both accumulate left to right in
//! iteration order, so an independent recomputation over the retained
//! samples reproduces them bit for bit.
//!
//! Iterations execute serially: running them in parallel would let the
//! iterations contend for cores and skew the timings they measure.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data_gen::{sample, DataError, DistSpec};
use crate::harness::{Clock, FakeClock, MonotonicClock, Role, Schedule, SimHarness};
use crate::mean_protocols::{MeanProtocolConfig, ProtocolError, ProtocolInstance};

use std::sync::Arc;

#[derive(Debug, Error)]
pub enum McError {
    #[error("estimation requires at least one iteration")]
    ZeroIterations,
    #[error("the iteration-count list must be nonempty and ascending")]
    BadIterationList,
    #[error("iteration {iteration} failed: {source}")]
    IterationFailed {
        iteration: u64,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// One iteration's retained observables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: u64,
    pub t_cli_ms: f64,
    pub t_srv_ms: f64,
    /// Average most-significant-bit position of the run's uniform draws.
    pub h_u: f64,
}

/// The aggregated estimate for one role.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct McEstimate {
    /// Sample-mean runtime estimate, in milliseconds.
    pub theta_hat: f64,
    /// Variance of the estimator: `(1/M²) Σ (tᵢ − θ̂)²`.
    pub var_hat: f64,
    /// The diagnostic sample variance with `1/(M − 1)` normalization.
    pub sample_var: f64,
    pub m: usize,
    pub role: Role,
}

/// Client and server estimates plus the raw samples they derive from.
#[derive(Debug, Clone)]
pub struct McRun {
    pub client: McEstimate,
    pub server: McEstimate,
    pub records: Vec<IterationRecord>,
}

/// Anything that can execute one protocol iteration and report its sample.
pub trait IterationRunner {
    fn run_iteration(&mut self, iteration: u64) -> Result<IterationRecord, McError>;
}

/// Runs `m` iterations and aggregates both roles.
pub fn estimate(runner: &mut dyn IterationRunner, m: usize) -> Result<McRun, McError> {
    if m == 0 {
        return Err(McError::ZeroIterations);
    }
    let mut records = Vec::with_capacity(m);
    for iteration in 0..m as u64 {
        let record = runner.run_iteration(iteration).map_err(|e| match e {
            tagged @ McError::IterationFailed { .. } => tagged,
            other => McError::IterationFailed {
                iteration,
                source: Box::new(other),
            },
        })?;
        records.push(record);
    }
    Ok(McRun {
        client: estimate_role(Role::Client, records.iter().map(|r| r.t_cli_ms), m),
        server: estimate_role(Role::Server, records.iter().map(|r| r.t_srv_ms), m),
        records,
    })
}

fn estimate_role(role: Role, values: impl Iterator<Item = f64> + Clone, m: usize) -> McEstimate {
    let m_f = m as f64;
    let theta_hat = values.clone().sum::<f64>() / m_f;
    let squared_deviations = values.map(|t| (t - theta_hat) * (t - theta_hat)).sum::<f64>();
    McEstimate {
        theta_hat,
        var_hat: squared_deviations / (m_f * m_f),
        sample_var: if m > 1 {
            squared_deviations / (m_f - 1.0)
        } else {
            0.0
        },
        m,
        role,
    }
}

/// Average position of the most significant bit over `values`; zero values
/// contribute zero and an empty list yields zero.
pub fn msb_magnitude(values: &[u64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let total: u64 = values.iter().map(|&v| (64 - v.leading_zeros()) as u64).sum();
    total as f64 / values.len() as f64
}

/// Raw samples in the exported CSV shape.
pub fn samples_to_csv(records: &[IterationRecord]) -> String {
    let mut out = String::from("iteration,t_cli_ms,t_srv_ms,h_U\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.iteration, r.t_cli_ms, r.t_srv_ms, r.h_u
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// Seed policy
// ---------------------------------------------------------------------------

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based seed split: one master seed spawns independent streams,
/// keeping every iteration reproducible from `(master, stream)` alone.
pub fn split_seed(master: u64, stream: u64) -> u64 {
    mix64(master ^ mix64(stream))
}

const STREAM_KEYGEN: u64 = 0;
const STREAM_PROTOCOL: u64 = 1;
const STREAM_DATASET: u64 = 2;

// ---------------------------------------------------------------------------
// Protocol runners
// ---------------------------------------------------------------------------

/// Where each iteration's dataset comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    /// The same vector every iteration (the fixed-dataset experiment).
    Fixed(Vec<u64>),
    /// A fresh draw per iteration (the distribution-sweep experiment).
    Sampled(DistSpec),
}

impl DatasetSource {
    pub fn len_hint(&self) -> usize {
        match self {
            DatasetSource::Fixed(values) => values.len(),
            DatasetSource::Sampled(spec) => spec.size,
        }
    }
}

/// Which clock a runner should install.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockSpec {
    /// The real monotonic wall clock.
    Monotonic,
    /// A deterministic clock advancing a fixed step per reading; timings
    /// become reproducible, which CI determinism checks rely on.
    Fake { step_ns: u64 },
}

impl ClockSpec {
    fn build(&self) -> Arc<dyn Clock> {
        match self {
            ClockSpec::Monotonic => Arc::new(MonotonicClock::new()),
            ClockSpec::Fake { step_ns } => Arc::new(FakeClock::with_step(*step_ns)),
        }
    }
}

/// Everything that determines one experiment cell's iteration workload.
#[derive(Debug, Clone)]
pub struct RunnerSpec {
    pub config: MeanProtocolConfig,
    pub source: DatasetSource,
    pub master_seed: u64,
    pub schedule: Schedule,
    pub clock: ClockSpec,
}

impl RunnerSpec {
    /// Performs the once-per-experiment setup (key generation for HE) and
    /// returns a runner whose iterations draw fresh randomness from the
    /// master seed's iteration streams.
    pub fn prepare(&self) -> Result<ProtocolRunner, McError> {
        let mut keygen_rng = ChaCha8Rng::seed_from_u64(split_seed(self.master_seed, STREAM_KEYGEN));
        let instance = ProtocolInstance::setup(&self.config, &mut keygen_rng)?;
        Ok(ProtocolRunner {
            instance,
            source: self.source.clone(),
            master_seed: self.master_seed,
            harness: SimHarness::new(self.schedule, self.clock.build()),
        })
    }
}

/// Executes protocol iterations for one cell.
pub struct ProtocolRunner {
    instance: ProtocolInstance,
    source: DatasetSource,
    master_seed: u64,
    harness: SimHarness,
}

impl ProtocolRunner {
    /// The protocol output value of one iteration, mainly for ad-hoc runs.
    pub fn run_value(&mut self, iteration: u64) -> Result<num_bigint::BigUint, McError> {
        let (result, _) = self.run_once(iteration)?;
        Ok(result)
    }

    fn run_once(&mut self, iteration: u64) -> Result<(num_bigint::BigUint, IterationRecord), McError> {
        let iteration_seed = split_seed(self.master_seed, STREAM_PROTOCOL) ^ mix64(iteration);
        let mut rng = ChaCha8Rng::seed_from_u64(iteration_seed);
        let dataset = match &self.source {
            DatasetSource::Fixed(values) => std::borrow::Cow::Borrowed(values),
            DatasetSource::Sampled(spec) => {
                let dataset_seed = split_seed(self.master_seed, STREAM_DATASET) ^ mix64(iteration);
                std::borrow::Cow::Owned(sample(spec, dataset_seed)?.values)
            }
        };
        let result = self
            .instance
            .run(&dataset, &self.harness, &mut rng, iteration)?;
        let record = IterationRecord {
            iteration,
            t_cli_ms: result.timings.t_cli_ms,
            t_srv_ms: result.timings.t_srv_ms,
            h_u: result.h_u,
        };
        Ok((result.value, record))
    }
}

impl IterationRunner for ProtocolRunner {
    fn run_iteration(&mut self, iteration: u64) -> Result<IterationRecord, McError> {
        Ok(self.run_once(iteration)?.1)
    }
}

/// One estimate pair per entry of an ascending iteration-count list, all
/// under the same seed family, for variance-versus-M comparisons.
pub fn convergence_report(
    spec: &RunnerSpec,
    m_list: &[usize],
) -> Result<Vec<(usize, McRun)>, McError> {
    if m_list.is_empty() || m_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(McError::BadIterationList);
    }
    m_list
        .iter()
        .map(|&m| {
            let mut runner = spec.prepare()?;
            Ok((m, estimate(&mut runner, m)?))
        })
        .collect()
}
