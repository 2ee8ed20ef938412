//! The two end-to-end floor-mean protocols: one over Paillier ciphertexts
//! and one over additive shares with a Beaver-triple multiplication.
//!
//! Both are split into client-prepare, server-compute, and client-finish
//! phases so the harness can time each role separately. The client also
//! plays the Trusted Initializer; that work is booked under client time.
//!
//! Two modes are supported. `PaperFaithful` multiplies the encrypted or
//! shared sum by `ℓ⁻¹` on the servers, which only equals the true mean when
//! `ℓ` divides the sum; `Exact` returns the sum to the client, which
//! finishes with an integer floor division.

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rand::Rng;
use thiserror::Error;

use crate::harness::{
    run_parties, Envelope, HarnessError, PartyProgram, Payload, PhaseReport, Role, RuntimeSample,
    SimHarness, Step, TimingSheet,
};
use crate::paillier::{
    self, decrypt, encrypt_with_randomness, hom_add, hom_scalar_mul, mod_inverse, Ciphertext,
    Keypair, PaillierError, PrivateKey, PublicKey,
};
use crate::secret_sharing::{
    add_mod, combine_broadcasts, mask_operands, output_share, share, ti_gen_triple, BeaverTriple,
    ShareSet, SharingError, TripleShare,
};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("dataset is empty; the mean is undefined")]
    EmptyDataset,
    #[error("dataset value {value} does not fit the plaintext space (bound {bound})")]
    ValueOutOfRange { value: u64, bound: String },
    #[error("dataset sum exceeds the plaintext modulus; exact mode needs Σx < {0}")]
    SumOverflowsModulus(String),
    #[error("dataset size {ell} is not invertible modulo {modulus}")]
    NonInvertibleSize { ell: usize, modulus: String },
    #[error("MPC requires at least 2 computing parties (got {0})")]
    TooFewParties(usize),
    #[error("server returned {got} output(s), expected {expected}")]
    MalformedServerOutput { got: usize, expected: usize },
    #[error(transparent)]
    Paillier(#[from] PaillierError),
    #[error(transparent)]
    Sharing(#[from] SharingError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

/// Which protocol computes the mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    He,
    Mpc,
}

impl std::fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProtocolKind::He => write!(f, "HE"),
            ProtocolKind::Mpc => write!(f, "MPC"),
        }
    }
}

/// Output semantics of a protocol run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Servers multiply the sum by `ℓ⁻¹ mod N` (or mod q). Reproduces the
    /// benchmarked workload; exact only when `ℓ` divides the sum.
    PaperFaithful,
    /// Servers return the sum; the client floor-divides. Always exact.
    Exact,
}

/// Parameters of one protocol configuration.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MeanProtocolConfig {
    pub protocol: ProtocolKind,
    /// Computing parties (MPC only).
    pub parties: usize,
    /// Paillier modulus size in bits (HE only).
    pub key_bits: usize,
    /// Share modulus q (MPC only).
    pub modulus: u64,
    pub mode: Mode,
}

impl MeanProtocolConfig {
    pub fn he(key_bits: usize, mode: Mode) -> Self {
        MeanProtocolConfig {
            protocol: ProtocolKind::He,
            parties: 1,
            key_bits,
            modulus: crate::secret_sharing::DEFAULT_MODULUS,
            mode,
        }
    }

    pub fn mpc(parties: usize, modulus: u64, mode: Mode) -> Self {
        MeanProtocolConfig {
            protocol: ProtocolKind::Mpc,
            parties,
            key_bits: 0,
            modulus,
            mode,
        }
    }
}

/// The computed mean plus everything the estimator wants to know about the
/// run: role timings, the magnitude statistic of the run's uniform draws,
/// and server-phase bookkeeping.
#[derive(Debug, Clone)]
pub struct MeanResult {
    /// The protocol output. In exact mode this is the floor mean; in
    /// paper-faithful mode it is the modular value the protocol produces.
    pub value: BigUint,
    pub timings: RuntimeSample,
    /// Average most-significant-bit position over the uniform draws the
    /// client made during this run.
    pub h_u: f64,
    /// Per-party time inside server step functions (verbose reporting).
    pub per_party_srv_ms: Vec<f64>,
    /// Messages broadcast during the server phase.
    pub server_broadcasts: u64,
}

/// Tracks the magnitude of the uniform draws a protocol run consumes:
/// the running mean of their most-significant-bit positions.
#[derive(Debug, Default, Clone, Copy)]
pub struct RandMagnitude {
    sum_bits: f64,
    draws: u64,
}

impl RandMagnitude {
    /// Records one draw whose msb position is `bits` (zero for a zero draw).
    pub fn record_bits(&mut self, bits: u64) {
        self.sum_bits += bits as f64;
        self.draws += 1;
    }

    pub fn record_u64(&mut self, value: u64) {
        self.record_bits((64 - value.leading_zeros()) as u64);
    }

    pub fn average(&self) -> f64 {
        if self.draws == 0 {
            0.0
        } else {
            self.sum_bits / self.draws as f64
        }
    }
}

// ---------------------------------------------------------------------------
// HE phases
// ---------------------------------------------------------------------------

/// Client phase one: element-wise Paillier encryption of the dataset.
/// Each encryption mask drawn is recorded in `meter`.
pub fn he_client_prepare<R: Rng + ?Sized>(
    dataset: &[u64],
    pk: &PublicKey,
    rng: &mut R,
    meter: &mut RandMagnitude,
) -> Result<Vec<Ciphertext>, ProtocolError> {
    dataset
        .iter()
        .map(|&value| {
            let m = BigUint::from(value);
            if m >= *pk.modulus() {
                return Err(ProtocolError::ValueOutOfRange {
                    value,
                    bound: pk.modulus().to_string(),
                });
            }
            let r = paillier::sample_unit(pk, rng);
            meter.record_bits(r.bits());
            Ok(encrypt_with_randomness(pk, &m, &r)?)
        })
        .collect()
}

/// Server phase: fold the ciphertexts with homomorphic additions, then in
/// paper-faithful mode apply one homomorphic multiplication by `ℓ⁻¹ mod N`.
pub fn he_server_compute(
    cts: &[Ciphertext],
    ell: usize,
    pk: &PublicKey,
    mode: Mode,
) -> Result<Ciphertext, ProtocolError> {
    let (first, rest) = cts.split_first().ok_or(ProtocolError::EmptyDataset)?;
    let mut sum = first.clone();
    for ct in rest {
        sum = hom_add(pk, &sum, ct)?;
    }
    match mode {
        Mode::Exact => Ok(sum),
        Mode::PaperFaithful => {
            let inv = mod_inverse(&BigUint::from(ell), pk.modulus()).map_err(|_| {
                ProtocolError::NonInvertibleSize {
                    ell,
                    modulus: pk.modulus().to_string(),
                }
            })?;
            Ok(hom_scalar_mul(pk, &sum, &inv)?)
        }
    }
}

/// Client phase two: decrypt, and in exact mode finish the mean with a
/// floor division by `ℓ`.
pub fn he_client_finish(
    sk: &PrivateKey,
    c: &Ciphertext,
    ell: usize,
    mode: Mode,
) -> Result<BigUint, ProtocolError> {
    let plain = decrypt(sk, c)?;
    Ok(match mode {
        Mode::Exact => plain / BigUint::from(ell),
        Mode::PaperFaithful => plain,
    })
}

/// The single HE server: no decryption key, only ciphertexts and the
/// public key ever reach it.
struct HeServer {
    pk: PublicKey,
    cts: Vec<Ciphertext>,
    ell: usize,
    mode: Mode,
}

/// The HE server phase exchanges no messages.
#[derive(Clone, Debug)]
pub enum NoMsg {}

impl Payload for NoMsg {
    fn type_name(&self) -> &'static str {
        match *self {}
    }
    fn payload_bytes(&self) -> Vec<u8> {
        match *self {}
    }
}

impl PartyProgram for HeServer {
    type Msg = NoMsg;
    type Output = Result<Ciphertext, ProtocolError>;

    fn step(&mut self, _round: usize, _inbox: &[Envelope<NoMsg>]) -> Step<NoMsg, Self::Output> {
        Step::Done(he_server_compute(&self.cts, self.ell, &self.pk, self.mode))
    }
}

// ---------------------------------------------------------------------------
// MPC phases
// ---------------------------------------------------------------------------

/// Everything the client hands the computing parties: per-party share
/// vectors, plus the multiplication materials in paper-faithful mode.
#[derive(Debug, Clone)]
pub struct MpcPrepared {
    /// `party_inputs[i]` holds party `i + 1`'s share of every instance.
    pub party_inputs: Vec<Vec<u64>>,
    /// Beaver triple and the sharing of `ℓ⁻¹`; absent in exact mode, where
    /// the servers skip the multiplication.
    pub mul: Option<MulMaterials>,
}

#[derive(Debug, Clone)]
pub struct MulMaterials {
    pub triple: BeaverTriple,
    pub inv_shares: ShareSet,
}

/// Client phase one: share every instance into `k` shares and, in
/// paper-faithful mode, run the Trusted Initializer setup (one Beaver
/// triple) and share `ℓ⁻¹ mod q`.
pub fn mpc_client_prepare<R: Rng + ?Sized>(
    dataset: &[u64],
    k: usize,
    q: u64,
    mode: Mode,
    rng: &mut R,
    meter: &mut RandMagnitude,
) -> Result<MpcPrepared, ProtocolError> {
    if k < 2 {
        return Err(ProtocolError::TooFewParties(k));
    }
    let ell = dataset.len();
    let mut party_inputs = vec![Vec::with_capacity(ell); k];
    for &value in dataset {
        if value >= q {
            return Err(ProtocolError::ValueOutOfRange {
                value,
                bound: q.to_string(),
            });
        }
        let shares = share(value, k, q, rng)?;
        // The first k − 1 shares are the uniform draws; the last is derived.
        for &draw in &shares.shares()[..k - 1] {
            meter.record_u64(draw);
        }
        for (input, &s) in party_inputs.iter_mut().zip(shares.shares()) {
            input.push(s);
        }
    }

    let mul = match mode {
        Mode::Exact => None,
        Mode::PaperFaithful => {
            let inv = mod_inverse(&BigUint::from(ell), &BigUint::from(q))
                .map_err(|_| ProtocolError::NonInvertibleSize {
                    ell,
                    modulus: q.to_string(),
                })?
                .to_u64()
                .expect("inverse below a u64 modulus");
            let triple = ti_gen_triple(k, q, rng)?;
            let inv_shares = share(inv, k, q, rng)?;
            for set in [&triple.u_shares, &triple.v_shares, &triple.w_shares, &inv_shares] {
                for &draw in &set.shares()[..k - 1] {
                    meter.record_u64(draw);
                }
            }
            Some(MulMaterials { triple, inv_shares })
        }
    };

    Ok(MpcPrepared { party_inputs, mul })
}

/// One computing party. Holds exactly one share per instance plus its slice
/// of the triple; never a full secret.
pub struct MpcServerParty {
    index: usize,
    q: u64,
    shares: Vec<u64>,
    mul: Option<(TripleShare, u64)>,
}

impl MpcServerParty {
    pub fn new(index: usize, q: u64, shares: Vec<u64>, mul: Option<(TripleShare, u64)>) -> Self {
        MpcServerParty {
            index,
            q,
            shares,
            mul,
        }
    }

    /// The local addition step: this party's share of the dataset sum.
    fn local_sum(&self) -> u64 {
        self.shares
            .iter()
            .fold(0, |acc, &s| add_mod(acc, s, self.q))
    }
}

impl PartyProgram for MpcServerParty {
    type Msg = (u64, u64);
    type Output = Result<u64, ProtocolError>;

    fn step(&mut self, round: usize, inbox: &[Envelope<(u64, u64)>]) -> Step<(u64, u64), Self::Output> {
        match round {
            0 => {
                let sum_share = self.local_sum();
                match &self.mul {
                    // Exact mode: respond with the share of the sum.
                    None => Step::Done(Ok(sum_share)),
                    // Paper-faithful: open the multiplication round with
                    // (d_i, e_i) masking (sum, ℓ⁻¹) by the triple.
                    Some((triple, inv_share)) => {
                        let pair = mask_operands(sum_share, *inv_share, triple, self.q);
                        Step::Broadcast(pair)
                    }
                }
            }
            _ => {
                let pairs: Vec<(u64, u64)> = inbox.iter().map(|e| e.msg).collect();
                let (d, e) = combine_broadcasts(&pairs, self.q);
                let (triple, _) = self
                    .mul
                    .as_ref()
                    .expect("round 1 only runs in paper-faithful mode");
                debug_assert_eq!(pairs.len(), inbox.len());
                let _ = self.index;
                Step::Done(Ok(output_share(triple, d, e, self.q)))
            }
        }
    }
}

/// Client phase two: reconstruct the servers' output shares. In exact mode
/// the reconstruction is the dataset sum and the client floor-divides; in
/// paper-faithful mode the reconstruction is returned verbatim.
pub fn mpc_client_finish(
    z_shares: &ShareSet,
    ell: usize,
    mode: Mode,
) -> Result<BigUint, ProtocolError> {
    let combined = z_shares.reconstruct();
    Ok(match mode {
        Mode::Exact => BigUint::from(combined / ell as u64),
        Mode::PaperFaithful => BigUint::from(combined),
    })
}

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

/// A protocol with its once-per-experiment setup done (key material for HE).
/// Individual runs draw fresh per-iteration randomness.
pub enum ProtocolInstance {
    He { keypair: Keypair, mode: Mode },
    Mpc { parties: usize, modulus: u64, mode: Mode },
}

impl ProtocolInstance {
    /// Builds the instance, generating the Paillier keypair for HE. Key
    /// generation happens here, outside any timed phase.
    pub fn setup<R: Rng + ?Sized>(
        cfg: &MeanProtocolConfig,
        rng: &mut R,
    ) -> Result<Self, ProtocolError> {
        match cfg.protocol {
            ProtocolKind::He => Ok(ProtocolInstance::He {
                keypair: paillier::keygen(cfg.key_bits, rng)?,
                mode: cfg.mode,
            }),
            ProtocolKind::Mpc => {
                if cfg.parties < 2 {
                    return Err(ProtocolError::TooFewParties(cfg.parties));
                }
                Ok(ProtocolInstance::Mpc {
                    parties: cfg.parties,
                    modulus: cfg.modulus,
                    mode: cfg.mode,
                })
            }
        }
    }

    pub fn mode(&self) -> Mode {
        match self {
            ProtocolInstance::He { mode, .. } | ProtocolInstance::Mpc { mode, .. } => *mode,
        }
    }

    /// Runs one full protocol iteration under the harness, recording client
    /// time (prepare, TI work, finish) and server time (the wall-clock span
    /// of the server phase) into one sample.
    pub fn run<R: Rng + ?Sized>(
        &self,
        dataset: &[u64],
        harness: &SimHarness,
        rng: &mut R,
        iteration: u64,
    ) -> Result<MeanResult, ProtocolError> {
        if dataset.is_empty() {
            return Err(ProtocolError::EmptyDataset);
        }
        match self {
            ProtocolInstance::He { keypair, mode } => {
                run_he(keypair, *mode, dataset, harness, rng, iteration)
            }
            ProtocolInstance::Mpc {
                parties,
                modulus,
                mode,
            } => run_mpc(*parties, *modulus, *mode, dataset, harness, rng, iteration),
        }
    }
}

/// One-shot convenience: set up and run a single iteration.
pub fn run_protocol<R: Rng + ?Sized>(
    dataset: &[u64],
    cfg: &MeanProtocolConfig,
    harness: &SimHarness,
    rng: &mut R,
) -> Result<MeanResult, ProtocolError> {
    ProtocolInstance::setup(cfg, rng)?.run(dataset, harness, rng, 0)
}

fn validate_exact_sum_he(dataset: &[u64], n: &BigUint) -> Result<(), ProtocolError> {
    let sum = dataset.iter().map(|&v| BigUint::from(v)).sum::<BigUint>();
    if sum >= *n {
        return Err(ProtocolError::SumOverflowsModulus(n.to_string()));
    }
    Ok(())
}

fn run_he<R: Rng + ?Sized>(
    keypair: &Keypair,
    mode: Mode,
    dataset: &[u64],
    harness: &SimHarness,
    rng: &mut R,
    iteration: u64,
) -> Result<MeanResult, ProtocolError> {
    let ell = dataset.len();
    if mode == Mode::Exact {
        validate_exact_sum_he(dataset, keypair.public.modulus())?;
    }

    let mut sheet = TimingSheet::new(harness.clock());
    let mut meter = RandMagnitude::default();

    let (cts, _) = sheet.time_role(Role::Client, || {
        he_client_prepare(dataset, &keypair.public, rng, &mut meter)
    })?;
    let cts = cts?;

    let server = HeServer {
        pk: keypair.public.clone(),
        cts,
        ell,
        mode,
    };
    let (phase, _) = sheet.time_role(Role::Server, || {
        run_parties(
            harness.schedule(),
            vec![server],
            &harness.clock(),
            harness.transcript(),
        )
    })?;
    let phase = phase?;
    let result_ct = take_single_output(phase.outputs)??;

    let (value, _) = sheet.time_role(Role::Client, || {
        he_client_finish(&keypair.private, &result_ct, ell, mode)
    })?;

    Ok(MeanResult {
        value: value?,
        timings: sheet.sample(iteration),
        h_u: meter.average(),
        per_party_srv_ms: phase.per_party_ms,
        server_broadcasts: phase.broadcasts,
    })
}

fn take_single_output<T>(mut outputs: Vec<T>) -> Result<T, ProtocolError> {
    if outputs.len() != 1 {
        return Err(ProtocolError::MalformedServerOutput {
            got: outputs.len(),
            expected: 1,
        });
    }
    Ok(outputs.pop().expect("length checked"))
}

fn run_mpc<R: Rng + ?Sized>(
    parties: usize,
    q: u64,
    mode: Mode,
    dataset: &[u64],
    harness: &SimHarness,
    rng: &mut R,
    iteration: u64,
) -> Result<MeanResult, ProtocolError> {
    let ell = dataset.len();
    if mode == Mode::Exact {
        let sum: u128 = dataset.iter().map(|&v| v as u128).sum();
        if sum >= q as u128 {
            return Err(ProtocolError::SumOverflowsModulus(q.to_string()));
        }
    }

    let mut sheet = TimingSheet::new(harness.clock());
    let mut meter = RandMagnitude::default();

    // Prepare covers both the instance sharing and the TI work.
    let (prepared, _) = sheet.time_role(Role::Client, || {
        mpc_client_prepare(dataset, parties, q, mode, rng, &mut meter)
    })?;
    let prepared = prepared?;

    let programs: Vec<MpcServerParty> = prepared
        .party_inputs
        .into_iter()
        .enumerate()
        .map(|(i, shares)| {
            let index = i + 1;
            let mul = prepared
                .mul
                .as_ref()
                .map(|m| (m.triple.share_for(index), m.inv_shares.share_of(index)));
            MpcServerParty::new(index, q, shares, mul)
        })
        .collect();

    let (phase, _) = sheet.time_role(Role::Server, || {
        run_parties(
            harness.schedule(),
            programs,
            &harness.clock(),
            harness.transcript(),
        )
    })?;
    let phase: PhaseReport<Result<u64, ProtocolError>> = phase?;
    let z_values = phase
        .outputs
        .into_iter()
        .collect::<Result<Vec<u64>, ProtocolError>>()?;
    let z_shares = ShareSet::new(z_values, q)?;

    let (value, _) = sheet.time_role(Role::Client, || mpc_client_finish(&z_shares, ell, mode))?;

    Ok(MeanResult {
        value: value?,
        timings: sheet.sample(iteration),
        h_u: meter.average(),
        per_party_srv_ms: phase.per_party_ms,
        server_broadcasts: phase.broadcasts,
    })
}
