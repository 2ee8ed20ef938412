//! Additive secret sharing over Z_q, the local-addition protocol, and
//! Beaver-triple multiplication with a Trusted Initializer setup.
//!
//! Shares live in `u64` with `u128` intermediates, so any modulus
//! `2 ≤ q ≤ u64::MAX` works. Additive sharing needs no field structure;
//! protocols that divide by the dataset size enforce invertibility at
//! their own level. Party indices are 1-based throughout.

use rand::Rng;
use thiserror::Error;

/// Default modulus for benchmarks: the Mersenne prime 2⁶¹ − 1.
pub const DEFAULT_MODULUS: u64 = (1 << 61) - 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SharingError {
    #[error("secret {secret} is out of range for modulus {modulus}")]
    SecretOutOfRange { secret: u64, modulus: u64 },
    #[error("at least two parties are required (got {0})")]
    TooFewParties(usize),
    #[error("modulus must be at least 2 (got {0})")]
    ModulusTooSmall(u64),
    #[error("share set must not be empty")]
    EmptyShares,
    #[error("share {share} is out of range for modulus {modulus}")]
    ShareOutOfRange { share: u64, modulus: u64 },
    #[error("mismatched share parameters: expected q={expected_q}/n={expected_n}, got q={got_q}/n={got_n}")]
    MismatchedParameters {
        expected_q: u64,
        expected_n: usize,
        got_q: u64,
        got_n: usize,
    },
    #[error("malformed Beaver triple: {0}")]
    MalformedTriple(String),
    #[error("protocol step out of order: {0}")]
    ProtocolOrder(String),
}

pub fn add_mod(a: u64, b: u64, q: u64) -> u64 {
    ((a as u128 + b as u128) % q as u128) as u64
}

pub fn sub_mod(a: u64, b: u64, q: u64) -> u64 {
    ((a as u128 + q as u128 - b as u128 % q as u128) % q as u128) as u64
}

pub fn mul_mod(a: u64, b: u64, q: u64) -> u64 {
    (a as u128 * b as u128 % q as u128) as u64
}

/// Draws a value uniform on `[0, q)` by rejection sampling from the next
/// power of two, which avoids modulo bias.
pub fn sample_below<R: Rng + ?Sized>(q: u64, rng: &mut R) -> u64 {
    assert!(q >= 1, "sample_below needs a positive bound");
    if q.is_power_of_two() {
        return rng.next_u64() & (q - 1);
    }
    let mask = if q > (1u64 << 63) {
        u64::MAX
    } else {
        q.next_power_of_two() - 1
    };
    loop {
        let v = rng.next_u64() & mask;
        if v < q {
            return v;
        }
    }
}

/// An ordered list of `n` additive shares of one secret in Z_q; party `i`
/// (1-based) holds `shares[i − 1]` and the secret is the modular sum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShareSet {
    shares: Vec<u64>,
    q: u64,
}

impl ShareSet {
    /// Wraps explicit share values, validating the modulus and ranges.
    pub fn new(shares: Vec<u64>, q: u64) -> Result<Self, SharingError> {
        if q < 2 {
            return Err(SharingError::ModulusTooSmall(q));
        }
        if shares.is_empty() {
            return Err(SharingError::EmptyShares);
        }
        if let Some(&share) = shares.iter().find(|&&s| s >= q) {
            return Err(SharingError::ShareOutOfRange { share, modulus: q });
        }
        Ok(ShareSet { shares, q })
    }

    pub fn modulus(&self) -> u64 {
        self.q
    }

    pub fn party_count(&self) -> usize {
        self.shares.len()
    }

    /// Share held by 1-based party `index`.
    pub fn share_of(&self, index: usize) -> u64 {
        self.shares[index - 1]
    }

    pub fn shares(&self) -> &[u64] {
        &self.shares
    }

    /// Reveals the secret: the sum of all shares mod q. Only meaningful
    /// with the complete share list, which the type guarantees.
    pub fn reconstruct(&self) -> u64 {
        self.shares.iter().fold(0, |acc, &s| add_mod(acc, s, self.q))
    }
}

/// Splits `x ∈ Z_q` into `n ≥ 2` additive shares: the first `n − 1` are
/// uniform draws, the last absorbs the difference.
pub fn share<R: Rng + ?Sized>(
    x: u64,
    n: usize,
    q: u64,
    rng: &mut R,
) -> Result<ShareSet, SharingError> {
    if q < 2 {
        return Err(SharingError::ModulusTooSmall(q));
    }
    if n < 2 {
        return Err(SharingError::TooFewParties(n));
    }
    if x >= q {
        return Err(SharingError::SecretOutOfRange {
            secret: x,
            modulus: q,
        });
    }
    let mut shares = Vec::with_capacity(n);
    let mut running = 0u64;
    for _ in 0..n - 1 {
        let s = sample_below(q, rng);
        running = add_mod(running, s, q);
        shares.push(s);
    }
    shares.push(sub_mod(x, running, q));
    Ok(ShareSet { shares, q })
}

/// Secure distributed addition: party `i`'s output share is the sum of its
/// input shares, so the output reconstructs to the sum of the inputs.
pub fn pi_add(inputs: &[ShareSet]) -> Result<ShareSet, SharingError> {
    let first = inputs.first().ok_or(SharingError::EmptyShares)?;
    let (q, n) = (first.q, first.shares.len());
    let mut shares = vec![0u64; n];
    for input in inputs {
        if input.q != q || input.shares.len() != n {
            return Err(SharingError::MismatchedParameters {
                expected_q: q,
                expected_n: n,
                got_q: input.q,
                got_n: input.shares.len(),
            });
        }
        for (acc, &s) in shares.iter_mut().zip(&input.shares) {
            *acc = add_mod(*acc, s, q);
        }
    }
    Ok(ShareSet { shares, q })
}

/// Correlated randomness for one secure multiplication: shares of
/// `(u, v, w = uv)` plus the index of the party holding the asymmetric bit.
#[derive(Debug, Clone)]
pub struct BeaverTriple {
    pub u_shares: ShareSet,
    pub v_shares: ShareSet,
    pub w_shares: ShareSet,
    /// 1-based index of the single party that adds the public `d·e` term.
    pub iota: usize,
}

/// One party's view of a [`BeaverTriple`].
#[derive(Debug, Clone, Copy)]
pub struct TripleShare {
    pub u: u64,
    pub v: u64,
    pub w: u64,
    pub asymmetric: bool,
}

impl BeaverTriple {
    pub fn modulus(&self) -> u64 {
        self.u_shares.q
    }

    pub fn party_count(&self) -> usize {
        self.u_shares.shares.len()
    }

    /// The view handed to 1-based party `index`.
    pub fn share_for(&self, index: usize) -> TripleShare {
        TripleShare {
            u: self.u_shares.share_of(index),
            v: self.v_shares.share_of(index),
            w: self.w_shares.share_of(index),
            asymmetric: index == self.iota,
        }
    }

    fn validate(&self) -> Result<(), SharingError> {
        let (q, n) = (self.u_shares.q, self.u_shares.shares.len());
        for set in [&self.v_shares, &self.w_shares] {
            if set.q != q || set.shares.len() != n {
                return Err(SharingError::MismatchedParameters {
                    expected_q: q,
                    expected_n: n,
                    got_q: set.q,
                    got_n: set.shares.len(),
                });
            }
        }
        if self.iota == 0 || self.iota > n {
            return Err(SharingError::MalformedTriple(format!(
                "asymmetric-bit holder {} outside 1..={n}",
                self.iota
            )));
        }
        Ok(())
    }
}

/// Trusted Initializer setup: draws `u, v` uniformly, forms `w = uv mod q`,
/// shares all three, and assigns the asymmetric bit to a uniform party.
pub fn ti_gen_triple<R: Rng + ?Sized>(
    n: usize,
    q: u64,
    rng: &mut R,
) -> Result<BeaverTriple, SharingError> {
    if q < 2 {
        return Err(SharingError::ModulusTooSmall(q));
    }
    if n < 2 {
        return Err(SharingError::TooFewParties(n));
    }
    let u = sample_below(q, rng);
    let v = sample_below(q, rng);
    let w = mul_mod(u, v, q);
    Ok(BeaverTriple {
        u_shares: share(u, n, q, rng)?,
        v_shares: share(v, n, q, rng)?,
        w_shares: share(w, n, q, rng)?,
        iota: sample_below(n as u64, rng) as usize + 1,
    })
}

/// Step 1 of the multiplication protocol: party `i` locally masks its
/// operand shares, producing the broadcast pair `(d_i, e_i)`.
pub fn mask_operands(x_i: u64, y_i: u64, triple: &TripleShare, q: u64) -> (u64, u64) {
    (sub_mod(x_i, triple.u, q), sub_mod(y_i, triple.v, q))
}

/// Step 3: every party sums the broadcast pairs into the public `(d, e)`.
pub fn combine_broadcasts(pairs: &[(u64, u64)], q: u64) -> (u64, u64) {
    pairs.iter().fold((0, 0), |(d, e), &(d_i, e_i)| {
        (add_mod(d, d_i, q), add_mod(e, e_i, q))
    })
}

/// Steps 4–5: the output share `w_i + d·v_i + e·u_i`, plus `d·e` for the
/// asymmetric-bit holder only.
pub fn output_share(triple: &TripleShare, d: u64, e: u64, q: u64) -> u64 {
    let mut z = add_mod(triple.w, mul_mod(d, triple.v, q), q);
    z = add_mod(z, mul_mod(e, triple.u, q), q);
    if triple.asymmetric {
        z = add_mod(z, mul_mod(d, e, q), q);
    }
    z
}

/// One party's state while executing the multiplication protocol: its own
/// shares plus whatever has been broadcast. Nothing else is observable.
#[derive(Debug)]
pub struct PartyState {
    index: usize,
    q: u64,
    x: u64,
    y: u64,
    triple: TripleShare,
    received: Vec<(u64, u64)>,
    party_count: usize,
}

impl PartyState {
    pub fn new(index: usize, party_count: usize, q: u64, x: u64, y: u64, triple: TripleShare) -> Self {
        PartyState {
            index,
            q,
            x,
            y,
            triple,
            received: Vec::with_capacity(party_count),
            party_count,
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    /// Step 1: the pair this party broadcasts.
    pub fn local_mask(&self) -> (u64, u64) {
        mask_operands(self.x, self.y, &self.triple, self.q)
    }

    /// Step 2: record one broadcast pair (the party's own included).
    pub fn receive(&mut self, pair: (u64, u64)) {
        self.received.push(pair);
    }

    /// Steps 3–5: combine all received pairs and emit this party's output
    /// share. Requires exactly one pair per party.
    pub fn output_share(&self) -> Result<u64, SharingError> {
        if self.received.len() != self.party_count {
            return Err(SharingError::ProtocolOrder(format!(
                "party {} combined after {} of {} broadcasts",
                self.index,
                self.received.len(),
                self.party_count
            )));
        }
        let (d, e) = combine_broadcasts(&self.received, self.q);
        Ok(output_share(&self.triple, d, e, self.q))
    }
}

/// Secure distributed multiplication: runs the five protocol steps over all
/// parties and returns the output sharing of `xy mod q`.
pub fn pi_mul(
    x: &ShareSet,
    y: &ShareSet,
    triple: &BeaverTriple,
) -> Result<ShareSet, SharingError> {
    triple.validate()?;
    let (q, n) = (x.q, x.shares.len());
    for (set_q, set_n) in [
        (y.q, y.shares.len()),
        (triple.u_shares.q, triple.u_shares.shares.len()),
    ] {
        if set_q != q || set_n != n {
            return Err(SharingError::MismatchedParameters {
                expected_q: q,
                expected_n: n,
                got_q: set_q,
                got_n: set_n,
            });
        }
    }

    let mut parties: Vec<PartyState> = (1..=n)
        .map(|i| PartyState::new(i, n, q, x.share_of(i), y.share_of(i), triple.share_for(i)))
        .collect();
    let broadcasts: Vec<(u64, u64)> = parties.iter().map(PartyState::local_mask).collect();
    for party in &mut parties {
        for &pair in &broadcasts {
            party.receive(pair);
        }
    }
    let shares = parties
        .iter()
        .map(PartyState::output_share)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ShareSet { shares, q })
}
