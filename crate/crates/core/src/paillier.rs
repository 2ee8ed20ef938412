//! Paillier cryptosystem with the additive and scalar-multiplicative
//! homomorphisms used by the homomorphic mean protocol.
//!
//! The generator is fixed to `g = N + 1`, so encryption reduces to one
//! modular multiplication plus the `r^N mod N²` masking exponentiation.
//! All arithmetic is arbitrary precision; there is deliberately no
//! fixed-width fast path.

use num_bigint::{BigInt, BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest accepted key size. Keys this small are only useful in tests.
pub const MIN_KEY_BITS: usize = 16;

/// Candidate primes rejected before keygen gives up on the random source.
const MAX_PRIME_ATTEMPTS: usize = 100_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PaillierError {
    #[error("key size must be an even number of bits, at least {MIN_KEY_BITS} (got {0})")]
    InvalidKeySize(usize),
    #[error("prime generation exhausted the random source after {0} candidates")]
    PrimeGenerationFailed(usize),
    #[error("message out of range: plaintexts must lie in [0, N)")]
    MessageOutOfRange,
    #[error("scalar out of range: factors must lie in [0, N)")]
    ScalarOutOfRange,
    #[error("ciphertext does not match this key's modulus")]
    CiphertextMismatch,
    #[error("value {value} is not invertible modulo {modulus}")]
    NonInvertible { value: String, modulus: String },
    #[error("invalid key fixture: {0}")]
    BadFixture(String),
}

/// Public half of a Paillier keypair: modulus `N`, generator `g = N + 1`,
/// and the cached square `N²` in which ciphertexts live.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey {
    n: BigUint,
    g: BigUint,
    n_squared: BigUint,
}

/// Private half: `λ = lcm(p−1, q−1)` and `μ = L(g^λ mod N²)⁻¹ mod N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrivateKey {
    lambda: BigUint,
    mu: BigUint,
    n: BigUint,
}

/// A Paillier ciphertext: a unit of Z_{N²}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    value: BigUint,
}

/// Public and private key generated together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Keypair {
    pub public: PublicKey,
    pub private: PrivateKey,
}

impl PublicKey {
    /// Modulus `N`.
    pub fn modulus(&self) -> &BigUint {
        &self.n
    }

    /// Generator, always `N + 1`.
    pub fn generator(&self) -> &BigUint {
        &self.g
    }

    /// Cached `N²`.
    pub fn modulus_squared(&self) -> &BigUint {
        &self.n_squared
    }
}

impl Ciphertext {
    pub fn value(&self) -> &BigUint {
        &self.value
    }
}

/// Generates a keypair with `bits` total modulus size from two distinct
/// primes of `bits / 2` bits each.
///
/// Deterministic for a fixed seeded `rng`: the same seed yields the same
/// keypair.
pub fn keygen<R: Rng + ?Sized>(bits: usize, rng: &mut R) -> Result<Keypair, PaillierError> {
    if bits < MIN_KEY_BITS || bits % 2 != 0 {
        return Err(PaillierError::InvalidKeySize(bits));
    }
    let half = bits / 2;
    let p = generate_prime(half, rng)?;
    let q = loop {
        let q = generate_prime(half, rng)?;
        if q != p {
            break q;
        }
    };
    Ok(keypair_from_primes(&p, &q))
}

/// Builds a keypair from explicit primes. Intended for fixtures and tests
/// with hand-picked small primes; `keygen` is the production path.
pub fn keypair_from_primes(p: &BigUint, q: &BigUint) -> Keypair {
    assert!(p != q, "Paillier primes must be distinct");
    let n = p * q;
    let n_squared = &n * &n;
    let g = &n + 1u32;
    let lambda = (p - 1u32).lcm(&(q - 1u32));
    // μ = L(g^λ mod N²)^{-1} mod N, with L(x) = (x − 1) / N.
    let l = l_function(&g.modpow(&lambda, &n_squared), &n);
    let mu = mod_inverse(&l, &n).expect("λ invertible for valid primes");
    Keypair {
        public: PublicKey { n, g, n_squared },
        private: PrivateKey { lambda, mu, n: p * q },
    }
}

/// Encrypts `m ∈ Z_N` with fresh randomness drawn from `rng`.
pub fn encrypt<R: Rng + ?Sized>(
    pk: &PublicKey,
    m: &BigUint,
    rng: &mut R,
) -> Result<Ciphertext, PaillierError> {
    let r = sample_unit(pk, rng);
    encrypt_with_randomness(pk, m, &r)
}

/// Encrypts `m` with caller-supplied randomness `r ∈ [1, N)`, gcd(r, N) = 1.
///
/// Split out from [`encrypt`] so callers can observe or replay the random
/// mask; the ciphertext is `(1 + mN) · r^N mod N²` since `g = N + 1`.
pub fn encrypt_with_randomness(
    pk: &PublicKey,
    m: &BigUint,
    r: &BigUint,
) -> Result<Ciphertext, PaillierError> {
    if m >= &pk.n {
        return Err(PaillierError::MessageOutOfRange);
    }
    let g_to_m = (BigUint::one() + m * &pk.n) % &pk.n_squared;
    let mask = r.modpow(&pk.n, &pk.n_squared);
    Ok(Ciphertext {
        value: g_to_m * mask % &pk.n_squared,
    })
}

/// Draws `r` uniform over the units of Z_N by rejection sampling from
/// `[1, N)`, rejecting the negligible gcd(r, N) ≠ 1 cases.
pub fn sample_unit<R: Rng + ?Sized>(pk: &PublicKey, rng: &mut R) -> BigUint {
    loop {
        let r = rng.gen_biguint_below(&pk.n);
        if !r.is_zero() && r.gcd(&pk.n).is_one() {
            return r;
        }
    }
}

/// Decrypts a ciphertext: `L(c^λ mod N²) · μ mod N`.
pub fn decrypt(sk: &PrivateKey, c: &Ciphertext) -> Result<BigUint, PaillierError> {
    let n_squared = &sk.n * &sk.n;
    if c.value.is_zero() || c.value >= n_squared {
        return Err(PaillierError::CiphertextMismatch);
    }
    let l = l_function(&c.value.modpow(&sk.lambda, &n_squared), &sk.n);
    Ok(l * &sk.mu % &sk.n)
}

/// Homomorphic addition: the product of ciphertexts decrypts to the sum of
/// the plaintexts mod N.
pub fn hom_add(
    pk: &PublicKey,
    c1: &Ciphertext,
    c2: &Ciphertext,
) -> Result<Ciphertext, PaillierError> {
    check_under_key(pk, c1)?;
    check_under_key(pk, c2)?;
    Ok(Ciphertext {
        value: &c1.value * &c2.value % &pk.n_squared,
    })
}

/// Homomorphic scalar multiplication: `c^k` decrypts to `k·m mod N`.
pub fn hom_scalar_mul(
    pk: &PublicKey,
    c: &Ciphertext,
    k: &BigUint,
) -> Result<Ciphertext, PaillierError> {
    check_under_key(pk, c)?;
    if k >= &pk.n {
        return Err(PaillierError::ScalarOutOfRange);
    }
    Ok(Ciphertext {
        value: c.value.modpow(k, &pk.n_squared),
    })
}

/// Modular multiplicative inverse via the extended Euclidean algorithm.
/// Errors when gcd(a, n) ≠ 1.
pub fn mod_inverse(a: &BigUint, n: &BigUint) -> Result<BigUint, PaillierError> {
    assert!(n > &BigUint::one(), "modulus must exceed 1");
    let a = BigInt::from(a % n);
    let n_signed = BigInt::from(n.clone());
    let ext = a.extended_gcd(&n_signed);
    if !ext.gcd.is_one() {
        return Err(PaillierError::NonInvertible {
            value: a.to_string(),
            modulus: n.to_string(),
        });
    }
    let inv = ext.x.mod_floor(&n_signed);
    Ok(inv.to_biguint().expect("mod_floor result is non-negative"))
}

fn l_function(x: &BigUint, n: &BigUint) -> BigUint {
    (x - 1u32) / n
}

fn check_under_key(pk: &PublicKey, c: &Ciphertext) -> Result<(), PaillierError> {
    if c.value.is_zero() || c.value >= pk.n_squared {
        return Err(PaillierError::CiphertextMismatch);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Prime generation
// ---------------------------------------------------------------------------

const SMALL_PRIMES: [u32; 54] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191,
    193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

/// Witnesses that make Miller–Rabin deterministic for all n < 2⁶⁴.
const DETERMINISTIC_BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Probabilistic rounds for candidates at or above 2⁶⁴.
const MILLER_RABIN_ROUNDS: usize = 40;

fn generate_prime<R: Rng + ?Sized>(bits: usize, rng: &mut R) -> Result<BigUint, PaillierError> {
    for _ in 0..MAX_PRIME_ATTEMPTS {
        let mut candidate = rng.gen_biguint(bits as u64);
        candidate.set_bit(bits as u64 - 1, true);
        candidate.set_bit(0, true);
        if is_prime(&candidate, rng) {
            return Ok(candidate);
        }
    }
    Err(PaillierError::PrimeGenerationFailed(MAX_PRIME_ATTEMPTS))
}

/// Miller–Rabin primality test: deterministic witness set below 2⁶⁴,
/// otherwise `MILLER_RABIN_ROUNDS` random witnesses.
pub fn is_prime<R: Rng + ?Sized>(n: &BigUint, rng: &mut R) -> bool {
    if n < &BigUint::from(2u32) {
        return false;
    }
    for p in SMALL_PRIMES {
        let p = BigUint::from(p);
        if n == &p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }

    // n − 1 = 2^s · d with d odd
    let n_minus_one = n - 1u32;
    let s = n_minus_one.trailing_zeros().expect("n > 2 is odd here");
    let d = &n_minus_one >> s;

    let passes = |base: &BigUint| -> bool {
        let mut x = base.modpow(&d, n);
        if x.is_one() || x == n_minus_one {
            return true;
        }
        for _ in 1..s {
            x = &x * &x % n;
            if x == n_minus_one {
                return true;
            }
        }
        false
    };

    if n.bits() <= 64 {
        DETERMINISTIC_BASES
            .iter()
            .map(|&b| BigUint::from(b))
            .filter(|b| (b % n) > BigUint::one())
            .all(|b| passes(&b))
    } else {
        let two = BigUint::from(2u32);
        let upper = n - 2u32;
        (0..MILLER_RABIN_ROUNDS).all(|_| {
            let base = rng.gen_biguint_range(&two, &upper);
            passes(&base)
        })
    }
}

// ---------------------------------------------------------------------------
// Fixture serialization
// ---------------------------------------------------------------------------

/// Debug/test fixture form of a keypair: base-10 strings for n, g, λ, μ.
#[derive(Debug, Serialize, Deserialize)]
struct KeyFixture {
    n: String,
    g: String,
    lambda: String,
    mu: String,
}

impl Keypair {
    /// Serializes the keypair to the `{n, g, lambda, mu}` JSON fixture form.
    pub fn to_fixture_json(&self) -> String {
        let fixture = KeyFixture {
            n: self.public.n.to_string(),
            g: self.public.g.to_string(),
            lambda: self.private.lambda.to_string(),
            mu: self.private.mu.to_string(),
        };
        serde_json::to_string_pretty(&fixture).expect("fixture serializes")
    }

    /// Parses a keypair from the JSON fixture form.
    pub fn from_fixture_json(text: &str) -> Result<Self, PaillierError> {
        let fixture: KeyFixture =
            serde_json::from_str(text).map_err(|e| PaillierError::BadFixture(e.to_string()))?;
        let field = |name: &str, value: &str| {
            value
                .parse::<BigUint>()
                .map_err(|_| PaillierError::BadFixture(format!("{name} is not a base-10 integer")))
        };
        let n = field("n", &fixture.n)?;
        let g = field("g", &fixture.g)?;
        if g != &n + 1u32 {
            return Err(PaillierError::BadFixture("g must equal n + 1".into()));
        }
        let n_squared = &n * &n;
        Ok(Keypair {
            public: PublicKey {
                n: n.clone(),
                g,
                n_squared,
            },
            private: PrivateKey {
                lambda: field("lambda", &fixture.lambda)?,
                mu: field("mu", &fixture.mu)?,
                n,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn toy_keypair() -> Keypair {
        keypair_from_primes(&BigUint::from(5u32), &BigUint::from(7u32))
    }

    /// Square-and-multiply-free oracle: repeated modular multiplication.
    fn naive_modpow(base: &BigUint, exp: u64, modulus: &BigUint) -> BigUint {
        let mut acc = BigUint::one();
        for _ in 0..exp {
            acc = acc * base % modulus;
        }
        acc
    }

    #[test]
    fn forced_primes_give_known_key_material() {
        let kp = toy_keypair();
        assert_eq!(kp.public.n, BigUint::from(35u32));
        assert_eq!(kp.public.g, BigUint::from(36u32));
        assert_eq!(kp.public.n_squared, BigUint::from(1225u32));
        // λ = lcm(4, 6) = 12
        assert_eq!(kp.private.lambda, BigUint::from(12u32));
    }

    #[test]
    fn keygen_is_deterministic_under_fixed_seed() {
        let a = keygen(512, &mut rng(1)).unwrap();
        let b = keygen(512, &mut rng(1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn keygen_rejects_bad_sizes() {
        assert_eq!(
            keygen(8, &mut rng(0)).unwrap_err(),
            PaillierError::InvalidKeySize(8)
        );
        assert_eq!(
            keygen(17, &mut rng(0)).unwrap_err(),
            PaillierError::InvalidKeySize(17)
        );
    }

    #[test]
    fn encrypt_zero_with_unit_randomness_is_one() {
        let kp = toy_keypair();
        let ct =
            encrypt_with_randomness(&kp.public, &BigUint::zero(), &BigUint::one()).unwrap();
        assert_eq!(ct.value, BigUint::one());
        assert_eq!(decrypt(&kp.private, &ct).unwrap(), BigUint::zero());
    }

    #[test]
    fn encrypt_matches_brute_force_modular_exponentiation() {
        // Enc(3; r=2) under N = 35 must equal 36³ · 2³⁵ mod 1225.
        let kp = toy_keypair();
        let n_squared = BigUint::from(1225u32);
        let expected = naive_modpow(&BigUint::from(36u32), 3, &n_squared)
            * naive_modpow(&BigUint::from(2u32), 35, &n_squared)
            % &n_squared;
        let ct =
            encrypt_with_randomness(&kp.public, &BigUint::from(3u32), &BigUint::from(2u32))
                .unwrap();
        assert_eq!(ct.value, expected);
    }

    #[test]
    fn encrypt_rejects_out_of_range_message() {
        let kp = toy_keypair();
        let err = encrypt(&kp.public, &BigUint::from(35u32), &mut rng(3)).unwrap_err();
        assert_eq!(err, PaillierError::MessageOutOfRange);
    }

    #[test]
    fn round_trip_holds_for_1000_random_messages_under_512_bit_key() {
        let mut r = rng(7);
        let kp = keygen(512, &mut r).unwrap();
        for _ in 0..1000 {
            let m = r.gen_biguint_below(kp.public.modulus());
            let ct = encrypt(&kp.public, &m, &mut r).unwrap();
            assert_eq!(decrypt(&kp.private, &ct).unwrap(), m);
        }
    }

    #[test]
    fn round_trip_is_exhaustive_on_the_toy_key() {
        let kp = toy_keypair();
        let mut r = rng(11);
        for m in 0u32..35 {
            let m = BigUint::from(m);
            let ct = encrypt(&kp.public, &m, &mut r).unwrap();
            assert_eq!(decrypt(&kp.private, &ct).unwrap(), m);
        }
    }

    #[test]
    fn hom_add_matches_plaintext_addition() {
        let mut r = rng(13);
        let kp = keygen(256, &mut r).unwrap();
        let n = kp.public.modulus().clone();
        for _ in 0..200 {
            let m1 = r.gen_biguint_below(&n);
            let m2 = r.gen_biguint_below(&n);
            let c1 = encrypt(&kp.public, &m1, &mut r).unwrap();
            let c2 = encrypt(&kp.public, &m2, &mut r).unwrap();
            let sum = hom_add(&kp.public, &c1, &c2).unwrap();
            assert_eq!(decrypt(&kp.private, &sum).unwrap(), (&m1 + &m2) % &n);
        }
    }

    #[test]
    fn hom_add_identity_and_counting() {
        let mut r = rng(17);
        let kp = keygen(128, &mut r).unwrap();
        let m = BigUint::from(29u32);
        let c = encrypt(&kp.public, &m, &mut r).unwrap();
        let zero = encrypt(&kp.public, &BigUint::zero(), &mut r).unwrap();
        let sum = hom_add(&kp.public, &c, &zero).unwrap();
        assert_eq!(decrypt(&kp.private, &sum).unwrap(), m);

        // Folding ℓ encryptions of one counts to ℓ.
        let ell = 50u32;
        let one = BigUint::one();
        let mut acc = encrypt(&kp.public, &one, &mut r).unwrap();
        for _ in 1..ell {
            let next = encrypt(&kp.public, &one, &mut r).unwrap();
            acc = hom_add(&kp.public, &acc, &next).unwrap();
        }
        assert_eq!(decrypt(&kp.private, &acc).unwrap(), BigUint::from(ell));
    }

    #[test]
    fn hom_scalar_mul_matches_plaintext_scaling() {
        let mut r = rng(19);
        let kp = keygen(128, &mut r).unwrap();
        let c7 = encrypt(&kp.public, &BigUint::from(7u32), &mut r).unwrap();

        let by_one = hom_scalar_mul(&kp.public, &c7, &BigUint::one()).unwrap();
        assert_eq!(decrypt(&kp.private, &by_one).unwrap(), BigUint::from(7u32));

        let by_zero = hom_scalar_mul(&kp.public, &c7, &BigUint::zero()).unwrap();
        assert_eq!(decrypt(&kp.private, &by_zero).unwrap(), BigUint::zero());

        let by_six = hom_scalar_mul(&kp.public, &c7, &BigUint::from(6u32)).unwrap();
        assert_eq!(decrypt(&kp.private, &by_six).unwrap(), BigUint::from(42u32));
    }

    #[test]
    fn scalar_out_of_range_is_rejected() {
        let kp = toy_keypair();
        let c = encrypt(&kp.public, &BigUint::from(2u32), &mut rng(23)).unwrap();
        let err = hom_scalar_mul(&kp.public, &c, &BigUint::from(35u32)).unwrap_err();
        assert_eq!(err, PaillierError::ScalarOutOfRange);
    }

    #[test]
    fn encryption_is_probabilistic() {
        let kp = toy_keypair();
        let m = BigUint::from(9u32);
        let a = encrypt_with_randomness(&kp.public, &m, &BigUint::from(2u32)).unwrap();
        let b = encrypt_with_randomness(&kp.public, &m, &BigUint::from(3u32)).unwrap();
        assert_ne!(a, b);
        assert_eq!(
            decrypt(&kp.private, &a).unwrap(),
            decrypt(&kp.private, &b).unwrap()
        );
    }

    #[test]
    fn mismatched_ciphertext_is_detected() {
        let kp = toy_keypair();
        let oversized = Ciphertext {
            value: BigUint::from(1225u32),
        };
        assert_eq!(
            decrypt(&kp.private, &oversized).unwrap_err(),
            PaillierError::CiphertextMismatch
        );
        let good = encrypt(&kp.public, &BigUint::one(), &mut rng(29)).unwrap();
        assert_eq!(
            hom_add(&kp.public, &good, &oversized).unwrap_err(),
            PaillierError::CiphertextMismatch
        );
    }

    #[test]
    fn mod_inverse_basics() {
        let n7 = BigUint::from(7u32);
        assert_eq!(
            mod_inverse(&BigUint::one(), &n7).unwrap(),
            BigUint::one()
        );
        assert_eq!(
            mod_inverse(&BigUint::from(3u32), &n7).unwrap(),
            BigUint::from(5u32)
        );
        assert!(matches!(
            mod_inverse(&BigUint::from(4u32), &BigUint::from(8u32)),
            Err(PaillierError::NonInvertible { .. })
        ));
    }

    #[test]
    fn fixture_json_round_trips() {
        let kp = keygen(128, &mut rng(31)).unwrap();
        let text = kp.to_fixture_json();
        let parsed = Keypair::from_fixture_json(&text).unwrap();
        assert_eq!(parsed, kp);
    }

    #[test]
    fn is_prime_agrees_with_trial_division_below_2000() {
        let mut r = rng(37);
        let trial = |n: u64| n >= 2 && (2..n).take_while(|d| d * d <= n).all(|d| n % d != 0);
        for n in 0u64..2000 {
            assert_eq!(
                is_prime(&BigUint::from(n), &mut r),
                trial(n),
                "disagreement at {n}"
            );
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn mod_inverse_really_inverts(a in 1u64..10_000, n in 2u64..10_000) {
                let a = BigUint::from(a);
                let n = BigUint::from(n);
                if let Ok(inv) = mod_inverse(&a, &n) {
                    prop_assert_eq!((a * inv) % &n, BigUint::one() % &n);
                }
            }

            #[test]
            fn toy_key_round_trips_any_message(m in 0u32..35, seed in 0u64..1000) {
                let kp = toy_keypair();
                let mut r = rng(seed);
                let m = BigUint::from(m);
                let ct = encrypt(&kp.public, &m, &mut r).unwrap();
                prop_assert_eq!(decrypt(&kp.private, &ct).unwrap(), m);
            }
        }
    }
}
