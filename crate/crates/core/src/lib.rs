//! Privacy-preserving distributed mean protocols and Monte Carlo runtime
//! estimation.
//!
//! The crate implements two protocols that let a client delegate the
//! computation of a floor mean over a private integer dataset:
//!
//! * an additively homomorphic route built on the Paillier cryptosystem
//!   ([`paillier`], [`mean_protocols`]), and
//! * a secret-sharing route built on additive shares and Beaver-triple
//!   multiplication ([`secret_sharing`], [`mean_protocols`]).
//!
//! Around the protocols sits a simulated multi-party execution environment
//! with role-scoped timing ([`harness`]), a Monte Carlo engine that estimates
//! expected client/server runtimes and their variances ([`monte_carlo`]),
//! dataset ingestion and seeded distribution samplers ([`data_gen`]), and
//! post-experiment statistics: least-squares fits of runtime against dataset
//! size and table rendering ([`report`]).

pub mod data_gen;
pub mod harness;
pub mod mean_protocols;
pub mod monte_carlo;
pub mod paillier;
pub mod report;
pub mod secret_sharing;

pub use data_gen::{Dataset, DistFamily, DistSpec};
pub use harness::{Clock, FakeClock, MonotonicClock, Role, RuntimeSample, Schedule};
pub use mean_protocols::{MeanProtocolConfig, MeanResult, Mode, ProtocolKind};
pub use monte_carlo::{DatasetSource, McEstimate, McRun, RunnerSpec};
pub use paillier::{Ciphertext, Keypair, PrivateKey, PublicKey};
pub use report::{RegressionFit, ReportFormat, ReportRow, ReportTable};
pub use secret_sharing::{BeaverTriple, ShareSet};
