//! Library surface of the experiment front-end, split out so integration
//! tests can drive the experiment commands directly.

pub mod config;
pub mod experiments;

pub use config::{DatasetRef, DistName, Experiment, ExperimentConfig, FitOn};
pub use experiments::{cmd_adhoc, cmd_type1, cmd_type2, AdhocOutput, CliError, ExperimentOutput};
