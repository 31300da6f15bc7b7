//! Experiment harness for learning from partial annotations: synthetic
//! data, stratified annotation sampling, and the annotation sweep, loss
//! comparison and solver lesion studies, all writing CSV.

pub mod config;
pub mod data;
pub mod experiments;
pub mod output;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use config::{ConfigError, ExperimentConfig, ProblemKind};

/// An independent seed for stream `stream` of the master seed.
pub fn seed_stream(master: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.next_u64()
}
