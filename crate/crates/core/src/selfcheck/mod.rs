//! Randomized generators and independent brute-force references used by the
//! test suites and by `rsvlts selfcheck`.
//!
//! Nothing in here is used by the production code paths; each reference
//! recomputes its answer without calling the routine it checks.

pub mod geometry;
pub mod records;
pub mod resolution;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    pub fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
