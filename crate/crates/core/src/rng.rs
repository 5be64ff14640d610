//! Counter-keyed random streams.
//!
//! Every random draw in the crate comes from an [`RngStream`], addressed by a
//! `(seed, stream_id)` pair. Sub-streams are derived by hashing a tag into the
//! stream id, so a member's noise depends only on its address (seed, step,
//! member, role) and never on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Concrete generator behind every stream.
pub type SimRng = ChaCha12Rng;

/// Role tags used when deriving sub-streams.
pub mod role {
    pub const TRUTH: u64 = 0x7472_7574_6800;
    pub const OBSERVATIONS: u64 = 0x6f62_7365_7276;
    pub const INIT: u64 = 0x696e_6974_0000;
    pub const PROCESS: u64 = 0x7072_6f63_6573;
    pub const SYNTHETIC: u64 = 0x7379_6e74_6800;
    pub const SAMPLER: u64 = 0x7361_6d70_6c65;
    pub const RESAMPLE: u64 = 0x7265_7361_6d70;
    pub const REFERENCE: u64 = 0x7265_6665_7265;
    pub const SUBSAMPLE: u64 = 0x7375_6273_616d;
    pub const FILTER: u64 = 0x6669_6c74_6572;
    pub const SIMULATION: u64 = 0x7369_6d75_6c61;
    pub const STEP: u64 = 0x7374_6570_0000;
    pub const MEMBER: u64 = 0x6d65_6d62_6572;
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Address of an independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Stream keyed by `tag` beneath this one.
    pub fn derive(&self, tag: u64) -> Self {
        Self {
            seed: self.seed,
            stream_id: mix64(self.stream_id ^ mix64(tag)),
        }
    }

    pub fn step(&self, k: usize) -> Self {
        self.derive(role::STEP).derive(k as u64)
    }

    pub fn member(&self, i: usize) -> Self {
        self.derive(role::MEMBER).derive(i as u64)
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> SimRng {
        let mut rng = SimRng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Vector of i.i.d. `N(0, sigma^2)` draws.
pub fn gaussian_vector(rng: &mut dyn rand::RngCore, dim: usize, sigma: f64) -> Result<Vec<f64>> {
    if dim < 1 {
        return Err(Error::Argument("gaussian_vector needs dim >= 1".into()));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Argument(format!(
            "noise std must be finite and >= 0, got {sigma}"
        )));
    }
    let mut out = vec![0.0; dim];
    add_gaussian(rng, &mut out, sigma);
    Ok(out)
}

/// Adds `N(0, sigma^2)` noise in place. A zero `sigma` leaves `values` untouched
/// and consumes no randomness.
pub fn add_gaussian(rng: &mut dyn rand::RngCore, values: &mut [f64], sigma: f64) {
    if sigma == 0.0 {
        return;
    }
    for v in values.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v += sigma * z;
    }
}
