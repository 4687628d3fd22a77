//! Reproducible random streams.
//!
//! Every consumer draws from ChaCha20 keyed by a 64-bit seed, on a 64-bit
//! stream number: replicate `r` of a simulation uses stream `r`, location
//! sampling uses [`LOCATION_STREAM`], multi-start jitter uses
//! [`JITTER_STREAM`]. Streams never overlap, so adding replicates does not
//! perturb the earlier ones.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::specfun::normal_quantile;

pub const LOCATION_STREAM: u64 = u64::MAX;
pub const JITTER_STREAM: u64 = u64::MAX - 1;

/// ChaCha20 generator for `(seed, stream)`.
pub fn substream(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform on the open interval (0, 1), 53 bits.
pub fn uniform_open<R: RngCore>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal by inversion; one uniform per variate, so the sequence
/// depends on nothing but the stream position.
pub fn standard_normal<R: RngCore>(rng: &mut R) -> f64 {
    normal_quantile(uniform_open(rng))
}
