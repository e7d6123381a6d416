//! Deterministic random-number helpers.
//!
//! Every random draw in the toolkit flows from an explicit `u64` seed
//! through ChaCha8, so identical inputs reproduce identical outputs on any
//! platform. Sub-streams are derived by hashing a label into the seed,
//! which keeps one component's stream independent of which other components
//! exist.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a hash of a label, used to derive independent sub-streams.
pub fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

/// A seeded stream for `label` derived from the master seed.
pub fn stream(seed: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ label_hash(label))
}

/// Standard normal draw via Box-Muller.
pub fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u1: f64 = rng.gen();
        let u2: f64 = rng.gen();
        if u1 > f64::MIN_POSITIVE {
            return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        }
    }
}
