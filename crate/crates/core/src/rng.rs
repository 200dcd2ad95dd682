//! Seeded randomness. Every stochastic step in the crate draws from this.

use rand::{RngExt, SeedableRng};

pub type Rng = rand_pcg::Pcg64Mcg;

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Derives an independent stream, e.g. one per document, from a base seed.
pub fn derived(seed: u64, stream: u64) -> Rng {
    Rng::seed_from_u64(seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17))
}

/// Index drawn from a discrete distribution by inverse CDF.
pub fn sample_index(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    let mut last_nonzero = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_nonzero = i;
        }
        cumulative += p;
        if u < cumulative {
            return i;
        }
    }
    // rounding left u above the total mass
    last_nonzero
}
