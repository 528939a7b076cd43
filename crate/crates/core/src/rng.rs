//! Seeded randomness. Dropout masks use a stateless counter-based generator so a
//! mask depends only on `(seed, element index)`; everything else draws from ChaCha.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw in `[0, 1)` addressed by `(seed, counter)`.
pub fn counter_uniform(seed: u64, counter: u64) -> f64 {
    let bits = mix64(mix64(seed) ^ counter.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Derive an independent child seed from a parent seed and a stream tag.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix64(seed ^ mix64(stream.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

pub fn chacha(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counter_uniform_is_stateless_and_in_range() {
        for i in 0..1000 {
            let u = counter_uniform(7, i);
            assert!((0.0..1.0).contains(&u));
            assert_eq!(u, counter_uniform(7, i));
        }
        assert_ne!(counter_uniform(7, 0), counter_uniform(8, 0));
    }

    #[test]
    fn counter_uniform_mean_is_half() {
        let n = 100_000;
        let mean: f64 = (0..n).map(|i| counter_uniform(42, i)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }
}
