//! Seeded randomness with schedule-independent child streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::Vec3;
use crate::scalar::Real;

pub type SeededRng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for the `index`-th independent task of `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix(mix(seed) ^ mix(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn child_rng(seed: u64, index: u64) -> SeededRng {
    rng_from_seed(derive_seed(seed, index))
}

/// Uniform direction on the unit sphere.
pub fn unit_vector<T: Real, R: Rng>(rng: &mut R) -> Vec3<T> {
    loop {
        let v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0_f64),
        );
        let n2 = v.norm_squared();
        if n2 > 1e-6 && n2 <= 1.0 {
            return (v * (1.0 / n2.sqrt())).cast();
        }
    }
}

pub fn uniform<T: Real, R: Rng>(rng: &mut R, lo: f64, hi: f64) -> T {
    T::lit(rng.gen_range(lo..hi))
}
