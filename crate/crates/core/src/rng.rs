//! Seeded, splittable randomness.
//!
//! Every random draw in a run comes from a ChaCha8 substream keyed by
//! `(purpose, a, b)` under the run seed, so the draws for (say) epoch 7's
//! re-initialization do not depend on how many numbers anything else consumed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    GroundTruth = 1,
    Init = 2,
    Reinit = 3,
    Perturb = 4,
    MonteCarlo = 5,
    Probe = 6,
    Baseline = 7,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedStream {
    seed: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator for `(purpose, a, b)`.
    pub fn substream(&self, purpose: Purpose, a: u64, b: u64) -> ChaCha8Rng {
        let stream = splitmix64(splitmix64(splitmix64(purpose as u64) ^ a) ^ b.rotate_left(32));
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

pub fn standard_normal_vec<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

/// Uniform draw from the unit sphere `S^{d-1}` (normalized Gaussian, rejecting
/// norms below 1e-12).
pub fn unit_sphere<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let mut v = standard_normal_vec(rng, d);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n >= 1e-12 {
            v.iter_mut().for_each(|x| *x /= n);
            return v;
        }
    }
}

pub fn rademacher<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}
