//! Seeded standard-normal streams.
//!
//! Uniforms come from a counter-based ChaCha generator keyed by
//! `(seed, stream)`, and are mapped to normals through the inverse normal
//! CDF. Stream ids separate independent uses of the same seed.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

pub const STREAM_PRIOR: u64 = 1;
pub const STREAM_NOISE: u64 = 2;
pub const STREAM_LIPSCHITZ_PAIRS: u64 = 3;
pub const STREAM_LIPSCHITZ_POINTS: u64 = 4;
pub const STREAM_PERTURBATION: u64 = 5;
pub const STREAM_PROBE: u64 = 6;

pub struct NormalStream {
    rng: ChaCha8Rng,
    normal: Normal,
}

impl NormalStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            rng,
            normal: Normal::standard(),
        }
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.sample(Open01)
    }

    pub fn normal(&mut self) -> f64 {
        let p = self.uniform();
        self.normal.inverse_cdf(p)
    }

    pub fn normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    /// Uniformly distributed direction on the unit sphere in `R^n`.
    pub fn unit_vector(&mut self, n: usize) -> Vec<f64> {
        loop {
            let v = self.normals(n);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    }
}
