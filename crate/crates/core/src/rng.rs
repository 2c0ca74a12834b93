//! Reproducible sampling.
//!
//! Every random draw in the crate goes through [`SampleRng`], a ChaCha8
//! stream keyed by `(seed, stream)`. ChaCha is counter based, so a check
//! can split its sample range into chunks, give each chunk its own stream
//! id, and get identical draws no matter how the chunks are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor3::Mat3;

/// Half-width of the uniform entry distribution for random tensors.
pub const ENTRY_RANGE: f64 = 10.0;

pub struct SampleRng {
    inner: ChaCha8Rng,
}

impl SampleRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        SampleRng { inner }
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.inner.gen_range(lo..hi)
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    /// Random tensor with entries uniform on `[-10, 10]`.
    pub fn mat3(&mut self) -> Mat3 {
        let mut m = [0.0; 9];
        for x in m.iter_mut() {
            *x = self.uniform(-ENTRY_RANGE, ENTRY_RANGE);
        }
        Mat3(m)
    }

    /// Random tensor of unit Frobenius norm.
    pub fn unit_mat3(&mut self) -> Mat3 {
        loop {
            let m = self.mat3();
            let n = m.norm();
            if n > 1e-3 {
                return m.scale(1.0 / n);
            }
        }
    }
}
