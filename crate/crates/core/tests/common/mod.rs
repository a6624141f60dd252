#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_EPS: f64 = 1e-4;

pub fn random_array(rng: &mut ChaCha8Rng, t: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((t, p), || rng.random::<f64>())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

