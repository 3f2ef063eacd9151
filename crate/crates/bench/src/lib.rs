//! Seeded inputs shared by the benchmarks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slpn_core::token_pn::RadialFlowStack;
use slpn_core::transmission::TransmissionParams;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A class-wise flow stack with the default latent width and depth.
pub fn flows(classes: usize, dim: usize, depth: usize) -> RadialFlowStack {
    RadialFlowStack::new(classes, dim, depth, &mut rng(1))
}

/// Nonnegative evidence for a sentence of `len` tokens.
pub fn evidence(len: usize, classes: usize) -> Array2<f64> {
    let mut r = rng(2);
    Array2::from_shape_fn((len, classes), |_| r.random_range(0.0..50.0))
}

pub fn transmission(classes: usize) -> TransmissionParams {
    TransmissionParams::new(classes, classes, None, &mut rng(3)).expect("valid sizes")
}

/// Tied scores with roughly one positive in three.
pub fn detection_scores(n: usize) -> (Vec<f64>, Vec<bool>) {
    let mut r = rng(4);
    (0..n)
        .map(|_| (r.random_range(0..1000) as f64, r.random_bool(0.3)))
        .unzip()
}
