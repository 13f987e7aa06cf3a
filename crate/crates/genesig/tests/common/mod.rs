//! Builders shared by the integration suites.
#![allow(dead_code)] // each test binary uses its own subset

use genesig::nn::{Activation, DenseNetwork, LayerSpec};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Random feedforward net: relu hidden layers, linear head, weights in ±1.
/// `bias_scale` 0.0 gives a zero-bias net.
pub fn random_relu_net(rng: &mut ChaCha8Rng, dims: &[usize], bias_scale: f64) -> DenseNetwork {
    let mut specs = Vec::new();
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for (i, w) in dims.windows(2).enumerate() {
        let act = if i + 2 == dims.len() {
            Activation::Linear
        } else {
            Activation::Relu
        };
        specs.push(LayerSpec::new(w[0], w[1], act));
        weights.push(
            (0..w[0] * w[1])
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
        );
        biases.push(
            (0..w[1])
                .map(|_| {
                    if bias_scale == 0.0 {
                        0.0
                    } else {
                        rng.random_range(-bias_scale..bias_scale)
                    }
                })
                .collect(),
        );
    }
    DenseNetwork::from_parts(&specs, weights, biases).unwrap()
}

/// Random layer widths for a 2–4 layer net with every dim in 2..=max_dim.
pub fn random_dims(rng: &mut ChaCha8Rng, max_dim: usize) -> Vec<usize> {
    let n_layers = rng.random_range(2..=4usize);
    (0..=n_layers)
        .map(|_| rng.random_range(2..=max_dim))
        .collect()
}

/// Uniform probe input in ±2 per coordinate.
pub fn random_input(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()
}
