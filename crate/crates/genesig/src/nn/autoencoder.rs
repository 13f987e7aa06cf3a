//! Autoencoder pretraining: a mirrored dense autoencoder trained with MSE,
//! whose encoder half seeds a classifier.

use serde::{Deserialize, Serialize};

use crate::data::ExpressionMatrix;
use crate::error::{Error, Result};
use crate::nn::train::{
    apply_update, backward_accumulate, train_rng, LayerGrads, Optimizer, OptimizerState,
};
use crate::nn::{Activation, DenseLayer, DenseNetwork, LayerSpec};
use rand::seq::SliceRandom;

/// Hyperparameters for [`pretrain_autoencoder`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoencoderConfig {
    /// Encoder layer widths, input → bottleneck. The decoder mirrors them.
    pub encoder_dims: Vec<usize>,
    /// Hidden activation (softmax is not allowed here).
    pub activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    /// Whether the encoder stays frozen when copied into a classifier.
    pub freeze: bool,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            encoder_dims: vec![500, 128],
            activation: Activation::Relu,
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: Optimizer::adam_default(),
            seed: 0,
            freeze: false,
        }
    }
}

/// Per-epoch reconstruction loss and the end state, compared against the
/// all-zero prediction baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderReport {
    pub loss_curve: Vec<f64>,
    /// Mean squared reconstruction error over the data after training.
    pub final_mse: f64,
    /// MSE of predicting zero everywhere.
    pub baseline_mse: f64,
}

/// Encoder layers lifted out of a trained autoencoder (or any network
/// prefix), ready to overlay onto a classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainedEncoder {
    layers: Vec<DenseLayer>,
    /// When true, [`crate::nn::train_classifier`] leaves these layers fixed.
    pub freeze: bool,
}

impl PretrainedEncoder {
    /// Copies the first `n_layers` layers of a network.
    pub fn from_network_prefix(net: &DenseNetwork, n_layers: usize, freeze: bool) -> Result<Self> {
        if n_layers == 0 || n_layers > net.n_layers() {
            return Err(Error::Config(format!(
                "cannot take {} layers from a {}-layer network",
                n_layers,
                net.n_layers()
            )));
        }
        Ok(Self {
            layers: net.layers()[..n_layers].to_vec(),
            freeze,
        })
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").spec.output_dim
    }

    /// Encoder widths, first hidden layer to bottleneck.
    pub fn encoder_dims(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.spec.output_dim).collect()
    }

    /// Copies the encoder parameters into the first layers of `net`.
    /// Dimensions and activations must match layer for layer; the target's
    /// dropout settings are kept.
    pub(crate) fn overlay(&self, net: &mut DenseNetwork) -> Result<()> {
        if net.n_layers() < self.layers.len() {
            return Err(Error::Config(format!(
                "classifier has {} layers but the pretrained encoder has {}",
                net.n_layers(),
                self.layers.len()
            )));
        }
        for (l, enc_layer) in self.layers.iter().enumerate() {
            let target = &net.layers()[l].spec;
            if target.input_dim != enc_layer.spec.input_dim
                || target.output_dim != enc_layer.spec.output_dim
            {
                return Err(Error::Config(format!(
                    "pretrained layer {} is {}x{} but classifier layer is {}x{}",
                    l,
                    enc_layer.spec.output_dim,
                    enc_layer.spec.input_dim,
                    target.output_dim,
                    target.input_dim
                )));
            }
            if target.activation != enc_layer.spec.activation {
                return Err(Error::Config(format!(
                    "pretrained layer {} uses {} but classifier layer uses {}",
                    l, enc_layer.spec.activation, target.activation
                )));
            }
            let dst = &mut net.layers_mut()[l];
            dst.weights.copy_from_slice(&enc_layer.weights);
            dst.bias.copy_from_slice(&enc_layer.bias);
        }
        Ok(())
    }
}

/// Builds the mirrored layer specs: encoder dims with the configured
/// activation, decoder dims reversed, final reconstruction layer linear.
fn autoencoder_specs(input_dim: usize, config: &AutoencoderConfig) -> Vec<LayerSpec> {
    let mut dims = vec![input_dim];
    dims.extend_from_slice(&config.encoder_dims);
    let mut specs = Vec::new();
    for w in dims.windows(2) {
        specs.push(LayerSpec::new(w[0], w[1], config.activation));
    }
    for w in dims.windows(2).rev() {
        let is_last = w[0] == input_dim;
        specs.push(LayerSpec::new(
            w[1],
            w[0],
            if is_last {
                Activation::Linear
            } else {
                config.activation
            },
        ));
    }
    specs
}

/// Trains a mirrored autoencoder on `x` with MSE loss and returns the
/// encoder half with a training report.
pub fn pretrain_autoencoder(
    config: &AutoencoderConfig,
    x: &ExpressionMatrix,
) -> Result<(PretrainedEncoder, AutoencoderReport)> {
    if config.encoder_dims.is_empty() {
        return Err(Error::Config("encoder_dims must not be empty".into()));
    }
    for (i, &d) in config.encoder_dims.iter().enumerate() {
        if d == 0 {
            return Err(Error::Config(format!("encoder dim {i} is zero")));
        }
        if d > x.n_genes() {
            return Err(Error::Config(format!(
                "encoder dim {} ({}) exceeds the input dimension {}",
                i,
                d,
                x.n_genes()
            )));
        }
    }
    if config.activation == Activation::Softmax {
        return Err(Error::Config(
            "softmax is not a valid autoencoder activation".into(),
        ));
    }
    let n = x.n_samples();
    if n == 0 {
        return Err(Error::InsufficientSamples(
            "autoencoder training set has no samples".into(),
        ));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    if config.batch_size > n {
        return Err(Error::Config(format!(
            "batch size {} exceeds dataset size {}",
            config.batch_size, n
        )));
    }
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::Config(format!(
            "learning_rate must be positive and finite, got {}",
            config.learning_rate
        )));
    }

    let specs = autoencoder_specs(x.n_genes(), config);
    let mut net = DenseNetwork::random(&specs, config.seed)?;
    let dim = x.n_genes() as f64;

    let mut rng = train_rng(config.seed);
    let mut grads = LayerGrads::zeros_like(net.layers());
    let mut state = OptimizerState::new(net.layers());
    let mut indices: Vec<usize> = (0..n).collect();
    let mut loss_curve = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        indices.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in indices.chunks(config.batch_size) {
            for g in &mut grads {
                g.w.fill(0.0);
                g.b.fill(0.0);
            }
            for &i in batch {
                let row = x.row(i);
                let (trace, masks) = net.forward_train(row, &mut rng)?;
                let recon = &trace.post[net.n_layers() - 1];
                let mut dz = Vec::with_capacity(row.len());
                let mut sq = 0.0;
                for (&r, &t) in recon.iter().zip(row) {
                    let d = r - t;
                    sq += d * d;
                    dz.push(2.0 * d / dim);
                }
                loss_sum += sq / dim;
                backward_accumulate(net.layers(), row, &trace, &masks, dz, &mut grads);
            }
            let scale = 1.0 / batch.len() as f64;
            for g in &mut grads {
                for v in &mut g.w {
                    *v *= scale;
                }
                for v in &mut g.b {
                    *v *= scale;
                }
            }
            apply_update(
                net.layers_mut(),
                &grads,
                &mut state,
                &config.optimizer,
                config.learning_rate,
                0,
            );
        }
        let epoch_loss = loss_sum / n as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        loss_curve.push(epoch_loss);
    }

    let mut final_sq = 0.0;
    let mut baseline_sq = 0.0;
    for i in 0..n {
        let row = x.row(i);
        let recon = net.forward(row)?;
        for (&r, &t) in recon.iter().zip(row) {
            final_sq += (r - t) * (r - t);
            baseline_sq += t * t;
        }
    }
    let report = AutoencoderReport {
        loss_curve,
        final_mse: final_sq / (n as f64 * dim),
        baseline_mse: baseline_sq / (n as f64 * dim),
    };
    let encoder = PretrainedEncoder {
        layers: net.layers()[..config.encoder_dims.len()].to_vec(),
        freeze: config.freeze,
    };
    Ok((encoder, report))
}
