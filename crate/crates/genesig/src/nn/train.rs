//! Mini-batch training of dense classifiers with cross-entropy loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ExpressionMatrix, LabelVector};
use crate::error::{Error, Result};
use crate::nn::{
    axpy, log_sum_exp, softmax_in_place, Activation, DenseLayer, DenseNetwork, LayerSpec,
    PretrainedEncoder, Trace,
};

/// Parameter-update rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Optimizer {
    /// Adam with the customary moment decays and epsilon.
    pub fn adam_default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    fn validate(&self) -> Result<()> {
        if let Optimizer::Adam {
            beta1,
            beta2,
            epsilon,
        } = self
        {
            if !(0.0..1.0).contains(beta1) || !(0.0..1.0).contains(beta2) {
                return Err(Error::Config(format!(
                    "adam decay rates must lie in [0, 1): beta1 = {beta1}, beta2 = {beta2}"
                )));
            }
            if !(epsilon.is_finite() && *epsilon > 0.0) {
                return Err(Error::Config(format!(
                    "adam epsilon must be finite and positive, got {epsilon}"
                )));
            }
        }
        Ok(())
    }
}

/// Training loss. Classification always uses cross-entropy on the final
/// pre-activations; the enum exists so configurations name it explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    CrossEntropy,
}

/// Hyperparameters for [`train_classifier`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub loss: LossKind,
    pub seed: u64,
    /// Stop after this many consecutive epochs without a new best loss.
    pub early_stop_patience: Option<usize>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: Optimizer::adam_default(),
            loss: LossKind::CrossEntropy,
            seed: 0,
            early_stop_patience: None,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        self.optimizer.validate()
    }
}

/// What training did: per-epoch mean loss, accuracy on the training set, and
/// whether early stopping fired.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub loss_curve: Vec<f64>,
    pub final_train_accuracy: f64,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

/// Per-layer gradient accumulators, same shapes as the layer parameters.
pub(super) struct LayerGrads {
    pub(super) w: Vec<f64>,
    pub(super) b: Vec<f64>,
}

impl LayerGrads {
    pub(super) fn zeros_like(layers: &[DenseLayer]) -> Vec<Self> {
        layers
            .iter()
            .map(|l| LayerGrads {
                w: vec![0.0; l.weights.len()],
                b: vec![0.0; l.bias.len()],
            })
            .collect()
    }

    fn clear(grads: &mut [Self]) {
        for g in grads {
            g.w.fill(0.0);
            g.b.fill(0.0);
        }
    }
}

/// Backpropagates `dz` (the gradient at the final layer's pre-activation)
/// through a traced forward pass, adding parameter gradients into `grads`.
pub(super) fn backward_accumulate(
    layers: &[DenseLayer],
    input: &[f64],
    trace: &Trace,
    masks: &[Option<Vec<f64>>],
    mut dz: Vec<f64>,
    grads: &mut [LayerGrads],
) {
    for l in (0..layers.len()).rev() {
        let layer = &layers[l];
        let a_prev: &[f64] = if l == 0 { input } else { &trace.post[l - 1] };
        let in_dim = layer.spec.input_dim;
        for (j, &dzj) in dz.iter().enumerate() {
            if dzj != 0.0 {
                axpy(&mut grads[l].w[j * in_dim..(j + 1) * in_dim], dzj, a_prev);
            }
            grads[l].b[j] += dzj;
        }
        if l == 0 {
            break;
        }
        let mut g = vec![0.0; in_dim];
        for (j, &dzj) in dz.iter().enumerate() {
            if dzj != 0.0 {
                axpy(&mut g, dzj, layer.weight_row(j));
            }
        }
        if let Some(mask) = &masks[l - 1] {
            for (gv, mv) in g.iter_mut().zip(mask) {
                *gv *= mv;
            }
        }
        dz = match layers[l - 1].spec.activation {
            Activation::Relu => trace.pre[l - 1]
                .iter()
                .zip(&g)
                .map(|(&z, &gv)| if z > 0.0 { gv } else { 0.0 })
                .collect(),
            Activation::Linear => g,
            Activation::Softmax => unreachable!("softmax only on the final layer"),
        };
    }
}

/// Adam first/second moments per layer (unused for SGD).
pub(super) struct OptimizerState {
    m: Vec<LayerGrads>,
    v: Vec<LayerGrads>,
    t: u64,
}

impl OptimizerState {
    pub(super) fn new(layers: &[DenseLayer]) -> Self {
        Self {
            m: LayerGrads::zeros_like(layers),
            v: LayerGrads::zeros_like(layers),
            t: 0,
        }
    }
}

/// One optimizer step over mean-gradients, skipping the first
/// `frozen_layers` layers.
pub(super) fn apply_update(
    layers: &mut [DenseLayer],
    grads: &[LayerGrads],
    state: &mut OptimizerState,
    optimizer: &Optimizer,
    learning_rate: f64,
    frozen_layers: usize,
) {
    state.t += 1;
    for (l, layer) in layers.iter_mut().enumerate().skip(frozen_layers) {
        match optimizer {
            Optimizer::Sgd => {
                axpy(&mut layer.weights, -learning_rate, &grads[l].w);
                axpy(&mut layer.bias, -learning_rate, &grads[l].b);
            }
            Optimizer::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                let bc1 = 1.0 - beta1.powi(state.t as i32);
                let bc2 = 1.0 - beta2.powi(state.t as i32);
                adam_update(
                    &mut layer.weights,
                    &grads[l].w,
                    &mut state.m[l].w,
                    &mut state.v[l].w,
                    *beta1,
                    *beta2,
                    *epsilon,
                    learning_rate,
                    bc1,
                    bc2,
                );
                adam_update(
                    &mut layer.bias,
                    &grads[l].b,
                    &mut state.m[l].b,
                    &mut state.v[l].b,
                    *beta1,
                    *beta2,
                    *epsilon,
                    learning_rate,
                    bc1,
                    bc2,
                );
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn adam_update(
    params: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    lr: f64,
    bias_correction1: f64,
    bias_correction2: f64,
) {
    for i in 0..params.len() {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
        let m_hat = m[i] / bias_correction1;
        let v_hat = v[i] / bias_correction2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
    }
}

/// Derives the shuffle/dropout RNG stream from the config seed, decorrelated
/// from the weight-initialization stream that uses the seed directly.
pub(super) fn train_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15)
}

/// Trains a classifier with cross-entropy loss on the final pre-activations.
///
/// The network is He-initialized from `config.seed`; when `pretrained` is
/// given, its encoder layers overwrite the matching prefix (and stay frozen
/// if the encoder says so). Identical seed, data, and config reproduce the
/// trained parameters bit for bit.
pub fn train_classifier(
    specs: &[LayerSpec],
    x: &ExpressionMatrix,
    y: &LabelVector,
    config: &TrainingConfig,
    pretrained: Option<&PretrainedEncoder>,
) -> Result<(DenseNetwork, TrainReport)> {
    config.validate()?;
    let mut net = DenseNetwork::random(specs, config.seed)?;
    let n = x.n_samples();
    if n == 0 {
        return Err(Error::InsufficientSamples(
            "training set has no samples".into(),
        ));
    }
    if y.len() != n {
        return Err(Error::Shape(format!(
            "{} samples but {} labels",
            n,
            y.len()
        )));
    }
    if net.input_dim() != x.n_genes() {
        return Err(Error::Shape(format!(
            "network expects {} inputs but data has {} genes",
            net.input_dim(),
            x.n_genes()
        )));
    }
    if net.output_dim() != y.n_classes() {
        return Err(Error::Shape(format!(
            "network has {} outputs but data has {} classes",
            net.output_dim(),
            y.n_classes()
        )));
    }
    if specs.last().expect("validated nonempty").dropout_after > 0.0 {
        return Err(Error::Config(
            "dropout after the output layer is not supported".into(),
        ));
    }
    if config.batch_size > n {
        return Err(Error::Config(format!(
            "batch size {} exceeds dataset size {}",
            config.batch_size, n
        )));
    }
    y.require_all_classes_present()?;

    let frozen_layers = match pretrained {
        Some(enc) => {
            enc.overlay(&mut net)?;
            if enc.freeze {
                enc.n_layers()
            } else {
                0
            }
        }
        None => 0,
    };

    let mut rng = train_rng(config.seed);
    let mut grads = LayerGrads::zeros_like(net.layers());
    let mut state = OptimizerState::new(net.layers());
    let mut indices: Vec<usize> = (0..n).collect();

    let mut loss_curve = Vec::with_capacity(config.epochs);
    let mut best_loss = f64::INFINITY;
    let mut epochs_without_improvement = 0usize;
    let mut stopped_early = false;

    for epoch in 0..config.epochs {
        indices.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in indices.chunks(config.batch_size) {
            LayerGrads::clear(&mut grads);
            for &i in batch {
                let row = x.row(i);
                let (trace, masks) = net.forward_train(row, &mut rng)?;
                let logits = &trace.pre[net.n_layers() - 1];
                let lse = log_sum_exp(logits);
                loss_sum += lse - logits[y.get(i)];
                let mut dz = logits.clone();
                softmax_in_place(&mut dz);
                dz[y.get(i)] -= 1.0;
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
                frozen_layers,
            );
        }
        let epoch_loss = loss_sum / n as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        loss_curve.push(epoch_loss);
        if let Some(patience) = config.early_stop_patience {
            if epoch_loss < best_loss {
                best_loss = epoch_loss;
                epochs_without_improvement = 0;
            } else {
                epochs_without_improvement += 1;
                if epochs_without_improvement >= patience.max(1) {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    let mut correct = 0usize;
    for i in 0..n {
        if predict_row(&net, x.row(i))? == y.get(i) {
            correct += 1;
        }
    }
    let report = TrainReport {
        epochs_run: loss_curve.len(),
        loss_curve,
        final_train_accuracy: correct as f64 / n as f64,
        stopped_early,
    };
    Ok((net, report))
}

/// Argmax class of an inference-mode forward pass.
pub fn predict_row(net: &DenseNetwork, row: &[f64]) -> Result<usize> {
    let out = net.forward(row)?;
    Ok(argmax(&out))
}

/// Predicted class per row of `x`.
pub fn predict(net: &DenseNetwork, x: &ExpressionMatrix) -> Result<Vec<usize>> {
    (0..x.n_samples()).map(|i| predict_row(net, x.row(i))).collect()
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
