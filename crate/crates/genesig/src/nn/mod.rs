//! Dense feedforward networks: construction, inference, input gradients, and
//! model serialization.

mod autoencoder;
mod train;

pub use autoencoder::{pretrain_autoencoder, AutoencoderConfig, AutoencoderReport, PretrainedEncoder};
pub use train::{predict, predict_row, train_classifier, LossKind, Optimizer, TrainReport, TrainingConfig};

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Elementwise or (for softmax) vector activation of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
    Softmax,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Activation::Relu => "relu",
            Activation::Linear => "linear",
            Activation::Softmax => "softmax",
        };
        f.write_str(s)
    }
}

/// Shape, activation, and post-activation dropout of one dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
    /// Dropout probability applied after the activation during training;
    /// inference ignores it. Must lie in `[0, 1)`.
    #[serde(default)]
    pub dropout_after: f64,
}

impl LayerSpec {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        Self {
            input_dim,
            output_dim,
            activation,
            dropout_after: 0.0,
        }
    }

    pub fn with_dropout(mut self, p: f64) -> Self {
        self.dropout_after = p;
        self
    }
}

/// Checks a layer chain: consistent dimensions, softmax only on the final
/// layer, dropout probabilities in `[0, 1)`.
pub fn validate_layer_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::Config("network needs at least one layer".into()));
    }
    for (l, spec) in specs.iter().enumerate() {
        if spec.input_dim == 0 || spec.output_dim == 0 {
            return Err(Error::Config(format!(
                "layer {l} has zero dimension ({}x{})",
                spec.input_dim, spec.output_dim
            )));
        }
        if !(0.0..1.0).contains(&spec.dropout_after) {
            return Err(Error::Config(format!(
                "layer {l} dropout {} outside [0, 1)",
                spec.dropout_after
            )));
        }
        if spec.activation == Activation::Softmax && l + 1 != specs.len() {
            return Err(Error::Config(format!(
                "softmax activation on layer {l} is only allowed on the final layer"
            )));
        }
        if l > 0 && spec.input_dim != specs[l - 1].output_dim {
            return Err(Error::Config(format!(
                "layer {l} expects {} inputs but layer {} produces {}",
                spec.input_dim,
                l - 1,
                specs[l - 1].output_dim
            )));
        }
    }
    Ok(())
}

/// One dense layer: weights stored row-major, `weights[j*in + i]` connecting
/// input `i` to output `j`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct DenseLayer {
    pub(crate) spec: LayerSpec,
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: Vec<f64>,
}

impl DenseLayer {
    pub(crate) fn weight_row(&self, j: usize) -> &[f64] {
        let n = self.spec.input_dim;
        &self.weights[j * n..(j + 1) * n]
    }

    /// Pre-activation `z = W x + b` into `out`.
    fn affine_into(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for j in 0..self.spec.output_dim {
            out.push(dot(self.weight_row(j), input) + self.bias[j]);
        }
    }

    /// Activation applied to `pre`, written into `post`.
    fn activate_into(&self, pre: &[f64], post: &mut Vec<f64>) {
        post.clear();
        match self.spec.activation {
            Activation::Relu => post.extend(pre.iter().map(|&z| z.max(0.0))),
            Activation::Linear => post.extend_from_slice(pre),
            Activation::Softmax => {
                post.extend_from_slice(pre);
                softmax_in_place(post);
            }
        }
    }
}

/// Numerically stable softmax: shifts by the maximum before exponentiating.
pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// `log(sum(exp(z)))` computed stably.
pub(crate) fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + z.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Dot product with a fixed four-accumulator order: deterministic and
/// auto-vectorizer friendly.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let j = c * 4;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in chunks * 4..a.len() {
        s += a[j] * b[j];
    }
    s
}

/// `y += alpha * x`.
#[inline]
pub(crate) fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Which scalar of the network output a gradient or attribution targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    /// Pre-activation of the final layer (the softmax input).
    Logit,
    /// Softmax probability; requires a softmax output layer.
    Probability,
}

impl FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logit" => Ok(ScoreKind::Logit),
            "probability" => Ok(ScoreKind::Probability),
            other => Err(Error::Config(format!(
                "unknown score kind '{other}' (expected 'logit' or 'probability')"
            ))),
        }
    }
}

/// Forward pass record: pre- and post-activation vectors per layer.
#[derive(Debug, Clone)]
pub(crate) struct Trace {
    pub(crate) pre: Vec<Vec<f64>>,
    pub(crate) post: Vec<Vec<f64>>,
}

/// A dense feedforward network.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNetwork {
    layers: Vec<DenseLayer>,
    init_seed: u64,
}

impl DenseNetwork {
    /// He-uniform initialization: weights drawn from
    /// `U[-sqrt(6/fan_in), sqrt(6/fan_in))`, biases zero. The same seed,
    /// specs, and library version reproduce the same parameters bit for bit.
    pub fn random(specs: &[LayerSpec], seed: u64) -> Result<Self> {
        validate_layer_specs(specs)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = specs
            .iter()
            .map(|&spec| {
                let limit = (6.0 / spec.input_dim as f64).sqrt();
                let weights = (0..spec.input_dim * spec.output_dim)
                    .map(|_| rng.random_range(-limit..limit))
                    .collect();
                DenseLayer {
                    spec,
                    weights,
                    bias: vec![0.0; spec.output_dim],
                }
            })
            .collect();
        Ok(Self {
            layers,
            init_seed: seed,
        })
    }

    /// Builds a network from explicit parameters. `weights[l]` is row-major
    /// `output_dim x input_dim`.
    pub fn from_parts(
        specs: &[LayerSpec],
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self> {
        validate_layer_specs(specs)?;
        if weights.len() != specs.len() || biases.len() != specs.len() {
            return Err(Error::Shape(format!(
                "{} layer specs but {} weight and {} bias blocks",
                specs.len(),
                weights.len(),
                biases.len()
            )));
        }
        let mut layers = Vec::with_capacity(specs.len());
        for (l, ((&spec, w), b)) in specs.iter().zip(weights).zip(biases).enumerate() {
            if w.len() != spec.input_dim * spec.output_dim {
                return Err(Error::Shape(format!(
                    "layer {l}: {} weights, expected {}",
                    w.len(),
                    spec.input_dim * spec.output_dim
                )));
            }
            if b.len() != spec.output_dim {
                return Err(Error::Shape(format!(
                    "layer {l}: {} biases, expected {}",
                    b.len(),
                    spec.output_dim
                )));
            }
            if w.iter().chain(b.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!(
                    "layer {l} contains non-finite parameters"
                )));
            }
            layers.push(DenseLayer {
                spec,
                weights: w,
                bias: b,
            });
        }
        Ok(Self {
            layers,
            init_seed: 0,
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

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    /// Seed used for initialization (0 for networks built from parts).
    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub(crate) fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    /// True when every bias in the network is exactly zero.
    pub fn has_zero_bias(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.bias.iter().all(|&b| b == 0.0))
    }

    fn validate_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} values but the network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("input contains non-finite values".into()));
        }
        Ok(())
    }

    fn validate_target(&self, target_class: usize) -> Result<()> {
        if target_class >= self.output_dim() {
            return Err(Error::Index(format!(
                "target class {} out of range for {} outputs",
                target_class,
                self.output_dim()
            )));
        }
        Ok(())
    }

    /// Inference-mode forward pass (dropout inactive).
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.validate_input(input)?;
        let mut cur = input.to_vec();
        let mut pre = Vec::new();
        for layer in &self.layers {
            layer.affine_into(&cur, &mut pre);
            layer.activate_into(&pre, &mut cur);
        }
        Ok(cur)
    }

    /// Forward pass keeping every pre- and post-activation vector.
    pub(crate) fn forward_trace(&self, input: &[f64]) -> Result<Trace> {
        self.validate_input(input)?;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut cur = input;
        for layer in &self.layers {
            let mut z = Vec::with_capacity(layer.spec.output_dim);
            layer.affine_into(cur, &mut z);
            let mut a = Vec::with_capacity(layer.spec.output_dim);
            layer.activate_into(&z, &mut a);
            pre.push(z);
            post.push(a);
            cur = post.last().expect("just pushed");
        }
        Ok(Trace { pre, post })
    }

    /// Training-mode forward pass: inverted dropout after each layer that
    /// declares it. Returns the trace (post-activations already masked) and
    /// the per-layer masks (`None` when the layer has no dropout; mask values
    /// are `0` or `1/keep`).
    pub(crate) fn forward_train(
        &self,
        input: &[f64],
        rng: &mut ChaCha8Rng,
    ) -> Result<(Trace, Vec<Option<Vec<f64>>>)> {
        self.validate_input(input)?;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::with_capacity(self.layers.len());
        let mut cur = input;
        for layer in &self.layers {
            let mut z = Vec::with_capacity(layer.spec.output_dim);
            layer.affine_into(cur, &mut z);
            let mut a = Vec::with_capacity(layer.spec.output_dim);
            layer.activate_into(&z, &mut a);
            let p = layer.spec.dropout_after;
            if p > 0.0 {
                let keep = 1.0 - p;
                let mask: Vec<f64> = (0..a.len())
                    .map(|_| {
                        if rng.random::<f64>() < p {
                            0.0
                        } else {
                            1.0 / keep
                        }
                    })
                    .collect();
                for (av, mv) in a.iter_mut().zip(&mask) {
                    *av *= mv;
                }
                masks.push(Some(mask));
            } else {
                masks.push(None);
            }
            pre.push(z);
            post.push(a);
            cur = post.last().expect("just pushed");
        }
        Ok((Trace { pre, post }, masks))
    }

    /// Scalar score of one class: the final-layer pre-activation (logit) or
    /// the softmax probability.
    pub fn class_score(&self, input: &[f64], target_class: usize, kind: ScoreKind) -> Result<f64> {
        self.validate_target(target_class)?;
        let trace = self.forward_trace(input)?;
        let last = self.layers.len() - 1;
        match kind {
            ScoreKind::Logit => Ok(trace.pre[last][target_class]),
            ScoreKind::Probability => {
                if self.layers[last].spec.activation != Activation::Softmax {
                    return Err(Error::Config(
                        "probability score requires a softmax output layer".into(),
                    ));
                }
                Ok(trace.post[last][target_class])
            }
        }
    }

    /// Gradient of [`DenseNetwork::class_score`] with respect to the input,
    /// computed by reverse-mode accumulation.
    pub fn input_gradient(
        &self,
        input: &[f64],
        target_class: usize,
        kind: ScoreKind,
    ) -> Result<Vec<f64>> {
        self.validate_target(target_class)?;
        let trace = self.forward_trace(input)?;
        let last = self.layers.len() - 1;

        // Seed the gradient at the final layer's pre-activation.
        let out_dim = self.output_dim();
        let mut dz = vec![0.0; out_dim];
        match kind {
            ScoreKind::Logit => dz[target_class] = 1.0,
            ScoreKind::Probability => {
                if self.layers[last].spec.activation != Activation::Softmax {
                    return Err(Error::Config(
                        "probability score requires a softmax output layer".into(),
                    ));
                }
                let p = &trace.post[last];
                let pt = p[target_class];
                for (j, d) in dz.iter_mut().enumerate() {
                    let indicator = if j == target_class { 1.0 } else { 0.0 };
                    *d = pt * (indicator - p[j]);
                }
            }
        }

        // Walk back through the layers.
        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            let mut g = vec![0.0; layer.spec.input_dim];
            for (j, &dzj) in dz.iter().enumerate() {
                if dzj != 0.0 {
                    axpy(&mut g, dzj, layer.weight_row(j));
                }
            }
            if l == 0 {
                return Ok(g);
            }
            let below = &self.layers[l - 1];
            dz = match below.spec.activation {
                Activation::Relu => trace.pre[l - 1]
                    .iter()
                    .zip(&g)
                    .map(|(&z, &gv)| if z > 0.0 { gv } else { 0.0 })
                    .collect(),
                Activation::Linear => g,
                Activation::Softmax => unreachable!("softmax only on the final layer"),
            };
        }
        unreachable!("loop returns at layer 0")
    }

    /// Serializes to the versioned JSON model format.
    pub fn to_json_string(&self) -> Result<String> {
        let file = NetworkFile {
            format_version: MODEL_FORMAT_VERSION,
            init_seed: self.init_seed,
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    input_dim: l.spec.input_dim,
                    output_dim: l.spec.output_dim,
                    activation: l.spec.activation,
                    dropout_after: l.spec.dropout_after,
                    weights: l.weights.clone(),
                    bias: l.bias.clone(),
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&file)?;
        s.push('\n');
        Ok(s)
    }

    /// Parses the versioned JSON model format, validating version, shapes,
    /// and finiteness.
    pub fn from_json_str(json: &str) -> Result<Self> {
        let file: NetworkFile =
            serde_json::from_str(json).map_err(|e| Error::Format(format!("model JSON: {e}")))?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported model format version {} (expected {})",
                file.format_version, MODEL_FORMAT_VERSION
            )));
        }
        let specs: Vec<LayerSpec> = file
            .layers
            .iter()
            .map(|l| LayerSpec {
                input_dim: l.input_dim,
                output_dim: l.output_dim,
                activation: l.activation,
                dropout_after: l.dropout_after,
            })
            .collect();
        let weights = file.layers.iter().map(|l| l.weights.clone()).collect();
        let biases = file.layers.into_iter().map(|l| l.bias).collect();
        let mut net = Self::from_parts(&specs, weights, biases).map_err(|e| match e {
            Error::Shape(msg) | Error::Config(msg) => Error::Format(format!("model JSON: {msg}")),
            Error::Domain(msg) => Error::Format(format!("model JSON: {msg}")),
            other => other,
        })?;
        net.init_seed = file.init_seed;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }
}

const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    format_version: u32,
    #[serde(default)]
    init_seed: u64,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    input_dim: usize,
    output_dim: usize,
    activation: Activation,
    #[serde(default)]
    dropout_after: f64,
    weights: Vec<f64>,
    bias: Vec<f64>,
}
