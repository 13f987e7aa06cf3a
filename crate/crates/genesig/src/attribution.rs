//! Attribution methods: per-gene relevance of a network's class score for a
//! single input.
//!
//! All methods explain the **logit** (final pre-activation) of the target
//! class. Seven methods are provided: plain gradient, SmoothGrad,
//! input×gradient, integrated gradients, guided backpropagation, and
//! layer-wise relevance propagation with the z- and ε-rules.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{axpy, Activation, DenseNetwork, ScoreKind};

/// One attribution method with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum AttributionMethod {
    /// Gradient of the target logit with respect to the input.
    Gradient,
    /// Mean gradient over Gaussian perturbations of the input. The noise
    /// scale is `sigma_fraction` times the input's value range; a zero scale
    /// degenerates to the plain gradient.
    Smoothgrad {
        n_samples: usize,
        sigma_fraction: f64,
        seed: u64,
    },
    /// Elementwise product of the input with the gradient.
    InputXGradient,
    /// Midpoint-rule path integral of gradients from a zero baseline.
    IntegratedGradients { steps: usize },
    /// Backpropagation that zeroes signals at inactive relu units and
    /// negative incoming gradients.
    GuidedBackprop,
    /// Layer-wise relevance propagation, z-rule (bias absorbed).
    LrpZ,
    /// Layer-wise relevance propagation, ε-stabilized rule.
    LrpEpsilon { epsilon: f64 },
}

impl AttributionMethod {
    /// Stable lowercase identifier used in CSV output and CLI flags.
    pub fn name(&self) -> &'static str {
        match self {
            AttributionMethod::Gradient => "gradient",
            AttributionMethod::Smoothgrad { .. } => "smoothgrad",
            AttributionMethod::InputXGradient => "input_x_gradient",
            AttributionMethod::IntegratedGradients { .. } => "integrated_gradients",
            AttributionMethod::GuidedBackprop => "guided_backprop",
            AttributionMethod::LrpZ => "lrp_z",
            AttributionMethod::LrpEpsilon { .. } => "lrp_epsilon",
        }
    }

    /// The seven methods with their default parameters; `seed` feeds the
    /// stochastic ones.
    pub fn default_suite(seed: u64) -> Vec<Self> {
        vec![
            AttributionMethod::Gradient,
            AttributionMethod::Smoothgrad {
                n_samples: 25,
                sigma_fraction: 0.1,
                seed,
            },
            AttributionMethod::InputXGradient,
            AttributionMethod::IntegratedGradients { steps: 50 },
            AttributionMethod::GuidedBackprop,
            AttributionMethod::LrpZ,
            AttributionMethod::LrpEpsilon { epsilon: 1e-3 },
        ]
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AttributionMethod::Smoothgrad {
                n_samples,
                sigma_fraction,
                ..
            } => {
                if *n_samples == 0 {
                    return Err(Error::Config(
                        "smoothgrad n_samples must be at least 1".into(),
                    ));
                }
                if !(sigma_fraction.is_finite() && *sigma_fraction >= 0.0) {
                    return Err(Error::Config(format!(
                        "smoothgrad sigma_fraction must be finite and non-negative, got {sigma_fraction}"
                    )));
                }
            }
            AttributionMethod::IntegratedGradients { steps } => {
                if *steps == 0 {
                    return Err(Error::Config(
                        "integrated gradients needs at least 1 step".into(),
                    ));
                }
            }
            AttributionMethod::LrpEpsilon { epsilon }
                if !(epsilon.is_finite() && *epsilon > 0.0) =>
            {
                return Err(Error::Config(format!(
                    "lrp epsilon must be finite and positive, got {epsilon}"
                )));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Relevance vector for one sample and target class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionMap {
    pub sample_id: String,
    pub target_class: usize,
    pub method: AttributionMethod,
    /// One relevance value per gene, input order.
    pub relevance: Vec<f64>,
}

/// Computes one method's relevance vector.
pub fn attribute(
    network: &DenseNetwork,
    input: &[f64],
    target_class: usize,
    method: &AttributionMethod,
) -> Result<Vec<f64>> {
    method.validate()?;
    let relevance = match method {
        AttributionMethod::Gradient => {
            network.input_gradient(input, target_class, ScoreKind::Logit)?
        }
        AttributionMethod::Smoothgrad {
            n_samples,
            sigma_fraction,
            seed,
        } => smoothgrad(network, input, target_class, *n_samples, *sigma_fraction, *seed)?,
        AttributionMethod::InputXGradient => {
            let mut g = network.input_gradient(input, target_class, ScoreKind::Logit)?;
            for (gi, xi) in g.iter_mut().zip(input) {
                *gi *= xi;
            }
            g
        }
        AttributionMethod::IntegratedGradients { steps } => {
            integrated_gradients(network, input, target_class, *steps, None)?
        }
        AttributionMethod::GuidedBackprop => guided_backprop(network, input, target_class)?,
        AttributionMethod::LrpZ => lrp(network, input, target_class, LrpRule::Z)?,
        AttributionMethod::LrpEpsilon { epsilon } => {
            lrp(network, input, target_class, LrpRule::Epsilon(*epsilon))?
        }
    };
    if relevance.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!(
            "{} produced non-finite relevance",
            method.name()
        )));
    }
    Ok(relevance)
}

/// [`attribute`] wrapped into an [`AttributionMap`].
pub fn attribute_map(
    network: &DenseNetwork,
    sample_id: &str,
    input: &[f64],
    target_class: usize,
    method: &AttributionMethod,
) -> Result<AttributionMap> {
    Ok(AttributionMap {
        sample_id: sample_id.to_string(),
        target_class,
        method: method.clone(),
        relevance: attribute(network, input, target_class, method)?,
    })
}

/// Attribution of every sample in `x` at its own label's class.
pub fn attribute_dataset(
    network: &DenseNetwork,
    x: &crate::data::ExpressionMatrix,
    y: &crate::data::LabelVector,
    method: &AttributionMethod,
) -> Result<Vec<AttributionMap>> {
    if x.n_samples() != y.len() {
        return Err(Error::Shape(format!(
            "{} samples but {} labels",
            x.n_samples(),
            y.len()
        )));
    }
    (0..x.n_samples())
        .map(|i| attribute_map(network, &x.sample_ids()[i], x.row(i), y.get(i), method))
        .collect()
}

/// SmoothGrad: mean gradient over `n_samples` Gaussian perturbations with
/// standard deviation `sigma_fraction * (max(x) - min(x))`.
///
/// Noise is drawn coordinate by coordinate, perturbation by perturbation,
/// from `ChaCha8Rng::seed_from_u64(seed)`. When the scale is zero the plain
/// gradient at `x` is returned unchanged, bit for bit.
pub fn smoothgrad(
    network: &DenseNetwork,
    input: &[f64],
    target_class: usize,
    n_samples: usize,
    sigma_fraction: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_samples == 0 {
        return Err(Error::Config(
            "smoothgrad n_samples must be at least 1".into(),
        ));
    }
    if !(sigma_fraction.is_finite() && sigma_fraction >= 0.0) {
        return Err(Error::Config(format!(
            "smoothgrad sigma_fraction must be finite and non-negative, got {sigma_fraction}"
        )));
    }
    let lo = input.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = input.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sigma = sigma_fraction * (hi - lo);
    if sigma == 0.0 {
        return network.input_gradient(input, target_class, ScoreKind::Logit);
    }
    let noise = Normal::new(0.0, sigma)
        .map_err(|e| Error::Config(format!("invalid smoothgrad noise scale: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = vec![0.0; input.len()];
    let mut point = vec![0.0; input.len()];
    for _ in 0..n_samples {
        for (p, &xi) in point.iter_mut().zip(input) {
            *p = xi + noise.sample(&mut rng);
        }
        let g = network.input_gradient(&point, target_class, ScoreKind::Logit)?;
        axpy(&mut acc, 1.0, &g);
    }
    for v in &mut acc {
        *v /= n_samples as f64;
    }
    Ok(acc)
}

/// Integrated gradients with the midpoint Riemann rule:
/// `(x - b) ⊙ mean over steps of ∇f(b + (s+0.5)/steps · (x - b))`.
/// `baseline` defaults to the zero vector.
pub fn integrated_gradients(
    network: &DenseNetwork,
    input: &[f64],
    target_class: usize,
    steps: usize,
    baseline: Option<&[f64]>,
) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::Config(
            "integrated gradients needs at least 1 step".into(),
        ));
    }
    let zero;
    let base = match baseline {
        Some(b) => b,
        None => {
            zero = vec![0.0; input.len()];
            &zero
        }
    };
    if base.len() != input.len() {
        return Err(Error::Shape(format!(
            "baseline has {} values but the input has {}",
            base.len(),
            input.len()
        )));
    }
    if base.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("baseline contains non-finite values".into()));
    }
    let mut acc = vec![0.0; input.len()];
    let mut point = vec![0.0; input.len()];
    for s in 0..steps {
        let alpha = (s as f64 + 0.5) / steps as f64;
        for ((p, &xi), &bi) in point.iter_mut().zip(input).zip(base) {
            *p = bi + alpha * (xi - bi);
        }
        let g = network.input_gradient(&point, target_class, ScoreKind::Logit)?;
        axpy(&mut acc, 1.0, &g);
    }
    let scale = 1.0 / steps as f64;
    for ((a, &xi), &bi) in acc.iter_mut().zip(input).zip(base) {
        *a = (xi - bi) * (*a * scale);
    }
    Ok(acc)
}

/// Guided backpropagation: like the plain gradient, but at every relu layer
/// the backward signal is zeroed where the unit was inactive **or** where
/// the incoming signal is negative.
pub fn guided_backprop(
    network: &DenseNetwork,
    input: &[f64],
    target_class: usize,
) -> Result<Vec<f64>> {
    if target_class >= network.output_dim() {
        return Err(Error::Index(format!(
            "target class {} out of range for {} outputs",
            target_class,
            network.output_dim()
        )));
    }
    let trace = network.forward_trace(input)?;
    let layers = network.layers();
    let last = layers.len() - 1;
    let mut dz = vec![0.0; network.output_dim()];
    dz[target_class] = 1.0;
    for l in (0..=last).rev() {
        let layer = &layers[l];
        let mut g = vec![0.0; layer.spec.input_dim];
        for (j, &dzj) in dz.iter().enumerate() {
            if dzj != 0.0 {
                axpy(&mut g, dzj, layer.weight_row(j));
            }
        }
        if l == 0 {
            return Ok(g);
        }
        dz = match layers[l - 1].spec.activation {
            Activation::Relu => trace.pre[l - 1]
                .iter()
                .zip(&g)
                .map(|(&z, &gv)| if z > 0.0 && gv >= 0.0 { gv } else { 0.0 })
                .collect(),
            Activation::Linear => g,
            Activation::Softmax => unreachable!("softmax only on the final layer"),
        };
    }
    unreachable!("loop returns at layer 0")
}

/// Denominator rule for layer-wise relevance propagation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrpRule {
    /// Raw pre-activation; errors on a zero denominator with non-zero
    /// relevance.
    Z,
    /// `z + ε·sign(z)` with `sign(0) = +1`; never zero.
    Epsilon(f64),
}

/// Redistributes the relevance `r` of one layer's outputs onto its inputs:
/// `R_i = Σ_j x_i w_ij / denom(z_j) · R_j`, bias share absorbed.
fn redistribute(
    inputs: &[f64],
    weight_rows: &[&[f64]],
    z: &[f64],
    r: &[f64],
    rule: LrpRule,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; inputs.len()];
    for (j, (&rj, &zj)) in r.iter().zip(z).enumerate() {
        if rj == 0.0 {
            continue;
        }
        let denom = match rule {
            LrpRule::Z => zj,
            LrpRule::Epsilon(eps) => zj + eps * if zj >= 0.0 { 1.0 } else { -1.0 },
        };
        if denom == 0.0 {
            return Err(Error::DivisionHazard(format!(
                "unit {j} has zero pre-activation but relevance {rj}"
            )));
        }
        let scale = rj / denom;
        for (o, (&xi, &wji)) in out.iter_mut().zip(inputs.iter().zip(weight_rows[j])) {
            *o += xi * wji * scale;
        }
    }
    Ok(out)
}

/// Layer-wise relevance propagation of the target logit back to the input.
///
/// On zero-bias networks, the z-rule conserves relevance exactly: the
/// returned values sum to the target logit (up to rounding).
pub fn lrp(
    network: &DenseNetwork,
    input: &[f64],
    target_class: usize,
    rule: LrpRule,
) -> Result<Vec<f64>> {
    if let LrpRule::Epsilon(eps) = rule {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::Config(format!(
                "lrp epsilon must be finite and positive, got {eps}"
            )));
        }
    }
    if target_class >= network.output_dim() {
        return Err(Error::Index(format!(
            "target class {} out of range for {} outputs",
            target_class,
            network.output_dim()
        )));
    }
    let trace = network.forward_trace(input)?;
    let layers = network.layers();
    let last = layers.len() - 1;
    let mut r = vec![0.0; network.output_dim()];
    r[target_class] = trace.pre[last][target_class];
    for l in (0..=last).rev() {
        let layer = &layers[l];
        let inputs: &[f64] = if l == 0 { input } else { &trace.post[l - 1] };
        let rows: Vec<&[f64]> = (0..layer.spec.output_dim)
            .map(|j| layer.weight_row(j))
            .collect();
        r = redistribute(inputs, &rows, &trace.pre[l], &r, rule)?;
    }
    Ok(r)
}

/// Renders attribution maps as CSV: `sample_id,method,target_class` followed
/// by one column per gene.
pub fn attribution_csv_string(maps: &[AttributionMap], gene_names: &[String]) -> Result<String> {
    let mut out = String::from("sample_id,method,target_class");
    for g in gene_names {
        out.push(',');
        out.push_str(g);
    }
    out.push('\n');
    for map in maps {
        if map.relevance.len() != gene_names.len() {
            return Err(Error::Shape(format!(
                "map for sample '{}' has {} values but {} gene names were given",
                map.sample_id,
                map.relevance.len(),
                gene_names.len()
            )));
        }
        out.push_str(&map.sample_id);
        out.push(',');
        out.push_str(map.method.name());
        out.push(',');
        out.push_str(&map.target_class.to_string());
        for v in &map.relevance {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    Ok(out)
}

/// Writes [`attribution_csv_string`] to a file.
pub fn write_attribution_csv(
    maps: &[AttributionMap],
    gene_names: &[String],
    path: &std::path::Path,
) -> Result<()> {
    std::fs::write(path, attribution_csv_string(maps, gene_names)?)?;
    Ok(())
}
