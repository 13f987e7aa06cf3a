//! End-to-end orchestration: data → model → signature → evaluation →
//! correlation, every artifact written under one output directory and linked
//! by a manifest.
//!
//! All randomness flows from `master_seed`: each stage's RNG seed is derived
//! from it by a fixed offset (see [`effective_config`]), overriding any seed
//! fields inside the nested configs. Two runs with the same config are
//! byte-identical on disk.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attribution::AttributionMethod;
use crate::data::{
    load_expression, smote_balance, write_expression, write_labels, zscore, ExpressionMatrix,
    LabelVector,
};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_signature, EvalConfig, MetricsReport};
use crate::nn::{
    pretrain_autoencoder, train_classifier, Activation, AutoencoderConfig, AutoencoderReport,
    DenseNetwork, LayerSpec, TrainReport,
};
use crate::signature::{build_signature, GeneSignature, SignatureConfig};
use crate::stats::pearson_matrix;
use crate::synth::{generate, GroundTruth, SyntheticSpec};
use crate::nn::TrainingConfig;

/// Version of the config/manifest schema, recorded in every manifest.
pub const SCHEMA_VERSION: u32 = 1;

/// The six artifact keys every pipeline manifest carries.
pub const ARTIFACT_KEYS: [&str; 6] = [
    "dataset",
    "model",
    "train_report",
    "signature",
    "evaluation",
    "correlation",
];

/// Stage-seed offsets added (wrapping) to the master seed.
const SEED_SYNTH: u64 = 0;
const SEED_AUTOENCODER: u64 = 1;
const SEED_TRAINING: u64 = 2;
const SEED_EVALUATION: u64 = 3;
const SEED_SMOOTHGRAD: u64 = 4;
const SEED_SMOTE: u64 = 5;

/// Where the cohort comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataConfig {
    /// Generate a synthetic cohort; the pipeline writes it out with its
    /// ground truth.
    Synth(SyntheticSpec),
    /// Load an expression matrix and a labels file, joined on sample id.
    Load {
        expression: PathBuf,
        labels: PathBuf,
        /// Single-byte field delimiter; inferred from the extension when
        /// absent.
        #[serde(default)]
        delimiter: Option<char>,
    },
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::Synth(SyntheticSpec::default())
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            DataConfig::Synth(spec) => spec.validate(),
            DataConfig::Load { delimiter, .. } => match delimiter {
                Some(c) if !c.is_ascii() => Err(Error::Config(format!(
                    "delimiter must be a single ASCII character, got {c:?}"
                ))),
                _ => Ok(()),
            },
        }
    }
}

/// Converts an optional delimiter char to the byte the CSV reader wants.
pub fn delimiter_byte(delimiter: Option<char>) -> Option<u8> {
    delimiter.map(|c| c as u8)
}

/// Architecture and training settings for the full-gene classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Hidden layer widths, input side first.
    pub hidden: Vec<usize>,
    /// Dropout rate applied after every hidden layer.
    pub dropout: f64,
    /// SMOTE neighbour count for balancing the training cohort.
    pub smote_k: usize,
    /// Optional autoencoder pretraining. Its encoder dims must be a prefix
    /// of `hidden` so the encoder overlays the first hidden layers.
    pub autoencoder: Option<AutoencoderConfig>,
    pub training: TrainingConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: vec![500, 128, 64],
            dropout: 0.3,
            smote_k: 5,
            autoencoder: Some(AutoencoderConfig::default()),
            training: TrainingConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config(
                "hidden layer widths must be nonempty and positive".into(),
            ));
        }
        if !(self.dropout >= 0.0 && self.dropout < 1.0) {
            return Err(Error::Config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.smote_k == 0 {
            return Err(Error::Config("smote_k must be at least 1".into()));
        }
        if let Some(ae) = &self.autoencoder {
            if ae.encoder_dims.is_empty() || ae.encoder_dims.len() > self.hidden.len() {
                return Err(Error::Config(format!(
                    "autoencoder encoder dims {:?} must be a nonempty prefix of hidden {:?}",
                    ae.encoder_dims, self.hidden
                )));
            }
            if ae.encoder_dims != self.hidden[..ae.encoder_dims.len()] {
                return Err(Error::Config(format!(
                    "autoencoder encoder dims {:?} must be a prefix of hidden {:?}",
                    ae.encoder_dims, self.hidden
                )));
            }
        }
        self.training.validate()
    }

    /// Layer specs for the classifier: hidden relu layers with dropout,
    /// softmax head.
    pub fn layer_specs(&self, n_genes: usize, n_classes: usize) -> Vec<LayerSpec> {
        let mut specs = Vec::with_capacity(self.hidden.len() + 1);
        let mut inputs = n_genes;
        for &width in &self.hidden {
            specs.push(LayerSpec::new(inputs, width, Activation::Relu).with_dropout(self.dropout));
            inputs = width;
        }
        specs.push(LayerSpec::new(inputs, n_classes, Activation::Softmax));
        specs
    }
}

/// The whole run in one file: data source, model, signature recipe, and
/// evaluation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    pub master_seed: u64,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub signature: SignatureConfig,
    pub evaluation: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            output_dir: PathBuf::from("genesig_out"),
            master_seed: 7,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            signature: SignatureConfig::default(),
            evaluation: EvalConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::Config("output_dir must not be empty".into()));
        }
        self.data.validate()?;
        self.model.validate()?;
        self.signature.validate()?;
        self.evaluation.validate()
    }

    pub fn to_json_string(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Rewrites every stage seed from the master seed so one number pins the
/// whole run. Offsets: synth +0, autoencoder +1, training +2, evaluation +3,
/// smoothgrad +4 (SMOTE balancing uses +5 at the call site).
pub fn effective_config(cfg: &PipelineConfig) -> PipelineConfig {
    let mut out = cfg.clone();
    let m = cfg.master_seed;
    if let DataConfig::Synth(spec) = &mut out.data {
        spec.seed = m.wrapping_add(SEED_SYNTH);
    }
    if let Some(ae) = &mut out.model.autoencoder {
        ae.seed = m.wrapping_add(SEED_AUTOENCODER);
    }
    out.model.training.seed = m.wrapping_add(SEED_TRAINING);
    out.evaluation.seed = m.wrapping_add(SEED_EVALUATION);
    for method in &mut out.signature.methods {
        if let AttributionMethod::Smoothgrad { seed, .. } = method {
            *seed = m.wrapping_add(SEED_SMOOTHGRAD);
        }
    }
    out
}

/// SHA-256 (hex) of the canonical JSON form of a config, so the hash is
/// independent of file formatting.
pub fn config_sha256(cfg: &PipelineConfig) -> Result<String> {
    let canonical = serde_json::to_string(cfg)?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Links every artifact of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub master_seed: u64,
    pub config_sha256: String,
    /// Artifact key → path, relative to the manifest's directory unless
    /// absolute (the dataset key points at the source file for loaded data).
    pub artifacts: BTreeMap<String, String>,
}

impl Manifest {
    pub fn to_json_string(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Checks that all six artifact keys are present and reference existing
    /// files (relative paths resolved against `base_dir`).
    pub fn verify(&self, base_dir: &Path) -> Result<()> {
        for key in ARTIFACT_KEYS {
            let Some(rel) = self.artifacts.get(key) else {
                return Err(Error::Config(format!("manifest is missing artifact '{key}'")));
            };
            let path = PathBuf::from(rel);
            let path = if path.is_absolute() {
                path
            } else {
                base_dir.join(path)
            };
            if !path.is_file() {
                return Err(Error::Io(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("manifest artifact '{key}' points at missing file {}", path.display()),
                )));
            }
        }
        if self.artifacts.len() != ARTIFACT_KEYS.len() {
            return Err(Error::Config(format!(
                "manifest should list exactly {} artifacts, found {}",
                ARTIFACT_KEYS.len(),
                self.artifacts.len()
            )));
        }
        Ok(())
    }
}

/// The model stage's report: optional pretraining plus the classifier curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReportBundle {
    pub autoencoder: Option<AutoencoderReport>,
    pub classifier: TrainReport,
}

impl TrainReportBundle {
    pub fn to_json_string(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }
}

/// Everything a pipeline run produces, for callers that want the values as
/// well as the files.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub output_dir: PathBuf,
    pub manifest: Manifest,
    pub signature: GeneSignature,
    pub report: MetricsReport,
    pub ground_truth: Option<GroundTruth>,
}

/// Produces the cohort in memory: generates for [`DataConfig::Synth`], loads
/// (and logs any dropped samples) for [`DataConfig::Load`].
pub fn resolve_data(
    data: &DataConfig,
) -> Result<(ExpressionMatrix, LabelVector, Option<GroundTruth>)> {
    match data {
        DataConfig::Synth(spec) => {
            let (x, y, truth) = generate(spec)?;
            Ok((x, y, Some(truth)))
        }
        DataConfig::Load {
            expression,
            labels,
            delimiter,
        } => {
            let loaded = load_expression(expression, labels, delimiter_byte(*delimiter))?;
            if loaded.dropped_samples() > 0 {
                log::warn!(
                    "dropped {} unlabeled and {} unmeasured samples while joining {} with {}",
                    loaded.dropped_unlabeled,
                    loaded.dropped_unmeasured,
                    expression.display(),
                    labels.display()
                );
            }
            Ok((loaded.matrix, loaded.labels, None))
        }
    }
}

/// Trains the full-gene classifier on the z-scored cohort: SMOTE balancing,
/// optional autoencoder pretraining (on the un-balanced cohort), then
/// supervised training.
pub fn train_full_model(
    model: &ModelConfig,
    x_normalized: &ExpressionMatrix,
    y: &LabelVector,
    smote_seed: u64,
) -> Result<(DenseNetwork, TrainReportBundle)> {
    model.validate()?;
    let encoder = match &model.autoencoder {
        Some(ae_cfg) => {
            log::info!(
                "pretraining autoencoder {:?} for {} epochs",
                ae_cfg.encoder_dims,
                ae_cfg.epochs
            );
            let (encoder, report) = pretrain_autoencoder(ae_cfg, x_normalized)?;
            Some((encoder, report))
        }
        None => None,
    };
    log::info!(
        "balancing {} samples with SMOTE (k = {})",
        x_normalized.n_samples(),
        model.smote_k
    );
    let (x_balanced, y_balanced) = smote_balance(x_normalized, y, model.smote_k, smote_seed)?;
    let specs = model.layer_specs(x_normalized.n_genes(), y.n_classes());
    log::info!(
        "training classifier {:?} on {} balanced samples for {} epochs",
        model.hidden,
        x_balanced.n_samples(),
        model.training.epochs
    );
    let (encoder, ae_report) = match encoder {
        Some((e, r)) => (Some(e), Some(r)),
        None => (None, None),
    };
    let (net, train_report) = train_classifier(
        &specs,
        &x_balanced,
        &y_balanced,
        &model.training,
        encoder.as_ref(),
    )?;
    Ok((
        net,
        TrainReportBundle {
            autoencoder: ae_report,
            classifier: train_report,
        },
    ))
}

/// Runs the whole pipeline and writes every artifact under
/// `config.output_dir`. See the module docs for the seed schedule.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutcome> {
    config.validate()?;
    let config_hash = config_sha256(config)?;
    let cfg = effective_config(config);
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out)?;

    let mut artifacts: BTreeMap<String, String> = BTreeMap::new();

    log::info!("stage 1/5: data");
    let (x, y, ground_truth) = resolve_data(&cfg.data)?;
    match &cfg.data {
        DataConfig::Synth(_) => {
            write_expression(&x, &out.join("expression.csv"), None)?;
            write_labels(x.sample_ids(), &y, &out.join("labels.csv"), None)?;
            if let Some(truth) = &ground_truth {
                truth.save_json(&out.join("ground_truth.json"))?;
            }
            artifacts.insert("dataset".into(), "expression.csv".into());
        }
        DataConfig::Load { expression, .. } => {
            artifacts.insert("dataset".into(), expression.display().to_string());
        }
    }

    log::info!("stage 2/5: model");
    let (x_normalized, _) = zscore(&x)?;
    let smote_seed = cfg.master_seed.wrapping_add(SEED_SMOTE);
    let (net, bundle) = train_full_model(&cfg.model, &x_normalized, &y, smote_seed)?;
    net.save(&out.join("model.json"))?;
    bundle.save_json(&out.join("train_report.json"))?;
    artifacts.insert("model".into(), "model.json".into());
    artifacts.insert("train_report".into(), "train_report.json".into());

    log::info!("stage 3/5: signature");
    let signature = build_signature(&net, &x_normalized, &y, &cfg.signature)?;
    signature.save_json(&out.join("signature.json"))?;
    signature.save_flat_text(&out.join("signature.txt"))?;
    artifacts.insert("signature".into(), "signature.json".into());
    log::info!("signature has {} genes", signature.genes.len());

    log::info!("stage 4/5: evaluation");
    let outcome = evaluate_signature(&x, &y, &signature.genes, &cfg.evaluation)?;
    outcome.report.save_json(&out.join("report.json"))?;
    outcome
        .pooled_confusion
        .write_csv(&out.join("report_confusion.csv"))?;
    std::fs::write(
        out.join("report_fold_accuracy.csv"),
        outcome.report.fold_accuracy_csv_string(),
    )?;
    artifacts.insert("evaluation".into(), "report.json".into());

    log::info!("stage 5/5: correlation");
    let corr = pearson_matrix(&x_normalized, &signature.genes)?;
    corr.write_csv(&out.join("correlation.csv"))?;
    artifacts.insert("correlation".into(), "correlation.csv".into());

    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        master_seed: cfg.master_seed,
        config_sha256: config_hash,
        artifacts,
    };
    manifest.save_json(&out.join("manifest.json"))?;
    manifest.verify(out)?;
    log::info!("wrote manifest {}", out.join("manifest.json").display());

    Ok(PipelineOutcome {
        output_dir: out.clone(),
        manifest,
        signature,
        report: outcome.report,
        ground_truth,
    })
}
