//! Cross-validated assessment of a gene signature with the fixed 90/50/4
//! classifier, plus confusion-matrix bookkeeping and metric aggregation.
//!
//! Every fold restricts the matrix to the signature genes, fits
//! normalization on the training rows only, SMOTE-balances the training
//! rows, trains the classifier, and predicts the held-out rows at their
//! natural class distribution.

use serde::{Deserialize, Serialize};

use crate::data::{
    smote_balance, stratified_kfold, zscore_apply, zscore_fit, ExpressionMatrix, LabelVector,
};
use crate::error::{Error, Result};
use crate::nn::{
    predict_row, train_classifier, Activation, LayerSpec, TrainingConfig,
};
use crate::stats;

/// C×C counts; rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    class_names: Vec<String>,
    counts: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn new(class_names: Vec<String>) -> Result<Self> {
        if class_names.is_empty() {
            return Err(Error::Config("confusion matrix needs at least one class".into()));
        }
        let c = class_names.len();
        Ok(ConfusionMatrix {
            class_names,
            counts: vec![0; c * c],
        })
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn add(&mut self, true_class: usize, predicted: usize) -> Result<()> {
        let c = self.n_classes();
        if true_class >= c || predicted >= c {
            return Err(Error::Index(format!(
                "confusion entry ({true_class}, {predicted}) out of range for {c} classes"
            )));
        }
        self.counts[true_class * c + predicted] += 1;
        Ok(())
    }

    pub fn get(&self, true_class: usize, predicted: usize) -> usize {
        self.counts[true_class * self.n_classes() + predicted]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Per-class true counts (test supports).
    pub fn row_sums(&self) -> Vec<usize> {
        let c = self.n_classes();
        (0..c).map(|t| self.counts[t * c..(t + 1) * c].iter().sum()).collect()
    }

    /// Per-class predicted counts.
    pub fn col_sums(&self) -> Vec<usize> {
        let c = self.n_classes();
        (0..c).map(|p| (0..c).map(|t| self.counts[t * c + p]).sum()).collect()
    }

    pub fn diagonal_total(&self) -> usize {
        let c = self.n_classes();
        (0..c).map(|i| self.counts[i * c + i]).sum()
    }

    /// Adds another matrix's counts; class names must match exactly.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.class_names != other.class_names {
            return Err(Error::Config(
                "cannot merge confusion matrices with different classes".into(),
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// CSV with a `true_class` column and one predicted-class column per
    /// class.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("true_class");
        for name in &self.class_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        let c = self.n_classes();
        for t in 0..c {
            out.push_str(&self.class_names[t]);
            for p in 0..c {
                out.push(',');
                out.push_str(&self.counts[t * c + p].to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

/// Precision/recall/F1 for one class. A zero denominator yields 0.0 with
/// the matching `*_defined` flag cleared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class_name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// True-class sample count.
    pub support: usize,
    pub precision_defined: bool,
    pub recall_defined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Full metric report for one (pooled) confusion matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub class_names: Vec<String>,
    pub per_class: Vec<ClassMetrics>,
    /// Pooled-count aggregates; equal to accuracy for single-label data.
    pub micro: AggregateMetrics,
    /// Unweighted mean over classes.
    pub macro_avg: AggregateMetrics,
    /// Support-weighted mean over classes.
    pub weighted: AggregateMetrics,
    pub accuracy: f64,
    pub fold_accuracies: Vec<f64>,
    pub accuracy_mean: f64,
    /// Population standard deviation of the fold accuracies.
    pub accuracy_std: f64,
}

impl MetricsReport {
    pub fn to_json_string(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save_json(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    /// CSV of per-fold accuracies: `fold,accuracy`.
    pub fn fold_accuracy_csv_string(&self) -> String {
        let mut out = String::from("fold,accuracy\n");
        for (i, a) in self.fold_accuracies.iter().enumerate() {
            out.push_str(&format!("{i},{a}\n"));
        }
        out
    }
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, false)
    } else {
        (num as f64 / den as f64, true)
    }
}

/// Computes per-class, micro, macro, and weighted metrics from a confusion
/// matrix. Fold fields are left empty; [`evaluate_signature`] fills them.
pub fn classification_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Domain("confusion matrix has no entries".into()));
    }
    let supports = cm.row_sums();
    let predicted = cm.col_sums();
    let c = cm.n_classes();
    let mut per_class = Vec::with_capacity(c);
    for i in 0..c {
        let tp = cm.get(i, i);
        let (precision, precision_defined) = ratio(tp, predicted[i]);
        let (recall, recall_defined) = ratio(tp, supports[i]);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(ClassMetrics {
            class_name: cm.class_names()[i].clone(),
            precision,
            recall,
            f1,
            support: supports[i],
            precision_defined,
            recall_defined,
        });
    }

    let tp_total = cm.diagonal_total();
    let accuracy = tp_total as f64 / total as f64;
    // pooled counts: FP and FN totals both equal (total - TP)
    let micro_p = tp_total as f64 / total as f64;
    let micro_r = tp_total as f64 / total as f64;
    let micro = AggregateMetrics {
        precision: micro_p,
        recall: micro_r,
        f1: if micro_p + micro_r > 0.0 {
            2.0 * micro_p * micro_r / (micro_p + micro_r)
        } else {
            0.0
        },
    };
    let cf = c as f64;
    let macro_avg = AggregateMetrics {
        precision: per_class.iter().map(|m| m.precision).sum::<f64>() / cf,
        recall: per_class.iter().map(|m| m.recall).sum::<f64>() / cf,
        f1: per_class.iter().map(|m| m.f1).sum::<f64>() / cf,
    };
    let tf = total as f64;
    let weighted = AggregateMetrics {
        precision: per_class.iter().map(|m| m.precision * m.support as f64).sum::<f64>() / tf,
        recall: per_class.iter().map(|m| m.recall * m.support as f64).sum::<f64>() / tf,
        f1: per_class.iter().map(|m| m.f1 * m.support as f64).sum::<f64>() / tf,
    };
    // single-label identity, asserted on every report
    assert!(
        (micro.precision - accuracy).abs() <= 1e-12
            && (micro.recall - accuracy).abs() <= 1e-12
            && (micro.f1 - accuracy).abs() <= 1e-12,
        "micro metrics must equal accuracy"
    );
    Ok(MetricsReport {
        class_names: cm.class_names().to_vec(),
        per_class,
        micro,
        macro_avg,
        weighted,
        accuracy,
        fold_accuracies: Vec::new(),
        accuracy_mean: accuracy,
        accuracy_std: 0.0,
    })
}

/// Cross-validation settings for [`evaluate_signature`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub k_folds: usize,
    pub seed: u64,
    /// Hidden layer widths of the signature classifier.
    pub hidden: Vec<usize>,
    /// Dropout rate after each hidden layer.
    pub dropout: f64,
    /// SMOTE neighbor count for balancing the training rows.
    pub smote_k: usize,
    pub training: TrainingConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k_folds: 10,
            seed: 0,
            hidden: vec![90, 50],
            dropout: 0.3,
            smote_k: 5,
            training: TrainingConfig {
                epochs: 150,
                ..TrainingConfig::default()
            },
        }
    }
}

impl EvalConfig {
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
        self.training.validate()
    }

    /// Layer specs for the signature classifier: hidden relu layers with
    /// dropout, softmax head.
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

/// Everything [`evaluate_signature`] produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationOutcome {
    pub report: MetricsReport,
    pub fold_confusions: Vec<ConfusionMatrix>,
    pub pooled_confusion: ConfusionMatrix,
}

/// One independent seed per (fold, purpose) pair.
pub(crate) fn fold_seed(master: u64, fold: usize, stream: u64) -> u64 {
    master
        .wrapping_add(stream.wrapping_mul(1_000_003))
        .wrapping_add(fold as u64)
}

/// K-fold cross-validation of `genes` on the raw matrix `x`.
pub fn evaluate_signature(
    x: &ExpressionMatrix,
    y: &LabelVector,
    genes: &[String],
    cfg: &EvalConfig,
) -> Result<EvaluationOutcome> {
    cfg.validate()?;
    if genes.is_empty() {
        return Err(Error::Config("signature gene list is empty".into()));
    }
    if x.n_samples() != y.len() {
        return Err(Error::Shape(format!(
            "{} samples but {} labels",
            x.n_samples(),
            y.len()
        )));
    }
    y.require_all_classes_present()?;
    let mut unique = Vec::with_capacity(genes.len());
    for g in genes {
        if !unique.contains(g) {
            unique.push(g.clone());
        }
    }
    let restricted = x.select_genes(&unique)?;
    let plan = stratified_kfold(y, cfg.k_folds, cfg.seed)?;

    let mut fold_confusions = Vec::with_capacity(plan.k());
    let mut fold_accuracies = Vec::with_capacity(plan.k());
    let mut pooled = ConfusionMatrix::new(y.class_names().to_vec())?;
    for fold in 0..plan.k() {
        let train_idx = plan.train_indices(fold);
        let test_idx = plan.test_indices(fold);
        let train_raw = restricted.select_rows(&train_idx)?;
        let y_train = LabelVector::new(
            train_idx.iter().map(|&i| y.get(i)).collect(),
            y.class_names().to_vec(),
        )?;
        let stats = zscore_fit(&train_raw);
        let train_norm = zscore_apply(&train_raw, &stats)?;
        let test_norm = zscore_apply(&restricted.select_rows(test_idx)?, &stats)?;

        let (balanced_x, balanced_y) = smote_balance(
            &train_norm,
            &y_train,
            cfg.smote_k,
            fold_seed(cfg.seed, fold, 1),
        )?;
        let specs = cfg.layer_specs(restricted.n_genes(), y.n_classes());
        let training = TrainingConfig {
            seed: fold_seed(cfg.seed, fold, 2),
            ..cfg.training.clone()
        };
        let (net, _report) = train_classifier(&specs, &balanced_x, &balanced_y, &training, None)?;

        let mut cm = ConfusionMatrix::new(y.class_names().to_vec())?;
        for (pos, &i) in test_idx.iter().enumerate() {
            let pred = predict_row(&net, test_norm.row(pos))?;
            cm.add(y.get(i), pred)?;
        }
        fold_accuracies.push(cm.diagonal_total() as f64 / cm.total() as f64);
        pooled.merge(&cm)?;
        fold_confusions.push(cm);
    }

    let mut report = classification_metrics(&pooled)?;
    report.accuracy_mean =
        fold_accuracies.iter().sum::<f64>() / fold_accuracies.len() as f64;
    let mean = report.accuracy_mean;
    report.accuracy_std = (fold_accuracies
        .iter()
        .map(|a| (a - mean) * (a - mean))
        .sum::<f64>()
        / fold_accuracies.len() as f64)
        .sqrt();
    report.fold_accuracies = fold_accuracies;
    Ok(EvaluationOutcome {
        report,
        fold_confusions,
        pooled_confusion: pooled,
    })
}

/// Pearson correlation matrix over the signature genes of a (normalized)
/// matrix; thin re-export for pipeline symmetry.
pub fn signature_correlation(
    x: &ExpressionMatrix,
    genes: &[String],
) -> Result<stats::CorrelationMatrix> {
    stats::pearson_matrix(x, genes)
}
