//! Per-gene z-score normalization, SMOTE class balancing, and stratified
//! k-fold splitting.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{ExpressionMatrix, LabelVector};
use crate::error::{Error, Result};

/// Per-gene mean and population standard deviation fitted on one matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl NormalizationStats {
    pub fn n_genes(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    /// Genes whose fitted standard deviation is zero.
    pub fn constant_genes(&self) -> Vec<usize> {
        self.std
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Fits per-gene mean and population standard deviation.
pub fn zscore_fit(matrix: &ExpressionMatrix) -> NormalizationStats {
    let (n, g) = (matrix.n_samples(), matrix.n_genes());
    let mut mean = vec![0.0; g];
    for s in 0..n {
        for (m, v) in mean.iter_mut().zip(matrix.row(s)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0; g];
    for s in 0..n {
        for ((v, &x), &m) in var.iter_mut().zip(matrix.row(s)).zip(&mean) {
            let d = x - m;
            *v += d * d;
        }
    }
    let std = var.iter().map(|v| (v / n as f64).sqrt()).collect();
    NormalizationStats { mean, std }
}

/// Applies fitted statistics: `(x - mean) / std`, with zero-variance genes
/// mapped to 0.
pub fn zscore_apply(
    matrix: &ExpressionMatrix,
    stats: &NormalizationStats,
) -> Result<ExpressionMatrix> {
    if matrix.n_genes() != stats.n_genes() {
        return Err(Error::Shape(format!(
            "matrix has {} genes but statistics were fitted on {}",
            matrix.n_genes(),
            stats.n_genes()
        )));
    }
    let mut values = Vec::with_capacity(matrix.n_samples() * matrix.n_genes());
    for s in 0..matrix.n_samples() {
        for ((&x, &m), &sd) in matrix.row(s).iter().zip(&stats.mean).zip(&stats.std) {
            values.push(if sd == 0.0 { 0.0 } else { (x - m) / sd });
        }
    }
    ExpressionMatrix::new(
        values,
        matrix.gene_names().to_vec(),
        matrix.sample_ids().to_vec(),
    )
}

/// Convenience: fit and apply on the same matrix.
pub fn zscore(matrix: &ExpressionMatrix) -> Result<(ExpressionMatrix, NormalizationStats)> {
    let stats = zscore_fit(matrix);
    let normalized = zscore_apply(matrix, &stats)?;
    Ok((normalized, stats))
}

/// SMOTE oversampling: every class is brought up to the majority-class count
/// by synthesizing points on segments between same-class neighbors.
///
/// Original rows are preserved first, in their input order; synthetic rows
/// follow, grouped by class in ascending class order. Each synthetic row is
/// `a + λ(b - a)` where `a` cycles round-robin over the class's samples, `b`
/// is drawn uniformly among `a`'s `k_neighbors` nearest same-class samples
/// (Euclidean distance), and `λ ~ U[0,1)`. `k_neighbors` is reduced to
/// `class size - 1` when the class is smaller than requested.
pub fn smote_balance(
    matrix: &ExpressionMatrix,
    labels: &LabelVector,
    k_neighbors: usize,
    seed: u64,
) -> Result<(ExpressionMatrix, LabelVector)> {
    if k_neighbors == 0 {
        return Err(Error::Config("k_neighbors must be at least 1".into()));
    }
    if matrix.n_samples() != labels.len() {
        return Err(Error::Shape(format!(
            "{} samples but {} labels",
            matrix.n_samples(),
            labels.len()
        )));
    }
    labels.require_all_classes_present()?;
    let counts = labels.counts();
    let majority = *counts.iter().max().expect("at least one class");

    let mut values = matrix.values().to_vec();
    let mut ids = matrix.sample_ids().to_vec();
    let mut out_labels = labels.labels().to_vec();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut synth_counter = 0usize;
    for class in 0..labels.n_classes() {
        let members = labels.class_indices(class);
        let deficit = majority - members.len();
        if deficit == 0 {
            continue;
        }
        if members.len() < 2 {
            return Err(Error::InsufficientSamples(format!(
                "class '{}' has {} sample(s); SMOTE needs at least 2 to synthesize",
                labels.class_names()[class],
                members.len()
            )));
        }
        let k_eff = k_neighbors.min(members.len() - 1);
        let mut neighbor_cache: Vec<Option<Vec<usize>>> = vec![None; members.len()];
        for i in 0..deficit {
            let source_pos = i % members.len();
            let source = members[source_pos];
            let neighbors = neighbor_cache[source_pos].get_or_insert_with(|| {
                nearest_same_class(matrix, &members, source_pos, k_eff)
            });
            let pick = neighbors[rng.random_range(0..k_eff)];
            let lambda: f64 = rng.random();
            let a = matrix.row(source);
            let b = matrix.row(pick);
            values.extend(a.iter().zip(b).map(|(&av, &bv)| av + lambda * (bv - av)));
            ids.push(format!(
                "{}__synth_{}",
                matrix.sample_ids()[source],
                synth_counter
            ));
            out_labels.push(class);
            synth_counter += 1;
        }
    }

    let out_matrix = ExpressionMatrix::new(values, matrix.gene_names().to_vec(), ids)?;
    let out_labels = LabelVector::new(out_labels, labels.class_names().to_vec())?;
    Ok((out_matrix, out_labels))
}

/// Indices (into the full matrix) of the `k` nearest same-class samples to
/// `members[source_pos]`, excluding itself. Distance ties break on sample
/// index so the ordering is deterministic.
fn nearest_same_class(
    matrix: &ExpressionMatrix,
    members: &[usize],
    source_pos: usize,
    k: usize,
) -> Vec<usize> {
    let source_row = matrix.row(members[source_pos]);
    let mut dists: Vec<(f64, usize)> = members
        .iter()
        .enumerate()
        .filter(|(pos, _)| *pos != source_pos)
        .map(|(_, &idx)| {
            let d = matrix
                .row(idx)
                .iter()
                .zip(source_row)
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum::<f64>();
            (d, idx)
        })
        .collect();
    dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    dists.truncate(k);
    dists.into_iter().map(|(_, idx)| idx).collect()
}

/// A stratified k-fold split: `folds[f]` holds the test-sample indices of
/// fold `f`, sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    pub fn test_indices(&self, fold: usize) -> &[usize] {
        &self.folds[fold]
    }

    /// All indices not in fold `fold`, sorted ascending.
    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        let mut train: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(f, _)| *f != fold)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        train.sort_unstable();
        train
    }

    pub fn folds(&self) -> &[Vec<usize>] {
        &self.folds
    }
}

/// Stratified k-fold assignment: within each class the (shuffled) samples are
/// dealt round-robin, so per-fold class counts differ by at most one.
pub fn stratified_kfold(labels: &LabelVector, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Config(format!("k must be at least 2, got {k}")));
    }
    labels.require_all_classes_present()?;
    let counts = labels.counts();
    for (c, &n) in counts.iter().enumerate() {
        if n < k {
            return Err(Error::Config(format!(
                "class '{}' has {} samples, fewer than k = {}",
                labels.class_names()[c],
                n,
                k
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut offset = 0usize;
    for (class, &count) in counts.iter().enumerate() {
        let mut members = labels.class_indices(class);
        members.shuffle(&mut rng);
        for (j, idx) in members.into_iter().enumerate() {
            folds[(offset + j) % k].push(idx);
        }
        // Rotate so leftover samples spread across folds rather than piling
        // into the low-numbered ones.
        offset = (offset + count) % k;
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(FoldPlan { folds })
}
