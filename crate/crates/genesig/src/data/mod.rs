//! Expression matrices, label vectors, and the preprocessing used by the
//! training and evaluation pipelines.

mod io;
mod preprocess;

pub use io::{
    infer_delimiter, load_expression, load_expression_only, write_expression, write_labels,
    LoadedDataset,
};
pub use preprocess::{
    smote_balance, stratified_kfold, zscore, zscore_apply, zscore_fit, FoldPlan,
    NormalizationStats,
};

use std::collections::HashSet;

use crate::error::{Error, Result};

/// A dense samples × genes matrix of finite expression values, stored
/// row-major, with gene names and sample identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    values: Vec<f64>,
    n_samples: usize,
    n_genes: usize,
    gene_names: Vec<String>,
    sample_ids: Vec<String>,
}

impl ExpressionMatrix {
    /// Builds a matrix from row-major values, checking dimensions, name
    /// uniqueness, and finiteness.
    pub fn new(
        values: Vec<f64>,
        gene_names: Vec<String>,
        sample_ids: Vec<String>,
    ) -> Result<Self> {
        let n_genes = gene_names.len();
        let n_samples = sample_ids.len();
        if values.len() != n_samples * n_genes {
            return Err(Error::Shape(format!(
                "expected {} values for {} samples x {} genes, got {}",
                n_samples * n_genes,
                n_samples,
                n_genes,
                values.len()
            )));
        }
        check_unique(&gene_names, "gene name")?;
        check_unique(&sample_ids, "sample id")?;
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (row, col) = (pos / n_genes.max(1), pos % n_genes.max(1));
            return Err(Error::Domain(format!(
                "non-finite expression value for sample '{}', gene '{}'",
                sample_ids.get(row).map(String::as_str).unwrap_or("?"),
                gene_names.get(col).map(String::as_str).unwrap_or("?"),
            )));
        }
        Ok(Self {
            values,
            n_samples,
            n_genes,
            gene_names,
            sample_ids,
        })
    }

    /// Builds a matrix from per-sample rows.
    pub fn from_rows(
        rows: Vec<Vec<f64>>,
        gene_names: Vec<String>,
        sample_ids: Vec<String>,
    ) -> Result<Self> {
        let n_genes = gene_names.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_genes {
                return Err(Error::Shape(format!(
                    "row {} has {} values, expected {}",
                    i,
                    row.len(),
                    n_genes
                )));
            }
        }
        let values = rows.into_iter().flatten().collect();
        Self::new(values, gene_names, sample_ids)
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_genes(&self) -> usize {
        self.n_genes
    }

    pub fn gene_names(&self) -> &[String] {
        &self.gene_names
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    /// Row-major backing storage.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, sample: usize) -> &[f64] {
        &self.values[sample * self.n_genes..(sample + 1) * self.n_genes]
    }

    pub fn value(&self, sample: usize, gene: usize) -> f64 {
        self.values[sample * self.n_genes + gene]
    }

    /// Copies one gene column.
    pub fn column(&self, gene: usize) -> Vec<f64> {
        (0..self.n_samples).map(|s| self.value(s, gene)).collect()
    }

    /// Index of a gene by name.
    pub fn gene_index(&self, name: &str) -> Option<usize> {
        self.gene_names.iter().position(|g| g == name)
    }

    /// New matrix restricted to the named genes, in the given order.
    /// All requested genes must be present.
    pub fn select_genes(&self, genes: &[String]) -> Result<Self> {
        let mut missing = Vec::new();
        let mut indices = Vec::with_capacity(genes.len());
        for g in genes {
            match self.gene_index(g) {
                Some(i) => indices.push(i),
                None => missing.push(g.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::MissingGenes { genes: missing });
        }
        let mut values = Vec::with_capacity(self.n_samples * indices.len());
        for s in 0..self.n_samples {
            let row = self.row(s);
            values.extend(indices.iter().map(|&i| row[i]));
        }
        Self::new(values, genes.to_vec(), self.sample_ids.clone())
    }

    /// New matrix containing the given sample rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * self.n_genes);
        let mut ids = Vec::with_capacity(rows.len());
        for &r in rows {
            if r >= self.n_samples {
                return Err(Error::Index(format!(
                    "sample index {} out of range for {} samples",
                    r, self.n_samples
                )));
            }
            values.extend_from_slice(self.row(r));
            ids.push(self.sample_ids[r].clone());
        }
        Self::new(values, self.gene_names.clone(), ids)
    }
}

fn check_unique(names: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(names.len());
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(Error::Format(format!("duplicate {what}: '{n}'")));
        }
    }
    Ok(())
}

/// Class labels for the samples of an [`ExpressionMatrix`], with the class
/// names that map label indices back to names.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVector {
    labels: Vec<usize>,
    class_names: Vec<String>,
}

impl LabelVector {
    /// Builds a label vector, checking every label is a valid class index.
    pub fn new(labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if class_names.is_empty() {
            return Err(Error::Config("class name list is empty".into()));
        }
        check_unique(&class_names, "class name")?;
        for (i, &l) in labels.iter().enumerate() {
            if l >= class_names.len() {
                return Err(Error::Index(format!(
                    "label {} at position {} out of range for {} classes",
                    l,
                    i,
                    class_names.len()
                )));
            }
        }
        Ok(Self {
            labels,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn get(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Sample count per class.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Indices of the samples belonging to one class, in sample order.
    pub fn class_indices(&self, class: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect()
    }

    /// Errors unless every class has at least one sample.
    pub fn require_all_classes_present(&self) -> Result<()> {
        let counts = self.counts();
        for (c, &n) in counts.iter().enumerate() {
            if n == 0 {
                return Err(Error::InsufficientSamples(format!(
                    "class '{}' has no samples",
                    self.class_names[c]
                )));
            }
        }
        Ok(())
    }
}
