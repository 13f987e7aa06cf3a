//! Rank-based two-sample statistics and Pearson correlation.
//!
//! [`rank_sum_test`] is the tie-corrected normal approximation used
//! throughout signature selection; [`exact_rank_sum_p`] enumerates every
//! group assignment and serves as its small-sample oracle.

use std::cmp::Ordering;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::ExpressionMatrix;
use crate::error::{Error, Result};

/// Outcome of a two-sided Mann–Whitney rank-sum test.
#[derive(Debug, Clone, PartialEq)]
pub struct RankSumResult {
    /// U statistic of the first sample.
    pub u_statistic: f64,
    /// Continuity-corrected standardized statistic (signed; positive when
    /// the first sample tends larger).
    pub z_score: f64,
    pub p_two_sided: f64,
    pub n1: usize,
    pub n2: usize,
}

fn validate_samples(x: &[f64], y: &[f64]) -> Result<()> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::InsufficientSamples(
            "rank-sum test needs at least one value per group".into(),
        ));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Domain(
            "rank-sum test requires finite values".into(),
        ));
    }
    Ok(())
}

/// Midrank assignment: pooled values get 1-based ranks, tied runs share the
/// average of their positions. Returns the ranks in pooled order and the tie
/// correction term `Σ (t³ - t)` over tied groups.
fn midranks(pooled: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].partial_cmp(&pooled[b]).expect("finite values"));
    let mut ranks = vec![0.0; pooled.len()];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share the average 1-based rank
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    (ranks, tie_term)
}

/// Two-sided Mann–Whitney rank-sum test via the tie-corrected normal
/// approximation with a 0.5 continuity correction toward the mean.
///
/// Errors with [`Error::DegenerateVariance`] when every pooled value is
/// identical, because no ordering information exists.
pub fn rank_sum_test(x: &[f64], y: &[f64]) -> Result<RankSumResult> {
    validate_samples(x, y)?;
    let (n1, n2) = (x.len(), y.len());
    let n = n1 + n2;
    let pooled: Vec<f64> = x.iter().chain(y.iter()).copied().collect();
    let (ranks, tie_term) = midranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let u1 = r1 - (n1 * (n1 + 1)) as f64 / 2.0;

    let nf = n as f64;
    let mu = (n1 * n2) as f64 / 2.0;
    let variance = (n1 * n2) as f64 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    if variance <= 0.0 {
        return Err(Error::DegenerateVariance(format!(
            "all {n} pooled values are identical"
        )));
    }
    let sigma = variance.sqrt();
    let d = u1 - mu;
    let z = if d.abs() <= 0.5 {
        0.0
    } else {
        (d - 0.5 * d.signum()) / sigma
    };
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let p = (2.0 * (1.0 - normal.cdf(z.abs()))).clamp(0.0, 1.0);
    Ok(RankSumResult {
        u_statistic: u1,
        z_score: z,
        p_two_sided: p,
        n1,
        n2,
    })
}

/// Exact two-sided Mann–Whitney p-value by complete enumeration of the
/// `C(n1+n2, n1)` group assignments: the fraction whose U deviates from the
/// null mean at least as much as the observed U. Limited to 20 total values.
pub fn exact_rank_sum_p(x: &[f64], y: &[f64]) -> Result<f64> {
    validate_samples(x, y)?;
    let (n1, n2) = (x.len(), y.len());
    let n = n1 + n2;
    if n > 20 {
        return Err(Error::Config(format!(
            "exact enumeration supports at most 20 total values, got {n}"
        )));
    }
    let pooled: Vec<f64> = x.iter().chain(y.iter()).copied().collect();
    let (ranks, _) = midranks(&pooled);
    let mu = (n1 * n2) as f64 / 2.0;
    let offset = (n1 * (n1 + 1)) as f64 / 2.0;
    let observed = (ranks[..n1].iter().sum::<f64>() - offset - mu).abs();

    // Lexicographic enumeration of all n-choose-n1 index subsets.
    let mut comb: Vec<usize> = (0..n1).collect();
    let mut qualifying = 0u64;
    let mut total = 0u64;
    loop {
        let u = comb.iter().map(|&i| ranks[i]).sum::<f64>() - offset;
        if (u - mu).abs() >= observed - 1e-9 {
            qualifying += 1;
        }
        total += 1;
        // advance to the next combination
        let mut i = n1;
        loop {
            if i == 0 {
                return Ok(qualifying as f64 / total as f64);
            }
            i -= 1;
            if comb[i] != i + n - n1 {
                break;
            }
        }
        comb[i] += 1;
        for j in i + 1..n1 {
            comb[j] = comb[j - 1] + 1;
        }
    }
}

/// Median of a nonempty slice (mean of the central pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// A gene's test outcome used for ranking candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneScore {
    pub gene: String,
    pub p_value: f64,
    /// Absolute difference of group medians, the first tie-breaker.
    pub median_shift: f64,
}

/// Deterministic candidate ordering: ascending p-value, then descending
/// absolute median shift, then gene name.
pub fn compare_gene_scores(a: &GeneScore, b: &GeneScore) -> Ordering {
    a.p_value
        .partial_cmp(&b.p_value)
        .expect("finite p")
        .then_with(|| b.median_shift.partial_cmp(&a.median_shift).expect("finite shift"))
        .then_with(|| a.gene.cmp(&b.gene))
}

/// Pairwise Pearson correlations for a set of genes, with genes of zero
/// variance flagged as undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    gene_names: Vec<String>,
    /// Row-major `k x k`; undefined entries hold 0 and are masked by
    /// `defined_gene`.
    values: Vec<f64>,
    defined_gene: Vec<bool>,
}

impl CorrelationMatrix {
    pub fn gene_names(&self) -> &[String] {
        &self.gene_names
    }

    pub fn len(&self) -> usize {
        self.gene_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gene_names.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.len() + j]
    }

    /// Whether gene `i` has nonzero variance (its correlations are defined).
    pub fn gene_defined(&self, i: usize) -> bool {
        self.defined_gene[i]
    }

    pub fn pair_defined(&self, i: usize, j: usize) -> bool {
        self.defined_gene[i] && self.defined_gene[j]
    }

    /// CSV rendering: header row of gene names, `NA` for undefined pairs.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("gene");
        for g in &self.gene_names {
            out.push(',');
            out.push_str(g);
        }
        out.push('\n');
        for i in 0..self.len() {
            out.push_str(&self.gene_names[i]);
            for j in 0..self.len() {
                out.push(',');
                if self.pair_defined(i, j) {
                    out.push_str(&self.get(i, j).to_string());
                } else {
                    out.push_str("NA");
                }
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

/// Computes pairwise Pearson correlations among `genes` (by name) across the
/// samples of `x`. Constant genes are kept but flagged undefined.
pub fn pearson_matrix(x: &ExpressionMatrix, genes: &[String]) -> Result<CorrelationMatrix> {
    if genes.is_empty() {
        return Err(Error::Config("no genes requested for correlation".into()));
    }
    let n = x.n_samples();
    if n < 2 {
        return Err(Error::InsufficientSamples(
            "correlation needs at least 2 samples".into(),
        ));
    }
    let sub = x.select_genes(genes)?;
    let k = genes.len();
    let nf = n as f64;

    // Centered columns and per-gene standard deviations.
    let mut centered = vec![0.0; n * k];
    let mut std = vec![0.0; k];
    for g in 0..k {
        let mut mean = 0.0;
        for s in 0..n {
            mean += sub.value(s, g);
        }
        mean /= nf;
        let mut var = 0.0;
        for s in 0..n {
            let c = sub.value(s, g) - mean;
            centered[g * n + s] = c;
            var += c * c;
        }
        std[g] = (var / nf).sqrt();
    }
    let defined_gene: Vec<bool> = std.iter().map(|&s| s > 0.0).collect();

    let mut values = vec![0.0; k * k];
    for i in 0..k {
        if !defined_gene[i] {
            continue;
        }
        values[i * k + i] = 1.0;
        for j in i + 1..k {
            if !defined_gene[j] {
                continue;
            }
            let ci = &centered[i * n..(i + 1) * n];
            let cj = &centered[j * n..(j + 1) * n];
            let cov = crate::nn::dot(ci, cj) / nf;
            let r = (cov / (std[i] * std[j])).clamp(-1.0, 1.0);
            values[i * k + j] = r;
            values[j * k + i] = r;
        }
    }
    Ok(CorrelationMatrix {
        gene_names: genes.to_vec(),
        values,
        defined_gene,
    })
}
