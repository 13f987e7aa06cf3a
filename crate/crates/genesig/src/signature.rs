//! Signature distillation: turns per-patient attribution maps into a
//! compact, per-class gene signature.
//!
//! The flow: for every attribution method and class, each patient of that
//! class is attributed at their own class and their `top_k_per_patient`
//! genes are kept; genes appearing in at least `patient_frequency_threshold`
//! of the class's patients survive; the union over methods and classes forms
//! the candidate set. Candidates are then ranked per class by a one-vs-rest
//! rank-sum test, the `per_class_top` smallest p-values below `p_threshold`
//! are kept (extending through ties at the cutoff), and genes in every
//! class's top third are optionally added.
//!
//! Rank-sum ranking expects the same normalized matrix the network was
//! trained on; this module does not normalize internally.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::attribution::{attribute, AttributionMap, AttributionMethod};
use crate::data::{ExpressionMatrix, LabelVector};
use crate::error::{Error, Result};
use crate::nn::DenseNetwork;
use crate::stats::{compare_gene_scores, median, rank_sum_test, GeneScore};

/// Whether per-patient gene ranking uses the signed relevance value or its
/// absolute value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RelevanceRanking {
    /// Largest signed relevance first: positive evidence toward the class.
    #[default]
    Signed,
    /// Largest magnitude first, either direction.
    Absolute,
}

/// Tuning knobs for [`build_signature`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignatureConfig {
    /// Genes kept per patient per attribution map.
    pub top_k_per_patient: usize,
    /// Fraction of a class's patients whose top lists must contain a gene.
    pub patient_frequency_threshold: f64,
    /// Target length of each per-class list (before tie extension).
    pub per_class_top: usize,
    /// Strict upper bound on the one-vs-rest rank-sum p-value.
    pub p_threshold: f64,
    /// Add genes ranked in the top third of candidates for every class.
    pub include_top_third_shared: bool,
    /// Per-patient ranking mode.
    pub ranking: RelevanceRanking,
    /// Attribution methods contributing candidates.
    pub methods: Vec<AttributionMethod>,
}

impl Default for SignatureConfig {
    fn default() -> Self {
        SignatureConfig {
            top_k_per_patient: 250,
            patient_frequency_threshold: 0.30,
            per_class_top: 10,
            p_threshold: 0.001,
            include_top_third_shared: true,
            ranking: RelevanceRanking::Signed,
            methods: AttributionMethod::default_suite(0),
        }
    }
}

impl SignatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_k_per_patient == 0 {
            return Err(Error::Config("top_k_per_patient must be positive".into()));
        }
        if !(self.patient_frequency_threshold > 0.0 && self.patient_frequency_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "patient_frequency_threshold must be in (0, 1], got {}",
                self.patient_frequency_threshold
            )));
        }
        if self.per_class_top == 0 {
            return Err(Error::Config("per_class_top must be positive".into()));
        }
        if !(self.p_threshold > 0.0 && self.p_threshold < 1.0) {
            return Err(Error::Config(format!(
                "p_threshold must be in (0, 1), got {}",
                self.p_threshold
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::Config(
                "at least one attribution method is required".into(),
            ));
        }
        for m in &self.methods {
            m.validate()?;
        }
        Ok(())
    }
}

/// The genes one attribution method nominates, per class and overall.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodGeneSet {
    pub method: String,
    pub per_class: Vec<BTreeSet<String>>,
    pub union: BTreeSet<String>,
}

/// Gene name → the (method, class) pairs that admitted it.
pub type Provenance = BTreeMap<String, BTreeSet<(String, usize)>>;

/// Union of the per-method nominations with full provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGeneSet {
    pub genes: BTreeSet<String>,
    pub provenance: Provenance,
}

/// One gene in a per-class top list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedGene {
    pub gene: String,
    pub p_value: f64,
    pub median_shift: f64,
    /// True for genes past the nominal cutoff that entered via the tie rule.
    pub tied_extension: bool,
}

/// A class's top genes by one-vs-rest rank-sum p-value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTopGenes {
    pub class_index: usize,
    pub class_name: String,
    pub genes: Vec<RankedGene>,
    pub tie_extended: bool,
}

/// The distilled signature with its full derivation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneSignature {
    /// Ordered gene list: class 0's ranked genes, then class 1's, …,
    /// deduplicated keeping the first occurrence, then shared-top-third
    /// genes not already present (lexicographic), then panel additions.
    pub genes: Vec<String>,
    pub per_class: Vec<ClassTopGenes>,
    /// Intersection of every class's top third of candidates (may overlap
    /// the per-class lists).
    pub shared_top_third: Vec<String>,
    /// Genes added by [`augment_with_panel`], in addition order.
    pub panel_additions: Vec<String>,
    /// How many genes survived the frequency filters.
    pub candidate_count: usize,
    /// (method, class) pairs that admitted each signature gene; panel
    /// additions are absent (they are not candidates).
    pub provenance: Provenance,
}

impl GeneSignature {
    pub fn to_json_string(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// One gene per line, signature order.
    pub fn to_flat_text(&self) -> String {
        let mut s = self.genes.join("\n");
        s.push('\n');
        s
    }

    pub fn save_json(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn save_flat_text(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_flat_text())?;
        Ok(())
    }

    pub fn load_json(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// The `k` genes with the largest relevance, descending; ties break
/// lexicographically on the gene name.
pub fn top_k_genes_for_patient(
    map: &AttributionMap,
    gene_names: &[String],
    k: usize,
    ranking: RelevanceRanking,
) -> Result<Vec<String>> {
    if map.relevance.len() != gene_names.len() {
        return Err(Error::Shape(format!(
            "attribution for sample '{}' has {} values but {} gene names were given",
            map.sample_id,
            map.relevance.len(),
            gene_names.len()
        )));
    }
    if k == 0 {
        return Err(Error::Config("top_k_per_patient must be positive".into()));
    }
    if k > gene_names.len() {
        return Err(Error::Config(format!(
            "top_k_per_patient {} exceeds the gene count {}",
            k,
            gene_names.len()
        )));
    }
    let mut order: Vec<usize> = (0..gene_names.len()).collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = match ranking {
            RelevanceRanking::Signed => (map.relevance[a], map.relevance[b]),
            RelevanceRanking::Absolute => (map.relevance[a].abs(), map.relevance[b].abs()),
        };
        sb.total_cmp(&sa).then_with(|| gene_names[a].cmp(&gene_names[b]))
    });
    Ok(order[..k].iter().map(|&i| gene_names[i].clone()).collect())
}

/// Genes present in at least `ceil(threshold × class_size)` of the patients'
/// top lists, where `class_size` is the number of lists.
pub fn frequent_genes_for_class(
    per_patient_top: &[Vec<String>],
    threshold: f64,
) -> Result<BTreeSet<String>> {
    if per_patient_top.is_empty() {
        return Err(Error::Config(
            "frequency filter needs at least one patient list".into(),
        ));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Config(format!(
            "patient_frequency_threshold must be in (0, 1], got {threshold}"
        )));
    }
    // the epsilon absorbs float artifacts like 0.07 × 100 = 7.000000000000001
    let required = ((threshold * per_patient_top.len() as f64) - 1e-9)
        .ceil()
        .max(1.0) as usize;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for list in per_patient_top {
        for gene in list {
            *counts.entry(gene).or_insert(0) += 1;
        }
    }
    Ok(counts
        .into_iter()
        .filter(|&(_, n)| n >= required)
        .map(|(g, _)| g.to_string())
        .collect())
}

/// One method's nominations: per-class frequent genes and their union.
pub fn method_gene_set(
    network: &DenseNetwork,
    x: &ExpressionMatrix,
    y: &LabelVector,
    method: &AttributionMethod,
    cfg: &SignatureConfig,
) -> Result<MethodGeneSet> {
    let mut per_class = Vec::with_capacity(y.n_classes());
    for class in 0..y.n_classes() {
        let members = y.class_indices(class);
        let mut lists = Vec::with_capacity(members.len());
        for &i in &members {
            let map = AttributionMap {
                sample_id: x.sample_ids()[i].clone(),
                target_class: class,
                method: method.clone(),
                relevance: attribute(network, x.row(i), class, method)?,
            };
            lists.push(top_k_genes_for_patient(
                &map,
                x.gene_names(),
                cfg.top_k_per_patient,
                cfg.ranking,
            )?);
        }
        per_class.push(frequent_genes_for_class(
            &lists,
            cfg.patient_frequency_threshold,
        )?);
    }
    let union = per_class.iter().flatten().cloned().collect();
    Ok(MethodGeneSet {
        method: method.name().to_string(),
        per_class,
        union,
    })
}

/// Candidate genes: the union over all configured methods and classes, with
/// the (method, class) pairs that admitted each gene.
pub fn candidate_genes(
    network: &DenseNetwork,
    x: &ExpressionMatrix,
    y: &LabelVector,
    cfg: &SignatureConfig,
) -> Result<CandidateGeneSet> {
    cfg.validate()?;
    if x.n_samples() != y.len() {
        return Err(Error::Shape(format!(
            "{} samples but {} labels",
            x.n_samples(),
            y.len()
        )));
    }
    y.require_all_classes_present()?;
    let mut genes = BTreeSet::new();
    let mut provenance: Provenance = BTreeMap::new();
    for method in &cfg.methods {
        let set = method_gene_set(network, x, y, method, cfg)?;
        for (class, class_set) in set.per_class.iter().enumerate() {
            for gene in class_set {
                genes.insert(gene.clone());
                provenance
                    .entry(gene.clone())
                    .or_default()
                    .insert((set.method.clone(), class));
            }
        }
    }
    Ok(CandidateGeneSet { genes, provenance })
}

/// Ranks `genes` for one class by the one-vs-rest rank-sum test, ascending
/// p-value with the standard tie-break (|median shift| descending, then
/// name). Genes with degenerate rank-sum variance are skipped with a
/// warning.
pub fn rank_genes_for_class(
    x: &ExpressionMatrix,
    y: &LabelVector,
    class: usize,
    genes: &BTreeSet<String>,
) -> Result<Vec<GeneScore>> {
    if class >= y.n_classes() {
        return Err(Error::Index(format!(
            "class {} out of range for {} classes",
            class,
            y.n_classes()
        )));
    }
    if x.n_samples() != y.len() {
        return Err(Error::Shape(format!(
            "{} samples but {} labels",
            x.n_samples(),
            y.len()
        )));
    }
    let in_class: Vec<bool> = (0..y.len()).map(|i| y.get(i) == class).collect();
    let mut scores = Vec::with_capacity(genes.len());
    let mut missing = Vec::new();
    for gene in genes {
        let Some(j) = x.gene_index(gene) else {
            missing.push(gene.clone());
            continue;
        };
        let mut group = Vec::new();
        let mut rest = Vec::new();
        for (i, &is_member) in in_class.iter().enumerate() {
            let v = x.value(i, j);
            if is_member {
                group.push(v);
            } else {
                rest.push(v);
            }
        }
        match rank_sum_test(&group, &rest) {
            Ok(r) => scores.push(GeneScore {
                gene: gene.clone(),
                p_value: r.p_two_sided,
                median_shift: median(&group) - median(&rest),
            }),
            Err(Error::DegenerateVariance(_)) => {
                log::warn!(
                    "gene '{gene}' skipped for class {class}: degenerate rank-sum variance"
                );
            }
            Err(e) => return Err(e),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingGenes { genes: missing });
    }
    scores.sort_by(compare_gene_scores);
    Ok(scores)
}

/// One class's top genes: the `per_class_top` smallest p-values strictly
/// below `p_threshold`, extended through any p-value tie at the cutoff.
pub fn per_class_top_genes(
    x: &ExpressionMatrix,
    y: &LabelVector,
    candidates: &BTreeSet<String>,
    class: usize,
    cfg: &SignatureConfig,
) -> Result<ClassTopGenes> {
    let ranked = rank_genes_for_class(x, y, class, candidates)?;
    let passing: Vec<&GeneScore> = ranked
        .iter()
        .filter(|s| s.p_value < cfg.p_threshold)
        .collect();
    let cutoff = cfg.per_class_top.min(passing.len());
    let mut keep = cutoff;
    if keep > 0 {
        let boundary_p = passing[cutoff - 1].p_value;
        while keep < passing.len() && passing[keep].p_value == boundary_p {
            keep += 1;
        }
    }
    let genes: Vec<RankedGene> = passing[..keep]
        .iter()
        .enumerate()
        .map(|(i, s)| RankedGene {
            gene: s.gene.clone(),
            p_value: s.p_value,
            median_shift: s.median_shift,
            tied_extension: i >= cutoff,
        })
        .collect();
    Ok(ClassTopGenes {
        class_index: class,
        class_name: y.class_names()[class].clone(),
        tie_extended: keep > cutoff,
        genes,
    })
}

/// Genes ranked in the top `floor(|candidates| / 3)` for **every** class,
/// sorted lexicographically.
pub fn shared_top_third(
    x: &ExpressionMatrix,
    y: &LabelVector,
    candidates: &BTreeSet<String>,
) -> Result<Vec<String>> {
    if candidates.is_empty() {
        return Err(Error::Config(
            "shared_top_third needs a nonempty candidate set".into(),
        ));
    }
    let third = candidates.len() / 3;
    let mut shared: Option<BTreeSet<String>> = None;
    for class in 0..y.n_classes() {
        let ranked = rank_genes_for_class(x, y, class, candidates)?;
        let top: BTreeSet<String> = ranked
            .iter()
            .take(third)
            .map(|s| s.gene.clone())
            .collect();
        shared = Some(match shared {
            None => top,
            Some(prev) => prev.intersection(&top).cloned().collect(),
        });
        if shared.as_ref().is_some_and(BTreeSet::is_empty) {
            break;
        }
    }
    Ok(shared.unwrap_or_default().into_iter().collect())
}

/// Runs the full distillation on a trained network and its (normalized)
/// training matrix.
pub fn build_signature(
    network: &DenseNetwork,
    x: &ExpressionMatrix,
    y: &LabelVector,
    cfg: &SignatureConfig,
) -> Result<GeneSignature> {
    let candidates = candidate_genes(network, x, y, cfg)?;
    if candidates.genes.is_empty() {
        return Err(Error::EmptyResult(
            "the patient frequency filter removed every gene; lower \
             patient_frequency_threshold or raise top_k_per_patient"
                .into(),
        ));
    }
    let mut per_class = Vec::with_capacity(y.n_classes());
    for class in 0..y.n_classes() {
        per_class.push(per_class_top_genes(x, y, &candidates.genes, class, cfg)?);
    }
    let mut genes: Vec<String> = Vec::new();
    for class_top in &per_class {
        for ranked in &class_top.genes {
            if !genes.contains(&ranked.gene) {
                genes.push(ranked.gene.clone());
            }
        }
    }
    if genes.is_empty() {
        return Err(Error::EmptyResult(
            "the rank-sum p-value filter removed every candidate gene; raise \
             p_threshold"
                .into(),
        ));
    }
    let shared = if cfg.include_top_third_shared {
        shared_top_third(x, y, &candidates.genes)?
    } else {
        Vec::new()
    };
    for gene in &shared {
        if !genes.contains(gene) {
            genes.push(gene.clone());
        }
    }
    let provenance: Provenance = genes
        .iter()
        .filter_map(|g| {
            candidates
                .provenance
                .get(g)
                .map(|p| (g.clone(), p.clone()))
        })
        .collect();
    Ok(GeneSignature {
        genes,
        per_class,
        shared_top_third: shared,
        panel_additions: Vec::new(),
        candidate_count: candidates.genes.len(),
        provenance,
    })
}

/// Adds each class's `per_class` best panel genes (one-vs-rest rank-sum) to
/// the signature. Panel genes absent from `x` are warned about and skipped.
pub fn augment_with_panel(
    signature: &GeneSignature,
    panel: &[String],
    x: &ExpressionMatrix,
    y: &LabelVector,
    per_class: usize,
) -> Result<GeneSignature> {
    if panel.is_empty() {
        return Err(Error::Config("panel gene list is empty".into()));
    }
    let mut out = signature.clone();
    if per_class == 0 {
        return Ok(out);
    }
    let mut present: BTreeSet<String> = BTreeSet::new();
    for gene in panel {
        if x.gene_index(gene).is_some() {
            present.insert(gene.clone());
        } else {
            log::warn!("panel gene '{gene}' is not in the expression matrix; skipped");
        }
    }
    if present.is_empty() {
        return Ok(out);
    }
    for class in 0..y.n_classes() {
        let ranked = rank_genes_for_class(x, y, class, &present)?;
        for score in ranked.iter().take(per_class) {
            if !out.genes.contains(&score.gene) {
                out.genes.push(score.gene.clone());
                out.panel_additions.push(score.gene.clone());
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, LayerSpec};

    fn map_of(relevance: Vec<f64>) -> AttributionMap {
        AttributionMap {
            sample_id: "S1".into(),
            target_class: 0,
            method: AttributionMethod::Gradient,
            relevance,
        }
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn top_k_signed_ordering() {
        let genes = names(&["A", "B", "C"]);
        let map = map_of(vec![0.9, -0.5, 0.1]);
        assert_eq!(
            top_k_genes_for_patient(&map, &genes, 2, RelevanceRanking::Signed).unwrap(),
            names(&["A", "C"])
        );
        assert_eq!(
            top_k_genes_for_patient(&map, &genes, 3, RelevanceRanking::Signed).unwrap(),
            names(&["A", "C", "B"])
        );
    }

    #[test]
    fn top_k_tie_breaks_lexicographically() {
        let genes = names(&["A", "B", "C"]);
        let map = map_of(vec![0.9, 0.5, 0.5]);
        assert_eq!(
            top_k_genes_for_patient(&map, &genes, 2, RelevanceRanking::Signed).unwrap(),
            names(&["A", "B"])
        );
    }

    #[test]
    fn top_k_absolute_ranking() {
        let genes = names(&["A", "B", "C"]);
        let map = map_of(vec![0.9, -0.95, 0.1]);
        assert_eq!(
            top_k_genes_for_patient(&map, &genes, 1, RelevanceRanking::Absolute).unwrap(),
            names(&["B"])
        );
        assert_eq!(
            top_k_genes_for_patient(&map, &genes, 1, RelevanceRanking::Signed).unwrap(),
            names(&["A"])
        );
    }

    #[test]
    fn top_k_rejects_bad_arguments() {
        let genes = names(&["A", "B"]);
        let map = map_of(vec![1.0, 2.0]);
        assert!(matches!(
            top_k_genes_for_patient(&map, &genes, 3, RelevanceRanking::Signed),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            top_k_genes_for_patient(&map, &genes, 0, RelevanceRanking::Signed),
            Err(Error::Config(_))
        ));
        let short = map_of(vec![1.0]);
        assert!(matches!(
            top_k_genes_for_patient(&short, &genes, 1, RelevanceRanking::Signed),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn frequency_boundary_cases() {
        // 10 patients; gene in 3 lists passes at 0.30 (3 >= ceil(3.0) = 3)
        let mut lists: Vec<Vec<String>> = vec![vec![]; 10];
        for l in lists.iter_mut().take(3) {
            l.push("KEEP".into());
        }
        for l in lists.iter_mut().take(2) {
            l.push("DROP".into());
        }
        for l in lists.iter_mut() {
            l.push("ALL".into());
        }
        let kept = frequent_genes_for_class(&lists, 0.30).unwrap();
        assert!(kept.contains("KEEP"));
        assert!(!kept.contains("DROP"));
        assert!(kept.contains("ALL"));
        // unanimity at threshold 1.0
        let unanimous = frequent_genes_for_class(&lists, 1.0).unwrap();
        assert_eq!(unanimous.into_iter().collect::<Vec<_>>(), vec!["ALL"]);
    }

    #[test]
    fn frequency_float_artifact_guard() {
        // 0.07 × 100 = 7.000000000000001 must still require 7, not 8
        let mut lists: Vec<Vec<String>> = vec![vec![]; 100];
        for l in lists.iter_mut().take(7) {
            l.push("EDGE".into());
        }
        let kept = frequent_genes_for_class(&lists, 0.07).unwrap();
        assert!(kept.contains("EDGE"));
    }

    /// A deterministic linear network (no training involved); one weight
    /// row per output unit.
    fn linear_network(rows: Vec<Vec<f64>>, inputs: usize, outputs: usize) -> DenseNetwork {
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        DenseNetwork::from_parts(
            &[LayerSpec::new(inputs, outputs, Activation::Linear)],
            vec![flat],
            vec![vec![0.0; outputs]],
        )
        .unwrap()
    }

    fn matrix(rows: Vec<Vec<f64>>, genes: &[&str]) -> ExpressionMatrix {
        let ids: Vec<String> = (0..rows.len()).map(|i| format!("S{i:03}")).collect();
        ExpressionMatrix::from_rows(rows, names(genes), ids).unwrap()
    }

    #[test]
    fn single_patient_candidates_equal_their_top_k() {
        let net = linear_network(vec![vec![1.0, 2.0, 3.0]], 3, 1);
        let x = matrix(vec![vec![5.0, 1.0, 2.0]], &["A", "B", "C"]);
        let y = LabelVector::new(vec![0], names(&["only"])).unwrap();
        let cfg = SignatureConfig {
            top_k_per_patient: 2,
            methods: vec![AttributionMethod::InputXGradient],
            ..SignatureConfig::default()
        };
        // input×gradient = [5, 2, 6] → top 2 = C, A
        let set = candidate_genes(&net, &x, &y, &cfg).unwrap();
        assert_eq!(
            set.genes.iter().cloned().collect::<Vec<_>>(),
            names(&["A", "C"])
        );
        for gene in &set.genes {
            assert_eq!(
                set.provenance[gene],
                BTreeSet::from([("input_x_gradient".to_string(), 0usize)])
            );
        }
    }

    #[test]
    fn identical_maps_from_two_methods_share_provenance() {
        // smoothgrad with sigma_fraction 0 is bitwise the plain gradient,
        // so both methods nominate exactly the same genes
        let net = linear_network(vec![vec![3.0, -1.0, 0.5], vec![0.2, 2.0, -0.3]], 3, 2);
        let x = matrix(
            vec![vec![1.0, 2.0, 3.0], vec![2.0, 1.0, 0.0]],
            &["A", "B", "C"],
        );
        let y = LabelVector::new(vec![0, 1], names(&["c0", "c1"])).unwrap();
        let cfg = SignatureConfig {
            top_k_per_patient: 1,
            methods: vec![
                AttributionMethod::Gradient,
                AttributionMethod::Smoothgrad {
                    n_samples: 5,
                    sigma_fraction: 0.0,
                    seed: 0,
                },
            ],
            ..SignatureConfig::default()
        };
        let set = candidate_genes(&net, &x, &y, &cfg).unwrap();
        // class 0 gradient = [3,-1,0.5] → A; class 1 gradient = [0.2,2,-0.3] → B
        assert_eq!(
            set.genes.iter().cloned().collect::<Vec<_>>(),
            names(&["A", "B"])
        );
        assert_eq!(
            set.provenance["A"],
            BTreeSet::from([
                ("gradient".to_string(), 0usize),
                ("smoothgrad".to_string(), 0usize)
            ])
        );
        assert_eq!(
            set.provenance["B"],
            BTreeSet::from([
                ("gradient".to_string(), 1usize),
                ("smoothgrad".to_string(), 1usize)
            ])
        );
    }

    #[test]
    fn candidate_set_grows_as_threshold_drops() {
        // two patients per class with different dominant genes: higher
        // thresholds demand agreement, lower ones accept either
        let net = linear_network(vec![vec![1.0, 1.0, 1.0, 1.0]], 4, 1);
        let x = matrix(
            vec![vec![9.0, 1.0, 0.5, 0.1], vec![1.0, 9.0, 0.5, 0.1]],
            &["A", "B", "C", "D"],
        );
        let y = LabelVector::new(vec![0, 0], names(&["only"])).unwrap();
        let base = SignatureConfig {
            top_k_per_patient: 1,
            methods: vec![AttributionMethod::InputXGradient],
            ..SignatureConfig::default()
        };
        let mut sizes = Vec::new();
        for threshold in [1.0, 0.6, 0.3] {
            let cfg = SignatureConfig {
                patient_frequency_threshold: threshold,
                ..base.clone()
            };
            sizes.push(candidate_genes(&net, &x, &y, &cfg).unwrap().genes.len());
        }
        // top-1 lists are {A} and {B}: unanimity keeps nothing, 0.3 keeps both
        assert_eq!(sizes, vec![0, 0, 2]);
    }

    /// Builds a 2-class column pair with exactly U1 = (n - k)(n + k) out of
    /// n² for group sizes (n, n): the k lowest class values are swapped with
    /// the k highest rest values. All values distinct, so no rank ties.
    fn swapped_column(n: usize, k: usize) -> Vec<f64> {
        let mut class_vals: Vec<f64> = (0..n).map(|i| 1000.0 + i as f64).collect();
        let mut rest_vals: Vec<f64> = (0..n).map(|i| i as f64).collect();
        for i in 0..k {
            std::mem::swap(&mut class_vals[i], &mut rest_vals[n - 1 - i]);
        }
        class_vals.into_iter().chain(rest_vals).collect()
    }

    /// Matrix with one swapped column per requested k; first n rows are
    /// class 0, the rest class 1.
    fn swapped_matrix(n: usize, ks: &[(String, usize)]) -> (ExpressionMatrix, LabelVector) {
        let columns: Vec<Vec<f64>> = ks.iter().map(|&(_, k)| swapped_column(n, k)).collect();
        let rows: Vec<Vec<f64>> = (0..2 * n)
            .map(|r| columns.iter().map(|c| c[r]).collect())
            .collect();
        let gene_names: Vec<String> = ks.iter().map(|(g, _)| g.clone()).collect();
        let ids = (0..2 * n).map(|i| format!("S{i:03}")).collect();
        let x = ExpressionMatrix::from_rows(rows, gene_names, ids).unwrap();
        let labels: Vec<usize> = (0..2 * n).map(|i| usize::from(i >= n)).collect();
        let y = LabelVector::new(labels, names(&["hi", "lo"])).unwrap();
        (x, y)
    }

    #[test]
    fn per_class_cutoff_keeps_exactly_ten() {
        // 12 candidates with distinct p: k = 0..=10 pass p < 0.001 at group
        // sizes (30, 30); k = 20 does not
        let mut ks: Vec<(String, usize)> = (0..=10).map(|k| (format!("G{k:02}"), k)).collect();
        ks.push(("G20".to_string(), 20));
        let (x, y) = swapped_matrix(30, &ks);
        let candidates: BTreeSet<String> = ks.iter().map(|(g, _)| g.clone()).collect();
        let cfg = SignatureConfig::default();
        let top = per_class_top_genes(&x, &y, &candidates, 0, &cfg).unwrap();
        assert_eq!(top.genes.len(), 10);
        assert!(!top.tie_extended);
        assert!(top.genes.iter().all(|g| !g.tied_extension));
        // ascending k means descending separation, so ascending p
        let got: Vec<&str> = top.genes.iter().map(|g| g.gene.as_str()).collect();
        let expect: Vec<String> = (0..10).map(|k| format!("G{k:02}")).collect();
        assert_eq!(got, expect.iter().map(String::as_str).collect::<Vec<_>>());
        assert!(top.genes.windows(2).all(|w| w[0].p_value < w[1].p_value));
    }

    #[test]
    fn tie_at_cutoff_extends_the_list() {
        // nine distinct leaders, then four identical columns: positions
        // 10-13 share one p-value bit for bit
        let mut ks: Vec<(String, usize)> = (0..9).map(|k| (format!("G{k:02}"), k)).collect();
        for t in 1..=4 {
            ks.push((format!("T{t}"), 9));
        }
        let (x, y) = swapped_matrix(30, &ks);
        let candidates: BTreeSet<String> = ks.iter().map(|(g, _)| g.clone()).collect();
        let cfg = SignatureConfig::default();
        let top = per_class_top_genes(&x, &y, &candidates, 0, &cfg).unwrap();
        assert_eq!(top.genes.len(), 13);
        assert!(top.tie_extended);
        let flags: Vec<bool> = top.genes.iter().map(|g| g.tied_extension).collect();
        assert_eq!(&flags[..10], &[false; 10]);
        assert_eq!(&flags[10..], &[true; 3]);
        // tied block sorted by name
        let tied: Vec<&str> = top.genes[9..].iter().map(|g| g.gene.as_str()).collect();
        assert_eq!(tied, vec!["T1", "T2", "T3", "T4"]);
        assert!(top.genes[9..].windows(2).all(|w| w[0].p_value == w[1].p_value));
    }

    #[test]
    fn shortfall_returns_all_passing() {
        let mut ks: Vec<(String, usize)> = (0..4).map(|k| (format!("G{k:02}"), k)).collect();
        for (i, k) in [20, 22, 24].iter().enumerate() {
            ks.push((format!("N{i}"), *k));
        }
        let (x, y) = swapped_matrix(30, &ks);
        let candidates: BTreeSet<String> = ks.iter().map(|(g, _)| g.clone()).collect();
        let top = per_class_top_genes(&x, &y, &candidates, 0, &SignatureConfig::default()).unwrap();
        assert_eq!(top.genes.len(), 4);
        assert!(!top.tie_extended);
    }

    #[test]
    fn shared_top_third_with_mirrored_classes() {
        // with two classes, one-vs-rest rankings are identical by symmetry:
        // the shared set is the top third itself
        let ks: Vec<(String, usize)> = (0..6).map(|k| (format!("G{k}"), k)).collect();
        let (x, y) = swapped_matrix(30, &ks);
        let candidates: BTreeSet<String> = ks.iter().map(|(g, _)| g.clone()).collect();
        let shared = shared_top_third(&x, &y, &candidates).unwrap();
        assert_eq!(shared, names(&["G0", "G1"]));
    }

    #[test]
    fn shared_top_third_disjoint_rankings_are_empty() {
        // three classes, one planted gene each: every class's top-1 is its
        // own gene, so the intersection is empty
        let n = 12;
        let mut rows = Vec::new();
        for class in 0..3usize {
            for i in 0..n {
                let jitter = (class * n + i) as f64 * 1e-3;
                let mut row = vec![jitter, jitter + 0.1, jitter + 0.2];
                row[class] += 50.0;
                rows.push(row);
            }
        }
        let x = matrix(rows, &["A0", "A1", "A2"]);
        let labels: Vec<usize> = (0..3 * n).map(|i| i / n).collect();
        let y = LabelVector::new(labels, names(&["c0", "c1", "c2"])).unwrap();
        let candidates: BTreeSet<String> = ["A0", "A1", "A2"].map(String::from).into();
        let shared = shared_top_third(&x, &y, &candidates).unwrap();
        assert!(shared.is_empty());
    }

    /// Four classes, ten planted genes per class with huge shifts, plus
    /// five noise genes; attribution is irrelevant because
    /// top_k_per_patient covers every gene.
    fn planted_four_class() -> (DenseNetwork, ExpressionMatrix, LabelVector, SignatureConfig) {
        let n_per_class = 12;
        let n_genes = 45;
        let mut rows = Vec::new();
        for class in 0..4usize {
            for i in 0..n_per_class {
                // round-robin interleaving keeps unplanted genes far from
                // significance for every class
                let base = (i * 4 + class) as f64;
                let mut row: Vec<f64> = (0..n_genes).map(|j| base + j as f64 * 1000.0).collect();
                for v in &mut row[class * 10..(class + 1) * 10] {
                    *v += 100.0;
                }
                rows.push(row);
            }
        }
        let gene_names: Vec<String> = (0..n_genes).map(|j| format!("G{j:02}")).collect();
        let ids = (0..rows.len()).map(|i| format!("S{i:03}")).collect();
        let x = ExpressionMatrix::from_rows(rows, gene_names, ids).unwrap();
        let labels: Vec<usize> = (0..4 * n_per_class).map(|i| i / n_per_class).collect();
        let y = LabelVector::new(
            labels,
            names(&["basal", "her2", "luma", "lumb"]),
        )
        .unwrap();
        let net = DenseNetwork::random(
            &[
                LayerSpec::new(n_genes, 8, Activation::Relu),
                LayerSpec::new(8, 4, Activation::Softmax),
            ],
            11,
        )
        .unwrap();
        let cfg = SignatureConfig {
            top_k_per_patient: n_genes,
            methods: vec![AttributionMethod::Gradient],
            include_top_third_shared: false,
            ..SignatureConfig::default()
        };
        (net, x, y, cfg)
    }

    #[test]
    fn union_arithmetic_four_disjoint_classes() {
        let (net, x, y, cfg) = planted_four_class();
        let sig = build_signature(&net, &x, &y, &cfg).unwrap();
        assert_eq!(sig.genes.len(), 40);
        assert_eq!(sig.candidate_count, 45);
        assert!(sig.shared_top_third.is_empty());
        for (class, top) in sig.per_class.iter().enumerate() {
            assert_eq!(top.genes.len(), 10);
            let expect: BTreeSet<String> =
                (class * 10..(class + 1) * 10).map(|j| format!("G{j:02}")).collect();
            let got: BTreeSet<String> = top.genes.iter().map(|g| g.gene.clone()).collect();
            assert_eq!(got, expect, "class {class}");
        }
        // ordering: class 0's list first, and every signature gene has
        // provenance
        assert!(sig.genes[..10].iter().all(|g| {
            let j: usize = g[1..].parse().unwrap();
            j < 10
        }));
        for g in &sig.genes {
            assert!(!sig.provenance[g].is_empty());
        }
    }

    #[test]
    fn identical_per_class_lists_dedup_to_ten() {
        // two classes: mirrored rankings, ten strong genes, two inert ones
        let mut ks: Vec<(String, usize)> = (0..10).map(|k| (format!("G{k}"), k)).collect();
        ks.push(("N0".to_string(), 25));
        ks.push(("N1".to_string(), 20));
        let (x, y) = swapped_matrix(30, &ks);
        let net = DenseNetwork::random(
            &[LayerSpec::new(12, 4, Activation::Relu), LayerSpec::new(4, 2, Activation::Softmax)],
            3,
        )
        .unwrap();
        let cfg = SignatureConfig {
            top_k_per_patient: 12,
            methods: vec![AttributionMethod::Gradient],
            include_top_third_shared: true,
            ..SignatureConfig::default()
        };
        let sig = build_signature(&net, &x, &y, &cfg).unwrap();
        assert_eq!(sig.genes.len(), 10);
        assert_eq!(sig.per_class[0].genes.len(), 10);
        assert_eq!(sig.per_class[1].genes.len(), 10);
        // shared top third (12 candidates → 4 genes) is already present
        assert_eq!(sig.shared_top_third.len(), 4);
        assert!(sig.shared_top_third.iter().all(|g| sig.genes.contains(g)));
    }

    #[test]
    fn frequency_filter_empty_is_reported() {
        // two patients with disjoint top-1 genes and a unanimity threshold
        let net = linear_network(vec![vec![1.0, 1.0, 1.0]], 3, 1);
        let x = matrix(
            vec![vec![9.0, 1.0, 0.1], vec![1.0, 9.0, 0.1]],
            &["A", "B", "C"],
        );
        let y = LabelVector::new(vec![0, 0], names(&["only"])).unwrap();
        let cfg = SignatureConfig {
            top_k_per_patient: 1,
            patient_frequency_threshold: 1.0,
            methods: vec![AttributionMethod::InputXGradient],
            ..SignatureConfig::default()
        };
        let err = build_signature(&net, &x, &y, &cfg).unwrap_err();
        match err {
            Error::EmptyResult(msg) => assert!(msg.contains("frequency"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn p_value_filter_empty_is_reported() {
        // groups of three cannot reach p < 0.001 under the normal
        // approximation, so every candidate fails the threshold
        let rows = vec![
            vec![1.0, 6.0],
            vec![2.0, 5.0],
            vec![3.0, 4.0],
            vec![4.0, 3.0],
            vec![5.0, 2.0],
            vec![6.0, 1.0],
        ];
        let x = matrix(rows, &["A", "B"]);
        let y = LabelVector::new(vec![0, 0, 0, 1, 1, 1], names(&["c0", "c1"])).unwrap();
        let net = DenseNetwork::random(
            &[LayerSpec::new(2, 3, Activation::Relu), LayerSpec::new(3, 2, Activation::Softmax)],
            5,
        )
        .unwrap();
        let cfg = SignatureConfig {
            top_k_per_patient: 2,
            methods: vec![AttributionMethod::Gradient],
            ..SignatureConfig::default()
        };
        let err = build_signature(&net, &x, &y, &cfg).unwrap_err();
        match err {
            Error::EmptyResult(msg) => assert!(msg.contains("p-value"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn signature_is_deterministic() {
        let (net, x, y, cfg) = planted_four_class();
        let a = build_signature(&net, &x, &y, &cfg).unwrap();
        let b = build_signature(&net, &x, &y, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json_string().unwrap(), b.to_json_string().unwrap());
    }

    #[test]
    fn panel_augmentation() {
        let (net, x, y, cfg) = planted_four_class();
        let sig = build_signature(&net, &x, &y, &cfg).unwrap();

        // panel entirely inside the signature: idempotent
        let inside = vec![sig.genes[0].clone(), sig.genes[1].clone()];
        let same = augment_with_panel(&sig, &inside, &x, &y, 2).unwrap();
        assert_eq!(same.genes, sig.genes);
        assert!(same.panel_additions.is_empty());

        // per_class = 0 is a no-op
        let noop = augment_with_panel(&sig, &names(&["G40"]), &x, &y, 0).unwrap();
        assert_eq!(noop.genes, sig.genes);

        // new genes are appended and recorded; absent genes are skipped
        let panel = names(&["G40", "G41", "NOPE"]);
        let grown = augment_with_panel(&sig, &panel, &x, &y, 1).unwrap();
        assert!(grown.genes.len() > sig.genes.len());
        assert_eq!(grown.genes[..sig.genes.len()], sig.genes[..]);
        for g in &grown.panel_additions {
            assert!(["G40", "G41"].contains(&g.as_str()));
        }

        // empty panel is a config error
        assert!(matches!(
            augment_with_panel(&sig, &[], &x, &y, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn flat_text_and_json_round_trip() {
        let (net, x, y, cfg) = planted_four_class();
        let sig = build_signature(&net, &x, &y, &cfg).unwrap();
        let flat = sig.to_flat_text();
        assert_eq!(flat.lines().count(), sig.genes.len());
        assert!(flat.ends_with('\n'));
        let json = sig.to_json_string().unwrap();
        let back: GeneSignature = serde_json::from_str(&json).unwrap();
        assert_eq!(back, sig);
    }

    #[test]
    fn config_validation() {
        let ok = SignatureConfig::default();
        ok.validate().unwrap();
        assert_eq!(ok.top_k_per_patient, 250);
        assert_eq!(ok.patient_frequency_threshold, 0.30);
        assert_eq!(ok.per_class_top, 10);
        assert_eq!(ok.p_threshold, 0.001);
        assert!(ok.include_top_third_shared);
        assert_eq!(ok.methods.len(), 7);

        for bad in [
            SignatureConfig { top_k_per_patient: 0, ..ok.clone() },
            SignatureConfig { patient_frequency_threshold: 0.0, ..ok.clone() },
            SignatureConfig { patient_frequency_threshold: 1.5, ..ok.clone() },
            SignatureConfig { per_class_top: 0, ..ok.clone() },
            SignatureConfig { p_threshold: 0.0, ..ok.clone() },
            SignatureConfig { p_threshold: 1.0, ..ok.clone() },
            SignatureConfig { methods: vec![], ..ok.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }

        // serde defaults fill missing fields
        let cfg: SignatureConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, SignatureConfig::default());
        let cfg: SignatureConfig =
            serde_json::from_str(r#"{"per_class_top": 5, "ranking": "absolute"}"#).unwrap();
        assert_eq!(cfg.per_class_top, 5);
        assert_eq!(cfg.ranking, RelevanceRanking::Absolute);
    }
}
