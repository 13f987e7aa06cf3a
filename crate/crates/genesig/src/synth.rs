//! Seeded synthetic expression-matrix generator with planted class-specific
//! differential genes — the end-to-end ground-truth oracle.
//!
//! Background values are i.i.d. Gaussian(0, σ). Correlation blocks mix each
//! member gene with a per-sample latent factor (`√(1−ρ)·noise + √ρ·factor`)
//! so pairwise correlations inside a block equal ρ. Planted genes add a mean
//! shift of `effect_size · σ` to their class's rows.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{ExpressionMatrix, LabelVector};
use crate::error::{Error, Result};

/// Differential genes planted for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedClass {
    pub class: usize,
    pub gene_indices: Vec<usize>,
    /// Mean shift in units of the noise standard deviation.
    pub effect_size: f64,
}

/// Genes sharing a latent factor with loading ρ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationBlock {
    pub gene_indices: Vec<usize>,
    pub rho: f64,
}

/// Full description of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub class_sizes: Vec<usize>,
    pub n_genes: usize,
    pub planted: Vec<PlantedClass>,
    pub noise_std: f64,
    pub correlation_blocks: Vec<CorrelationBlock>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        let planted: Vec<PlantedClass> = (0..4)
            .map(|class| PlantedClass {
                class,
                gene_indices: (class * 10..(class + 1) * 10).collect(),
                effect_size: 2.5,
            })
            .collect();
        let correlation_blocks = planted
            .iter()
            .map(|p| CorrelationBlock {
                gene_indices: p.gene_indices.clone(),
                rho: 0.8,
            })
            .collect();
        SyntheticSpec {
            class_sizes: vec![100, 50, 300, 150],
            n_genes: 2000,
            planted,
            noise_std: 1.0,
            correlation_blocks,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn n_samples(&self) -> usize {
        self.class_sizes.iter().sum()
    }

    pub fn n_classes(&self) -> usize {
        self.class_sizes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_sizes.is_empty() {
            return Err(Error::Config("class_sizes is empty".into()));
        }
        if self.class_sizes.contains(&0) {
            return Err(Error::Config("every class size must be at least 1".into()));
        }
        if self.n_genes == 0 {
            return Err(Error::Config("n_genes must be at least 1".into()));
        }
        if !(self.noise_std.is_finite() && self.noise_std > 0.0) {
            return Err(Error::Config(format!(
                "noise_std must be finite and positive, got {}",
                self.noise_std
            )));
        }
        let mut seen: BTreeSet<usize> = BTreeSet::new();
        for p in &self.planted {
            if p.class >= self.n_classes() {
                return Err(Error::Config(format!(
                    "planted class {} out of range for {} classes",
                    p.class,
                    self.n_classes()
                )));
            }
            if !(p.effect_size.is_finite() && p.effect_size >= 0.0) {
                return Err(Error::Config(format!(
                    "effect_size must be finite and non-negative, got {}",
                    p.effect_size
                )));
            }
            for &j in &p.gene_indices {
                if j >= self.n_genes {
                    return Err(Error::Config(format!(
                        "planted gene index {} out of range for {} genes",
                        j, self.n_genes
                    )));
                }
                if !seen.insert(j) {
                    return Err(Error::Config(format!(
                        "gene index {j} is planted more than once"
                    )));
                }
            }
        }
        let mut block_seen: BTreeSet<usize> = BTreeSet::new();
        for b in &self.correlation_blocks {
            if !(b.rho.is_finite() && (0.0..1.0).contains(&b.rho)) {
                return Err(Error::Config(format!(
                    "correlation loading must lie in [0, 1), got {}",
                    b.rho
                )));
            }
            for &j in &b.gene_indices {
                if j >= self.n_genes {
                    return Err(Error::Config(format!(
                        "correlation block gene index {} out of range for {} genes",
                        j, self.n_genes
                    )));
                }
                if !block_seen.insert(j) {
                    return Err(Error::Config(format!(
                        "gene index {j} appears in more than one correlation block"
                    )));
                }
            }
        }
        Ok(())
    }

    /// First row index of each class (classes occupy contiguous row runs).
    fn class_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.n_classes());
        let mut acc = 0;
        for &size in &self.class_sizes {
            offsets.push(acc);
            acc += size;
        }
        offsets
    }
}

/// Which genes were planted for which class, by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Class name → sorted planted gene names.
    pub per_class: BTreeMap<String, Vec<String>>,
}

impl GroundTruth {
    pub fn all_genes(&self) -> BTreeSet<String> {
        self.per_class.values().flatten().cloned().collect()
    }

    pub fn planted_total(&self) -> usize {
        self.per_class.values().map(Vec::len).sum()
    }

    /// How many planted genes appear in `genes`.
    pub fn count_recovered(&self, genes: &[String]) -> usize {
        let all = self.all_genes();
        genes.iter().filter(|g| all.contains(*g)).count()
    }

    pub fn to_json_string(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save_json(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn load_json(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

pub fn gene_name(j: usize) -> String {
    format!("G{j:05}")
}

pub fn sample_id(i: usize) -> String {
    format!("S{i:05}")
}

pub fn class_name(c: usize) -> String {
    format!("class{c}")
}

/// Generates the dataset described by `spec`, deterministically per seed.
///
/// Random draws happen in a fixed order: every background value row-major,
/// then one latent factor per (correlation block, sample) in block order.
pub fn generate(spec: &SyntheticSpec) -> Result<(ExpressionMatrix, LabelVector, GroundTruth)> {
    spec.validate()?;
    let n = spec.n_samples();
    let g = spec.n_genes;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = StandardNormal;
    let mut values: Vec<f64> = (0..n * g).map(|_| normal.sample(&mut rng)).collect();

    for block in &spec.correlation_blocks {
        let w_noise = (1.0 - block.rho).sqrt();
        let w_factor = block.rho.sqrt();
        for s in 0..n {
            let factor: f64 = normal.sample(&mut rng);
            for &j in &block.gene_indices {
                let v = &mut values[s * g + j];
                *v = w_noise * *v + w_factor * factor;
            }
        }
    }
    for v in &mut values {
        *v *= spec.noise_std;
    }

    let offsets = spec.class_offsets();
    for p in &spec.planted {
        let start = offsets[p.class];
        let end = start + spec.class_sizes[p.class];
        for s in start..end {
            for &j in &p.gene_indices {
                values[s * g + j] += p.effect_size * spec.noise_std;
            }
        }
    }

    let gene_names: Vec<String> = (0..g).map(gene_name).collect();
    let sample_ids: Vec<String> = (0..n).map(sample_id).collect();
    let matrix = ExpressionMatrix::new(values, gene_names, sample_ids)?;

    let mut labels = Vec::with_capacity(n);
    for (c, &size) in spec.class_sizes.iter().enumerate() {
        labels.extend(std::iter::repeat_n(c, size));
    }
    let class_names: Vec<String> = (0..spec.n_classes()).map(class_name).collect();
    let y = LabelVector::new(labels, class_names.clone())?;

    let mut per_class: BTreeMap<String, Vec<String>> = class_names
        .iter()
        .map(|name| (name.clone(), Vec::new()))
        .collect();
    for p in &spec.planted {
        let entry = per_class.get_mut(&class_names[p.class]).unwrap();
        entry.extend(p.gene_indices.iter().map(|&j| gene_name(j)));
    }
    for genes in per_class.values_mut() {
        genes.sort();
    }
    Ok((matrix, y, GroundTruth { per_class }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::AttributionMethod;
    use crate::data::zscore;
    use crate::nn::{Activation, DenseNetwork, LayerSpec};
    use crate::signature::{build_signature, SignatureConfig};
    use crate::stats::{pearson_matrix, rank_sum_test};

    fn small_spec() -> SyntheticSpec {
        SyntheticSpec {
            class_sizes: vec![5, 6, 7, 8],
            n_genes: 50,
            planted: vec![
                PlantedClass {
                    class: 0,
                    gene_indices: vec![0, 1, 2],
                    effect_size: 2.0,
                },
                PlantedClass {
                    class: 2,
                    gene_indices: vec![10, 11],
                    effect_size: 1.5,
                },
            ],
            noise_std: 1.0,
            correlation_blocks: vec![CorrelationBlock {
                gene_indices: vec![20, 21, 22],
                rho: 0.5,
            }],
            seed: 3,
        }
    }

    #[test]
    fn generation_is_bit_reproducible() {
        let spec = small_spec();
        let (x1, y1, t1) = generate(&spec).unwrap();
        let (x2, y2, t2) = generate(&spec).unwrap();
        assert_eq!(x1, x2);
        assert_eq!(y1, y2);
        assert_eq!(t1, t2);
        let other = SyntheticSpec { seed: 4, ..spec };
        let (x3, _, _) = generate(&other).unwrap();
        assert_ne!(x1, x3);
    }

    #[test]
    fn shapes_names_and_ground_truth() {
        let (x, y, truth) = generate(&small_spec()).unwrap();
        assert_eq!(x.n_samples(), 26);
        assert_eq!(x.n_genes(), 50);
        assert_eq!(x.gene_names()[0], "G00000");
        assert_eq!(x.sample_ids()[25], "S00025");
        assert_eq!(y.class_names(), ["class0", "class1", "class2", "class3"]);
        assert_eq!(y.counts(), vec![5, 6, 7, 8]);
        // contiguous class runs
        assert_eq!(y.get(0), 0);
        assert_eq!(y.get(4), 0);
        assert_eq!(y.get(5), 1);
        assert_eq!(y.get(25), 3);
        assert_eq!(
            truth.per_class["class0"],
            vec!["G00000", "G00001", "G00002"]
        );
        assert_eq!(truth.per_class["class2"], vec!["G00010", "G00011"]);
        assert!(truth.per_class["class1"].is_empty());
        assert_eq!(truth.planted_total(), 5);
        assert_eq!(
            truth.count_recovered(&["G00000".into(), "G00010".into(), "G99999".into()]),
            2
        );
    }

    #[test]
    fn null_data_stays_null() {
        let spec = SyntheticSpec {
            class_sizes: vec![30, 30],
            n_genes: 400,
            planted: vec![],
            noise_std: 1.0,
            correlation_blocks: vec![],
            seed: 11,
        };
        let (x, y, _) = generate(&spec).unwrap();
        let members = y.class_indices(0);
        let mut rejections = 0;
        for j in 0..x.n_genes() {
            let col = x.column(j);
            let group: Vec<f64> = members.iter().map(|&i| col[i]).collect();
            let rest: Vec<f64> = (0..x.n_samples())
                .filter(|i| !members.contains(i))
                .map(|i| col[i])
                .collect();
            if rank_sum_test(&group, &rest).unwrap().p_two_sided < 0.001 {
                rejections += 1;
            }
        }
        // 0.1% expected under the null — allow up to 0.5% of 400
        assert!(rejections <= 2, "{rejections} null rejections");
    }

    #[test]
    fn strong_effects_reach_tiny_p() {
        let spec = SyntheticSpec {
            class_sizes: vec![150, 150],
            n_genes: 100,
            planted: vec![PlantedClass {
                class: 0,
                gene_indices: (0..5).collect(),
                effect_size: 3.0,
            }],
            noise_std: 2.0,
            correlation_blocks: vec![],
            seed: 13,
        };
        let (x, y, _) = generate(&spec).unwrap();
        let members = y.class_indices(0);
        for j in 0..5 {
            let col = x.column(j);
            let group: Vec<f64> = members.iter().map(|&i| col[i]).collect();
            let rest: Vec<f64> = (members.len()..x.n_samples()).map(|i| col[i]).collect();
            let r = rank_sum_test(&group, &rest).unwrap();
            assert!(r.p_two_sided < 1e-6, "gene {j}: p = {}", r.p_two_sided);
        }
    }

    #[test]
    fn correlation_blocks_hit_their_loading() {
        let spec = SyntheticSpec {
            class_sizes: vec![200, 200],
            n_genes: 30,
            planted: vec![],
            noise_std: 1.0,
            correlation_blocks: vec![CorrelationBlock {
                gene_indices: vec![3, 7, 12, 19, 25],
                rho: 0.9,
            }],
            seed: 17,
        };
        let (x, _, _) = generate(&spec).unwrap();
        let block_genes: Vec<String> = [3, 7, 12, 19, 25].map(gene_name).to_vec();
        let corr = pearson_matrix(&x, &block_genes).unwrap();
        for a in 0..block_genes.len() {
            for b in 0..a {
                let r = corr.get(a, b);
                assert!(
                    (0.7..=0.95).contains(&r),
                    "pair ({a}, {b}): r = {r}"
                );
            }
        }
        // an untouched gene stays uncorrelated with the block
        let outside = pearson_matrix(
            &x,
            &[gene_name(0), gene_name(3)],
        )
        .unwrap();
        assert!(outside.get(0, 1).abs() < 0.2);
    }

    #[test]
    fn recovery_is_monotone_in_effect_size() {
        // top_k covering every gene isolates the rank-sum filter, which is
        // provably monotone on a fixed noise draw
        let planted_per_class = 3;
        let n_genes = 60;
        let mut recovered = Vec::new();
        for delta in [1.0, 2.0, 3.0] {
            let spec = SyntheticSpec {
                class_sizes: vec![15, 15, 15, 15],
                n_genes,
                planted: (0..4)
                    .map(|class| PlantedClass {
                        class,
                        gene_indices: (class * planted_per_class
                            ..(class + 1) * planted_per_class)
                            .collect(),
                        effect_size: delta,
                    })
                    .collect(),
                noise_std: 1.0,
                correlation_blocks: vec![],
                seed: 23,
            };
            let (x, y, truth) = generate(&spec).unwrap();
            let (normalized, _) = zscore(&x).unwrap();
            let net = DenseNetwork::random(
                &[
                    LayerSpec::new(n_genes, 8, Activation::Relu),
                    LayerSpec::new(8, 4, Activation::Softmax),
                ],
                1,
            )
            .unwrap();
            let cfg = SignatureConfig {
                top_k_per_patient: n_genes,
                per_class_top: planted_per_class,
                include_top_third_shared: false,
                methods: vec![AttributionMethod::Gradient],
                ..SignatureConfig::default()
            };
            let count = match build_signature(&net, &normalized, &y, &cfg) {
                Ok(sig) => truth.count_recovered(&sig.genes),
                Err(Error::EmptyResult(_)) => 0,
                Err(e) => panic!("unexpected {e:?}"),
            };
            recovered.push(count);
        }
        assert!(
            recovered.windows(2).all(|w| w[0] <= w[1]),
            "recovery counts {recovered:?} not monotone"
        );
        assert_eq!(*recovered.last().unwrap(), 12, "δ=3 should recover all");
    }

    #[test]
    fn validation_errors() {
        let ok = small_spec();
        ok.validate().unwrap();
        let cases: Vec<SyntheticSpec> = vec![
            SyntheticSpec { class_sizes: vec![], ..ok.clone() },
            SyntheticSpec { class_sizes: vec![5, 0], ..ok.clone() },
            SyntheticSpec { n_genes: 0, ..ok.clone() },
            SyntheticSpec { noise_std: 0.0, ..ok.clone() },
            SyntheticSpec {
                planted: vec![PlantedClass {
                    class: 9,
                    gene_indices: vec![0],
                    effect_size: 1.0,
                }],
                ..ok.clone()
            },
            SyntheticSpec {
                planted: vec![PlantedClass {
                    class: 0,
                    gene_indices: vec![50],
                    effect_size: 1.0,
                }],
                ..ok.clone()
            },
            SyntheticSpec {
                planted: vec![
                    PlantedClass { class: 0, gene_indices: vec![1], effect_size: 1.0 },
                    PlantedClass { class: 1, gene_indices: vec![1], effect_size: 1.0 },
                ],
                ..ok.clone()
            },
            SyntheticSpec {
                planted: vec![PlantedClass {
                    class: 0,
                    gene_indices: vec![0],
                    effect_size: -1.0,
                }],
                ..ok.clone()
            },
            SyntheticSpec {
                correlation_blocks: vec![CorrelationBlock { gene_indices: vec![0], rho: 1.0 }],
                ..ok.clone()
            },
            SyntheticSpec {
                correlation_blocks: vec![CorrelationBlock { gene_indices: vec![0], rho: -0.5 }],
                ..ok.clone()
            },
            SyntheticSpec {
                correlation_blocks: vec![
                    CorrelationBlock { gene_indices: vec![0, 1], rho: 0.5 },
                    CorrelationBlock { gene_indices: vec![1, 2], rho: 0.5 },
                ],
                ..ok.clone()
            },
            SyntheticSpec {
                correlation_blocks: vec![CorrelationBlock { gene_indices: vec![99], rho: 0.5 }],
                ..ok.clone()
            },
        ];
        for (i, bad) in cases.iter().enumerate() {
            assert!(
                matches!(bad.validate(), Err(Error::Config(_))),
                "case {i} should fail"
            );
        }
    }

    #[test]
    fn default_spec_is_the_documented_desk_scale() {
        let spec = SyntheticSpec::default();
        spec.validate().unwrap();
        assert_eq!(spec.class_sizes, vec![100, 50, 300, 150]);
        assert_eq!(spec.n_genes, 2000);
        assert_eq!(spec.planted.len(), 4);
        for (c, p) in spec.planted.iter().enumerate() {
            assert_eq!(p.class, c);
            assert_eq!(p.gene_indices.len(), 10);
            assert_eq!(p.effect_size, 2.5);
        }
        assert_eq!(spec.correlation_blocks.len(), 4);
        assert!(spec.correlation_blocks.iter().all(|b| b.rho == 0.8));
        assert_eq!(spec.seed, 7);
        assert_eq!(spec.n_samples(), 600);

        // serde default round trip
        let parsed: SyntheticSpec = serde_json::from_str("{}").unwrap();
        assert_eq!(parsed, spec);
    }

    #[test]
    fn ground_truth_json_round_trip() {
        let (_, _, truth) = generate(&small_spec()).unwrap();
        let json = truth.to_json_string().unwrap();
        let back: GroundTruth = serde_json::from_str(&json).unwrap();
        assert_eq!(back, truth);
    }
}
