//! Command-line surface. Every subcommand is deterministic given its config
//! and seeds; progress goes to stderr, data to stdout or files. Failures
//! print one machine-parsable JSON line on stderr:
//! `{"error":{"kind":"...","message":"..."}}`.
//!
//! Exit codes: 0 success, 1 usage/config, 2 data format, 3 numerical failure.

use std::path::{Path, PathBuf};

use clap::error::ErrorKind as ClapErrorKind;
use clap::{Parser, Subcommand};

use genesig::attribution::{attribute_dataset, write_attribution_csv, AttributionMethod};
use genesig::data::{
    load_expression, load_expression_only, write_expression, write_labels, zscore,
    ExpressionMatrix, LabelVector,
};
use genesig::error::{Error, Result};
use genesig::evaluation::{evaluate_signature, EvalConfig};
use genesig::nn::DenseNetwork;
use genesig::pipeline::{
    delimiter_byte, run_pipeline, train_full_model, PipelineConfig, SCHEMA_VERSION,
};
use genesig::signature::{build_signature, GeneSignature, SignatureConfig};
use genesig::stats::pearson_matrix;
use genesig::synth::{generate, SyntheticSpec};

fn version_string() -> String {
    format!("{} (schema {SCHEMA_VERSION})", env!("CARGO_PKG_VERSION"))
}

#[derive(Parser)]
#[command(
    name = "genesig",
    version = version_string(),
    about = "Discovers compact discriminative gene signatures from labeled expression matrices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort with planted differential genes.
    Synth {
        /// Synthetic spec JSON; defaults to the built-in desk-scale spec.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Output directory for expression.csv, labels.csv, ground_truth.json.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the full-gene classifier described by a pipeline config.
    Train {
        /// Pipeline config JSON (data and model sections are used).
        #[arg(long)]
        config: PathBuf,
        /// Model JSON path; the training report lands next to it.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compute per-sample attribution maps for one method.
    Attribute {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        expression: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Field delimiter; inferred from the file extension when absent.
        #[arg(long)]
        delimiter: Option<char>,
        /// One of: gradient, smoothgrad, input_x_gradient,
        /// integrated_gradients, guided_backprop, lrp_z, lrp_epsilon.
        #[arg(long)]
        method: String,
        /// Seed for stochastic methods (smoothgrad).
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV of per-sample relevance vectors.
        #[arg(long)]
        out: PathBuf,
    },
    /// Distill a gene signature from attribution maps.
    Signature {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        expression: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        delimiter: Option<char>,
        /// Signature config JSON; defaults are the documented recipe.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the seed of stochastic attribution methods.
        #[arg(long)]
        seed: Option<u64>,
        /// Signature JSON path; a flat gene list lands next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate a signature with freshly trained compact classifiers.
    Evaluate {
        #[arg(long)]
        expression: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        delimiter: Option<char>,
        /// Signature JSON (or flat text, one gene per line).
        #[arg(long)]
        signature: PathBuf,
        /// Evaluation config JSON; flags below override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Metrics report JSON path; confusion and per-fold accuracy CSVs
        /// land next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Pearson correlation matrix of the signature genes.
    Correlate {
        #[arg(long)]
        expression: PathBuf,
        #[arg(long)]
        delimiter: Option<char>,
        /// Signature JSON (or flat text, one gene per line).
        #[arg(long)]
        signature: PathBuf,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run everything: data, model, signature, evaluation, correlation.
    Pipeline {
        /// Pipeline config JSON; defaults to the built-in synthetic run.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(
                e.kind(),
                ClapErrorKind::DisplayHelp
                    | ClapErrorKind::DisplayVersion
                    | ClapErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
            ) {
                let _ = e.print();
                std::process::exit(0);
            }
            let _ = e.print();
            eprintln!("{}", error_json("usage", &e.render().to_string()));
            std::process::exit(1);
        }
    };
    if let Err(e) = run(cli.command) {
        eprintln!("{}", error_json(e.kind(), &e.to_string()));
        std::process::exit(e.exit_code());
    }
}

fn error_json(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": { "kind": kind, "message": message } }).to_string()
}

/// `report.json` → `report_confusion.csv` and friends, next to the original.
fn sibling(path: &Path, suffix: &str, extension: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    path.with_file_name(format!("{stem}{suffix}.{extension}"))
}

fn load_json_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// A signature file is either the JSON artifact or a flat gene list.
fn load_signature_genes(path: &Path) -> Result<Vec<String>> {
    if path.extension().is_some_and(|e| e == "json") {
        return Ok(GeneSignature::load_json(path)?.genes);
    }
    let text = std::fs::read_to_string(path)?;
    let genes: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    if genes.is_empty() {
        return Err(Error::Format(format!(
            "signature file '{}' lists no genes",
            path.display()
        )));
    }
    Ok(genes)
}

fn load_cohort(
    expression: &Path,
    labels: &Path,
    delimiter: Option<char>,
) -> Result<(ExpressionMatrix, LabelVector)> {
    let loaded = load_expression(expression, labels, delimiter_byte(delimiter))?;
    Ok((loaded.matrix, loaded.labels))
}

fn parse_method(name: &str, seed: u64) -> Result<AttributionMethod> {
    AttributionMethod::default_suite(seed)
        .into_iter()
        .find(|m| m.name() == name)
        .ok_or_else(|| {
            let valid: Vec<&str> = AttributionMethod::default_suite(0)
                .iter()
                .map(|m| m.name())
                .collect();
            Error::Config(format!(
                "unknown attribution method '{name}'; valid methods: {}",
                valid.join(", ")
            ))
        })
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth { spec, out, seed } => {
            let mut spec: SyntheticSpec = match spec {
                Some(path) => load_json_file(&path)?,
                None => SyntheticSpec::default(),
            };
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            std::fs::create_dir_all(&out)?;
            let (x, y, truth) = generate(&spec)?;
            write_expression(&x, &out.join("expression.csv"), None)?;
            write_labels(x.sample_ids(), &y, &out.join("labels.csv"), None)?;
            truth.save_json(&out.join("ground_truth.json"))?;
            log::info!(
                "wrote {} samples x {} genes to {}",
                x.n_samples(),
                x.n_genes(),
                out.display()
            );
            Ok(())
        }
        Command::Train { config, out, seed } => {
            let mut cfg: PipelineConfig = load_json_file(&config)?;
            if let Some(seed) = seed {
                cfg.master_seed = seed;
            }
            cfg.validate()?;
            let eff = genesig::pipeline::effective_config(&cfg);
            let (x, y, _) = genesig::pipeline::resolve_data(&eff.data)?;
            let (x_normalized, _) = zscore(&x)?;
            let smote_seed = eff.master_seed.wrapping_add(5);
            let (net, bundle) = train_full_model(&eff.model, &x_normalized, &y, smote_seed)?;
            net.save(&out)?;
            let report_path = sibling(&out, "_report", "json");
            bundle.save_json(&report_path)?;
            log::info!("wrote {} and {}", out.display(), report_path.display());
            Ok(())
        }
        Command::Attribute {
            model,
            expression,
            labels,
            delimiter,
            method,
            seed,
            out,
        } => {
            let net = DenseNetwork::load(&model)?;
            let (x, y) = load_cohort(&expression, &labels, delimiter)?;
            let (x_normalized, _) = zscore(&x)?;
            let method = parse_method(&method, seed)?;
            let maps = attribute_dataset(&net, &x_normalized, &y, &method)?;
            write_attribution_csv(&maps, x.gene_names(), &out)?;
            log::info!("wrote {} attribution maps to {}", maps.len(), out.display());
            Ok(())
        }
        Command::Signature {
            model,
            expression,
            labels,
            delimiter,
            config,
            seed,
            out,
        } => {
            let net = DenseNetwork::load(&model)?;
            let (x, y) = load_cohort(&expression, &labels, delimiter)?;
            let (x_normalized, _) = zscore(&x)?;
            let mut cfg: SignatureConfig = match config {
                Some(path) => load_json_file(&path)?,
                None => SignatureConfig::default(),
            };
            if let Some(seed) = seed {
                for method in &mut cfg.methods {
                    if let AttributionMethod::Smoothgrad { seed: s, .. } = method {
                        *s = seed;
                    }
                }
            }
            let signature = build_signature(&net, &x_normalized, &y, &cfg)?;
            signature.save_json(&out)?;
            let flat_path = sibling(&out, "", "txt");
            signature.save_flat_text(&flat_path)?;
            log::info!(
                "wrote {} genes to {} and {}",
                signature.genes.len(),
                out.display(),
                flat_path.display()
            );
            Ok(())
        }
        Command::Evaluate {
            expression,
            labels,
            delimiter,
            signature,
            config,
            folds,
            seed,
            out,
        } => {
            let (x, y) = load_cohort(&expression, &labels, delimiter)?;
            let genes = load_signature_genes(&signature)?;
            let mut cfg: EvalConfig = match config {
                Some(path) => load_json_file(&path)?,
                None => EvalConfig::default(),
            };
            if let Some(folds) = folds {
                cfg.k_folds = folds;
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let outcome = evaluate_signature(&x, &y, &genes, &cfg)?;
            outcome.report.save_json(&out)?;
            let confusion_path = sibling(&out, "_confusion", "csv");
            outcome.pooled_confusion.write_csv(&confusion_path)?;
            let folds_path = sibling(&out, "_fold_accuracy", "csv");
            std::fs::write(&folds_path, outcome.report.fold_accuracy_csv_string())?;
            log::info!(
                "mean accuracy {:.4} over {} folds; wrote {}",
                outcome.report.accuracy_mean,
                cfg.k_folds,
                out.display()
            );
            Ok(())
        }
        Command::Correlate {
            expression,
            delimiter,
            signature,
            out,
        } => {
            let x = load_expression_only(&expression, delimiter_byte(delimiter))?;
            let genes = load_signature_genes(&signature)?;
            let corr = pearson_matrix(&x, &genes)?;
            corr.write_csv(&out)?;
            log::info!("wrote {}x{} correlations to {}", genes.len(), genes.len(), out.display());
            Ok(())
        }
        Command::Pipeline { config, out, seed } => {
            let mut cfg: PipelineConfig = match config {
                Some(path) => load_json_file(&path)?,
                None => PipelineConfig::default(),
            };
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            if let Some(seed) = seed {
                cfg.master_seed = seed;
            }
            let outcome = run_pipeline(&cfg)?;
            print!("{}", outcome.manifest.to_json_string()?);
            Ok(())
        }
    }
}
