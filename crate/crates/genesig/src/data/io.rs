//! CSV/TSV ingestion and writing for expression matrices and label files.
//!
//! Expression files have a header row (`sample_id,<gene>,<gene>,…`) and one
//! row per sample. Label files have a `sample_id,label` header and one row
//! per sample; class names are the sorted distinct labels. Loading joins the
//! two on sample id, keeps the expression-file order, and reports how many
//! samples were dropped from either side.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use crate::data::{ExpressionMatrix, LabelVector};
use crate::error::{Error, Result};

/// Result of loading an expression file joined with a labels file.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub matrix: ExpressionMatrix,
    pub labels: LabelVector,
    /// Expression rows without a matching label.
    pub dropped_unlabeled: usize,
    /// Label rows without a matching expression row.
    pub dropped_unmeasured: usize,
}

impl LoadedDataset {
    /// Total samples present in one file but not the other.
    pub fn dropped_samples(&self) -> usize {
        self.dropped_unlabeled + self.dropped_unmeasured
    }
}

/// Picks a delimiter from the file extension: `.tsv`/`.tab` mean tab,
/// anything else comma.
pub fn infer_delimiter(path: &Path) -> u8 {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("tsv") || ext.eq_ignore_ascii_case("tab") => b'\t',
        _ => b',',
    }
}

fn reader(path: &Path, delimiter: Option<u8>) -> Result<csv::Reader<std::fs::File>> {
    let delim = delimiter.unwrap_or_else(|| infer_delimiter(path));
    csv::ReaderBuilder::new()
        .delimiter(delim)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("cannot open '{}': {}", path.display(), e),
            )),
            _ => Error::Csv(e),
        })
}

/// Loads an expression matrix and its labels, joining on sample id.
///
/// `delimiter` overrides extension-based inference for both files.
pub fn load_expression(
    expression_path: &Path,
    labels_path: &Path,
    delimiter: Option<u8>,
) -> Result<LoadedDataset> {
    let (gene_names, mut rows) = read_expression_rows(expression_path, delimiter)?;
    let label_map = read_label_rows(labels_path, delimiter)?;

    let class_names: Vec<String> = label_map
        .values()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .cloned()
        .collect();
    let class_index: HashMap<&str, usize> = class_names
        .iter()
        .enumerate()
        .map(|(i, name)| (name.as_str(), i))
        .collect();

    let mut sample_ids = Vec::new();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut matched: HashSet<String> = HashSet::new();
    let mut dropped_unlabeled = 0usize;
    for (id, row) in rows.drain(..) {
        match label_map.get(&id) {
            Some(class) => {
                labels.push(class_index[class.as_str()]);
                matched.insert(id.clone());
                sample_ids.push(id);
                values.extend(row);
            }
            None => dropped_unlabeled += 1,
        }
    }
    let dropped_unmeasured = label_map.len() - matched.len();
    if sample_ids.is_empty() {
        return Err(Error::Format(format!(
            "no samples shared between '{}' and '{}'",
            expression_path.display(),
            labels_path.display()
        )));
    }
    if dropped_unlabeled > 0 || dropped_unmeasured > 0 {
        log::warn!(
            "dropped {dropped_unlabeled} unlabeled expression rows and \
             {dropped_unmeasured} labels without expression"
        );
    }

    let matrix = ExpressionMatrix::new(values, gene_names, sample_ids)?;
    let labels = LabelVector::new(labels, class_names)?;
    Ok(LoadedDataset {
        matrix,
        labels,
        dropped_unlabeled,
        dropped_unmeasured,
    })
}

/// Loads an expression matrix alone, for operations that need no labels.
pub fn load_expression_only(path: &Path, delimiter: Option<u8>) -> Result<ExpressionMatrix> {
    let (gene_names, rows) = read_expression_rows(path, delimiter)?;
    let mut sample_ids = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len() * gene_names.len());
    for (id, row) in rows {
        sample_ids.push(id);
        values.extend(row);
    }
    ExpressionMatrix::new(values, gene_names, sample_ids)
}

/// Gene names plus `(sample_id, values)` rows, as parsed from disk.
type ExpressionRows = (Vec<String>, Vec<(String, Vec<f64>)>);

/// Reads the expression file into (gene names, per-sample rows).
fn read_expression_rows(path: &Path, delimiter: Option<u8>) -> Result<ExpressionRows> {
    let mut rdr = reader(path, delimiter)?;
    let mut records = rdr.records();

    let header = match records.next() {
        Some(rec) => rec?,
        None => {
            return Err(Error::Format(format!(
                "expression file '{}' is empty",
                path.display()
            )))
        }
    };
    if header.len() < 2 {
        return Err(Error::Format(
            "expression header must list at least one gene after the sample-id column".into(),
        ));
    }
    let gene_names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut seen_genes = HashSet::new();
    for g in &gene_names {
        if g.is_empty() {
            return Err(Error::Format("empty gene name in expression header".into()));
        }
        if !seen_genes.insert(g.as_str()) {
            return Err(Error::Format(format!("duplicate gene name: '{g}'")));
        }
    }

    let mut rows = Vec::new();
    let mut seen_ids = HashSet::new();
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        let file_row = i + 2; // 1-based, after the header
        if rec.len() == 1 && rec[0].is_empty() {
            continue; // ignore blank lines
        }
        if rec.len() != gene_names.len() + 1 {
            return Err(Error::Format(format!(
                "row {} has {} fields, expected {}",
                file_row,
                rec.len(),
                gene_names.len() + 1
            )));
        }
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(Error::Format(format!("empty sample id at row {file_row}")));
        }
        if !seen_ids.insert(id.clone()) {
            return Err(Error::Format(format!(
                "duplicate sample id '{id}' at row {file_row}"
            )));
        }
        let mut row = Vec::with_capacity(gene_names.len());
        for (j, cell) in rec.iter().skip(1).enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: file_row,
                column: j + 2,
                message: format!("'{cell}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: file_row,
                    column: j + 2,
                    message: format!("'{cell}' is not finite"),
                });
            }
            row.push(v);
        }
        rows.push((id, row));
    }
    Ok((gene_names, rows))
}

/// Reads the labels file into a sample-id → class-name map.
fn read_label_rows(path: &Path, delimiter: Option<u8>) -> Result<HashMap<String, String>> {
    let mut rdr = reader(path, delimiter)?;
    let mut records = rdr.records();
    if records.next().is_none() {
        return Err(Error::Format(format!(
            "labels file '{}' is empty",
            path.display()
        )));
    }
    let mut map = HashMap::new();
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        let file_row = i + 2;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != 2 {
            return Err(Error::Format(format!(
                "labels row {} has {} fields, expected 2",
                file_row,
                rec.len()
            )));
        }
        let (id, label) = (rec[0].to_string(), rec[1].to_string());
        if id.is_empty() || label.is_empty() {
            return Err(Error::Format(format!(
                "empty sample id or label at row {file_row}"
            )));
        }
        if map.insert(id.clone(), label).is_some() {
            return Err(Error::Format(format!(
                "duplicate sample id '{id}' in labels at row {file_row}"
            )));
        }
    }
    if map.is_empty() {
        return Err(Error::Format(format!(
            "labels file '{}' has no data rows",
            path.display()
        )));
    }
    Ok(map)
}

/// Writes an expression matrix in the loader's format.
pub fn write_expression(
    matrix: &ExpressionMatrix,
    path: &Path,
    delimiter: Option<u8>,
) -> Result<()> {
    let delim = delimiter.unwrap_or_else(|| infer_delimiter(path));
    let mut wtr = csv::WriterBuilder::new().delimiter(delim).from_path(path)?;
    let mut header = vec!["sample_id".to_string()];
    header.extend(matrix.gene_names().iter().cloned());
    wtr.write_record(&header)?;
    let mut record = Vec::with_capacity(matrix.n_genes() + 1);
    for s in 0..matrix.n_samples() {
        record.clear();
        record.push(matrix.sample_ids()[s].clone());
        record.extend(matrix.row(s).iter().map(|v| v.to_string()));
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes labels in the loader's format, using the class names of `labels`.
pub fn write_labels(
    sample_ids: &[String],
    labels: &LabelVector,
    path: &Path,
    delimiter: Option<u8>,
) -> Result<()> {
    if sample_ids.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} sample ids but {} labels",
            sample_ids.len(),
            labels.len()
        )));
    }
    let delim = delimiter.unwrap_or_else(|| infer_delimiter(path));
    let mut wtr = csv::WriterBuilder::new().delimiter(delim).from_path(path)?;
    wtr.write_record(["sample_id", "label"])?;
    for (id, &label) in sample_ids.iter().zip(labels.labels()) {
        wtr.write_record([id.as_str(), labels.class_names()[label].as_str()])?;
    }
    wtr.flush()?;
    Ok(())
}
