//! CSV dataset interchange: first column integer label, remaining columns
//! real features. A header row is detected and skipped when the first
//! field does not parse as an integer.

use std::path::Path;

use anyhow::{bail, Context, Result};
use hiq_core::data::Dataset;
use ndarray::Array2;

pub fn read_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .with_context(|| format!("cannot open dataset {}", path.display()))?;
    let mut labels: Vec<i64> = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("line {}", line + 1))?;
        if record.is_empty() || (record.len() == 1 && record[0].trim().is_empty()) {
            continue;
        }
        let first = record[0].trim();
        let label: i64 = match first.parse() {
            Ok(l) => l,
            Err(_) if line == 0 => continue, // header row
            Err(e) => bail!("line {}: label '{}' is not an integer: {}", line + 1, first, e),
        };
        let features: Vec<f64> = record
            .iter()
            .skip(1)
            .enumerate()
            .map(|(col, f)| {
                f.trim().parse::<f64>().with_context(|| {
                    format!("line {}: column {} is not a number", line + 1, col + 2)
                })
            })
            .collect::<Result<_>>()?;
        if let Some(prev) = rows.first() {
            if features.len() != prev.len() {
                bail!(
                    "line {}: {} features, expected {}",
                    line + 1,
                    features.len(),
                    prev.len()
                );
            }
        }
        labels.push(label);
        rows.push(features);
    }
    if rows.is_empty() {
        bail!("dataset {} has no data rows", path.display());
    }
    let dim = rows[0].len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let features = Array2::from_shape_vec((labels.len(), dim), flat)?;
    Ok(Dataset::new(features, labels)?)
}

pub fn write_csv(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("cannot write dataset {}", path.display()))?;
    for (i, &label) in dataset.labels().iter().enumerate() {
        let mut record = vec![label.to_string()];
        record.extend(dataset.features().row(i).iter().map(|v| v.to_string()));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}
