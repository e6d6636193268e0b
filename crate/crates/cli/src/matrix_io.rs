//! Headerless CSV files holding one matrix row per line.

use std::path::Path;

use anyhow::{bail, Context, Result};
use lassots_core::experiment::format_significant;
use lassots_core::Matrix;

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("{}: line {}", path.display(), i + 1))?;
        let row = record
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .with_context(|| format!("{}: line {} is not numeric", path.display(), i + 1))?;
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("{} holds no rows", path.display());
    }
    Ok(Matrix::from_rows(&rows)?)
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    for i in 0..m.rows() {
        writer.write_record(m.row(i).iter().map(|v| format_significant(*v, 17)))?;
    }
    writer.flush()?;
    Ok(())
}
