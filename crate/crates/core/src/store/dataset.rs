use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::StoreError;
use crate::harness::LabeledDataset;
use crate::jsonl;
use crate::FeatureVector;

/// Writes one JSON object per row. Rows with a non-finite feature are
/// rejected before anything is written.
pub fn write_rows<W: Write>(mut writer: W, rows: &[FeatureVector]) -> Result<(), StoreError> {
    if let Some(row) = rows.iter().position(|r| !r.is_finite()) {
        return Err(StoreError::NonFinite { row });
    }
    for r in rows {
        jsonl::write_line(&mut writer, r)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_rows<R: BufRead>(reader: R) -> Result<Vec<FeatureVector>, StoreError> {
    Ok(jsonl::read_lines(reader).collect::<Result<_, _>>()?)
}

/// Decodes an in-memory dataset, checking finiteness and label consistency.
pub fn parse_rows(bytes: &[u8]) -> Result<LabeledDataset, StoreError> {
    Ok(LabeledDataset::new(read_rows(bytes)?)?)
}

/// Writes the dataset atomically: a temporary file in the target directory
/// is renamed over `path` once complete.
pub fn write_dataset(rows: &[FeatureVector], path: &Path) -> Result<(), StoreError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    let mut w = BufWriter::new(tmp);
    write_rows(&mut w, rows)?;
    let tmp = w.into_inner().map_err(|e| e.into_error())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<LabeledDataset, StoreError> {
    Ok(LabeledDataset::new(read_rows(BufReader::new(File::open(path)?))?)?)
}
