//! Output helpers: CSV tables, JSON documents and column manifests.

use std::fs;
use std::path::Path;

use serde::Serialize;

pub fn ensure_dir(dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dir)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), crate::RunError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), crate::RunError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a numeric table with the given header.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<(), crate::RunError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct Column {
    pub name: &'static str,
    pub description: &'static str,
}

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub file: String,
    pub columns: Vec<Column>,
}

pub fn col(name: &'static str, description: &'static str) -> Column {
    Column { name, description }
}

pub fn write_manifest(dir: &Path, files: Vec<FileEntry>) -> Result<(), crate::RunError> {
    write_json(&dir.join("manifest.json"), &files)
}
