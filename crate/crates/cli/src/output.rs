use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult};

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> CliResult<PathBuf> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value).map_err(qdrl::Error::from)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

/// Writes `header` and then one row per record, LF-terminated. The header is
/// written even when there are no rows.
pub fn write_csv<R: Serialize>(dir: &Path, name: &str, header: &[&str], rows: &[R]) -> CliResult<PathBuf> {
    let path = dir.join(name);
    let to_io = |e: csv::Error| CliError::io(&path, std::io::Error::other(e));
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(&path)
        .map_err(to_io)?;
    writer.write_record(header).map_err(to_io)?;
    for row in rows {
        writer.serialize(row).map_err(to_io)?;
    }
    writer.flush().map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}
