use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::InstructionPair;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExportReport {
    pub path: PathBuf,
    pub count: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("i/o error writing {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {source}")]
    Parse { path: String, line: usize, source: serde_json::Error },
    #[error("csv error writing {path}: {source}")]
    Csv { path: String, source: csv::Error },
}

fn temp_path(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp-{}", std::process::id()))
}

/// Writes to a sibling temp file and renames it into place, so a failed
/// export leaves no partial file behind.
pub(crate) fn write_atomically(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> std::io::Result<()> {
    let tmp = temp_path(path);
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        body(&mut w)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}

/// One JSON object per line with keys in the order instruction, response,
/// source_url, strategy, parent_id.
pub fn export_jsonl(pairs: &[InstructionPair], path: &Path) -> Result<ExportReport, ExportError> {
    write_atomically(path, |w| {
        for p in pairs {
            serde_json::to_writer(&mut *w, p).map_err(std::io::Error::other)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })
    .map_err(|source| ExportError::Io { path: path.display().to_string(), source })?;
    Ok(ExportReport { path: path.to_path_buf(), count: pairs.len() })
}

pub fn load_jsonl(path: &Path) -> Result<Vec<InstructionPair>, ExportError> {
    let p = path.display().to_string();
    let f = File::open(path).map_err(|source| ExportError::Io { path: p.clone(), source })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|source| ExportError::Io { path: p.clone(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let pair = serde_json::from_str(&line).map_err(|source| ExportError::Parse { path: p.clone(), line: i + 1, source })?;
        out.push(pair);
    }
    Ok(out)
}

/// Review sheet for human validation: one row per pair with an empty
/// `approved` column to fill in.
pub fn write_review_csv(pairs: &[InstructionPair], path: &Path) -> Result<(), ExportError> {
    let p = path.display().to_string();
    let mut w = csv::Writer::from_path(path).map_err(|source| ExportError::Csv { path: p.clone(), source })?;
    let csv_err = |source| ExportError::Csv { path: p.clone(), source };
    w.write_record(["id", "strategy", "source_url", "instruction", "response", "parent_id", "approved"])
        .map_err(csv_err)?;
    for pair in pairs {
        w.write_record([
            pair.id().as_str(),
            pair.strategy.as_str(),
            &pair.source_url,
            &pair.instruction,
            &pair.response,
            pair.parent_id.as_deref().unwrap_or(""),
            "",
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|source| ExportError::Io { path: p.clone(), source })?;
    Ok(())
}
