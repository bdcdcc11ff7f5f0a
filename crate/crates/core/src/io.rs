//! Molecule list files: one SMILES per line, an optional tab-separated 0/1
//! label, `#` comment lines.

use std::fs;
use std::io;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MoleculeRecord {
    pub smiles: String,
    pub label: Option<u8>,
}

#[derive(Debug, Error)]
pub enum ListError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: label must be 0 or 1, got {value:?}")]
    BadLabel { line: usize, value: String },
    #[error("line {line}: expected at most two tab-separated columns")]
    TooManyColumns { line: usize },
}

pub fn parse_molecule_list(text: &str) -> Result<Vec<MoleculeRecord>, ListError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t');
        let smiles = cols.next().unwrap_or("").trim().to_string();
        let label = match cols.next() {
            None => None,
            Some(v) => match v.trim() {
                "0" => Some(0),
                "1" => Some(1),
                other => {
                    return Err(ListError::BadLabel {
                        line: i + 1,
                        value: other.to_string(),
                    })
                }
            },
        };
        if cols.next().is_some() {
            return Err(ListError::TooManyColumns { line: i + 1 });
        }
        out.push(MoleculeRecord { smiles, label });
    }
    Ok(out)
}

pub fn read_molecule_list(path: &Path) -> Result<Vec<MoleculeRecord>, ListError> {
    let text = fs::read_to_string(path).map_err(|source| ListError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_molecule_list(&text)
}

pub fn format_molecule_list(records: &[MoleculeRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.smiles);
        if let Some(l) = r.label {
            out.push('\t');
            out.push_str(if l == 1 { "1" } else { "0" });
        }
        out.push('\n');
    }
    out
}

pub fn write_molecule_list(path: &Path, records: &[MoleculeRecord]) -> Result<(), ListError> {
    fs::write(path, format_molecule_list(records)).map_err(|source| ListError::Io {
        path: path.display().to_string(),
        source,
    })
}
