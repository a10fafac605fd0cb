//! Newline-delimited JSON ledger files.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::runtime::LedgerEntry;

#[derive(Debug, thiserror::Error)]
pub enum LedgerIoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> LedgerIoError + '_ {
    move |source| LedgerIoError::Io { path: path.to_path_buf(), source }
}

pub fn to_line(entry: &LedgerEntry) -> String {
    serde_json::to_string(entry).expect("ledger entries serialize")
}

pub fn parse_entries(text: &str, path: &Path) -> Result<Vec<LedgerEntry>, LedgerIoError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| LedgerIoError::Parse { path: path.to_path_buf(), line: i + 1, message: e.to_string() })
        })
        .collect()
}

pub fn read_ledger(path: &Path) -> Result<Vec<LedgerEntry>, LedgerIoError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line)
            .map_err(|e| LedgerIoError::Parse { path: path.to_path_buf(), line: i + 1, message: e.to_string() })?;
        entries.push(entry);
    }
    Ok(entries)
}

pub fn write_ledger(path: &Path, entries: &[LedgerEntry]) -> Result<(), LedgerIoError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for e in entries {
        writeln!(out, "{}", to_line(e)).map_err(io_err(path))?;
    }
    let file = out.into_inner().map_err(|e| io_err(path)(e.into_error()))?;
    file.sync_all().map_err(io_err(path))
}

/// Appends entries one line at a time and syncs each write.
#[derive(Debug)]
pub struct LedgerWriter {
    path: PathBuf,
    file: File,
}

impl LedgerWriter {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, LedgerIoError> {
        let path = path.into();
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err(&path))?;
        Ok(LedgerWriter { path, file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, entry: &LedgerEntry) -> Result<(), LedgerIoError> {
        let mut line = to_line(entry);
        line.push('\n');
        self.file.write_all(line.as_bytes()).map_err(io_err(&self.path))?;
        self.file.sync_data().map_err(io_err(&self.path))
    }
}
