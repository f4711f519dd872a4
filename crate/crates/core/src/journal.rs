//! Append-only JSON-lines journal.
//!
//! Each record is one line written with a single `write_all` and flushed to
//! disk before `append` returns. A crash can therefore only leave a partial
//! final line, which [`Journal::open`] truncates away. A malformed line that
//! *is* newline-terminated means the file was damaged some other way and is
//! reported rather than skipped.

use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("journal {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("journal {path} line {line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error("cannot encode journal record: {0}")]
    Encode(#[from] serde_json::Error),
}

/// Result of scanning a journal file.
struct Scan<T> {
    records: Vec<T>,
    /// Byte length of the well-formed prefix.
    valid_len: u64,
    file_len: u64,
}

fn scan<T: DeserializeOwned>(path: &Path, bytes: &[u8]) -> Result<Scan<T>, JournalError> {
    let mut records = Vec::new();
    let mut offset = 0usize;
    let mut line_no = 0usize;
    while offset < bytes.len() {
        let Some(nl) = bytes[offset..].iter().position(|&b| b == b'\n') else {
            break; // torn tail
        };
        line_no += 1;
        let line = &bytes[offset..offset + nl];
        offset += nl + 1;
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let rec = serde_json::from_slice(line).map_err(|e| JournalError::Corrupt {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        records.push(rec);
    }
    Ok(Scan { records, valid_len: offset as u64, file_len: bytes.len() as u64 })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> JournalError + '_ {
    move |source| JournalError::Io { path: path.to_path_buf(), source }
}

/// Writer handle on a journal file.
#[derive(Debug)]
pub struct Journal<T> {
    path: PathBuf,
    file: File,
    _records: PhantomData<fn(T)>,
}

impl<T: Serialize + DeserializeOwned> Journal<T> {
    /// Open (creating if needed) for appending, drop any torn tail, and
    /// return the records already present.
    ///
    /// Callers must ensure a single writer; see the owners of each journal.
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, Vec<T>), JournalError> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(io_err(&path))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(io_err(&path))?;
        let scan = scan::<T>(&path, &bytes)?;
        if scan.valid_len < scan.file_len {
            file.set_len(scan.valid_len).map_err(io_err(&path))?;
            file.sync_all().map_err(io_err(&path))?;
        }
        Ok((Self { path, file, _records: PhantomData }, scan.records))
    }

    /// Read every complete record without modifying the file. A missing file
    /// reads as empty.
    pub fn read_all(path: impl AsRef<Path>) -> Result<Vec<T>, JournalError> {
        let path = path.as_ref();
        match std::fs::read(path) {
            Ok(bytes) => Ok(scan(path, &bytes)?.records),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(io_err(path)(e)),
        }
    }

    /// Durably append one record.
    pub fn append(&mut self, record: &T) -> Result<(), JournalError> {
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        self.file.write_all(&line).map_err(io_err(&self.path))?;
        self.file.sync_data().map_err(io_err(&self.path))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
