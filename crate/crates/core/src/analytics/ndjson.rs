//! Newline-delimited JSON import and export.

use std::io::{self, BufRead, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
#[error("ndjson export failed after {lines_written} lines ({bytes_written} bytes): {source}")]
pub struct ExportError {
    pub lines_written: usize,
    pub bytes_written: usize,
    #[source]
    pub source: io::Error,
}

#[derive(Debug, Error)]
pub enum ImportError {
    #[error("read failed at line {line}: {source}")]
    Io { line: usize, source: io::Error },
    #[error("line {line} is not a valid record: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
}

/// Writes one JSON object per line and returns the bytes written.
pub fn export_ndjson<'a, T, I, W>(items: I, mut out: W) -> Result<usize, ExportError>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
    W: Write,
{
    let mut lines_written = 0;
    let mut bytes_written = 0;
    let fail = |lines_written, bytes_written, source| ExportError {
        lines_written,
        bytes_written,
        source,
    };
    for item in items {
        let mut line = serde_json::to_vec(item)
            .map_err(|e| fail(lines_written, bytes_written, io::Error::other(e)))?;
        line.push(b'\n');
        out.write_all(&line)
            .map_err(|e| fail(lines_written, bytes_written, e))?;
        lines_written += 1;
        bytes_written += line.len();
    }
    out.flush()
        .map_err(|e| fail(lines_written, bytes_written, e))?;
    Ok(bytes_written)
}

/// Lazily parses records from a line stream; blank lines are skipped.
pub struct NdjsonReader<R, T> {
    reader: R,
    line: usize,
    buf: String,
    _marker: std::marker::PhantomData<T>,
}

impl<R: BufRead, T: DeserializeOwned> NdjsonReader<R, T> {
    pub fn new(reader: R) -> Self {
        Self {
            reader,
            line: 0,
            buf: String::new(),
            _marker: std::marker::PhantomData,
        }
    }
}

impl<R: BufRead, T: DeserializeOwned> Iterator for NdjsonReader<R, T> {
    type Item = Result<T, ImportError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            self.line += 1;
            let line = self.line;
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(source) => return Some(Err(ImportError::Io { line, source })),
            }
            let text = self.buf.trim();
            if text.is_empty() {
                continue;
            }
            return Some(
                serde_json::from_str(text).map_err(|source| ImportError::Parse { line, source }),
            );
        }
    }
}

pub fn read_ndjson<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>, ImportError> {
    NdjsonReader::new(reader).collect()
}
