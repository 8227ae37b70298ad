//! Helpers shared by the feature and weight containers: an ASCII header line
//! reader over an in-memory byte buffer plus little-endian payload decoding.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) struct Cursor<'a> {
    path: PathBuf,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(path: &Path, bytes: &'a [u8]) -> Self {
        Self {
            path: path.to_path_buf(),
            bytes,
            pos: 0,
        }
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    pub fn error(&self, field: impl Into<String>, message: impl Into<String>) -> Error {
        Error::format(&self.path, field, message)
    }

    /// Next `\n`-terminated ASCII line, without the terminator.
    pub fn line(&mut self, field: &str) -> Result<&'a str> {
        if self.at_end() {
            return Err(self.error(field, "unexpected end of file"));
        }
        let rest = &self.bytes[self.pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| self.error(field, "unterminated header line"))?;
        let line = std::str::from_utf8(&rest[..end])
            .map_err(|_| self.error(field, "header line is not ASCII"))?;
        self.pos += end + 1;
        Ok(line)
    }

    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if available < n {
            return Err(self.error(
                field,
                format!("truncated payload: need {n} bytes, {available} left"),
            ));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn f32s(&mut self, count: usize, field: &str) -> Result<Vec<f64>> {
        let raw = self.take(count * 4, field)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect())
    }

    pub fn f64s(&mut self, count: usize, field: &str) -> Result<Vec<f64>> {
        let raw = self.take(count * 8, field)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }
}

pub(crate) fn push_f32s(out: &mut Vec<u8>, values: &[f64]) {
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub(crate) fn push_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for &v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Parses whitespace-separated fields of a header line into integers.
pub(crate) fn parse_counts(cursor: &Cursor<'_>, line: &str, field: &str, expected: usize) -> Result<Vec<usize>> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() != expected {
        return Err(cursor.error(
            field,
            format!("expected {expected} fields, found {} in `{line}`", parts.len()),
        ));
    }
    parts
        .iter()
        .map(|p| {
            p.parse::<usize>()
                .map_err(|_| cursor.error(field, format!("`{p}` is not a count")))
        })
        .collect()
}
