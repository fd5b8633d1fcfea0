//! Little-endian primitives shared by the checkpoint and dataset formats.

use crate::error::{Error, Result};
use std::io::{Read, Write};

pub(crate) struct LeReader<R> {
    inner: R,
    context: &'static str,
}

impl<R: Read> LeReader<R> {
    pub fn new(inner: R) -> LeReader<R> {
        LeReader {
            inner,
            context: "header",
        }
    }

    pub fn exact(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner.read_exact(buf).map_err(|_| Error::Truncated {
            context: self.context.to_string(),
        })
    }

    pub fn u32(&mut self, context: &'static str) -> Result<u32> {
        self.context = context;
        let mut b = [0u8; 4];
        self.exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    pub fn u64(&mut self, context: &'static str) -> Result<u64> {
        self.context = context;
        let mut b = [0u8; 8];
        self.exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    pub fn f64_vec(&mut self, n: usize, context: &'static str) -> Result<Vec<f64>> {
        self.context = context;
        let mut bytes = vec![0u8; n * 8];
        self.exact(&mut bytes)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }

    pub fn string(&mut self, n: usize, context: &'static str) -> Result<String> {
        self.context = context;
        let mut bytes = vec![0u8; n];
        self.exact(&mut bytes)?;
        String::from_utf8(bytes).map_err(|_| Error::Format(format!("{context}: invalid UTF-8")))
    }
}

pub(crate) fn write_f64s(out: &mut impl Write, data: &[f64]) -> std::io::Result<()> {
    for &v in data {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Render sorted key=value metadata lines.
pub(crate) fn render_metadata(pairs: &[(String, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

/// Parse key=value metadata lines.
pub(crate) fn parse_metadata(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for line in text.lines() {
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("metadata line without '=': {line}")))?;
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}
