//! Little-endian binary primitives shared by the checkpoint and tensor files.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Default)]
pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    /// `u32` length followed by UTF-8 bytes.
    pub fn string(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.bytes(s.as_bytes());
    }

    /// `u64` length followed by `key=value` lines.
    pub fn meta(&mut self, meta: &[(String, String)]) {
        let text: String = meta.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        self.u64(text.len() as u64);
        self.bytes(text.as_bytes());
    }

    /// `u32` rank, `u64` dims, then the raw values.
    pub fn tensor(&mut self, t: &Tensor) {
        self.u32(t.rank() as u32);
        for &d in t.shape() {
            self.u64(d as u64);
        }
        self.buf.reserve(8 * t.len());
        for v in t.data() {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    pub fn offset(&self) -> u64 {
        self.pos as u64
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let remaining = self.data.len() - self.pos;
        if n > remaining {
            return Err(Error::format(self.pos as u64, format!("truncated {what}: need {n} bytes, {remaining} left")));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let at = self.offset();
        let got = self.take(4, "magic")?;
        if got != expected {
            return Err(Error::format(
                at,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(expected)
                ),
            ));
        }
        Ok(())
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    pub fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)? as usize;
        let at = self.offset();
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::format(at, format!("{what} is not UTF-8")))
    }

    pub fn meta(&mut self) -> Result<Vec<(String, String)>> {
        let len = self.u64("metadata length")?;
        let at = self.offset();
        let len = usize::try_from(len).map_err(|_| Error::format(at, "metadata length overflows"))?;
        let raw = self.take(len, "metadata block")?;
        let text = std::str::from_utf8(raw).map_err(|_| Error::format(at, "metadata is not UTF-8"))?;
        let mut out = Vec::new();
        let mut line_at = at;
        for line in text.split_terminator('\n') {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(line_at, format!("metadata line {line:?} has no '='")))?;
            out.push((k.to_string(), v.to_string()));
            line_at += line.len() as u64 + 1;
        }
        Ok(out)
    }

    pub fn tensor(&mut self) -> Result<Tensor> {
        let rank = self.u32("tensor rank")? as usize;
        let mut shape = Vec::with_capacity(rank.min(16));
        for _ in 0..rank {
            let at = self.offset();
            let d = self.u64("tensor dimension")?;
            shape.push(usize::try_from(d).map_err(|_| Error::format(at, "dimension overflows"))?);
        }
        let at = self.offset();
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|c| c.checked_mul(8).map(|_| c))
            .ok_or_else(|| Error::format(at, "tensor size overflows"))?;
        let raw = self.take(count * 8, "tensor data")?;
        let data: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::format(at + 8 * i as u64, "non-finite tensor entry"));
        }
        Tensor::new(shape, data)
    }

    pub fn expect_end(&self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(Error::format(self.pos as u64, format!("{} trailing bytes", self.data.len() - self.pos)));
        }
        Ok(())
    }
}

/// Looks up `key` in a metadata block.
pub(crate) fn meta_get<'m>(meta: &'m [(String, String)], key: &str) -> Result<&'m str> {
    meta.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::format(0, format!("metadata key {key:?} missing")))
}

pub(crate) fn meta_parse<T: std::str::FromStr>(meta: &[(String, String)], key: &str) -> Result<T> {
    let raw = meta_get(meta, key)?;
    raw.parse().map_err(|_| Error::format(0, format!("metadata key {key:?} has unparseable value {raw:?}")))
}

pub(crate) fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

pub(crate) fn split_list<T: std::str::FromStr>(raw: &str) -> Option<Vec<T>> {
    if raw.trim().is_empty() {
        return Some(Vec::new());
    }
    raw.split(',').map(|s| s.trim().parse().ok()).collect()
}
