//! Tensor files, PGM images and IDX ingestion.

use std::path::Path;

use crate::binio::{meta_get, Reader, Writer};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const TENSOR_MAGIC: &[u8; 4] = b"AIQT";
pub const TENSOR_VERSION: u32 = 1;

/// A tensor plus the `key=value` metadata stored with it (dataset seed,
/// task, image size).
#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub tensor: Tensor,
    pub meta: Vec<(String, String)>,
}

impl TensorFile {
    pub fn new(tensor: Tensor) -> Self {
        Self { tensor, meta: Vec::new() }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.retain(|(k, _)| k != key);
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        meta_get(&self.meta, key).ok()
    }

    /// Image height and width when the file records them.
    pub fn image_size(&self) -> Option<(usize, usize)> {
        Some((self.meta("height")?.parse().ok()?, self.meta("width")?.parse().ok()?))
    }

    /// `"AIQT"`, `u32` version, `u64`-length metadata text, then one tensor.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(TENSOR_MAGIC);
        w.u32(TENSOR_VERSION);
        w.meta(&self.meta);
        w.tensor(&self.tensor);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(TENSOR_MAGIC)?;
        let at = r.offset();
        let version = r.u32("version")?;
        if version != TENSOR_VERSION {
            return Err(Error::format(at, format!("unsupported tensor file version {version}")));
        }
        let meta = r.meta()?;
        let tensor = r.tensor()?;
        r.expect_end()?;
        Ok(Self { tensor, meta })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Binary greymap: header `P5\n{w} {h}\n255\n`, then one byte per pixel,
/// `round(clamp(x, 0, 1) * 255)`.
pub fn pgm_bytes(pixels: &[f64], height: usize, width: usize) -> Result<Vec<u8>> {
    if pixels.len() != height * width {
        return Err(Error::domain(format!("{} pixels for a {height}x{width} image", pixels.len())));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(pixels.iter().map(|x| (x.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(out)
}

pub fn write_pgm(path: &Path, pixels: &[f64], height: usize, width: usize) -> Result<()> {
    std::fs::write(path, pgm_bytes(pixels, height, width)?).map_err(|e| Error::io(path, e))
}

/// IDX data with unsigned-byte entries (type `0x08`). Returns a `[d0, rest]`
/// tensor scaled by 1/255, each item flattened in raster order, plus the
/// item shape `d1, d2, …`.
pub fn parse_idx(bytes: &[u8]) -> Result<(Tensor, Vec<usize>)> {
    let need = |at: usize, n: usize, what: &str| {
        if bytes.len() < at + n {
            Err(Error::format(
                at as u64,
                format!("truncated {what}: need {n} bytes, {} left", bytes.len().saturating_sub(at)),
            ))
        } else {
            Ok(())
        }
    };
    need(0, 4, "magic")?;
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::format(0, "IDX magic must start with two zero bytes"));
    }
    if bytes[2] != 0x08 {
        return Err(Error::format(2, format!("unsupported IDX element type 0x{:02x}", bytes[2])));
    }
    let rank = bytes[3] as usize;
    if rank == 0 {
        return Err(Error::format(3, "IDX rank must be at least 1"));
    }
    need(4, 4 * rank, "dimension sizes")?;
    let dims: Vec<usize> = (0..rank)
        .map(|i| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize)
        .collect();
    let start = 4 + 4 * rank;
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::format(4, "IDX size overflows"))?;
    need(start, count, "pixel data")?;
    if bytes.len() > start + count {
        return Err(Error::format((start + count) as u64, format!("{} trailing bytes", bytes.len() - start - count)));
    }
    let item: usize = dims[1..].iter().product();
    let data = bytes[start..].iter().map(|&b| b as f64 / 255.0).collect();
    Ok((Tensor::new(vec![dims[0], item], data)?, dims[1..].to_vec()))
}

pub fn read_idx(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_idx(&bytes)?.0)
}
