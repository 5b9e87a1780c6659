//! `QTSR` binary tensor files.
//!
//! Layout: magic `QTSR`, `u8` version (1), `u8` signedness flag, `u8` bits,
//! `u8` rank, little-endian `u32` dims, little-endian `f64` scale, then raw
//! `i8`/`u8` values in row-major order.

use std::fs;
use std::path::Path;

use crate::bitplane::QuantizedTensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"QTSR";
const VERSION: u8 = 1;

pub fn encode(t: &QuantizedTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * t.dims().len() + t.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(t.is_signed() as u8);
    out.push(t.bits());
    out.push(t.dims().len() as u8);
    for &d in t.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&t.scale().to_le_bytes());
    out.extend(t.values().iter().map(|&v| v as u8));
    out
}

pub fn decode(bytes: &[u8]) -> Result<QuantizedTensor> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = cur.u8()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let signed = match cur.u8()? {
        0 => false,
        1 => true,
        f => return Err(Error::Format(format!("bad signedness flag {f}"))),
    };
    let bits = cur.u8()?;
    let rank = cur.u8()? as usize;
    let dims = (0..rank)
        .map(|_| {
            cur.take(4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
        })
        .collect::<Result<Vec<_>>>()?;
    let scale = f64::from_le_bytes(cur.take(8)?.try_into().unwrap());
    let n: usize = dims.iter().product();
    let raw = cur.take(n)?;
    if cur.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes",
            bytes.len() - cur.pos
        )));
    }
    let values = raw
        .iter()
        .map(|&b| if signed { b as i8 as i32 } else { b as i32 })
        .collect();
    QuantizedTensor::new(dims, values, signed, bits, scale)
        .map_err(|e| Error::Format(e.to_string()))
}

pub fn read(path: &Path) -> Result<QuantizedTensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn write(path: &Path, t: &QuantizedTensor) -> Result<()> {
    fs::write(path, encode(t)).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}
