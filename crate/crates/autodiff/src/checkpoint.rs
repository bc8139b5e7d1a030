//! Binary named-tensor store.
//!
//! Layout (little endian): magic `HGCKPT1\0`, u32 tensor count, then per
//! tensor: u16 name length, name bytes (UTF-8), u8 rank, rank × u32 extents,
//! product(extents) × f64.

use std::io::{Read, Write};

use crate::error::{AutodiffError, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"HGCKPT1\0";

fn io_err(e: std::io::Error) -> AutodiffError {
    AutodiffError::Format(e.to_string())
}

pub fn write_tensors<W: Write>(mut w: W, tensors: &[(String, Tensor)]) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        let nb = name.as_bytes();
        let len = u16::try_from(nb.len())
            .map_err(|_| AutodiffError::Format(format!("tensor name too long: {name}")))?;
        let rank = u8::try_from(t.rank())
            .map_err(|_| AutodiffError::Format(format!("rank too large for {name}")))?;
        buf.extend_from_slice(&len.to_le_bytes());
        buf.extend_from_slice(nb);
        buf.push(rank);
        for &e in t.shape() {
            let e = u32::try_from(e)
                .map_err(|_| AutodiffError::Format(format!("extent too large for {name}")))?;
            buf.extend_from_slice(&e.to_le_bytes());
        }
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(io_err)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(AutodiffError::Format("truncated checkpoint".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_tensors<R: Read>(mut r: R) -> Result<Vec<(String, Tensor)>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(io_err)?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(AutodiffError::Format("bad magic".into()));
    }
    let count = c.u32()? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = c.u16()? as usize;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|e| AutodiffError::Format(e.to_string()))?
            .to_string();
        let rank = c.u8()? as usize;
        let shape = (0..rank)
            .map(|_| c.u32().map(|e| e as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
        out.push((name, Tensor::new(&shape, data)?));
    }
    if c.pos != buf.len() {
        return Err(AutodiffError::Format("trailing bytes after last tensor".into()));
    }
    Ok(out)
}
