//! Flat binary parameter files: the magic `LWAILNET1`, then for each tensor
//! `rank: u32`, `dims: [u32; rank]`, `values: [f64]`, all little-endian.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::AutodiffError;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 9] = b"LWAILNET1";

pub fn encode_tensors(tensors: &[&Tensor]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    for t in tensors {
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<Tensor>, AutodiffError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(AutodiffError::Checkpoint("missing LWAILNET1 magic".into()));
    }
    let mut cur = Cursor { bytes, pos: MAGIC.len() };
    let mut out = Vec::new();
    while cur.pos < bytes.len() {
        let rank = cur.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.u32()? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = cur.take(8 * n)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        out.push(Tensor::new(shape, data)?);
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], AutodiffError> {
        if self.pos + n > self.bytes.len() {
            return Err(AutodiffError::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, AutodiffError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn save_tensors(path: &Path, tensors: &[&Tensor]) -> Result<(), AutodiffError> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_tensors(tensors))?;
    Ok(())
}

pub fn load_tensors(path: &Path) -> Result<Vec<Tensor>, AutodiffError> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    decode_tensors(&buf)
}

/// Copies loaded values into existing parameter tensors, checking shapes.
pub fn restore_into(params: &mut [&mut Tensor], loaded: &[Tensor]) -> Result<(), AutodiffError> {
    if params.len() != loaded.len() {
        return Err(AutodiffError::Checkpoint(format!(
            "expected {} tensors, file has {}",
            params.len(),
            loaded.len()
        )));
    }
    for (i, (p, l)) in params.iter_mut().zip(loaded).enumerate() {
        if p.shape() != l.shape() {
            return Err(AutodiffError::Checkpoint(format!(
                "tensor {i}: expected shape {:?}, file has {:?}",
                p.shape(),
                l.shape()
            )));
        }
        p.data_mut().copy_from_slice(l.data());
    }
    Ok(())
}
