//! `.nt` binary tensor files.
//!
//! Layout: magic `NTSR`, `u32` version (1), `u32` rank, `u32` dims, then the
//! payload as little-endian `f32` in row-major order. All integers are
//! little-endian. Tensors are always written with rank 4; lower ranks are
//! accepted on read and padded with leading ones.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NTSR";
pub const VERSION: u32 = 1;

pub fn write_nt<W: Write>(out: &mut W, t: &Tensor) -> Result<()> {
    let mut buf = Vec::with_capacity(12 + 16 + 4 * t.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&4u32.to_le_bytes());
    for d in t.shape() {
        let d = u32::try_from(d).map_err(|_| Error::Format(format!("dimension {d} exceeds u32")))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("truncated tensor record".into())
    } else {
        Error::Io(e)
    }
}

pub fn read_nt<R: Read>(r: &mut R) -> Result<Tensor> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad tensor magic {magic:?}")));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported tensor version {version}")));
    }
    let rank = read_u32(r)? as usize;
    if rank > 4 {
        return Err(Error::Format(format!("rank {rank} exceeds 4")));
    }
    let mut shape = [1usize; 4];
    for i in 0..rank {
        shape[4 - rank + i] = read_u32(r)? as usize;
    }
    let len: usize = shape.iter().product();
    let mut bytes = vec![0u8; len * 4];
    r.read_exact(&mut bytes).map_err(truncated)?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Tensor::from_vec(shape, data)
}

pub fn save_nt(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let mut buf = Vec::new();
    write_nt(&mut buf, t)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_nt(path: impl AsRef<Path>) -> Result<Tensor> {
    let bytes = fs::read(path)?;
    let mut cursor = bytes.as_slice();
    let t = read_nt(&mut cursor)?;
    if !cursor.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes", cursor.len())));
    }
    Ok(t)
}
