//! Parameter checkpoint files.
//!
//! Layout (little-endian): magic `LGN1`, `u32` entry count, then per entry
//! `u32` name length, UTF-8 name bytes, `u32` rank, `rank` x `u64` extents,
//! and the raw `f64` values in row-major order.

use std::io::{BufReader, Write};
use std::path::Path;

use crate::binio::{self, put_f64s, put_u32, put_u64, Reader};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"LGN1";

pub fn write_entries<'a>(w: &mut impl Write, entries: impl ExactSizeIterator<Item = (&'a str, &'a Tensor)>) -> std::io::Result<()> {
    w.write_all(&MAGIC)?;
    put_u32(w, entries.len() as u32)?;
    for (name, t) in entries {
        put_u32(w, name.len() as u32)?;
        w.write_all(name.as_bytes())?;
        put_u32(w, t.rank() as u32)?;
        for &e in t.shape() {
            put_u64(w, e as u64)?;
        }
        put_f64s(w, t.data())?;
    }
    Ok(())
}

pub fn save(path: &Path, entries: &[(&str, &Tensor)]) -> Result<()> {
    binio::atomic_write(path, |w| write_entries(w, entries.iter().copied()))
}

pub fn read_entries(r: impl std::io::Read, context: &str) -> Result<Vec<(String, Tensor)>> {
    let mut r = Reader::new(r, context);
    r.magic(MAGIC)?;
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.vec(len)?)
            .map_err(|_| Error::Input(format!("{context}: parameter name is not UTF-8")))?;
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64()? as usize);
        }
        let n = shape.iter().try_fold(1usize, |a, &e| a.checked_mul(e)).ok_or_else(|| {
            Error::Input(format!("{context}: extents of {name:?} overflow"))
        })?;
        let values = r.f64s(n)?;
        out.push((name, Tensor::new(&shape, values)?));
    }
    r.finish()?;
    Ok(out)
}

pub fn load(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let f = binio::open(path)?;
    read_entries(BufReader::new(f), &path.display().to_string())
}
