//! Little-endian binary helpers and atomic file output.

use std::fs::{self, File};
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) struct Reader<R> {
    inner: R,
    context: String,
}

impl<R: Read> Reader<R> {
    pub fn new(inner: R, context: impl Into<String>) -> Self {
        Self { inner, context: context.into() }
    }

    pub fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| self.map(e))?;
        Ok(buf)
    }

    pub fn vec(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner.read_exact(&mut buf).map_err(|e| self.map(e))?;
        Ok(buf)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.vec(n.checked_mul(8).ok_or_else(|| self.truncated())?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    /// Checks a 4-byte tag whose last byte is an ASCII version digit.
    pub fn magic(&mut self, expected: [u8; 4]) -> Result<()> {
        let found = self.bytes::<4>()?;
        if found == expected {
            return Ok(());
        }
        if found[..3] == expected[..3] {
            return Err(Error::Version {
                context: self.context.clone(),
                expected: expected[3],
                found: found[3],
            });
        }
        Err(Error::BadMagic { context: self.context.clone(), expected, found })
    }

    /// Errors unless the stream is exhausted.
    pub fn finish(mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe)? {
            0 => Ok(()),
            _ => Err(Error::Input(format!("{}: trailing bytes after last record", self.context))),
        }
    }

    fn truncated(&self) -> Error {
        Error::Truncated(self.context.clone())
    }

    fn map(&self, e: io::Error) -> Error {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            self.truncated()
        } else {
            Error::Io(e)
        }
    }
}

pub(crate) fn put_u32(w: &mut impl Write, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn put_u64(w: &mut impl Write, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn put_f64s(w: &mut impl Write, vs: &[f64]) -> io::Result<()> {
    for v in vs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

/// Writes through a temporary sibling file and renames it into place.
pub fn atomic_write(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut tmp_name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        f(&mut w)?;
        w.flush()?;
        w.get_ref().sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn atomic_write_str(path: &Path, s: &str) -> Result<()> {
    atomic_write(path, |w| w.write_all(s.as_bytes()))
}
