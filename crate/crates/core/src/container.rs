//! Little-endian binary containers shared by the prior, transfer-operator and
//! mouth-database files.
//!
//! Layout: an ASCII magic string, then a sequence of fields. Every scalar is
//! 8 bytes little-endian (`u64` or `f64`); texture planes use `f32`. Readers
//! consume fields in exactly the order writers emitted them.

use std::io::{Read, Write};

use crate::{Error, Result};

pub struct ContainerWriter<W: Write> {
    inner: W,
}

impl<W: Write> ContainerWriter<W> {
    pub fn new(mut inner: W, magic: &[u8]) -> Result<Self> {
        inner.write_all(magic)?;
        Ok(Self { inner })
    }

    pub fn u64(&mut self, v: u64) -> Result<()> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    pub fn usize(&mut self, v: usize) -> Result<()> {
        self.u64(v as u64)
    }

    pub fn f64(&mut self, v: f64) -> Result<()> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    pub fn f64s(&mut self, vs: &[f64]) -> Result<()> {
        for v in vs {
            self.f64(*v)?;
        }
        Ok(())
    }

    pub fn f32s(&mut self, vs: &[f32]) -> Result<()> {
        for v in vs {
            self.inner.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn usizes(&mut self, vs: &[usize]) -> Result<()> {
        for v in vs {
            self.usize(*v)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub struct ContainerReader<R: Read> {
    inner: R,
}

impl<R: Read> ContainerReader<R> {
    pub fn new(mut inner: R, magic: &[u8]) -> Result<Self> {
        let mut buf = vec![0u8; magic.len()];
        inner.read_exact(&mut buf)?;
        if buf != magic {
            return Err(Error::Format(format!(
                "bad magic: expected {:?}",
                String::from_utf8_lossy(magic)
            )));
        }
        Ok(Self { inner })
    }

    fn bytes8(&mut self) -> Result<[u8; 8]> {
        let mut b = [0u8; 8];
        self.inner
            .read_exact(&mut b)
            .map_err(|e| Error::Format(format!("truncated container: {e}")))?;
        Ok(b)
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes8()?))
    }

    /// Reads a count, rejecting values too large to be a plausible length.
    pub fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        if v > (1 << 40) {
            return Err(Error::Format(format!("implausible length {v}")));
        }
        Ok(v as usize)
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes8()?))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let mut b = [0u8; 4];
            self.inner
                .read_exact(&mut b)
                .map_err(|e| Error::Format(format!("truncated container: {e}")))?;
            out.push(f32::from_le_bytes(b));
        }
        Ok(out)
    }

    pub fn usizes(&mut self, n: usize) -> Result<Vec<usize>> {
        (0..n).map(|_| self.usize()).collect()
    }

    /// Fails unless the stream is exhausted.
    pub fn finish(mut self) -> Result<()> {
        let mut b = [0u8; 1];
        match self.inner.read(&mut b)? {
            0 => Ok(()),
            _ => Err(Error::Format("trailing bytes after container".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_magic() {
        let mut buf = Vec::new();
        let mut w = ContainerWriter::new(&mut buf, b"AAAA").unwrap();
        w.u64(3).unwrap();
        w.finish().unwrap();
        assert!(ContainerReader::new(&buf[..], b"BBBB").is_err());
    }

    #[test]
    fn detects_truncation_and_trailing_bytes() {
        let mut buf = Vec::new();
        let mut w = ContainerWriter::new(&mut buf, b"MAG").unwrap();
        w.f64s(&[1.0, 2.0]).unwrap();
        w.finish().unwrap();

        let mut r = ContainerReader::new(&buf[..], b"MAG").unwrap();
        assert!(r.f64s(3).is_err());

        let mut r = ContainerReader::new(&buf[..], b"MAG").unwrap();
        assert_eq!(r.f64().unwrap(), 1.0);
        assert!(r.finish().is_err());
    }
}
