use crate::error::{Error, Result};

/// Cursor over a byte buffer that reports failures with their byte offset.
pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        ByteReader { buf, pos: 0 }
    }

    pub fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn fail(&self, msg: impl Into<String>) -> Error {
        Error::Format {
            offset: self.offset(),
            msg: msg.into(),
        }
    }

    pub fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(self.fail(format!(
                "truncated {what}: expected {n} bytes, found {}",
                self.remaining()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let at = self.offset();
        let got = self.take(4, "magic")?;
        if got != expected {
            return Err(Error::Format {
                offset: at,
                msg: format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(expected)
                ),
            });
        }
        Ok(())
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    pub fn version(&mut self, supported: u32) -> Result<()> {
        let at = self.offset();
        let v = self.u32("version")?;
        if v != supported {
            return Err(Error::Format {
                offset: at,
                msg: format!("unsupported version {v}, expected {supported}"),
            });
        }
        Ok(())
    }

    /// Checks that `count` items of `width` bytes remain, before allocating.
    pub fn expect_payload(&self, count: usize, width: usize, what: &str) -> Result<()> {
        let need = count
            .checked_mul(width)
            .ok_or_else(|| self.fail(format!("{what} size overflows")))?;
        if self.remaining() < need {
            return Err(self.fail(format!(
                "truncated {what}: expected {need} bytes, found {}",
                self.remaining()
            )));
        }
        Ok(())
    }

    pub fn f32s(&mut self, count: usize, what: &str) -> Result<Vec<f32>> {
        self.expect_payload(count, 4, what)?;
        let b = self.take(count * 4, what)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    pub fn f64s(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        self.expect_payload(count, 8, what)?;
        let b = self.take(count * 8, what)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub fn u32s(&mut self, count: usize, what: &str) -> Result<Vec<u32>> {
        self.expect_payload(count, 4, what)?;
        let b = self.take(count * 4, what)?;
        Ok(b.chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    pub fn u64s(&mut self, count: usize, what: &str) -> Result<Vec<u64>> {
        self.expect_payload(count, 8, what)?;
        let b = self.take(count * 8, what)?;
        Ok(b.chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(self.fail(format!("{} bytes of trailing data", self.remaining())));
        }
        Ok(())
    }
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn dim_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Domain(format!("{what} = {v} does not fit in u32")))
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
