//! Little-endian byte writer/reader shared by the binary file formats.

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BinError {
    #[error("file truncated at byte {0}")]
    Truncated(usize),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    Magic { expected: String, found: String },
    #[error("unsupported format version {found} (expected {expected})")]
    Version { expected: u32, found: u32 },
    #[error("dtype tag {found} does not match the requested scalar type ({expected})")]
    Dtype { expected: u8, found: u8 },
    #[error("malformed file: {0}")]
    Malformed(String),
}

#[derive(Default)]
pub struct ByteWriter {
    pub buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn u128(&mut self, v: u128) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn len(&mut self, n: usize) {
        self.u64(n as u64);
    }

    pub fn real<T: Real>(&mut self, v: T) {
        v.write_le(&mut self.buf);
    }

    /// Length-prefixed slice.
    pub fn reals<T: Real>(&mut self, v: &[T]) {
        self.len(v.len());
        for &x in v {
            x.write_le(&mut self.buf);
        }
    }

    pub fn usizes(&mut self, v: &[usize]) {
        self.len(v.len());
        for &x in v {
            self.u64(x as u64);
        }
    }

    pub fn str(&mut self, s: &str) {
        self.len(s.len());
        self.bytes(s.as_bytes());
    }
}

pub struct ByteReader<'a> {
    data: &'a [u8],
    pos: usize,
}

pub type BinResult<T> = Result<T, BinError>;

impl<'a> ByteReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    pub fn is_at_end(&self) -> bool {
        self.pos == self.data.len()
    }

    pub fn take(&mut self, n: usize) -> BinResult<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len()).ok_or(BinError::Truncated(self.data.len()))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn magic(&mut self, expected: &[u8; 4]) -> BinResult<()> {
        let found = self.take(4).map_err(|_| BinError::Magic {
            expected: String::from_utf8_lossy(expected).into_owned(),
            found: String::from_utf8_lossy(self.data).into_owned(),
        })?;
        if found != expected {
            return Err(BinError::Magic {
                expected: String::from_utf8_lossy(expected).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        Ok(())
    }

    pub fn version(&mut self, expected: u32) -> BinResult<()> {
        let found = self.u32()?;
        if found != expected {
            return Err(BinError::Version { expected, found });
        }
        Ok(())
    }

    pub fn dtype<T: Real>(&mut self) -> BinResult<()> {
        let found = self.u8()?;
        if found != T::DTYPE_TAG {
            return Err(BinError::Dtype { expected: T::DTYPE_TAG, found });
        }
        Ok(())
    }

    pub fn u8(&mut self) -> BinResult<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> BinResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> BinResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn u128(&mut self) -> BinResult<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> BinResult<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn len(&mut self) -> BinResult<usize> {
        let n = self.u64()?;
        // A length can never exceed the bytes left in the file.
        if n > (self.data.len() - self.pos) as u64 * 8 + 8 {
            return Err(BinError::Truncated(self.data.len()));
        }
        Ok(n as usize)
    }

    pub fn real<T: Real>(&mut self) -> BinResult<T> {
        Ok(T::read_le(self.take(T::BYTES)?))
    }

    pub fn reals<T: Real>(&mut self) -> BinResult<Vec<T>> {
        let n = self.len()?;
        let raw = self.take(n.checked_mul(T::BYTES).ok_or(BinError::Truncated(self.data.len()))?)?;
        Ok(raw.chunks_exact(T::BYTES).map(T::read_le).collect())
    }

    pub fn usizes(&mut self) -> BinResult<Vec<usize>> {
        let n = self.len()?;
        (0..n).map(|_| self.u64().map(|v| v as usize)).collect()
    }

    pub fn str(&mut self) -> BinResult<String> {
        let n = self.len()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| BinError::Malformed(e.to_string()))
    }
}
