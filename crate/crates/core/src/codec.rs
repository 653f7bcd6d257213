//! Little-endian binary container shared by the eigenspace and model files:
//! 4-byte magic, `u32` version, payload, then a CRC32 of everything before it.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error("unsupported format version {found} (this build reads version {supported})")]
    VersionMismatch { found: u32, supported: u32 },
}

pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 4], version: u32) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(magic);
        buf.extend_from_slice(&version.to_le_bytes());
        Writer { buf }
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s(&mut self, vs: &[f64]) {
        vs.iter().for_each(|&v| self.f64(v));
    }

    pub fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.buf.extend_from_slice(&crc.to_le_bytes());
        self.buf
    }
}

pub struct Reader<'a> {
    payload: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Validates magic, version and checksum, in that order.
    pub fn open(bytes: &'a [u8], magic: &[u8; 4], version: u32) -> Result<Self, CodecError> {
        if bytes.len() < 4 || &bytes[..4] != magic {
            return Err(CodecError::Corrupt(format!(
                "bad magic (expected {:?})",
                String::from_utf8_lossy(magic)
            )));
        }
        let found = bytes
            .get(4..8)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .ok_or_else(|| CodecError::Corrupt("truncated header".into()))?;
        if found != version {
            return Err(CodecError::VersionMismatch {
                found,
                supported: version,
            });
        }
        if bytes.len() < 12 {
            return Err(CodecError::Corrupt("truncated file".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(CodecError::Corrupt("checksum mismatch".into()));
        }
        Ok(Reader {
            payload: &body[8..],
            pos: 0,
        })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.payload.len())
            .ok_or_else(|| CodecError::Corrupt("payload shorter than declared".into()))?;
        let out = &self.payload[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>, CodecError> {
        let byte_len = n
            .checked_mul(8)
            .ok_or_else(|| CodecError::Corrupt("array length overflow".into()))?;
        let raw = self.take(byte_len)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn finish(self) -> Result<(), CodecError> {
        if self.pos != self.payload.len() {
            return Err(CodecError::Corrupt(format!(
                "{} trailing bytes",
                self.payload.len() - self.pos
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<u8> {
        let mut w = Writer::new(b"TEST", 1);
        w.u32(7);
        w.f64s(&[1.5, -0.0, f64::MIN_POSITIVE]);
        w.finish()
    }

    #[test]
    fn round_trip() {
        let bytes = sample();
        let mut r = Reader::open(&bytes, b"TEST", 1).unwrap();
        assert_eq!(r.u32().unwrap(), 7);
        let vs = r.f64s(3).unwrap();
        assert_eq!(vs[1].to_bits(), (-0.0f64).to_bits());
        r.finish().unwrap();
    }

    #[test]
    fn detects_damage() {
        let bytes = sample();
        assert!(matches!(
            Reader::open(&bytes, b"NOPE", 1),
            Err(CodecError::Corrupt(_))
        ));
        assert!(matches!(
            Reader::open(&bytes, b"TEST", 0),
            Err(CodecError::VersionMismatch { found: 1, .. })
        ));
        for cut in [2, 6, 10, bytes.len() - 1] {
            assert!(matches!(
                Reader::open(&bytes[..cut], b"TEST", 1),
                Err(CodecError::Corrupt(_))
            ));
        }
        let mut flipped = bytes.clone();
        flipped[12] ^= 0x40;
        assert!(Reader::open(&flipped, b"TEST", 1).is_err());
    }

    #[test]
    fn over_read_is_corrupt() {
        let bytes = sample();
        let mut r = Reader::open(&bytes, b"TEST", 1).unwrap();
        assert!(r.f64s(10).is_err());
    }
}
