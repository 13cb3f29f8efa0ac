//! Framing shared by the binary index files:
//! `magic[8] | version u32 LE | payload | sha256(magic..payload)[32]`.

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

const DIGEST_LEN: usize = 32;

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: file truncated ({len} bytes)")]
    Truncated { path: String, len: usize },
    #[error("{path}: not a {expected} file")]
    BadMagic { path: String, expected: &'static str },
    #[error("{path}: unsupported format version {found} (expected {expected})")]
    Version { path: String, found: u32, expected: u32 },
    #[error("{path}: checksum mismatch")]
    Checksum { path: String },
    #[error("{path}: parameter mismatch: {detail}")]
    Params { path: String, detail: String },
    #[error("{path}: corrupt payload: {detail}")]
    Corrupt { path: String, detail: String },
    #[error("{path}: malformed chunk metadata on line {line}: {detail}")]
    Metadata { path: String, line: usize, detail: String },
}

#[derive(Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new(magic: &[u8; 8], version: u32) -> Self {
        let mut e = Encoder { buf: Vec::new() };
        e.buf.extend_from_slice(magic);
        e.u32(version);
        e
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }

    /// Appends the checksum and writes atomically via a sibling temp file.
    pub fn write_to(mut self, path: &Path) -> std::io::Result<()> {
        let digest = Sha256::digest(&self.buf);
        self.buf.extend_from_slice(&digest);
        let tmp = path.with_extension("tmp-write");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.buf)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)
    }
}

pub struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
    path: String,
}

impl<'a> Decoder<'a> {
    /// Validates framing and returns a decoder positioned after the version.
    pub fn open(
        bytes: &'a [u8],
        path: &Path,
        magic: &[u8; 8],
        kind: &'static str,
        version: u32,
    ) -> Result<Self, LoadError> {
        let p = path.display().to_string();
        if bytes.len() < 8 + 4 + DIGEST_LEN {
            return Err(LoadError::Truncated { path: p, len: bytes.len() });
        }
        if &bytes[..8] != magic {
            return Err(LoadError::BadMagic { path: p, expected: kind });
        }
        let found = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if found != version {
            return Err(LoadError::Version { path: p, found, expected: version });
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(LoadError::Checksum { path: p });
        }
        Ok(Decoder { buf: body, pos: 12, path: p })
    }

    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn corrupt(&self, detail: impl Into<String>) -> LoadError {
        LoadError::Corrupt { path: self.path.clone(), detail: detail.into() }
    }

    pub fn params(&self, detail: impl Into<String>) -> LoadError {
        LoadError::Params { path: self.path.clone(), detail: detail.into() }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], LoadError> {
        if self.buf.len() - self.pos < n {
            return Err(self.corrupt(format!("unexpected end at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn u8(&mut self) -> Result<u8, LoadError> {
        Ok(self.take(1)?[0])
    }
    pub fn u32(&mut self) -> Result<u32, LoadError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    pub fn u64(&mut self) -> Result<u64, LoadError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    pub fn f32(&mut self) -> Result<f32, LoadError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    pub fn f64(&mut self) -> Result<f64, LoadError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    pub fn str(&mut self) -> Result<String, LoadError> {
        let n = self.u32()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| self.corrupt("invalid utf-8 string"))
    }

    pub fn finish(self) -> Result<(), LoadError> {
        if self.remaining() != 0 {
            return Err(self.corrupt(format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, LoadError> {
    fs::read(path).map_err(|source| LoadError::Io { path: path.display().to_string(), source })
}
