//! Versioned binary containers: magic, version, little-endian payload and a
//! trailing SHA-256 of everything before it.

use crate::backbone::{Backbone, Layer, ModelConfig};
use crate::tensor::Matrix;
use crate::vocab::Vocab;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;
use thiserror::Error;

pub const BACKBONE_MAGIC: &[u8; 8] = b"HIMOLBB\0";
pub const BACKBONE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a {expected} file (bad magic bytes)")]
    BadMagic { expected: &'static str },
    #[error("unsupported format version {found} (this build reads version {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error("checksum mismatch, file is corrupt")]
    ChecksumMismatch,
    #[error("file ends early")]
    Truncated,
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 8], version: u32) -> Writer {
        let mut w = Writer { buf: Vec::new() };
        w.buf.extend_from_slice(magic);
        w.u32(version);
        w
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for &x in v {
            self.f64(x);
        }
    }

    pub fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn matrix(&mut self, m: &Matrix) {
        self.u64(m.rows as u64);
        self.u64(m.cols as u64);
        for &x in &m.data {
            self.f64(x);
        }
    }

    pub fn finish(mut self) -> Vec<u8> {
        let digest = Sha256::digest(&self.buf);
        self.buf.extend_from_slice(&digest);
        self.buf
    }
}

pub struct Reader<'b> {
    buf: &'b [u8],
    at: usize,
}

impl<'b> Reader<'b> {
    /// Verify the checksum, magic and version and position after the header.
    pub fn open(
        bytes: &'b [u8],
        magic: &[u8; 8],
        version: u32,
        name: &'static str,
    ) -> Result<Reader<'b>, CheckpointError> {
        if bytes.len() < 8 || &bytes[..8] != magic {
            return Err(CheckpointError::BadMagic { expected: name });
        }
        if bytes.len() < 12 + 32 {
            return Err(CheckpointError::Truncated);
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        let found = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes"));
        if found != version {
            return Err(CheckpointError::UnsupportedVersion {
                found,
                expected: version,
            });
        }
        if Sha256::digest(body).as_slice() != digest {
            return Err(CheckpointError::ChecksumMismatch);
        }
        Ok(Reader { buf: body, at: 12 })
    }

    fn take(&mut self, n: usize) -> Result<&'b [u8], CheckpointError> {
        let end = self.at.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let out = self.buf.get(self.at..end).ok_or(CheckpointError::Truncated)?;
        self.at = end;
        Ok(out)
    }

    pub fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn usize(&mut self) -> Result<usize, CheckpointError> {
        usize::try_from(self.u64()?).map_err(|_| CheckpointError::Malformed("size overflows usize".into()))
    }

    pub fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>, CheckpointError> {
        let n = self.usize()?;
        if n > self.buf.len() / 8 {
            return Err(CheckpointError::Truncated);
        }
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn str(&mut self) -> Result<String, CheckpointError> {
        let n = self.usize()?;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| CheckpointError::Malformed("string is not UTF-8".into()))
    }

    pub fn matrix(&mut self) -> Result<Matrix, CheckpointError> {
        let rows = self.usize()?;
        let cols = self.usize()?;
        let n = rows.checked_mul(cols).ok_or(CheckpointError::Truncated)?;
        if n > self.buf.len() / 8 {
            return Err(CheckpointError::Truncated);
        }
        let data = (0..n).map(|_| self.f64()).collect::<Result<_, _>>()?;
        Ok(Matrix::from_vec(rows, cols, data))
    }

    pub fn expect_end(&self) -> Result<(), CheckpointError> {
        if self.at == self.buf.len() {
            Ok(())
        } else {
            Err(CheckpointError::Malformed("trailing bytes".into()))
        }
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CheckpointError> {
    fs::write(path, bytes).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, CheckpointError> {
    fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn expect_shape(m: &Matrix, rows: usize, cols: usize, what: &str) -> Result<(), CheckpointError> {
    if m.shape() == (rows, cols) {
        Ok(())
    } else {
        Err(CheckpointError::Malformed(format!(
            "{what} has shape {:?}, expected {:?}",
            m.shape(),
            (rows, cols)
        )))
    }
}

impl Backbone {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(BACKBONE_MAGIC, BACKBONE_VERSION);
        let c = &self.config;
        for v in [c.embed, c.layers, c.heads, c.mlp, c.context] {
            w.u64(v as u64);
        }
        w.u32(self.frozen as u32);
        w.u64(self.vocab.len() as u64);
        w.u64(self.vocab.first_smiles() as u64);
        for e in self.vocab.entries() {
            w.str(e);
        }
        for m in self.parameters() {
            w.matrix(m);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Backbone, CheckpointError> {
        let mut r = Reader::open(bytes, BACKBONE_MAGIC, BACKBONE_VERSION, "backbone checkpoint")?;
        let config = ModelConfig {
            embed: r.usize()?,
            layers: r.usize()?,
            heads: r.usize()?,
            mlp: r.usize()?,
            context: r.usize()?,
        };
        if config.heads == 0 || !config.embed.is_multiple_of(config.heads) {
            return Err(CheckpointError::Malformed("embed width does not split into heads".into()));
        }
        let frozen = r.u32()? != 0;
        let n = r.usize()?;
        let first = r.usize()?;
        if n > bytes.len() {
            return Err(CheckpointError::Truncated);
        }
        let entries = (0..n).map(|_| r.str()).collect::<Result<Vec<_>, _>>()?;
        if first > n {
            return Err(CheckpointError::Malformed("vocabulary layout".into()));
        }
        let vocab = Vocab::from_entries(entries, first);
        let (e, m, v) = (config.embed, config.mlp, n);
        let tok_emb = r.matrix()?;
        expect_shape(&tok_emb, v, e, "token embedding")?;
        let pos_emb = r.matrix()?;
        expect_shape(&pos_emb, config.context, e, "position embedding")?;
        let mut layers = Vec::with_capacity(config.layers);
        for _ in 0..config.layers {
            let shapes = [
                (1, e),
                (1, e),
                (e, 3 * e),
                (1, 3 * e),
                (e, e),
                (1, e),
                (1, e),
                (1, e),
                (e, m),
                (1, m),
                (m, e),
                (1, e),
            ];
            let mut ms = Vec::with_capacity(12);
            for (rows, cols) in shapes {
                let mat = r.matrix()?;
                expect_shape(&mat, rows, cols, "layer weight")?;
                ms.push(mat);
            }
            let mut it = ms.into_iter();
            let mut next = || it.next().expect("twelve matrices");
            layers.push(Layer {
                ln1_g: next(),
                ln1_b: next(),
                w_qkv: next(),
                b_qkv: next(),
                w_o: next(),
                b_o: next(),
                ln2_g: next(),
                ln2_b: next(),
                w_1: next(),
                b_1: next(),
                w_2: next(),
                b_2: next(),
            });
        }
        let lnf_g = r.matrix()?;
        expect_shape(&lnf_g, 1, e, "final norm gain")?;
        let lnf_b = r.matrix()?;
        expect_shape(&lnf_b, 1, e, "final norm bias")?;
        let head_w = r.matrix()?;
        expect_shape(&head_w, e, v, "output head")?;
        let head_b = r.matrix()?;
        expect_shape(&head_b, 1, v, "output bias")?;
        r.expect_end()?;
        Ok(Backbone {
            vocab,
            config,
            tok_emb,
            pos_emb,
            layers,
            lnf_g,
            lnf_b,
            head_w,
            head_b,
            frozen,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Backbone, CheckpointError> {
        Backbone::from_bytes(&read_file(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Backbone {
        let vocab = Vocab::build(["CCO"]).unwrap();
        let cfg = ModelConfig {
            embed: 8,
            layers: 1,
            heads: 2,
            mlp: 16,
            context: 16,
        };
        let mut b = Backbone::new(vocab, cfg, 3);
        b.freeze();
        b
    }

    #[test]
    fn round_trip_is_exact() {
        let b = small();
        let bytes = b.to_bytes();
        let back = Backbone::from_bytes(&bytes).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn rejects_corruption_and_versions() {
        let bytes = small().to_bytes();
        let mut flipped = bytes.clone();
        flipped[40] ^= 1;
        assert!(matches!(Backbone::from_bytes(&flipped), Err(CheckpointError::ChecksumMismatch)));
        let mut version = bytes.clone();
        version[8] = 9;
        assert!(matches!(
            Backbone::from_bytes(&version),
            Err(CheckpointError::UnsupportedVersion { found: 9, expected: 1 })
        ));
        assert!(matches!(Backbone::from_bytes(b"nonsense"), Err(CheckpointError::BadMagic { .. })));
        assert!(matches!(Backbone::from_bytes(&bytes[..20]), Err(CheckpointError::Truncated)));
    }
}
