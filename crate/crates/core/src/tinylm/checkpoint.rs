//! Binary model file: magic, version, shape header, little-endian `f64`
//! parameters, then a SHA-256 of everything before it.

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{TinyLm, TinyLmConfig, TinyLmError};

const MAGIC: &[u8; 8] = b"QRWTLM\0\0";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 * 4 + 8 + 8;
const DIGEST_LEN: usize = 32;

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("slice length"))
}

fn read_u64(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().expect("slice length"))
}

impl TinyLm {
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.cfg;
        let mut out = Vec::with_capacity(HEADER_LEN + self.params.len() * 8 + DIGEST_LEN);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for dim in [c.vocab_size, c.window, c.embed_dim, c.hidden] {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        out.extend_from_slice(&c.dropout_rate.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TinyLmError> {
        let bad = |m: &str| TinyLmError::Checkpoint(m.to_string());
        if bytes.len() < HEADER_LEN + DIGEST_LEN || &bytes[..8] != MAGIC {
            return Err(bad("not a model checkpoint"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(bad("checksum mismatch"));
        }
        let version = read_u32(body, 8);
        if version != CHECKPOINT_VERSION {
            return Err(TinyLmError::Checkpoint(format!(
                "unsupported version {version}"
            )));
        }
        let cfg = TinyLmConfig {
            vocab_size: read_u32(body, 12) as usize,
            window: read_u32(body, 16) as usize,
            embed_dim: read_u32(body, 20) as usize,
            hidden: read_u32(body, 24) as usize,
            dropout_rate: f64::from_le_bytes(body[28..36].try_into().expect("slice length")),
        };
        cfg.validate()?;
        let count = read_u64(body, 36) as usize;
        let blob = &body[HEADER_LEN..];
        if count != cfg.param_count() || blob.len() != count * 8 {
            return Err(bad("parameter count does not match header"));
        }
        let params = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk length")))
            .collect();
        TinyLm::from_params(cfg, params)
    }

    /// Hex SHA-256 of the serialized model.
    pub fn checksum(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }

    /// Writes via a temporary file in the same directory and renames it into place.
    pub fn save(&self, path: &Path) -> Result<(), TinyLmError> {
        let dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        fs::create_dir_all(dir)?;
        let tmp = dir.join(format!(
            ".{}.{}.tmp",
            path.file_name().and_then(|n| n.to_str()).unwrap_or("model"),
            std::process::id()
        ));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TinyLmError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let m = TinyLm::random(TinyLmConfig::default(), 5, 1.0).unwrap();
        let back = TinyLm::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back.config(), m.config());
        assert!(m
            .params()
            .iter()
            .zip(back.params())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(m.checksum(), back.checksum());
    }

    #[test]
    fn file_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub").join("m.ckpt");
        let m = TinyLm::random(
            TinyLmConfig {
                hidden: 7,
                ..Default::default()
            },
            2,
            1.0,
        )
        .unwrap();
        m.save(&path).unwrap();
        assert_eq!(TinyLm::load(&path).unwrap(), m);
        let mut bytes = fs::read(&path).unwrap();
        bytes[HEADER_LEN + 3] ^= 1;
        assert!(matches!(
            TinyLm::from_bytes(&bytes),
            Err(TinyLmError::Checkpoint(_))
        ));
        assert!(TinyLm::from_bytes(b"short").is_err());
    }
}
