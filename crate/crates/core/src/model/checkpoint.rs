//! Binary checkpoints.
//!
//! ```text
//! magic    8 bytes  "DMTCKPT\0"
//! version  u32
//! config   vocab, embed, hidden, attn, layers, max_decode_len (u32 each),
//!          tier (u8), seed (u64)
//! count    u64 parameter count
//! params   count x f64
//! digest   32-byte SHA-256 of everything above
//! ```
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{ModelConfig, Tier, TranslationModel};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"DMTCKPT\0";
const VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

pub fn write_checkpoint(model: &TranslationModel) -> Vec<u8> {
    let c = model.config();
    let mut out = Vec::with_capacity(64 + 8 * model.param_count() + DIGEST_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [
        c.vocab_size,
        c.embed_dim,
        c.hidden_dim,
        c.attn_dim,
        c.num_layers,
        c.max_decode_len,
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.push(match c.tier {
        Tier::Large => 0,
        Tier::Small => 1,
    });
    out.extend_from_slice(&c.seed.to_le_bytes());
    out.extend_from_slice(&(model.param_count() as u64).to_le_bytes());
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("unexpected end of checkpoint".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<TranslationModel> {
    if bytes.len() < MAGIC.len() + DIGEST_LEN || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Checkpoint("checksum mismatch; file is corrupted".into()));
    }
    let mut r = Reader {
        buf: body,
        pos: MAGIC.len(),
    };
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let mut dims = [0usize; 6];
    for d in &mut dims {
        *d = r.u32()? as usize;
    }
    let tier = match r.take(1)?[0] {
        0 => Tier::Large,
        1 => Tier::Small,
        t => return Err(Error::Checkpoint(format!("unknown tier tag {t}"))),
    };
    let config = ModelConfig {
        vocab_size: dims[0],
        embed_dim: dims[1],
        hidden_dim: dims[2],
        attn_dim: dims[3],
        num_layers: dims[4],
        max_decode_len: dims[5],
        tier,
        seed: r.u64()?,
    };
    config
        .validate()
        .map_err(|e| Error::Checkpoint(format!("invalid stored config: {e}")))?;
    let count = r.u64()? as usize;
    if count != config.param_count() {
        return Err(Error::Checkpoint(format!(
            "stored parameter count {count} does not match config ({})",
            config.param_count()
        )));
    }
    if body.len() - r.pos != count * 8 {
        return Err(Error::Checkpoint("parameter block has the wrong length".into()));
    }
    let params = r
        .take(count * 8)?
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    TranslationModel::from_params(config, params).map_err(|e| Error::Checkpoint(e.to_string()))
}

/// Write atomically: the file appears only once fully written.
pub fn save_checkpoint(model: &TranslationModel, path: &Path) -> Result<()> {
    crate::fsio::write_atomic(path, &write_checkpoint(model))
}

/// Hex SHA-256 of the serialized checkpoint; identifies a model in reports.
pub fn checkpoint_digest(model: &TranslationModel) -> String {
    hex::encode(Sha256::digest(write_checkpoint(model)))
}

/// Load a checkpoint. With `expected`, the stored shape must match it.
pub fn load_checkpoint(path: &Path, expected: Option<&ModelConfig>) -> Result<TranslationModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let model = read_checkpoint(&bytes)?;
    if let Some(cfg) = expected {
        if !cfg.same_shape(model.config()) || cfg.tier != model.config().tier {
            return Err(Error::Incompatible(format!(
                "checkpoint {} holds a {:?} model that does not fit the requested {:?} config",
                path.display(),
                model.config().tier,
                cfg.tier
            )));
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::forward;
    use crate::tokenizer::TokenSeq;

    #[test]
    fn roundtrip_is_bit_exact() {
        let m = TranslationModel::init(ModelConfig::preset(Tier::Small, 15, 5)).unwrap();
        let back = read_checkpoint(&write_checkpoint(&m)).unwrap();
        assert_eq!(back, m);
        let src = TokenSeq(vec![1, 7, 9, 3]);
        let pre = TokenSeq(vec![8]);
        assert_eq!(forward(&m, &src, &pre).unwrap(), forward(&back, &src, &pre).unwrap());
    }

    #[test]
    fn corruption_is_detected() {
        let m = TranslationModel::init(ModelConfig::preset(Tier::Small, 15, 5)).unwrap();
        let mut bytes = write_checkpoint(&m);
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(matches!(read_checkpoint(&bytes), Err(Error::Checkpoint(_))));
        let bytes = write_checkpoint(&m);
        assert!(matches!(read_checkpoint(&bytes[..bytes.len() - 9]), Err(Error::Checkpoint(_))));
        assert!(matches!(read_checkpoint(b"garbage"), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn tier_mismatch_is_incompatible() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("large.ckpt");
        let large = TranslationModel::init(ModelConfig::preset(Tier::Large, 15, 5)).unwrap();
        save_checkpoint(&large, &path).unwrap();
        let small_cfg = ModelConfig::preset(Tier::Small, 15, 5);
        assert!(matches!(
            load_checkpoint(&path, Some(&small_cfg)),
            Err(Error::Incompatible(_))
        ));
        assert!(load_checkpoint(&path, Some(large.config())).is_ok());
    }
}
