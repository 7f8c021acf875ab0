//! Network checkpoints: an 8-byte magic, a little-endian `u32` header
//! length, a JSON header, then the parameters as little-endian `f32`.

use super::mlp::{Activation, Mlp};
use crate::error::{Error, Result};
use crate::rng::RngKey;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"LCDMMLP1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub schema_version: u32,
    pub widths: Vec<usize>,
    pub activations: Vec<Activation>,
    pub rng_key: RngKey,
    pub step: u64,
    pub parameter_count: usize,
}

pub fn save_checkpoint(path: impl AsRef<Path>, net: &Mlp, rng_key: &RngKey, step: u64) -> Result<()> {
    let header = CheckpointHeader {
        schema_version: CHECKPOINT_VERSION,
        widths: net.widths().to_vec(),
        activations: net.activations().to_vec(),
        rng_key: rng_key.clone(),
        step,
        parameter_count: net.param_count(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::with_capacity(12 + json.len() + 4 * net.param_count());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for p in net.params() {
        buf.extend_from_slice(&(*p as f32).to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    f.sync_all()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Mlp, CheckpointHeader)> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |why: &str| Error::Mismatch(format!("checkpoint {}: {why}", path.display()));
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(bad("missing magic"));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = bytes.get(12..12 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(body)?;
    if header.schema_version != CHECKPOINT_VERSION {
        return Err(Error::SchemaVersion { found: header.schema_version, supported: CHECKPOINT_VERSION });
    }
    let raw = &bytes[12 + hlen..];
    if raw.len() != 4 * header.parameter_count {
        return Err(bad("parameter blob length disagrees with header"));
    }
    let params = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
    let net = Mlp::from_parts(header.widths.clone(), header.activations.clone(), params)?;
    Ok((net, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::keyed_rng;

    #[test]
    fn round_trip_after_f32_rounding() {
        let dir = tempfile::tempdir().unwrap();
        let mut net = Mlp::new(&[4, 5, 3], Activation::Relu, Activation::Sigmoid, &mut keyed_rng(0, "t")).unwrap();
        net.round_to_f32();
        let key = RngKey::new(9, "denoiser");
        let path = dir.path().join("net.ckpt");
        save_checkpoint(&path, &net, &key, 42).unwrap();
        let (back, header) = load_checkpoint(&path).unwrap();
        assert_eq!(back, net);
        assert_eq!(header.step, 42);
        assert_eq!(header.rng_key, key);
    }

    #[test]
    fn truncated_blob_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let net = Mlp::new(&[2, 2], Activation::Tanh, Activation::Identity, &mut keyed_rng(0, "t")).unwrap();
        let path = dir.path().join("net.ckpt");
        save_checkpoint(&path, &net, &RngKey::new(0, "x"), 0).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 2);
        std::fs::write(&path, bytes).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
