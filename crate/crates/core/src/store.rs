//! On-disk search-sequence datasets.
//!
//! Layout of a dataset directory:
//!
//! ```text
//! manifest.json        DatasetManifest
//! index.jsonl          one IndexRecord per sequence, in write order
//! blobs/<seq_id>.f32   the sequence's snapshot encodings, little-endian f32
//! ```
//!
//! A directory holds sequences of a single environment and encoding.

use crate::error::{Error, Result};
use crate::pcn::{EncodingKind, PolicySnapshot, SearchSequence};
use crate::rng::RngKey;
use serde::{Deserialize, Serialize};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

pub const STORE_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub env_id: String,
    pub m: usize,
    pub encoding_kind: EncodingKind,
    /// Floats per snapshot.
    pub snapshot_len: usize,
    pub sequence_count: usize,
    /// Stream of the first sequence written.
    pub rng_key: RngKey,
    pub created_by: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexRecord {
    pub seq_id: String,
    pub seed: u64,
    pub preference: Vec<f64>,
    pub step_indices: Vec<usize>,
    pub returns: Vec<Vec<f64>>,
    pub fronts: Vec<Vec<Vec<f64>>>,
    /// Blob path relative to the dataset directory.
    pub blob: String,
}

fn write_synced(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Option<DatasetManifest>> {
    let path = dir.as_ref().join("manifest.json");
    if !path.exists() {
        return Ok(None);
    }
    let value: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    let found = value.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != STORE_SCHEMA_VERSION {
        return Err(Error::SchemaVersion { found, supported: STORE_SCHEMA_VERSION });
    }
    Ok(Some(serde_json::from_value(value)?))
}

/// Appends one sequence, creating the dataset on first use.
pub fn write_sequence(dir: impl AsRef<Path>, seq: &SearchSequence) -> Result<IndexRecord> {
    let dir = dir.as_ref();
    seq.validate()?;
    let id = format!("{}/{}", seq.env_id, seq.seed);
    let first = seq.snapshots.first().ok_or_else(|| Error::Sequence { id: id.clone(), reason: "no snapshots".into() })?;
    for s in &seq.snapshots {
        if s.encoding.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("snapshot {} of {id}", s.step_index)));
        }
    }
    let m = seq.returns.first().map(Vec::len).unwrap_or(0);
    if seq.returns.iter().flatten().chain(seq.fronts.iter().flatten().flatten()).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("returns of {id}")));
    }
    fs::create_dir_all(dir.join("blobs"))?;
    let mut manifest = match read_manifest(dir)? {
        Some(man) => {
            if man.env_id != seq.env_id {
                return Err(Error::Mismatch(format!("dataset holds {}, got a {} sequence", man.env_id, seq.env_id)));
            }
            if man.encoding_kind != first.kind || man.m != m {
                return Err(Error::Mismatch(format!("{id}: snapshot layout differs from the dataset's")));
            }
            man
        }
        None => DatasetManifest {
            schema_version: STORE_SCHEMA_VERSION,
            env_id: seq.env_id.clone(),
            m,
            encoding_kind: first.kind.clone(),
            snapshot_len: first.kind.len(),
            sequence_count: 0,
            rng_key: RngKey::new(seq.seed, format!("pcn/{}", seq.env_id)),
            created_by: format!("lacadm {}", env!("CARGO_PKG_VERSION")),
        },
    };
    if seq.snapshots.iter().any(|s| s.kind != manifest.encoding_kind) {
        return Err(Error::Mismatch(format!("{id}: mixed snapshot layouts")));
    }

    let seq_id = format!("seq-{:05}", manifest.sequence_count);
    let blob = format!("blobs/{seq_id}.f32");
    let mut bytes = Vec::with_capacity(seq.len() * manifest.snapshot_len * 4);
    for s in &seq.snapshots {
        for x in &s.encoding {
            bytes.extend_from_slice(&(*x as f32).to_le_bytes());
        }
    }
    write_synced(&dir.join(&blob), &bytes)?;

    let record = IndexRecord {
        seq_id,
        seed: seq.seed,
        preference: seq.preference.clone(),
        step_indices: seq.snapshots.iter().map(|s| s.step_index).collect(),
        returns: seq.returns.clone(),
        fronts: seq.fronts.clone(),
        blob,
    };
    let mut index = OpenOptions::new().create(true).append(true).open(dir.join("index.jsonl"))?;
    writeln!(index, "{}", serde_json::to_string(&record)?)?;
    index.sync_all()?;

    manifest.sequence_count += 1;
    write_synced(&dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(record)
}

/// Every sequence in write order. A directory without a manifest is an
/// empty dataset.
pub fn read_all(dir: impl AsRef<Path>) -> Result<Vec<SearchSequence>> {
    let dir = dir.as_ref();
    let Some(manifest) = read_manifest(dir)? else {
        return Ok(Vec::new());
    };
    let index = BufReader::new(File::open(dir.join("index.jsonl"))?);
    let mut out = Vec::new();
    for line in index.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: IndexRecord = serde_json::from_str(&line)?;
        let bad = |reason: String| Error::Sequence { id: rec.seq_id.clone(), reason };
        let bytes = fs::read(dir.join(&rec.blob)).map_err(|e| bad(format!("blob unreadable: {e}")))?;
        let expected = rec.step_indices.len() * manifest.snapshot_len * 4;
        if bytes.len() != expected {
            return Err(bad(format!("blob holds {} bytes, expected {expected}", bytes.len())));
        }
        let floats: Vec<f64> =
            bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
        let snapshots = rec
            .step_indices
            .iter()
            .zip(floats.chunks(manifest.snapshot_len.max(1)))
            .map(|(&step_index, enc)| PolicySnapshot {
                step_index,
                env_id: manifest.env_id.clone(),
                kind: manifest.encoding_kind.clone(),
                encoding: enc.to_vec(),
            })
            .collect();
        let seq = SearchSequence {
            env_id: manifest.env_id.clone(),
            seed: rec.seed,
            preference: rec.preference.clone(),
            snapshots,
            returns: rec.returns.clone(),
            fronts: rec.fronts.clone(),
        };
        seq.validate().map_err(|e| bad(e.to_string()))?;
        out.push(seq);
    }
    if out.len() != manifest.sequence_count {
        return Err(Error::Invariant(format!("manifest lists {} sequences, index has {}", manifest.sequence_count, out.len())));
    }
    Ok(out)
}
