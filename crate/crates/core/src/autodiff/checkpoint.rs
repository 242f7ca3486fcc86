//! Binary parameter container.
//!
//! Layout (all integers little-endian): magic `LGCK`, `u32` version, `u64`
//! array count, then per array `u32` name length, UTF-8 name, `u32` rank,
//! `u64` dims, `f64` payload. Adam moments go to a sibling `.adam` file in the
//! same layout (arrays `<name>#m`, `<name>#v`); optimizer metadata to a
//! `.json` sidecar.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::params::{AdamConfig, ParameterStore};
use super::AutodiffError;

const MAGIC: &[u8; 4] = b"LGCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub version: u32,
    pub step: u64,
    pub adam: AdamConfig,
    pub learning_rate: f64,
    pub num_params: usize,
    pub arrays: Vec<(String, Vec<usize>)>,
}

type Arrays = Vec<(String, Vec<usize>, Vec<f64>)>;

fn sibling(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

fn encode(arrays: &[(&str, &[usize], &[f64])]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(arrays.len() as u64).to_le_bytes());
    for (name, shape, data) in arrays {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for d in *shape {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for v in *data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], AutodiffError> {
        let end =
            self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
                AutodiffError::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, AutodiffError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, AutodiffError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn decode(bytes: &[u8]) -> Result<Arrays, AutodiffError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(AutodiffError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(AutodiffError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u64()?;
    let mut arrays = Vec::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|e| AutodiffError::Checkpoint(format!("array name: {e}")))?
            .to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let numel = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| AutodiffError::Checkpoint(format!("{name}: shape overflow")))?;
        let payload = r.take(numel.checked_mul(8).ok_or_else(|| AutodiffError::Checkpoint("size overflow".into()))?)?;
        let data = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        arrays.push((name, shape, data));
    }
    if r.pos != bytes.len() {
        return Err(AutodiffError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(arrays)
}

/// Writes values to `path`, moments to `<path>.adam` and metadata to
/// `<path>.json`.
pub fn save_checkpoint(
    store: &ParameterStore,
    adam: &AdamConfig,
    learning_rate: f64,
    path: &Path,
) -> Result<(), AutodiffError> {
    let values: Vec<_> = store.iter().map(|(n, p)| (n.as_str(), p.shape.as_slice(), p.value.as_slice())).collect();
    fs::File::create(path)?.write_all(&encode(&values))?;

    let names: Vec<(String, String)> = store.names().map(|n| (format!("{n}#m"), format!("{n}#v"))).collect();
    let mut moments = Vec::new();
    for ((_, p), (mn, vn)) in store.iter().zip(&names) {
        moments.push((mn.as_str(), p.shape.as_slice(), p.m.as_slice()));
        moments.push((vn.as_str(), p.shape.as_slice(), p.v.as_slice()));
    }
    fs::File::create(sibling(path, ".adam"))?.write_all(&encode(&moments))?;

    let meta = CheckpointMeta {
        version: CHECKPOINT_VERSION,
        step: store.step,
        adam: *adam,
        learning_rate,
        num_params: store.num_params(),
        arrays: store.iter().map(|(n, p)| (n.clone(), p.shape.clone())).collect(),
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| AutodiffError::Checkpoint(e.to_string()))?;
    fs::write(sibling(path, ".json"), json + "\n")?;
    Ok(())
}

/// Reads a checkpoint; moments and metadata are restored when their sibling
/// files exist.
pub fn load_checkpoint(path: &Path) -> Result<(ParameterStore, Option<CheckpointMeta>), AutodiffError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut store = ParameterStore::new();
    for (name, shape, data) in decode(&bytes)? {
        if store.get(&name).is_some() {
            return Err(AutodiffError::Checkpoint(format!("duplicate array {name}")));
        }
        store.insert(&name, shape, data)?;
    }
    let adam_path = sibling(path, ".adam");
    if adam_path.exists() {
        for (name, shape, data) in decode(&fs::read(&adam_path)?)? {
            let (base, kind) = name
                .rsplit_once('#')
                .ok_or_else(|| AutodiffError::Checkpoint(format!("moment array {name} lacks #m/#v suffix")))?;
            let p = store.get_mut(base).ok_or_else(|| AutodiffError::UnknownParameter(base.to_string()))?;
            if p.shape != shape {
                return Err(AutodiffError::Checkpoint(format!("moment {name}: shape {shape:?} vs {:?}", p.shape)));
            }
            match kind {
                "m" => p.m = data,
                "v" => p.v = data,
                _ => return Err(AutodiffError::Checkpoint(format!("unknown moment kind in {name}"))),
            }
        }
    }
    let meta_path = sibling(path, ".json");
    let meta = if meta_path.exists() {
        let meta: CheckpointMeta = serde_json::from_str(&fs::read_to_string(&meta_path)?)
            .map_err(|e| AutodiffError::Checkpoint(format!("{}: {e}", meta_path.display())))?;
        store.step = meta.step;
        Some(meta)
    } else {
        None
    };
    Ok((store, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut s = ParameterStore::new();
        s.insert("a.alpha", vec![2, 1, 5], (0..10).map(|i| (i as f64).sin() / 3.0).collect()).unwrap();
        s.insert("b", vec![1], vec![f64::MIN_POSITIVE]).unwrap();
        s.get_mut("b").unwrap().grad[0] = 1.0;
        s.adam_step(&AdamConfig::default(), 1e-3);
        save_checkpoint(&s, &AdamConfig::default(), 1e-3, &path).unwrap();
        let (mut back, meta) = load_checkpoint(&path).unwrap();
        back.zero_grad();
        let mut expected = s.clone();
        expected.zero_grad();
        assert_eq!(back, expected);
        assert_eq!(meta.unwrap().num_params, 11);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode(&[("w", &[2], &[1.0, 2.0])]);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(decode(&long).is_err());
    }
}
