//! `IAPT` checkpoint files.
//!
//! Layout: magic `IAPT`, format version (`u32` LE), manifest length (`u64`
//! LE), the JSON manifest, then every array's entries back to back in
//! manifest order as little-endian `f64` or `f32`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DenseArray, DiffError, Result};
use crate::hashing::fnv1a64;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"IAPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    #[default]
    F64,
    F32,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::F32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub dtype: Dtype,
    /// Free-form configuration echo.
    pub config: serde_json::Value,
    pub arrays: Vec<(String, DenseArray)>,
}

#[derive(Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    dtype: Dtype,
    step: u64,
    payload_checksum: u64,
    arrays: Vec<ArrayEntry>,
    config: serde_json::Value,
}

fn corrupt(msg: impl Into<String>) -> DiffError {
    DiffError::CorruptFile(msg.into())
}

impl Checkpoint {
    pub fn new(step: u64, config: serde_json::Value) -> Self {
        Checkpoint {
            step,
            dtype: Dtype::F64,
            config,
            arrays: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, array: DenseArray) {
        self.arrays.push((name.into(), array));
    }

    pub fn get(&self, name: &str) -> Option<&DenseArray> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, a)| a)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut payload = Vec::new();
        for (_, a) in &self.arrays {
            for &x in a.data() {
                match self.dtype {
                    Dtype::F64 => payload.extend_from_slice(&x.to_le_bytes()),
                    Dtype::F32 => payload.extend_from_slice(&(x as f32).to_le_bytes()),
                }
            }
        }
        let manifest = Manifest {
            dtype: self.dtype,
            step: self.step,
            payload_checksum: fnv1a64(&payload),
            arrays: self
                .arrays
                .iter()
                .map(|(n, a)| ArrayEntry {
                    name: n.clone(),
                    shape: a.shape().to_vec(),
                })
                .collect(),
            config: self.config.clone(),
        };
        let json = serde_json::to_vec(&manifest).expect("manifest serializes");
        let mut out = Vec::with_capacity(16 + json.len() + payload.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(corrupt("truncated header"));
        }
        if &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(corrupt(format!("unsupported version {version}")));
        }
        let mlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = &bytes[16..];
        if mlen > body.len() {
            return Err(corrupt("truncated manifest"));
        }
        let manifest: Manifest =
            serde_json::from_slice(&body[..mlen]).map_err(|e| corrupt(format!("manifest: {e}")))?;
        let payload = &body[mlen..];
        let width = manifest.dtype.width();
        let total: usize = manifest
            .arrays
            .iter()
            .map(|e| e.shape.iter().product::<usize>())
            .sum();
        if payload.len() != total * width {
            return Err(corrupt(format!(
                "payload is {} bytes, manifest expects {}",
                payload.len(),
                total * width
            )));
        }
        if fnv1a64(payload) != manifest.payload_checksum {
            return Err(corrupt("payload checksum mismatch"));
        }
        let mut arrays = Vec::with_capacity(manifest.arrays.len());
        let mut chunks = payload.chunks_exact(width);
        for e in manifest.arrays {
            let n: usize = e.shape.iter().product();
            let data: Vec<f64> = chunks
                .by_ref()
                .take(n)
                .map(|c| match manifest.dtype {
                    Dtype::F64 => f64::from_le_bytes(c.try_into().expect("8 bytes")),
                    Dtype::F32 => f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))),
                })
                .collect();
            if data.iter().any(|x| !x.is_finite()) {
                return Err(corrupt(format!("non-finite entry in {}", e.name)));
            }
            arrays.push((e.name, DenseArray::new(e.shape, data)?));
        }
        Ok(Checkpoint {
            step: manifest.step,
            dtype: manifest.dtype,
            config: manifest.config,
            arrays,
        })
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    fs::write(path, ckpt.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut c = Checkpoint::new(17, serde_json::json!({"beta": 1e-9, "layers": 3}));
        c.push("w", DenseArray::from_rows(&[vec![0.1, -2.5e-300], vec![1.0 / 3.0, 7.0]]).unwrap());
        c.push("b", DenseArray::row(&[f64::MIN_POSITIVE, -0.0]));
        c
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.step, 17);
        for ((n1, a1), (n2, a2)) in c.arrays.iter().zip(&back.arrays) {
            assert_eq!(n1, n2);
            let b1: Vec<u64> = a1.data().iter().map(|x| x.to_bits()).collect();
            let b2: Vec<u64> = a2.data().iter().map(|x| x.to_bits()).collect();
            assert_eq!(b1, b2);
        }
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn f32_storage_rounds() {
        let mut c = sample();
        c.dtype = Dtype::F32;
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back.get("w").unwrap().get(1, 0), f64::from((1.0f64 / 3.0) as f32));
    }

    #[test]
    fn detects_corruption() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut flipped = bytes.clone();
        let last = flipped.len() - 1;
        flipped[last] ^= 0x10;
        assert!(Checkpoint::from_bytes(&flipped).is_err());
        let mut vers = bytes;
        vers[4] = 9;
        let err = Checkpoint::from_bytes(&vers).unwrap_err().to_string();
        assert!(err.contains("version 9"), "{err}");
    }
}
