//! Checkpoint file format.
//!
//! Little-endian binary: magic `LPCK`, u32 version = 1, u64 metadata length,
//! UTF-8 JSON metadata (model spec, scenario, standardizer, training
//! metadata), u32 tensor count, then per tensor: u16 name length, name bytes,
//! u8 ndim, u32 dims, raw f64 data row-major. Tensors appear in declaration
//! order, so save -> load -> save is byte-identical.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{Scenario, Standardizer};

use super::{build_from_spec, Model, ModelSpec};

const MAGIC: &[u8; 4] = b"LPCK";
const VERSION: u32 = 1;

/// Everything needed to rebuild and reuse a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub spec: ModelSpec,
    pub scenario: Scenario,
    pub standardizer: Standardizer,
    pub training: TrainingMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub seed: u64,
    pub final_train: f64,
    pub final_test: f64,
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    model: &Model,
    scenario: &Scenario,
    standardizer: &Standardizer,
    training: &TrainingMeta,
) -> Result<()> {
    let meta = CheckpointMeta {
        spec: model.spec(),
        scenario: scenario.clone(),
        standardizer: standardizer.clone(),
        training: training.clone(),
    };
    let meta_bytes = serde_json::to_vec(&meta)
        .map_err(|e| Error::Checkpoint(format!("serialize metadata: {e}")))?;
    let entries = model.tensor_entries();
    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(meta_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta_bytes);
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, tensor) in entries {
        let name_bytes = name.as_bytes();
        if name_bytes.len() > u16::MAX as usize {
            return Err(Error::Checkpoint(format!("tensor name too long: {name}")));
        }
        out.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        out.extend_from_slice(name_bytes);
        out.push(tensor.dims().len() as u8);
        for d in tensor.dims() {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint(format!(
                "truncated file: wanted {} bytes at offset {}, have {}",
                n,
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Model, CheckpointMeta)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path.as_ref())?.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic (not an LPCK file)".into()));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version} (expected {VERSION})"
        )));
    }
    let meta_len = cur.u64()? as usize;
    let meta_bytes = cur.take(meta_len)?;
    let meta: CheckpointMeta = serde_json::from_slice(meta_bytes)
        .map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
    let mut model = build_from_spec(&meta.spec, 0)?;

    let tensor_count = cur.u32()? as usize;
    let mut loaded: Vec<(String, Vec<usize>, Vec<f64>)> = Vec::with_capacity(tensor_count);
    for _ in 0..tensor_count {
        let name_len = cur.u16()? as usize;
        let name = String::from_utf8(cur.take(name_len)?.to_vec())
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let ndim = cur.take(1)?[0] as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(cur.u32()? as usize);
        }
        let len: usize = dims.iter().product();
        let raw = cur.take(len * 8)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        loaded.push((name, dims, data));
    }
    if cur.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after last tensor",
            bytes.len() - cur.pos
        )));
    }

    let entries = model.tensor_entries_mut();
    if loaded.len() != entries.len() {
        return Err(Error::Checkpoint(format!(
            "tensor count {} does not match spec ({} declared)",
            loaded.len(),
            entries.len()
        )));
    }
    for ((name, dims, data), (want_name, tensor)) in loaded.into_iter().zip(entries) {
        if name != want_name {
            return Err(Error::Checkpoint(format!(
                "tensor order mismatch: found '{name}', expected '{want_name}'"
            )));
        }
        if dims != tensor.dims() {
            return Err(Error::Checkpoint(format!(
                "tensor '{name}': dims {:?} do not match spec {:?}",
                dims,
                tensor.dims()
            )));
        }
        tensor.data_mut().copy_from_slice(&data);
    }
    Ok((model, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_linear, build_temporal, LinearModelSpec, TemporalModelSpec};
    use crate::nncore::{rng_from_seed, Mode, Tensor};
    use crate::preprocess::Scenario;
    use rand::Rng;

    fn demo_meta_parts() -> (Scenario, Standardizer, TrainingMeta) {
        (
            Scenario::parse("xy-z").unwrap(),
            Standardizer {
                input_mean: vec![0.0; 4],
                input_std: vec![1.0; 4],
                target_mean: vec![0.5, -0.5],
                target_std: vec![2.0, 3.0],
            },
            TrainingMeta {
                epochs: 5,
                seed: 11,
                final_train: 0.25,
                final_test: 0.5,
            },
        )
    }

    #[test]
    fn save_load_forward_is_bit_identical() {
        let dir = std::env::temp_dir().join("poselift_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.lpck");
        let (scenario, standardizer, training) = demo_meta_parts();

        let mut model = build_temporal(&TemporalModelSpec::new(2, 6, vec![3, 3], 0.25), 7).unwrap();
        // perturb running stats so they round-trip too
        let x_warm = {
            let mut rng = rng_from_seed(3);
            Tensor::from_vec(&[4, 4, 9], (0..4 * 4 * 9).map(|_| rng.gen::<f64>()).collect()).unwrap()
        };
        model.forward(&x_warm, Mode::Train).unwrap();

        save_checkpoint(&path, &model, &scenario, &standardizer, &training).unwrap();
        let (mut loaded, meta) = load_checkpoint(&path).unwrap();
        assert_eq!(meta.training, training);
        assert_eq!(meta.standardizer, standardizer);

        let mut rng = rng_from_seed(5);
        let x = Tensor::from_vec(&[2, 4, 9], (0..2 * 4 * 9).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let a = model.forward(&x, Mode::Eval).unwrap();
        let b = loaded.forward(&x, Mode::Eval).unwrap();
        assert_eq!(a.data(), b.data());
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn linear_save_load_round_trip() {
        let dir = std::env::temp_dir().join("poselift_ckpt_test2");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("lin.lpck");
        let (scenario, standardizer, training) = demo_meta_parts();
        let model = build_linear(&LinearModelSpec::new(2, 8, 0.25), 13).unwrap();
        save_checkpoint(&path, &model, &scenario, &standardizer, &training).unwrap();
        let (mut loaded, _) = load_checkpoint(&path).unwrap();
        let mut model = model;
        let x = Tensor::from_vec(&[3, 4], (0..12).map(|i| i as f64 / 7.0).collect()).unwrap();
        assert_eq!(
            model.forward(&x, Mode::Eval).unwrap().data(),
            loaded.forward(&x, Mode::Eval).unwrap().data()
        );
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn bad_magic_version_and_truncation_are_rejected() {
        let dir = std::env::temp_dir().join("poselift_ckpt_test3");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.lpck");
        let (scenario, standardizer, training) = demo_meta_parts();
        let model = build_linear(&LinearModelSpec::new(2, 4, 0.0), 1).unwrap();
        save_checkpoint(&path, &model, &scenario, &standardizer, &training).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        std::fs::write(&path, &bad_magic).unwrap();
        assert!(load_checkpoint(&path).unwrap_err().to_string().contains("magic"));

        let mut bad_version = bytes.clone();
        bad_version[4] = 9;
        std::fs::write(&path, &bad_version).unwrap();
        assert!(load_checkpoint(&path).unwrap_err().to_string().contains("version"));

        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(load_checkpoint(&path).unwrap_err().to_string().contains("truncated"));
        std::fs::remove_file(&path).ok();
    }
}
