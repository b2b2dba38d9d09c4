//! Named trainable parameters, seeded initialization and safetensors checkpoints.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::NnError;

/// Parameters keyed by dotted name. Iteration order is the name order, so
/// optimizers and hashes never depend on insertion order.
#[derive(Debug, Clone)]
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    dtype: DType,
}

impl ParamStore {
    pub fn new(dtype: DType) -> Self {
        Self { vars: BTreeMap::new(), dtype }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    fn insert(&mut self, name: &str, shape: &[usize], values: Vec<f64>) -> Result<Tensor, NnError> {
        if self.vars.contains_key(name) {
            return Err(NnError::Config(format!("parameter {name} defined twice")));
        }
        let t = Tensor::from_vec(values, shape, &Device::Cpu)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        self.vars.insert(name.to_string(), var);
        Ok(out)
    }

    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64, rng: &mut impl Rng) -> Result<Tensor, NnError> {
        let n = shape.iter().product();
        let values = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
        self.insert(name, shape, values)
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64, rng: &mut impl Rng) -> Result<Tensor, NnError> {
        let dist = Normal::new(0.0, std).map_err(|e| NnError::Config(e.to_string()))?;
        let n = shape.iter().product();
        let values = (0..n).map(|_| dist.sample(rng)).collect();
        self.insert(name, shape, values)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<Tensor, NnError> {
        self.insert(name, shape, vec![value; shape.iter().product()])
    }

    pub fn get(&self, name: &str) -> Result<Tensor, NnError> {
        self.vars
            .get(name)
            .map(|v| v.as_tensor().clone())
            .ok_or_else(|| NnError::Checkpoint(format!("missing parameter {name}")))
    }

    pub fn var(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }

    pub fn vars(&self) -> Vec<Var> {
        self.vars.values().cloned().collect()
    }

    /// Variables whose name starts with one of `prefixes`.
    pub fn vars_with_prefix(&self, prefixes: &[&str]) -> Vec<Var> {
        self.vars
            .iter()
            .filter(|(k, _)| prefixes.iter().any(|p| k.starts_with(p)))
            .map(|(_, v)| v.clone())
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// Detached copies of every value.
    pub fn snapshot(&self) -> Result<BTreeMap<String, Tensor>, NnError> {
        self.vars.iter().map(|(k, v)| Ok((k.clone(), v.as_tensor().copy()?.detach()))).collect()
    }

    pub fn restore(&self, snapshot: &BTreeMap<String, Tensor>) -> Result<(), NnError> {
        for (k, v) in &self.vars {
            let t = snapshot.get(k).ok_or_else(|| NnError::Checkpoint(format!("snapshot lacks {k}")))?;
            v.set(t)?;
        }
        Ok(())
    }

    /// Overwrites one parameter in place.
    pub fn set(&self, name: &str, value: &Tensor) -> Result<(), NnError> {
        let var = self.vars.get(name).ok_or_else(|| NnError::Checkpoint(format!("missing parameter {name}")))?;
        if var.shape() != value.shape() {
            return Err(NnError::Checkpoint(format!("{name}: shape {:?} vs {:?}", var.shape(), value.shape())));
        }
        var.set(&value.to_dtype(self.dtype)?)?;
        Ok(())
    }

    /// SHA-256 over names, shapes and little-endian f64 values.
    pub fn hash(&self) -> Result<String, NnError> {
        let mut h = Sha256::new();
        for (k, v) in &self.vars {
            h.update(k.as_bytes());
            for d in v.dims() {
                h.update((*d as u64).to_le_bytes());
            }
            for x in v.as_tensor().flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()? {
                h.update(x.to_le_bytes());
            }
        }
        Ok(hex::encode(h.finalize()))
    }

    pub fn all_finite(&self) -> Result<bool, NnError> {
        for v in self.vars.values() {
            if !finite(v.as_tensor())? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Writes a safetensors archive with string metadata.
    pub fn save(&self, path: &Path, metadata: &BTreeMap<String, String>) -> Result<(), NnError> {
        let mut raw: Vec<(String, Vec<usize>, Vec<u8>)> = Vec::with_capacity(self.vars.len());
        for (k, v) in &self.vars {
            let values = v.as_tensor().flatten_all()?.to_dtype(DType::F32)?.to_vec1::<f32>()?;
            let bytes = values.iter().flat_map(|x| x.to_le_bytes()).collect();
            raw.push((k.clone(), v.dims().to_vec(), bytes));
        }
        let views = raw
            .iter()
            .map(|(k, shape, bytes)| {
                safetensors::tensor::TensorView::new(safetensors::Dtype::F32, shape.clone(), bytes)
                    .map(|view| (k.clone(), view))
                    .map_err(|e| NnError::Checkpoint(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let meta: HashMap<String, String> = metadata.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        let bytes = safetensors::serialize(views, Some(meta)).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, bytes)?;
        Ok(())
    }

    /// Reads an archive written by [`ParamStore::save`].
    pub fn load(path: &Path, dtype: DType) -> Result<(Self, BTreeMap<String, String>), NnError> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes, dtype).map_err(|e| match e {
            NnError::Checkpoint(m) => NnError::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_bytes(bytes: &[u8], dtype: DType) -> Result<(Self, BTreeMap<String, String>), NnError> {
        let bad = |e: safetensors::SafeTensorError| NnError::Checkpoint(e.to_string());
        let (_, header) = safetensors::SafeTensors::read_metadata(bytes).map_err(bad)?;
        let metadata: BTreeMap<String, String> = header.metadata().clone().unwrap_or_default().into_iter().collect();
        let archive = safetensors::SafeTensors::deserialize(bytes).map_err(bad)?;
        let mut store = Self::new(dtype);
        for (name, view) in archive.tensors() {
            if view.dtype() != safetensors::Dtype::F32 {
                return Err(NnError::Checkpoint(format!("{name}: expected F32, got {:?}", view.dtype())));
            }
            let values: Vec<f64> =
                view.data().chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
            store.insert(&name, view.shape(), values)?;
        }
        Ok((store, metadata))
    }
}

pub fn finite(t: &Tensor) -> Result<bool, NnError> {
    let s = t.to_dtype(DType::F64)?.sqr()?.sum_all()?.to_scalar::<f64>()?;
    Ok(s.is_finite())
}

pub fn scalar(t: &Tensor) -> Result<f64, NnError> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}
