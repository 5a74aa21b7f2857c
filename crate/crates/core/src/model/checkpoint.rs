//! Named-tensor checkpoints: magic, version, JSON manifest, then
//! little-endian f32 data in manifest order.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adapter::{AdapterConfig, AdapterStack};
use super::assembly::{ModelAssembly, ADAPTER_PREFIX, BACKBONE_PREFIX};
use super::backbone::Backbone;
use super::tensor::{Parameters, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"ARGPETCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub role: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<(&TensorEntry, &Tensor)> {
        self.manifest
            .tensors
            .iter()
            .zip(&self.tensors)
            .find(|(e, _)| e.name == name)
    }
}

fn role_of(name: &str) -> &'static str {
    if name.starts_with(BACKBONE_PREFIX) {
        "backbone"
    } else if name.starts_with(ADAPTER_PREFIX) {
        "adapter"
    } else {
        "head"
    }
}

/// Write tensors; returns the file size in bytes.
pub fn write_checkpoint(path: impl AsRef<Path>, meta: BTreeMap<String, String>, tensors: &[(String, &str, &Tensor)]) -> Result<u64> {
    let manifest = Manifest {
        meta,
        tensors: tensors
            .iter()
            .map(|(n, role, t)| TensorEntry {
                name: n.clone(),
                shape: t.shape().to_vec(),
                role: role.to_string(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&manifest)?;
    let mut w = BufWriter::new(fs::File::create(path.as_ref())?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for (_, _, t) in tensors {
        for &x in t.data() {
            w.write_all(&(x as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    drop(w);
    Ok(fs::metadata(path.as_ref())?.len())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let bad = |m: &str| Error::Checkpoint(format!("{}: {m}", path.as_ref().display()));
    let mut r = BufReader::new(fs::File::open(path.as_ref())?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
    if &magic != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4).map_err(|_| bad("truncated header"))?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8).map_err(|_| bad("truncated header"))?;
    let mut json = vec![0u8; u64::from_le_bytes(b8) as usize];
    r.read_exact(&mut json).map_err(|_| bad("truncated manifest"))?;
    let manifest: Manifest = serde_json::from_slice(&json)?;
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for e in &manifest.tensors {
        let n: usize = e.shape.iter().product();
        let mut raw = vec![0u8; 4 * n];
        r.read_exact(&mut raw)
            .map_err(|_| bad(&format!("data for `{}` truncated", e.name)))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        tensors.push(Tensor::from_vec(&e.shape, data));
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(bad("trailing bytes after tensor data"));
    }
    Ok(Checkpoint { manifest, tensors })
}

/// Store only the trainable partition. Returns the file size.
pub fn serialize_trainable<B: Backbone>(m: &ModelAssembly<B>, path: impl AsRef<Path>) -> Result<u64> {
    let mut items = Vec::new();
    m.visit_trainable(&mut |n, p| {
        let role = role_of(&n);
        items.push((n, role, &p.value));
    });
    let mut meta = BTreeMap::new();
    meta.insert("head".into(), m.head.kind().into());
    write_checkpoint(path, meta, &items)
}

/// Restore the trainable partition. The checkpoint must name exactly the
/// assembly's trainable tensors with matching shapes.
pub fn deserialize_trainable<B: Backbone>(path: impl AsRef<Path>, mut m: ModelAssembly<B>) -> Result<ModelAssembly<B>> {
    let ck = read_checkpoint(path)?;
    let mut by_name: HashMap<&str, (&TensorEntry, &Tensor)> = ck
        .manifest
        .tensors
        .iter()
        .zip(&ck.tensors)
        .map(|(e, t)| (e.name.as_str(), (e, t)))
        .collect();
    let mut err = None;
    m.visit_trainable_mut(&mut |name, p| {
        if err.is_some() {
            return;
        }
        match by_name.remove(name.as_str()) {
            None => err = Some(Error::Checkpoint(format!("tensor `{name}` missing from checkpoint"))),
            Some((e, _)) if e.shape != p.value.shape() => {
                err = Some(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {:?} in checkpoint, {:?} in assembly",
                    e.shape,
                    p.value.shape()
                )))
            }
            Some((_, t)) => p.value = t.clone(),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    if let Some(extra) = by_name.keys().min() {
        return Err(Error::Checkpoint(format!("tensor `{extra}` is not trainable in this assembly")));
    }
    Ok(m)
}

/// Store one adapter stack on its own, e.g. a pretrained lower adapter.
pub fn save_adapter(stack: &AdapterStack, path: impl AsRef<Path>) -> Result<u64> {
    let mut items = Vec::new();
    stack.visit("", &mut |n, p| items.push((n, "adapter", &p.value)));
    let mut meta = BTreeMap::new();
    meta.insert("name".into(), stack.config.name.clone());
    meta.insert("reduction_factor".into(), stack.config.reduction_factor.to_string());
    meta.insert("hidden".into(), stack.hidden().to_string());
    meta.insert("layers".into(), stack.layers.len().to_string());
    write_checkpoint(path, meta, &items)
}

pub fn load_adapter(path: impl AsRef<Path>) -> Result<AdapterStack> {
    let ck = read_checkpoint(path.as_ref())?;
    let field = |k: &str| -> Result<String> {
        ck.manifest
            .meta
            .get(k)
            .cloned()
            .ok_or_else(|| Error::Checkpoint(format!("{}: adapter field `{k}` missing", path.as_ref().display())))
    };
    let num = |k: &str| -> Result<usize> {
        field(k)?
            .parse()
            .map_err(|_| Error::Checkpoint(format!("adapter field `{k}` is not a count")))
    };
    let config = AdapterConfig::new(field("name")?, num("reduction_factor")?);
    let mut stack = AdapterStack::new(config, num("hidden")?, num("layers")?, 0)?;
    let mut err = None;
    let mut seen = 0;
    stack.visit_mut("", &mut |name, p| match ck.get(&name) {
        Some((e, t)) if e.shape == p.value.shape() => {
            p.value = t.clone();
            seen += 1;
        }
        Some((e, _)) => {
            err.get_or_insert(Error::Checkpoint(format!("tensor `{name}` has shape {:?}", e.shape)));
        }
        None => {
            err.get_or_insert(Error::Checkpoint(format!("tensor `{name}` missing from checkpoint")));
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    if seen != ck.tensors.len() {
        return Err(Error::Checkpoint("adapter checkpoint holds unexpected tensors".into()));
    }
    Ok(stack)
}
