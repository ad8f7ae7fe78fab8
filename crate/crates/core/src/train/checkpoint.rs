//! Self-describing checkpoint container and top-k averaging.
//!
//! A checkpoint stores every parameter-store entry — trainable weights and
//! batch-norm running statistics alike — as named, shaped f64 tensors,
//! together with the epoch index, the validation metric, and a fingerprint
//! of the model configuration that produced it. Loading into a model with a
//! different configuration is refused rather than reinterpreted.
//!
//! Binary layout (all integers little-endian):
//!
//! ```text
//! magic "RTFC" | version u32 | fingerprint u64 | epoch u64 | metric f64
//! | n_tensors u64 | n × (name_len u64, name bytes, ndim u64, dims u64…,
//!                        data f64…)
//! ```

use std::fs;
use std::path::Path;

use crate::error::Error;
use crate::model::Model;
use crate::rng::fnv1a64;
use crate::tensor::Tensor;
use crate::Result;

const MAGIC: &[u8; 4] = b"RTFC";
const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    /// Hash of the producing model's canonical configuration string.
    pub fingerprint: u64,
    pub epoch: u64,
    /// Validation metric used for ranking (lower is better).
    pub val_metric: f64,
    /// Every parameter-store entry, in registration order.
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    /// Snapshot a model's full state.
    pub fn from_model(model: &Model, epoch: u64, val_metric: f64) -> Checkpoint {
        Checkpoint {
            fingerprint: fnv1a64(model.cfg.fingerprint_string().as_bytes()),
            epoch,
            val_metric,
            tensors: model
                .ps
                .iter()
                .map(|(_, e)| (e.name.clone(), e.value.clone()))
                .collect(),
        }
    }

    /// Write the model state in this checkpoint back into `model`.
    pub fn apply_to(&self, model: &mut Model) -> Result<()> {
        let expected = fnv1a64(model.cfg.fingerprint_string().as_bytes());
        if self.fingerprint != expected {
            return Err(Error::state(format!(
                "checkpoint fingerprint {:016x} does not match this model \
                 configuration ({expected:016x}); it was produced by a \
                 different configuration",
                self.fingerprint
            )));
        }
        let ids = model.ps.ids();
        if ids.len() != self.tensors.len() {
            return Err(Error::state(format!(
                "checkpoint has {} tensors, model has {}",
                self.tensors.len(),
                ids.len()
            )));
        }
        for (&id, (name, value)) in ids.iter().zip(&self.tensors) {
            let entry = model.ps.entry(id);
            if &entry.name != name {
                return Err(Error::state(format!(
                    "checkpoint tensor {name:?} where model expects {:?}",
                    entry.name
                )));
            }
            if entry.value.shape() != value.shape() {
                return Err(Error::state(format!(
                    "tensor {name:?}: checkpoint shape {:?}, model shape {:?}",
                    value.shape(),
                    entry.value.shape()
                )));
            }
        }
        for (&id, (_, value)) in ids.iter().zip(&self.tensors) {
            model.ps.set(id, value.clone());
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.fingerprint.to_le_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&self.val_metric.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u64).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u64).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.ndim() as u64).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut r = Reader {
            bytes: &bytes,
            pos: 0,
            what: &path.display().to_string(),
        };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(Error::format(format!(
                "{}: not a checkpoint file (bad magic)",
                path.display()
            )));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::format(format!(
                "{}: unsupported checkpoint version {version}",
                path.display()
            )));
        }
        let fingerprint = r.u64()?;
        let epoch = r.u64()?;
        let val_metric = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let n_tensors = r.u64()? as usize;
        let mut tensors = Vec::with_capacity(n_tensors);
        for _ in 0..n_tensors {
            let name_len = r.u64()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::format(format!("{}: tensor name is not UTF-8", path.display())))?;
            let ndim = r.u64()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u64()? as usize);
            }
            let numel: usize = shape.iter().product();
            let mut data = Vec::with_capacity(numel);
            for _ in 0..numel {
                data.push(f64::from_le_bytes(r.take(8)?.try_into().unwrap()));
            }
            tensors.push((name, Tensor::from_vec(&shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::format(format!(
                "{}: {} trailing bytes after checkpoint payload",
                path.display(),
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint {
            fingerprint,
            epoch,
            val_metric,
            tensors,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(format!(
                "{}: truncated checkpoint ({} bytes needed at offset {}, {} available)",
                self.what,
                n,
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Pick the `k` checkpoints with the lowest validation metric (ties broken
/// by earlier epoch; fewer than `k` available means all are used) and
/// return their elementwise mean — running statistics included. The result
/// keeps the best input's epoch and metric for reference.
pub fn select_and_average(checkpoints: &[Checkpoint], k: usize) -> Result<Checkpoint> {
    if checkpoints.is_empty() {
        return Err(Error::state("no checkpoints to select from"));
    }
    if k == 0 {
        return Err(Error::config("checkpoint average needs k ≥ 1"));
    }
    let fp = checkpoints[0].fingerprint;
    if checkpoints.iter().any(|c| c.fingerprint != fp) {
        return Err(Error::state(
            "cannot average checkpoints from different model configurations",
        ));
    }
    let mut order: Vec<usize> = (0..checkpoints.len()).collect();
    order.sort_by(|&a, &b| {
        checkpoints[a]
            .val_metric
            .total_cmp(&checkpoints[b].val_metric)
            .then(checkpoints[a].epoch.cmp(&checkpoints[b].epoch))
    });
    let chosen: Vec<&Checkpoint> = order
        .iter()
        .take(k.min(checkpoints.len()))
        .map(|&i| &checkpoints[i])
        .collect();
    let template = chosen[0];
    if chosen
        .iter()
        .any(|c| c.tensors.len() != template.tensors.len())
    {
        return Err(Error::state("checkpoints disagree on tensor count"));
    }
    // Average as template + mean(deltas): the selected checkpoints are close
    // to each other, so the deltas are small and well conditioned, and a set
    // of identical checkpoints averages to itself bit for bit (all deltas
    // are exactly zero).
    let inv = 1.0 / chosen.len() as f64;
    let mut tensors: Vec<(String, Tensor)> = Vec::with_capacity(template.tensors.len());
    for (slot, (name, base)) in template.tensors.iter().enumerate() {
        let mut delta_sum = vec![0.0; base.numel()];
        for c in chosen.iter().skip(1) {
            let (other_name, other) = c
                .tensors
                .get(slot)
                .ok_or_else(|| Error::state("checkpoints disagree on tensor count"))?;
            if other_name != name || other.shape() != base.shape() {
                return Err(Error::state(format!(
                    "checkpoints disagree on tensor {name:?}"
                )));
            }
            for ((s, &o), &b) in delta_sum.iter_mut().zip(other.data()).zip(base.data()) {
                *s += o - b;
            }
        }
        let mixed: Vec<f64> = base
            .data()
            .iter()
            .zip(&delta_sum)
            .map(|(&b, &d)| b + d * inv)
            .collect();
        tensors.push((name.clone(), Tensor::from_vec(base.shape(), mixed)?));
    }
    Ok(Checkpoint {
        fingerprint: fp,
        epoch: template.epoch,
        val_metric: template.val_metric,
        tensors,
    })
}
