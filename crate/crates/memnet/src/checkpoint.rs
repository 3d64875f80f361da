//! Binary checkpoint container.
//!
//! Layout: magic `MAN1`, u32 LE version (= 1), u32 LE tensor count, then per
//! tensor: u16 LE name length, UTF-8 name, u8 rank, u32 LE dims, f64 LE
//! row-major data. Integer state (seeds, RNG state) rides along as the bit
//! pattern of a one-element tensor, which survives the f64 round trip
//! losslessly.

use std::path::Path;

use crate::error::{Error, Result};
use crate::long_term::{Variant, PARAM_NAMES};
use crate::short_term::{Sample, ShortTermMemory};
use crate::tensor::{Adam, AdamConfig, Rng, Tensor};
use crate::trainer::{TrainConfig, Trainer};

pub const MAGIC: &[u8; 4] = b"MAN1";
pub const VERSION: u32 = 1;

/// An ordered list of named tensors. Order is preserved through save/load,
/// so a load-save cycle is byte-identical.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Checkpoint::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.push((name.into(), tensor));
    }

    pub fn push_scalar(&mut self, name: impl Into<String>, value: f64) {
        self.push(name, Tensor::scalar(value));
    }

    /// Stores a u64 as the bit pattern of an f64, losslessly.
    pub fn push_bits(&mut self, name: impl Into<String>, value: u64) {
        self.push(name, Tensor::scalar(f64::from_bits(value)));
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Contract {
                op: "checkpoint",
                msg: format!("missing tensor {name:?}"),
            })
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        self.get(name)?.item()
    }

    pub fn bits(&self, name: &str) -> Result<u64> {
        Ok(self.scalar(name)?.to_bits())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, tensor) in &self.tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(tensor.shape().len() as u8);
            for &d in tensor.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Self> {
        let mut r = ByteReader {
            bytes,
            offset: 0,
            origin,
        };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(Error::Format {
                path: origin.to_string(),
                offset: 0,
                msg: format!("bad magic {magic:?}, expected {MAGIC:?}"),
            });
        }
        let version = r.u32_le()?;
        if version != VERSION {
            return Err(Error::Format {
                path: origin.to_string(),
                offset: 4,
                msg: format!("unsupported version {version}"),
            });
        }
        let count = r.u32_le()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u16_le()? as usize;
            let name_bytes = r.take(name_len)?;
            let name = std::str::from_utf8(name_bytes)
                .map_err(|_| r.err_at(r.offset - name_len, "tensor name is not UTF-8"))?
                .to_string();
            let rank = r.u8()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32_le()? as usize);
            }
            let numel: usize = shape.iter().product();
            let raw = r.take(numel * 8)?;
            let data: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            tensors.push((name, Tensor::new(shape, data)?));
        }
        if r.offset != bytes.len() {
            return Err(r.err_at(r.offset, "trailing bytes after last tensor"));
        }
        Ok(Checkpoint { tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes, &path.display().to_string())
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    offset: usize,
    origin: &'a str,
}

impl<'a> ByteReader<'a> {
    fn err_at(&self, offset: usize, msg: impl Into<String>) -> Error {
        Error::Format {
            path: self.origin.to_string(),
            offset: offset as u64,
            msg: msg.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.offset + n > self.bytes.len() {
            return Err(self.err_at(
                self.offset,
                format!("need {n} bytes, {} left", self.bytes.len() - self.offset),
            ));
        }
        let s = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16_le(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32_le(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn variant_code(v: Variant) -> f64 {
    match v {
        Variant::TypeA => 0.0,
        Variant::TypeB => 1.0,
    }
}

fn variant_from_code(v: f64) -> Result<Variant> {
    if v == 0.0 {
        Ok(Variant::TypeA)
    } else if v == 1.0 {
        Ok(Variant::TypeB)
    } else {
        Err(Error::Contract {
            op: "checkpoint",
            msg: format!("unknown variant code {v}"),
        })
    }
}

/// Serializes the full training state: config echo, parameters, Adam
/// moments, step counter and RNG state.
pub fn checkpoint_from_trainer(trainer: &Trainer) -> Checkpoint {
    let cfg = &trainer.cfg;
    let mut cp = Checkpoint::new();
    cp.push_scalar("cfg.variant", variant_code(cfg.variant));
    cp.push_scalar("cfg.steps", cfg.steps as f64);
    cp.push_scalar("cfg.batch_size", cfg.batch_size as f64);
    cp.push_bits("cfg.seed", cfg.seed);
    cp.push_scalar("cfg.lambda1", cfg.lambda1);
    cp.push_scalar("cfg.lambda2", cfg.lambda2);
    cp.push_scalar("cfg.input_dim", cfg.input_dim as f64);
    cp.push_scalar("cfg.root_dim", cfg.root_dim as f64);
    cp.push_scalar("cfg.latent_dim", cfg.latent_dim as f64);
    cp.push_scalar("cfg.num_classes", cfg.num_classes as f64);
    cp.push_scalar("cfg.adam.alpha", cfg.adam.alpha);
    cp.push_scalar("cfg.adam.beta1", cfg.adam.beta1);
    cp.push_scalar("cfg.adam.beta2", cfg.adam.beta2);
    cp.push_scalar("cfg.adam.epsilon", cfg.adam.epsilon);
    cp.push_scalar("cfg.capacity", cfg.capacity as f64);
    for (name, tensor) in PARAM_NAMES.iter().zip(trainer.model.params()) {
        cp.push(*name, tensor.clone());
    }
    let (m, v) = trainer.opt.moments();
    for (name, tensor) in PARAM_NAMES.iter().zip(m) {
        cp.push(format!("opt.m.{name}"), tensor.clone());
    }
    for (name, tensor) in PARAM_NAMES.iter().zip(v) {
        cp.push(format!("opt.v.{name}"), tensor.clone());
    }
    cp.push_scalar("opt.t", trainer.opt.step_count() as f64);
    cp.push_scalar("trainer.step", trainer.step as f64);
    cp.push_bits("rng.state", trainer.rng.state());
    cp
}

pub fn trainer_from_checkpoint(cp: &Checkpoint) -> Result<Trainer> {
    let cfg = TrainConfig {
        variant: variant_from_code(cp.scalar("cfg.variant")?)?,
        steps: cp.scalar("cfg.steps")? as u64,
        batch_size: cp.scalar("cfg.batch_size")? as usize,
        seed: cp.bits("cfg.seed")?,
        lambda1: cp.scalar("cfg.lambda1")?,
        lambda2: cp.scalar("cfg.lambda2")?,
        input_dim: cp.scalar("cfg.input_dim")? as usize,
        root_dim: cp.scalar("cfg.root_dim")? as usize,
        latent_dim: cp.scalar("cfg.latent_dim")? as usize,
        num_classes: cp.scalar("cfg.num_classes")? as usize,
        adam: AdamConfig {
            alpha: cp.scalar("cfg.adam.alpha")?,
            beta1: cp.scalar("cfg.adam.beta1")?,
            beta2: cp.scalar("cfg.adam.beta2")?,
            epsilon: cp.scalar("cfg.adam.epsilon")?,
        },
        capacity: cp.scalar("cfg.capacity")? as usize,
    };
    let params: Vec<Tensor> = PARAM_NAMES
        .iter()
        .map(|n| cp.get(n).cloned())
        .collect::<Result<_>>()?;
    let m: Vec<Tensor> = PARAM_NAMES
        .iter()
        .map(|n| cp.get(&format!("opt.m.{n}")).cloned())
        .collect::<Result<_>>()?;
    let v: Vec<Tensor> = PARAM_NAMES
        .iter()
        .map(|n| cp.get(&format!("opt.v.{n}")).cloned())
        .collect::<Result<_>>()?;
    let opt = Adam::restore(cfg.adam, m, v, cp.scalar("opt.t")? as u64);
    let rng = Rng::from_state(cp.bits("rng.state")?);
    let step = cp.scalar("trainer.step")? as u64;
    Trainer::restore(cfg, params, opt, rng, step)
}

pub fn save_trainer(path: &Path, trainer: &Trainer) -> Result<()> {
    checkpoint_from_trainer(trainer).save(path)
}

pub fn load_trainer(path: &Path) -> Result<Trainer> {
    trainer_from_checkpoint(&Checkpoint::load(path)?)
}

/// Serializes a short-term memory: one `[len, dim]` tensor per class queue,
/// oldest first.
pub fn checkpoint_from_memory(mem: &ShortTermMemory) -> Result<Checkpoint> {
    let mut cp = Checkpoint::new();
    cp.push_scalar("mem.num_classes", mem.num_classes() as f64);
    cp.push_scalar("mem.capacity", mem.capacity() as f64);
    let dim = mem.payload_dim().unwrap_or(0);
    cp.push_scalar("mem.payload_dim", dim as f64);
    for class in 0..mem.num_classes() {
        let rows: Vec<Tensor> = mem.queue(class)?.cloned().collect();
        let queue = if rows.is_empty() {
            Tensor::zeros(vec![0, dim])
        } else {
            Tensor::from_rows(&rows)?
        };
        cp.push(format!("mem.queue{class}"), queue);
    }
    Ok(cp)
}

pub fn memory_from_checkpoint(cp: &Checkpoint) -> Result<ShortTermMemory> {
    let num_classes = cp.scalar("mem.num_classes")? as usize;
    let capacity = cp.scalar("mem.capacity")? as usize;
    let mut mem = ShortTermMemory::new(num_classes, capacity);
    for class in 0..num_classes {
        let queue = cp.get(&format!("mem.queue{class}"))?;
        for r in 0..queue.rows() {
            mem.insert(Sample {
                class_id: class,
                payload: Tensor::vector(queue.row(r).to_vec()),
            })?;
        }
    }
    Ok(mem)
}

pub fn save_memory(path: &Path, mem: &ShortTermMemory) -> Result<()> {
    checkpoint_from_memory(mem)?.save(path)
}

pub fn load_memory(path: &Path) -> Result<ShortTermMemory> {
    memory_from_checkpoint(&Checkpoint::load(path)?)
}
