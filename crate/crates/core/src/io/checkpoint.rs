//! Binary checkpoint, all integers and floats little-endian:
//!
//! ```text
//! offset  size  field
//! 0       8     magic "PIPNCKPT"
//! 8       4     format version (u32)
//! 12      8     n_s (f64)
//! 20      1     pooling: 0 max, 1 average
//! 21      1     output activation: 0 tanh, 1 linear
//! 22      8     completed epochs (u64)
//! 30      8     root seed (u64)
//! 38      8     Adam step count (u64)
//! 46      4     layer count L (u32)
//! 50      8L    fan_in (u32), fan_out (u32) per layer
//! ...           parameters, Adam first moments, Adam second moments; each
//!               as every layer's weight (fan_out x fan_in, row-major) then
//!               its bias, as f64
//! ```
//!
//! Shuffles are derived from the root seed and the epoch number, so these
//! two values are the whole random state of a run.

use std::path::Path;

use super::{file_error, write_atomic, IoError};
use crate::autodiff::{Layer, ParamStore, PoolKind};
use crate::model::{ArchDescriptor, OutputActivation, PipnModel};
use crate::training::AdamState;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PIPNCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: PipnModel,
    pub adam: AdamState,
    pub epoch: usize,
    pub root_seed: u64,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or("unexpected end of file")?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, String> {
        Ok(f64::from_bits(self.u64()?))
    }
}

fn put_store(out: &mut Vec<u8>, store: &ParamStore) {
    for block in store.blocks() {
        for v in block {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn read_store(r: &mut Reader<'_>, shapes: &[(usize, usize)]) -> Result<ParamStore, String> {
    let mut layers = Vec::with_capacity(shapes.len());
    for &(fan_in, fan_out) in shapes {
        let mut l = Layer::zeros(fan_in, fan_out);
        for v in l.weight.iter_mut().chain(l.bias.iter_mut()) {
            *v = r.f64()?;
        }
        layers.push(l);
    }
    Ok(ParamStore::new(layers))
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let arch = &self.model.arch;
        let mut out = Vec::with_capacity(64 + 24 * self.model.params.parameter_count());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&arch.n_s.to_le_bytes());
        out.push(match arch.pooling {
            PoolKind::Max => 0,
            PoolKind::Average => 1,
        });
        out.push(match arch.output_activation {
            OutputActivation::Tanh => 0,
            OutputActivation::Linear => 1,
        });
        out.extend_from_slice(&(self.epoch as u64).to_le_bytes());
        out.extend_from_slice(&self.root_seed.to_le_bytes());
        out.extend_from_slice(&self.adam.t.to_le_bytes());
        let layers = &self.model.params.layers;
        out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
        for l in layers {
            out.extend_from_slice(&(l.fan_in as u32).to_le_bytes());
            out.extend_from_slice(&(l.fan_out as u32).to_le_bytes());
        }
        put_store(&mut out, &self.model.params);
        put_store(&mut out, &self.adam.m);
        put_store(&mut out, &self.adam.v);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err("not a checkpoint (bad magic)".into());
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(format!("unsupported checkpoint version {version}"));
        }
        let n_s = r.f64()?;
        let pooling = match r.u8()? {
            0 => PoolKind::Max,
            1 => PoolKind::Average,
            b => return Err(format!("unknown pooling code {b}")),
        };
        let output_activation = match r.u8()? {
            0 => OutputActivation::Tanh,
            1 => OutputActivation::Linear,
            b => return Err(format!("unknown output activation code {b}")),
        };
        let arch = ArchDescriptor { n_s, pooling, output_activation };
        arch.validate().map_err(|e| e.to_string())?;
        let epoch = r.u64()? as usize;
        let root_seed = r.u64()?;
        let t = r.u64()?;
        let count = r.u32()? as usize;
        let mut shapes = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            shapes.push((r.u32()? as usize, r.u32()? as usize));
        }
        if shapes != arch.layer_shapes() {
            return Err("layer shapes do not match the architecture".into());
        }
        let params = read_store(&mut r, &shapes)?;
        let m = read_store(&mut r, &shapes)?;
        let v = read_store(&mut r, &shapes)?;
        if r.pos != bytes.len() {
            return Err(format!("{} trailing bytes", bytes.len() - r.pos));
        }
        let model = PipnModel::from_parts(arch, params).map_err(|e| e.to_string())?;
        Ok(Self { model, adam: AdamState { m, v, t }, epoch, root_seed })
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let bytes = std::fs::read(path).map_err(file_error(path))?;
        Self::from_bytes(&bytes).map_err(|reason| IoError::Format { path: path.to_path_buf(), reason })
    }
}
