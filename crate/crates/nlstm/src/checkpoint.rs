//! Binary model checkpoints.
//!
//! Layout (little-endian): magic `NLSTMCK\0`, format version `u32`, the
//! model configuration (architecture `u8`, layers, nesting depth, cell,
//! input and output sizes as `u32`, seed `u64`), a tensor count `u32`, then
//! per tensor its name length `u32`, UTF-8 name, rows `u32`, cols `u32` and
//! `rows * cols` `f64` values. Values are stored bit-exactly.

use std::path::Path;

use nlstm_core::model::{Architecture, Model, ModelConfig};

use crate::error::{AppError, Result};

pub const MAGIC: &[u8; 8] = b"NLSTMCK\0";
pub const VERSION: u32 = 1;

pub fn encode(model: &Model) -> Vec<u8> {
    let config = model.config();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(config.architecture.code());
    for v in [config.layers, config.nesting_depth, config.cell_size, config.input_size, config.output_size] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&config.seed.to_le_bytes());

    let mut tensors = Vec::new();
    model.for_each_tensor(&mut |name, rows, cols, values| {
        tensors.push((name.to_string(), rows, cols, values.to_vec()));
    });
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, rows, cols, values) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(rows as u32).to_le_bytes());
        out.extend_from_slice(&(cols as u32).to_le_bytes());
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(AppError::Incompatible(format!(
                "truncated checkpoint: expected {what} at byte {}",
                self.pos
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let mut buf = [0u8; 8];
        buf.copy_from_slice(self.take(8, what)?);
        Ok(u64::from_le_bytes(buf))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(AppError::Incompatible("not a checkpoint file (bad magic)".into()));
    }
    let version = r.u32("version")?;
    if version as u32 != VERSION {
        return Err(AppError::Incompatible(format!(
            "checkpoint version {version} is not supported (expected {VERSION})"
        )));
    }
    let code = r.u8("architecture")?;
    let architecture = Architecture::from_code(code)
        .ok_or_else(|| AppError::Incompatible(format!("unknown architecture code {code}")))?;
    let config = ModelConfig {
        architecture,
        layers: r.u32("layers")?,
        nesting_depth: r.u32("nesting depth")?,
        cell_size: r.u32("cell size")?,
        input_size: r.u32("input size")?,
        output_size: r.u32("output size")?,
        seed: r.u64("seed")?,
    };
    config
        .validate()
        .map_err(|e| AppError::Incompatible(format!("stored configuration is invalid: {e}")))?;
    let mut model = Model::zeros(config)?;

    let mut expected = Vec::new();
    model.for_each_tensor(&mut |name, rows, cols, _| expected.push((name.to_string(), rows, cols)));
    let count = r.u32("tensor count")?;
    if count != expected.len() {
        return Err(AppError::Incompatible(format!(
            "checkpoint has {count} tensors, configuration implies {}",
            expected.len()
        )));
    }
    let mut values = Vec::with_capacity(count);
    for (name, rows, cols) in &expected {
        let len = r.u32("tensor name length")?;
        let stored = std::str::from_utf8(r.take(len, "tensor name")?)
            .map_err(|_| AppError::Incompatible("tensor name is not UTF-8".into()))?;
        if stored != name {
            return Err(AppError::Incompatible(format!("expected tensor {name}, found {stored}")));
        }
        let (sr, sc) = (r.u32("rows")?, r.u32("cols")?);
        if (sr, sc) != (*rows, *cols) {
            return Err(AppError::Incompatible(format!(
                "tensor {name} is {sr}x{sc}, expected {rows}x{cols}"
            )));
        }
        let raw = r.take(sr * sc * 8, "tensor values")?;
        values.push(
            raw.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect::<Vec<f64>>(),
        );
    }
    if r.pos != bytes.len() {
        return Err(AppError::Incompatible(format!(
            "{} trailing bytes after the last tensor",
            bytes.len() - r.pos
        )));
    }
    let mut it = values.into_iter();
    model.for_each_tensor_mut(&mut |slot| {
        slot.copy_from_slice(&it.next().expect("tensor count checked"));
    });
    Ok(model)
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, encode(model)).map_err(|e| AppError::io(path, e))
}

pub fn load(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
    decode(&bytes)
}
