//! Flat binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  b"EHRCKPT1"
//! n_blocks   u32
//! per block: name_len u32, name (UTF-8), rows u32, cols u32
//! payload    every block row-major as f64 LE, in block order
//! ```

use std::io::{Read, Write};

use super::{Parameterized, Tensor2};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"EHRCKPT1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub blocks: Vec<(String, Tensor2)>,
}

impl Checkpoint {
    pub fn from_params<P: Parameterized>(params: &P) -> Self {
        Checkpoint {
            blocks: params
                .blocks()
                .into_iter()
                .map(|(n, t)| (n.to_string(), t.clone()))
                .collect(),
        }
    }

    /// Copies the stored tensors into `params`, checking names and shapes.
    pub fn load_into<P: Parameterized>(&self, params: &mut P) -> Result<()> {
        let targets = params.blocks_mut();
        if targets.len() != self.blocks.len() {
            return Err(Error::data(format!(
                "checkpoint has {} blocks, model expects {}",
                self.blocks.len(),
                targets.len()
            )));
        }
        for ((name, dst), (src_name, src)) in targets.into_iter().zip(&self.blocks) {
            if name != src_name || !dst.same_shape(src) {
                return Err(Error::data(format!(
                    "checkpoint block '{src_name}' {}x{} does not fit '{name}' {}x{}",
                    src.rows(),
                    src.cols(),
                    dst.rows(),
                    dst.cols()
                )));
            }
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }
}

pub fn write_checkpoint<W: Write>(mut w: W, ckpt: &Checkpoint) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(ckpt.blocks.len() as u32).to_le_bytes())?;
    for (name, t) in &ckpt.blocks {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.rows() as u32).to_le_bytes())?;
        w.write_all(&(t.cols() as u32).to_le_bytes())?;
    }
    for (_, t) in &ckpt.blocks {
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::data("not a parameter checkpoint (bad magic)"));
    }
    let n = read_u32(&mut r)? as usize;
    let mut table = Vec::with_capacity(n);
    for _ in 0..n {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| Error::data("checkpoint name not UTF-8"))?;
        let rows = read_u32(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        table.push((name, rows, cols));
    }
    let mut blocks = Vec::with_capacity(n);
    for (name, rows, cols) in table {
        let mut data = vec![0.0; rows * cols];
        let mut b = [0u8; 8];
        for v in data.iter_mut() {
            r.read_exact(&mut b)?;
            *v = f64::from_le_bytes(b);
        }
        blocks.push((name, Tensor2::from_vec(rows, cols, data)?));
    }
    Ok(Checkpoint { blocks })
}
