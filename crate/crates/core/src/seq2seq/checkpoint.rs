//! Binary checkpoints: a length-prefixed JSON manifest followed by
//! length-prefixed little-endian `f64` blocks in manifest order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layers::{blocks_mut, named_blocks};
use super::{Adam, HyperParams, ModelMeta, ModelState};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"CBPNET01";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    hp: HyperParams,
    meta: ModelMeta,
    step: u64,
    #[serde(default)]
    final_loss: Option<f64>,
    /// Names and shapes of the parameter blocks. The Adam first and second
    /// moments follow in the same order.
    blocks: Vec<BlockInfo>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct BlockInfo {
    name: String,
    shape: [usize; 2],
}

pub fn save_checkpoint(model: &ModelState, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(model, &mut f)?;
    f.flush()?;
    Ok(())
}

pub fn write_checkpoint<W: Write>(model: &ModelState, w: &mut W) -> Result<()> {
    let params = named_blocks(&model.params);
    let manifest = Manifest {
        hp: model.hp,
        meta: model.meta.clone(),
        step: model.adam.step,
        final_loss: model.final_loss,
        blocks: params
            .iter()
            .map(|(name, b)| BlockInfo {
                name: name.clone(),
                shape: [b.nrows(), b.ncols()],
            })
            .collect(),
    };
    let text = serde_json::to_vec(&manifest)?;
    w.write_all(MAGIC)?;
    w.write_all(&(text.len() as u64).to_le_bytes())?;
    w.write_all(&text)?;
    let moments = [named_blocks(&model.adam.m), named_blocks(&model.adam.v)];
    for (_, block) in params.iter().chain(moments.iter().flatten()) {
        w.write_all(&(block.len() as u64).to_le_bytes())?;
        for v in block.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelState> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_checkpoint(&mut f)
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<ModelState> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Parse("not a checkpoint file".into()));
    }
    let len = read_u64(r)? as usize;
    let mut text = vec![0u8; len];
    r.read_exact(&mut text)?;
    let manifest: Manifest = serde_json::from_slice(&text)?;
    let mut model = ModelState::new(manifest.hp, manifest.meta)?;
    let expected: Vec<BlockInfo> = named_blocks(&model.params)
        .into_iter()
        .map(|(name, b)| BlockInfo {
            name,
            shape: [b.nrows(), b.ncols()],
        })
        .collect();
    if expected != manifest.blocks {
        return Err(Error::Parse(
            "checkpoint blocks do not match the model built from its hyperparameters".into(),
        ));
    }
    model.adam = Adam::new(&model.params);
    model.adam.step = manifest.step;
    model.final_loss = manifest.final_loss;
    let mut targets = blocks_mut(&mut model.params);
    targets.extend(blocks_mut(&mut model.adam.m));
    targets.extend(blocks_mut(&mut model.adam.v));
    for block in targets {
        let count = read_u64(r)? as usize;
        if count != block.len() {
            return Err(Error::Parse(format!(
                "block of {count} values where {} expected",
                block.len()
            )));
        }
        let mut buf = [0u8; 8];
        for v in block.iter_mut() {
            r.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
    }
    Ok(model)
}
