//! Toy model checkpoints.
//!
//! `"SAMM" | version u16 | height, width, channels, pool_grid (0 = none),
//! hidden, classes as u32 | parameter count u64 | parameters as f64`, all
//! little-endian.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ModelSpec, ToyModel};

pub const MAGIC: &[u8; 4] = b"SAMM";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 6 * 4 + 8;

pub fn to_bytes(model: &ToyModel) -> Result<Vec<u8>> {
    let s = model.spec();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * model.params().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for n in [
        s.height,
        s.width,
        s.channels,
        s.pool_grid.unwrap_or(0),
        s.hidden,
        s.classes,
    ] {
        let n = u32::try_from(n).map_err(|_| Error::Format(format!("model dimension {n} exceeds u32")))?;
        out.extend_from_slice(&n.to_le_bytes());
    }
    out.extend_from_slice(&(model.params().len() as u64).to_le_bytes());
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<ToyModel> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::Format("not a SAMM checkpoint".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let dims: Vec<usize> = bytes[6..30]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
        .collect();
    let spec = ModelSpec {
        height: dims[0],
        width: dims[1],
        channels: dims[2],
        pool_grid: (dims[3] != 0).then_some(dims[3]),
        hidden: dims[4],
        classes: dims[5],
    };
    spec.validate().map_err(|e| Error::Format(e.to_string()))?;
    let count = u64::from_le_bytes(bytes[30..38].try_into().expect("8 bytes")) as usize;
    if count != spec.num_params() || bytes.len() != HEADER_LEN + 8 * count {
        return Err(Error::Format(format!(
            "checkpoint holds {} bytes of parameters, spec needs {} parameters",
            bytes.len() - HEADER_LEN,
            spec.num_params()
        )));
    }
    let params = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    ToyModel::from_params(spec, params).map_err(|e| Error::Format(e.to_string()))
}

pub fn save(model: &ToyModel, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ToyModel> {
    let bytes = fs::read(path).map_err(|e| Error::data(path, e.to_string()))?;
    from_bytes(&bytes).map_err(|e| Error::data(path, e.to_string()))
}
