//! Binary checkpoint: 8-byte magic, `u32` LE format version, `u64` LE header
//! length, a JSON header, then `f64` LE payload: parameters, ADAM first
//! moments and ADAM second moments, each in header group order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelDims, TrainConfig, TrainState};
use crate::data::BaselineEncoder;
use crate::error::{Error, Result};
use crate::numerics::{AdamState, ParamStore, ParamStoreBuilder};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"LACKPT\0\0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GroupEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    seed: u64,
    epoch: usize,
    config: TrainConfig,
    dims: ModelDims,
    baseline: BaselineEncoder,
    adam_step: u64,
    groups: Vec<GroupEntry>,
    payload_len: usize,
}

/// Decoded checkpoint contents.
pub type Checkpoint = TrainState;

fn format_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: message.into(),
    }
}

/// Write atomically (temporary file in the same directory, then rename).
pub fn save_checkpoint(state: &TrainState, path: &Path) -> Result<()> {
    let mut groups = Vec::new();
    let mut offset = 0;
    for (id, name, values) in state.params.groups() {
        groups.push(GroupEntry {
            name: name.to_string(),
            shape: state.params.layout().shape(id).to_vec(),
            offset,
            len: values.len(),
        });
        offset += values.len();
    }
    let header = Header {
        format_version: CHECKPOINT_VERSION,
        seed: state.config.seed,
        epoch: state.epoch,
        config: state.config.clone(),
        dims: state.dims,
        baseline: state.encoder.clone(),
        adam_step: state.adam.step,
        groups,
        payload_len: 3 * offset,
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::config(e.to_string()))?;

    let mut bytes = Vec::with_capacity(20 + json.len() + 24 * offset);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    for store in [&state.params, &state.adam.first_moment, &state.adam.second_moment] {
        for v in store.iter_flat() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }

    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("checkpoint")
    ));
    let mut file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
    file.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(format_error(path, "not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(format_error(path, format!("unsupported checkpoint version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let header_end = 20usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| format_error(path, "truncated header"))?;
    let header: Header = serde_json::from_slice(&bytes[20..header_end])
        .map_err(|e| format_error(path, format!("header: {e}")))?;
    if header.format_version != version {
        return Err(format_error(path, "header and preamble versions differ"));
    }
    let payload = &bytes[header_end..];
    if payload.len() != 8 * header.payload_len {
        return Err(format_error(
            path,
            format!("payload has {} bytes, header declares {} values", payload.len(), header.payload_len),
        ));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let n = header.payload_len / 3;
    if header.groups.iter().map(|g| g.len).sum::<usize>() != n || 3 * n != header.payload_len {
        return Err(format_error(path, "group sizes do not add up to the payload"));
    }

    let store = |section: usize| -> Result<ParamStore> {
        let mut builder = ParamStoreBuilder::new();
        for g in &header.groups {
            if g.shape.iter().product::<usize>() != g.len || g.offset + g.len > n {
                return Err(format_error(path, format!("group `{}` has inconsistent extent", g.name)));
            }
            let start = section * n + g.offset;
            builder.add(g.name.clone(), &g.shape, values[start..start + g.len].to_vec());
        }
        Ok(builder.build())
    };
    let params = store(0)?;
    let mut adam = AdamState::new(header.config.adam, &params);
    adam.first_moment = store(1)?;
    adam.second_moment = store(2)?;
    adam.step = header.adam_step;

    header.config.validate()?;
    if header.seed != header.config.seed {
        return Err(format_error(path, "seed field disagrees with the configuration"));
    }
    let model = Model::resolve(header.dims, &params)?;
    Ok(TrainState {
        config: header.config,
        dims: header.dims,
        encoder: header.baseline,
        model,
        params,
        adam,
        epoch: header.epoch,
    })
}
