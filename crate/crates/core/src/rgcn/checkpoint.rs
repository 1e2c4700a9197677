use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, Params, RgcnModel, Scalar};

const FORMAT: &str = "graphvid-rgcn-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset from the start of the data section.
    pub offset: u64,
}

/// JSON header preceding the tensor data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
}

fn err(e: impl std::fmt::Display) -> ModelError {
    ModelError::Checkpoint(e.to_string())
}

/// Layout: header length (u64 LE), JSON header, little-endian f32 tensors.
pub fn write_checkpoint<F: Scalar, W: Write>(model: &RgcnModel<F>, mut out: W) -> Result<(), ModelError> {
    let names = model.params.names();
    let tensors = model.params.tensors();
    let mut offset = 0u64;
    let entries = names
        .into_iter()
        .zip(&tensors)
        .map(|(name, (shape, data))| {
            let e = TensorEntry {
                name,
                shape: shape.clone(),
                offset,
            };
            offset += 4 * data.len() as u64;
            e
        })
        .collect();
    let header = CheckpointHeader {
        format: FORMAT.into(),
        config: model.config.clone(),
        tensors: entries,
    };
    let json = serde_json::to_vec(&header).map_err(err)?;
    let mut buf = Vec::with_capacity(8 + json.len() + offset as usize);
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for (_, data) in &tensors {
        for x in data.iter() {
            buf.extend_from_slice(&(x.to_f32().unwrap_or(f32::NAN)).to_le_bytes());
        }
    }
    out.write_all(&buf).map_err(err)
}

pub fn read_checkpoint<F: Scalar, R: Read>(mut input: R) -> Result<RgcnModel<F>, ModelError> {
    let mut len = [0u8; 8];
    input.read_exact(&mut len).map_err(|_| err("truncated header length"))?;
    let len = u64::from_le_bytes(len);
    if len > 1 << 30 {
        return Err(err("implausible header length"));
    }
    let mut json = vec![0u8; len as usize];
    input.read_exact(&mut json).map_err(|_| err("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(&json).map_err(err)?;
    if header.format != FORMAT {
        return Err(err(format!("unknown format {:?}", header.format)));
    }
    let mut data = Vec::new();
    input.read_to_end(&mut data).map_err(err)?;

    header.config.validate()?;
    let mut params = Params::<F>::zeros(&header.config);
    let expected: Vec<(String, Vec<usize>)> = params
        .names()
        .into_iter()
        .zip(params.tensors().into_iter().map(|(s, _)| s))
        .collect();
    if expected.len() != header.tensors.len() {
        return Err(err(format!(
            "manifest lists {} tensors, config implies {}",
            header.tensors.len(),
            expected.len()
        )));
    }
    for ((entry, (name, shape)), dst) in header.tensors.iter().zip(&expected).zip(params.tensors_mut()) {
        if &entry.name != name || &entry.shape != shape {
            return Err(err(format!("tensor {} {:?} does not match {name} {shape:?}", entry.name, entry.shape)));
        }
        let start = usize::try_from(entry.offset).map_err(err)?;
        let bytes = start
            .checked_add(4 * dst.len())
            .and_then(|end| data.get(start..end))
            .ok_or_else(|| err(format!("tensor {name} runs past the end of the file")))?;
        for (x, b) in dst.iter_mut().zip(bytes.chunks_exact(4)) {
            *x = F::of(f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])));
        }
    }
    Ok(RgcnModel {
        config: header.config,
        params,
    })
}

/// Written to a sibling temp file, then renamed into place.
pub fn save_checkpoint<F: Scalar>(model: &RgcnModel<F>, path: &Path) -> Result<(), ModelError> {
    let mut buf = Vec::new();
    write_checkpoint(model, &mut buf)?;
    crate::store::write_atomic(path, &buf).map_err(err)
}

pub fn load_checkpoint<F: Scalar>(path: &Path) -> Result<RgcnModel<F>, ModelError> {
    let file = std::fs::File::open(path).map_err(|e| err(format!("{}: {e}", path.display())))?;
    read_checkpoint(std::io::BufReader::new(file))
}
