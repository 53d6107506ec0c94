//! Model checkpoint directory: `meta.json` (kind, dims, schedule,
//! normalization) plus `params.f64`, all tensors concatenated row-major
//! little-endian in declaration order (hypernetwork first, then the FC+ILR
//! trunk when present).

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

use crate::error::{FieldError, Result};
use crate::io::{read_f64_file, sha256_file, write_f64_file};
use crate::models::{FeatureNorm, Head, ModeSchedule, Surrogate1D, SurrogateModel};
use crate::numerics::MlpParams;

pub const CHECKPOINT_FORMAT_VERSION: &str = "fieldamort-ckpt-v1";

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    format_version: String,
    kind: String,
    hyper_dims: Vec<usize>,
    head: HeadMeta,
    norm: FeatureNorm,
    seed: Option<u64>,
    params_checksum: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum HeadMeta {
    Fourier { schedule: ModeSchedule },
    Fourier1d { schedule: ModeSchedule },
    FcIlr { trunk_dims: Vec<usize> },
    FcInr { dims: Vec<usize> },
    Linear,
}

#[derive(Debug, Clone)]
pub enum Checkpoint {
    TwoD(SurrogateModel),
    OneD(Surrogate1D),
}

impl Checkpoint {
    pub fn kind_name(&self) -> String {
        match self {
            Checkpoint::TwoD(m) => m.kind().name().to_string(),
            Checkpoint::OneD(_) => "fourier1d".to_string(),
        }
    }
}

pub fn save_model(model: &SurrogateModel, seed: Option<u64>, path: &Path) -> Result<()> {
    fs::create_dir_all(path)?;
    let mut flat = model.hyper.flatten();
    let head = match &model.head {
        Head::Fourier { schedule } => HeadMeta::Fourier {
            schedule: schedule.clone(),
        },
        Head::FcIlr { trunk } => {
            flat.extend(trunk.flatten());
            HeadMeta::FcIlr {
                trunk_dims: trunk.dims(),
            }
        }
        Head::FcInr { dims } => HeadMeta::FcInr { dims: dims.clone() },
        Head::Linear => HeadMeta::Linear,
    };
    write_f64_file(&path.join("params.f64"), &flat)?;
    let meta = CheckpointMeta {
        format_version: CHECKPOINT_FORMAT_VERSION.to_string(),
        kind: model.kind().name().to_string(),
        hyper_dims: model.hyper.dims(),
        head,
        norm: model.norm,
        seed,
        params_checksum: sha256_file(&path.join("params.f64"))?,
    };
    fs::write(path.join("meta.json"), serde_json::to_vec_pretty(&meta)?)?;
    Ok(())
}

pub fn save_model_1d(model: &Surrogate1D, seed: Option<u64>, path: &Path) -> Result<()> {
    fs::create_dir_all(path)?;
    let flat = model.hyper.flatten();
    write_f64_file(&path.join("params.f64"), &flat)?;
    let meta = CheckpointMeta {
        format_version: CHECKPOINT_FORMAT_VERSION.to_string(),
        kind: "fourier1d".to_string(),
        hyper_dims: model.hyper.dims(),
        head: HeadMeta::Fourier1d {
            schedule: model.schedule.clone(),
        },
        norm: model.norm,
        seed,
        params_checksum: sha256_file(&path.join("params.f64"))?,
    };
    fs::write(path.join("meta.json"), serde_json::to_vec_pretty(&meta)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let meta: CheckpointMeta = serde_json::from_slice(&fs::read(path.join("meta.json"))?)?;
    if meta.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(FieldError::VersionMismatch {
            expected: CHECKPOINT_FORMAT_VERSION.to_string(),
            found: meta.format_version,
        });
    }
    let actual = sha256_file(&path.join("params.f64"))?;
    if actual != meta.params_checksum {
        return Err(FieldError::Checksum(format!(
            "params.f64: {actual} != {}",
            meta.params_checksum
        )));
    }
    let flat = read_f64_file(&path.join("params.f64"))?;
    let hyper_len: usize = meta
        .hyper_dims
        .windows(2)
        .map(|w| w[0] * w[1] + w[1])
        .sum();
    if flat.len() < hyper_len {
        return Err(FieldError::Truncated("params.f64 shorter than hypernetwork".into()));
    }
    let hyper = MlpParams::unflatten(&meta.hyper_dims, &flat[..hyper_len])?;
    match meta.head {
        HeadMeta::Fourier { schedule } => Ok(Checkpoint::TwoD(SurrogateModel {
            hyper,
            head: Head::Fourier { schedule },
            norm: meta.norm,
        })),
        HeadMeta::Fourier1d { schedule } => Ok(Checkpoint::OneD(Surrogate1D {
            hyper,
            schedule,
            norm: meta.norm,
        })),
        HeadMeta::FcIlr { trunk_dims } => {
            let trunk = MlpParams::unflatten(&trunk_dims, &flat[hyper_len..])?;
            Ok(Checkpoint::TwoD(SurrogateModel {
                hyper,
                head: Head::FcIlr { trunk },
                norm: meta.norm,
            }))
        }
        HeadMeta::FcInr { dims } => Ok(Checkpoint::TwoD(SurrogateModel {
            hyper,
            head: Head::FcInr { dims },
            norm: meta.norm,
        })),
        HeadMeta::Linear => Ok(Checkpoint::TwoD(SurrogateModel {
            hyper,
            head: Head::Linear,
            norm: meta.norm,
        })),
    }
}
