//! Versioned checkpoint container.
//!
//! ```text
//! RLCG-CKPT v1
//! {"hyper": {...}, "adam_step": n, "tensors": [{"name", "shape", "data": ["<f64>", ...]}]}
//! ```
//!
//! Values are written as shortest round-trip decimal strings, so a load
//! reproduces every float bit for bit regardless of platform endianness.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Layers, Network, Shape};
use crate::agent::HyperParams;
use crate::scalar::Scalar;

pub const MAGIC: &str = "RLCG-CKPT";
pub const VERSION: &str = "v1";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheckpointError {
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("unsupported checkpoint version {0:?}")]
    Version(String),
    #[error("tensor {name}: {reason}")]
    Shape { name: String, reason: String },
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: [usize; 2],
    data: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Document {
    hyper: HyperParams,
    adam_step: u64,
    tensors: Vec<TensorRecord>,
}

fn records<T: Scalar>(prefix: &str, layers: &Layers<T>) -> Vec<TensorRecord> {
    layers
        .names()
        .into_iter()
        .zip(layers.tensors())
        .map(|(name, t)| TensorRecord {
            name: format!("{prefix}{name}"),
            shape: [t.rows, t.cols],
            data: t.data.iter().map(|x| format!("{:?}", x.as_f64())).collect(),
        })
        .collect()
}

pub fn save_checkpoint<T: Scalar>(net: &Network<T>, hyper: &HyperParams) -> Vec<u8> {
    assert_eq!(
        (hyper.hidden, hyper.rounds),
        (net.shape.hidden, net.shape.rounds),
        "hyperparameters disagree with network shape"
    );
    let mut tensors = records("", &net.params);
    tensors.extend(records("adam.m.", &net.adam_m));
    tensors.extend(records("adam.v.", &net.adam_v));
    let doc = Document { hyper: hyper.clone(), adam_step: net.step_count, tensors };
    let mut out = format!("{MAGIC} {VERSION}\n").into_bytes();
    out.extend(serde_json::to_vec(&doc).expect("checkpoint serializes"));
    out
}

fn fill<'a, T: Scalar>(
    prefix: &str,
    layers: &mut Layers<T>,
    records: &mut impl Iterator<Item = &'a TensorRecord>,
) -> Result<(), CheckpointError> {
    let names = layers.names();
    for (name, t) in names.into_iter().zip(layers.tensors_mut()) {
        let full = format!("{prefix}{name}");
        let rec = records.next().ok_or_else(|| CheckpointError::Shape {
            name: full.clone(),
            reason: "missing".into(),
        })?;
        if rec.name != full {
            return Err(CheckpointError::Shape { name: full, reason: format!("found {:?} instead", rec.name) });
        }
        if rec.shape != [t.rows, t.cols] || rec.data.len() != t.rows * t.cols {
            return Err(CheckpointError::Shape {
                name: full,
                reason: format!("shape {:?} with {} values, expected [{}, {}]", rec.shape, rec.data.len(), t.rows, t.cols),
            });
        }
        for (dst, s) in t.data.iter_mut().zip(&rec.data) {
            let v: f64 = s.parse().map_err(|_| CheckpointError::Corrupt(format!("bad number {s:?} in {full}")))?;
            *dst = T::from_f64(v).ok_or_else(|| CheckpointError::Corrupt(format!("unrepresentable {s}")))?;
        }
    }
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<(Network<T>, HyperParams), CheckpointError> {
    let text = std::str::from_utf8(bytes).map_err(|_| CheckpointError::Corrupt("not UTF-8".into()))?;
    let (header, body) = text
        .split_once('\n')
        .ok_or_else(|| CheckpointError::Corrupt("missing header line".into()))?;
    let version = header
        .strip_prefix(MAGIC)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| CheckpointError::Corrupt(format!("bad header {header:?}")))?;
    if version != VERSION {
        return Err(CheckpointError::Version(version.to_string()));
    }
    let doc: Document = serde_json::from_str(body).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    let hyper = doc.hyper;
    if hyper.hidden == 0 || hyper.rounds == 0 {
        return Err(CheckpointError::Corrupt("hidden width and rounds must be positive".into()));
    }
    let shape = Shape { hidden: hyper.hidden, rounds: hyper.rounds };
    let mut net = Network {
        shape,
        params: Layers::zeros(shape.hidden, shape.rounds),
        adam_m: Layers::zeros(shape.hidden, shape.rounds),
        adam_v: Layers::zeros(shape.hidden, shape.rounds),
        step_count: doc.adam_step,
    };
    let mut it = doc.tensors.iter();
    fill("", &mut net.params, &mut it)?;
    fill("adam.m.", &mut net.adam_m, &mut it)?;
    fill("adam.v.", &mut net.adam_v, &mut it)?;
    if let Some(extra) = it.next() {
        return Err(CheckpointError::Shape { name: extra.name.clone(), reason: "unexpected tensor".into() });
    }
    Ok((net, hyper))
}
