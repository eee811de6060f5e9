//! Head checkpoints.
//!
//! ```text
//! magic "PHC1" | version u16 | header_len u32 | header JSON
//! mlp1_layers u32 | mlp2_layers u32
//! per layer: out u32 | in u32 | activation u8 | weight[out*in] f64 | bias[out] f64
//! ```
//!
//! Weights are row-major `(out, in)`, little-endian.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Activation, HeadConfig, HeadParams, InputDims, Layer};
use crate::error::{Error, Result};
use crate::optim::TrainConfig;
use crate::util::write_atomic;

const MAGIC: [u8; 4] = *b"PHC1";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub head: HeadConfig,
    pub dims: InputDims,
    pub seed: u64,
    /// Optimizer settings the weights were trained with, if any.
    pub train: Option<TrainConfig>,
    /// Epoch the weights were taken from (1-based), if trained.
    pub epoch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: HeadParams,
}

impl Checkpoint {
    pub fn new(head: HeadConfig, params: HeadParams) -> Self {
        Checkpoint {
            header: CheckpointHeader {
                seed: head.seed,
                dims: params.dims,
                head,
                train: None,
                epoch: None,
            },
            params,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut out = Vec::with_capacity(header.len() + 8 * self.params.param_count() + 64);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.params.mlp1().len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.params.mlp2().len() as u32).to_le_bytes());
        for layer in self.params.layers() {
            out.extend_from_slice(&(layer.outputs() as u32).to_le_bytes());
            out.extend_from_slice(&(layer.inputs() as u32).to_le_bytes());
            out.push(layer.activation.tag());
            for x in layer.weight.iter().chain(layer.bias.iter()) {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut take = |n: usize| -> Result<&[u8]> {
            let end = pos + n;
            if end > bytes.len() {
                return Err(Error::Checkpoint(format!("truncated at byte {pos}")));
            }
            let s = &bytes[pos..end];
            pos = end;
            Ok(s)
        };
        if take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = u16::from_le_bytes(take(2)?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let header_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let header: CheckpointHeader = serde_json::from_slice(take(header_len)?)?;
        let n1 = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let n2 = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let mut layers = Vec::with_capacity(n1 + n2);
        for _ in 0..n1 + n2 {
            let out = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let inp = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let tag = take(1)?[0];
            let activation = Activation::from_tag(tag)
                .ok_or_else(|| Error::Checkpoint(format!("unknown activation tag {tag}")))?;
            let mut floats = |n: usize| -> Result<Vec<f64>> {
                Ok(take(n * 8)?
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect())
            };
            let weight = Array2::from_shape_vec((out, inp), floats(out * inp)?)
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
            let bias = Array1::from_vec(floats(out)?);
            layers.push(Layer {
                weight,
                bias,
                activation,
            });
        }
        if pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - pos
            )));
        }
        let mlp2 = layers.split_off(n1);
        let params = HeadParams::new(header.dims, layers, mlp2)?;
        let expected = header.head.input_len(header.dims);
        if params.input_len() != expected {
            return Err(Error::Checkpoint(format!(
                "input width {} does not match config ({expected})",
                params.input_len()
            )));
        }
        Ok(Checkpoint { header, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.to_bytes()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
        Self::from_bytes(&bytes)
    }
}
