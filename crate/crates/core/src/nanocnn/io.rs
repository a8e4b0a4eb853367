//! Weight files.
//!
//! The header records the network spec, class names and training metadata
//! plus the shape of every parameter tensor; the payload is the tensors in
//! parameter order as little-endian `f32`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{build_network, Network, NetworkSpec};
use super::tensor::{Scalar, Tensor};
use crate::container;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CRCNNWT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub spec: NetworkSpec,
    pub class_names: Vec<String>,
    pub seed: u64,
    pub epochs_run: usize,
    pub network: Network<f32>,
}

impl ModelWeights {
    pub fn new(spec: NetworkSpec, class_names: Vec<String>, seed: u64) -> Result<Self> {
        if class_names.len() != spec.num_classes {
            return Err(Error::Config(format!(
                "{} class names for a {}-way network",
                class_names.len(),
                spec.num_classes
            )));
        }
        Ok(ModelWeights {
            network: build_network(&spec, seed)?,
            spec,
            class_names,
            seed,
            epochs_run: 0,
        })
    }

    pub fn class_name(&self, label: usize) -> &str {
        &self.class_names[label]
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    spec: NetworkSpec,
    class_names: Vec<String>,
    seed: u64,
    epochs_run: usize,
    dtype: u8,
    shapes: Vec<Vec<usize>>,
}

pub fn encode_weights(w: &ModelWeights) -> Vec<u8> {
    let header = Header {
        spec: w.spec,
        class_names: w.class_names.clone(),
        seed: w.seed,
        epochs_run: w.epochs_run,
        dtype: f32::DTYPE,
        shapes: w.network.params().iter().map(|p| p.shape().to_vec()).collect(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut payload = Vec::with_capacity(w.network.param_count() * 4);
    for p in w.network.params() {
        for &v in p.data() {
            v.write_le(&mut payload);
        }
    }
    container::encode(MAGIC, VERSION, &header, &payload)
}

pub fn decode_weights(bytes: &[u8]) -> Result<ModelWeights> {
    let (header, payload) = container::decode(bytes, MAGIC, VERSION)?;
    let header: Header =
        serde_json::from_slice(header).map_err(|e| Error::Format(format!("bad weight header: {e}")))?;
    if header.dtype != f32::DTYPE {
        return Err(Error::Format(format!("unsupported dtype tag {}", header.dtype)));
    }
    header.spec.validate().map_err(|e| Error::Format(e.to_string()))?;
    if header.class_names.len() != header.spec.num_classes {
        return Err(Error::Format("class name count does not match the network spec".into()));
    }
    let expected: usize = header.shapes.iter().map(|s| s.iter().product::<usize>()).sum();
    if payload.len() != expected * f32::BYTES {
        return Err(Error::Format(format!(
            "payload holds {} bytes, shapes need {}",
            payload.len(),
            expected * f32::BYTES
        )));
    }
    let mut chunks = payload.chunks_exact(f32::BYTES);
    let params = header
        .shapes
        .iter()
        .map(|shape| {
            let n = shape.iter().product();
            let data = chunks.by_ref().take(n).map(f32::read_le).collect();
            Tensor::from_vec(shape, data)
        })
        .collect();
    let s = header.spec;
    let network = Network::from_params([s.input_size, s.input_size, 3], s.layers(), s.dropout_rate, params)?;
    Ok(ModelWeights {
        spec: header.spec,
        class_names: header.class_names,
        seed: header.seed,
        epochs_run: header.epochs_run,
        network,
    })
}

pub fn save_weights(w: &ModelWeights, path: impl AsRef<Path>) -> Result<()> {
    container::write_file(path.as_ref(), &encode_weights(w))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<ModelWeights> {
    decode_weights(&container::read_file(path.as_ref())?)
}
