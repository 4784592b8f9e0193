//! Versioned JSON model files.
//!
//! ```json
//! {"format":"plsprune-model","format_version":1,
//!  "input_shape":{"channels":1,"height":16,"width":16},"rng_seed":7,
//!  "layers":[{"type":"conv2d","in_channels":1,"out_channels":8,"kernel":3,
//!             "stride":1,"padding":1,"weights":[...],"bias":[...]}, ...]}
//! ```
//!
//! Weight arrays are row-major in the shapes documented on
//! [`Conv2d`](super::Conv2d) and [`Dense`](super::Dense). Floats are written
//! in shortest round-trip form, so a save/load cycle is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Layer, Network};
use crate::data::ImageShape;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u64 = 1;
const FORMAT_NAME: &str = "plsprune-model";

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    format_version: u64,
    input_shape: ImageShape,
    rng_seed: u64,
    layers: Vec<Layer>,
}

impl Network {
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: FORMAT_NAME.to_string(),
            format_version: FORMAT_VERSION,
            input_shape: self.input_shape(),
            rng_seed: self.rng_seed(),
            layers: self.layers().to_vec(),
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Network> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| json_error(text, &e))?;
        match value.get("format").and_then(|v| v.as_str()) {
            Some(FORMAT_NAME) => {}
            other => {
                return Err(Error::Format(format!(
                    "expected format {FORMAT_NAME:?}, found {other:?}"
                )))
            }
        }
        let version = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Format("missing format_version".into()))?;
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_str(text).map_err(|e| json_error(text, &e))?;
        for (i, layer) in file.layers.iter().enumerate() {
            if let Some(issue) = layer.weight_size_issues().into_iter().next() {
                return Err(Error::Integrity(format!("layer {i} ({}): {issue}", layer.name())));
            }
            let values = match layer {
                Layer::Conv2d(c) => c.weights.iter().chain(&c.bias).collect::<Vec<_>>(),
                Layer::Dense(d) => d.weights.iter().chain(&d.bias).collect(),
                _ => Vec::new(),
            };
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Integrity(format!("layer {i} holds non-finite weights")));
            }
        }
        Network::from_layers(file.input_shape, file.layers, file.rng_seed).map_err(|e| match e {
            Error::Network(m) => Error::Integrity(m),
            other => other,
        })
    }
}

/// Byte offset of a serde_json error position (1-based line and column).
fn json_error(text: &str, e: &serde_json::Error) -> Error {
    let offset = if e.line() == 0 {
        0
    } else {
        let line_start: usize = text.split_inclusive('\n').take(e.line() - 1).map(str::len).sum();
        (line_start + e.column().saturating_sub(1)).min(text.len())
    };
    Error::Parse {
        offset,
        message: e.to_string(),
    }
}

pub fn save(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, net.to_json() + "\n").map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Network::from_json(&text)
}
