//! The filter feature matrix.
//!
//! Every sample is pushed through the network and the captured map of each
//! convolutional filter is pooled into one feature (global max or average)
//! or a block of features (2x2 max pooling). Row `s` of the matrix holds
//! sample `s`; columns run over conv layers in order, then filters, then the
//! pooled grid in row-major order.

use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::network::Network;

/// Identifies one convolutional filter by its conv's position in the layer
/// list and its output channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FilterKey {
    pub layer: usize,
    pub filter: usize,
}

impl FilterKey {
    pub const fn new(layer: usize, filter: usize) -> Self {
        FilterKey { layer, filter }
    }
}

impl fmt::Display for FilterKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.layer, self.filter)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolingMode {
    #[default]
    #[serde(rename = "gmax")]
    GlobalMax,
    #[serde(rename = "gavg")]
    GlobalAvg,
    #[serde(rename = "max2x2")]
    MaxPool2x2,
}

impl PoolingMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PoolingMode::GlobalMax => "gmax",
            PoolingMode::GlobalAvg => "gavg",
            PoolingMode::MaxPool2x2 => "max2x2",
        }
    }
}

impl fmt::Display for PoolingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for PoolingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gmax" => Ok(PoolingMode::GlobalMax),
            "gavg" => Ok(PoolingMode::GlobalAvg),
            "max2x2" => Ok(PoolingMode::MaxPool2x2),
            other => Err(Error::Parameter(format!(
                "unknown pooling mode {other:?} (expected gmax, gavg or max2x2)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub key: FilterKey,
    pub start: usize,
    pub width: usize,
}

impl FeatureEntry {
    pub fn columns(&self) -> Range<usize> {
        self.start..self.start + self.width
    }
}

/// Maps each filter to its contiguous block of feature columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMapIndex {
    pub mode: PoolingMode,
    pub entries: Vec<FeatureEntry>,
}

impl FeatureMapIndex {
    pub fn feature_count(&self) -> usize {
        self.entries.last().map_or(0, |e| e.start + e.width)
    }

    pub fn columns(&self, key: FilterKey) -> Option<Range<usize>> {
        self.entries.iter().find(|e| e.key == key).map(FeatureEntry::columns)
    }

    pub fn keys(&self) -> impl Iterator<Item = FilterKey> + '_ {
        self.entries.iter().map(|e| e.key)
    }
}

fn pool(mode: PoolingMode, map: &[f64], h: usize, w: usize, out: &mut Vec<f64>) {
    match mode {
        PoolingMode::GlobalMax => out.push(map.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        PoolingMode::GlobalAvg => out.push(map.iter().sum::<f64>() / map.len() as f64),
        PoolingMode::MaxPool2x2 => {
            for oy in 0..h / 2 {
                for ox in 0..w / 2 {
                    let at = |dy: usize, dx: usize| map[(2 * oy + dy) * w + 2 * ox + dx];
                    out.push(at(0, 0).max(at(0, 1)).max(at(1, 0)).max(at(1, 1)));
                }
            }
        }
    }
}

const CHUNK: usize = 256;

pub fn build_feature_matrix(net: &Network, data: &Dataset, mode: PoolingMode) -> Result<(Matrix, FeatureMapIndex)> {
    if data.is_empty() {
        return Err(Error::InsufficientData("feature extraction needs samples".into()));
    }
    let convs = net.conv_layers();
    if convs.is_empty() {
        return Err(Error::Network("network has no conv layer".into()));
    }
    let shapes = net.layer_shapes()?;
    let mut entries = Vec::new();
    let mut start = 0;
    for &layer in &convs {
        let shape = shapes[net.capture_point(layer) + 1];
        let width = match mode {
            PoolingMode::GlobalMax | PoolingMode::GlobalAvg => 1,
            PoolingMode::MaxPool2x2 => {
                if shape.height < 2 || shape.width < 2 {
                    return Err(Error::Representation {
                        layer,
                        message: format!(
                            "2x2 max pooling needs maps of at least 2x2, got {}x{}",
                            shape.height, shape.width
                        ),
                    });
                }
                (shape.height / 2) * (shape.width / 2)
            }
        };
        for filter in 0..shape.channels {
            entries.push(FeatureEntry {
                key: FilterKey::new(layer, filter),
                start,
                width,
            });
            start += width;
        }
    }
    let d = start;
    let indices: Vec<usize> = (0..data.len()).collect();
    let mut values = Vec::with_capacity(data.len() * d);
    for chunk in indices.chunks(CHUNK) {
        let batch = data.images.select(chunk);
        let (_, acts) = net.forward_with_activations(&batch)?;
        for s in 0..chunk.len() {
            for a in &acts {
                for f in 0..a.shape.channels {
                    pool(mode, a.map(s, f), a.shape.height, a.shape.width, &mut values);
                }
            }
        }
    }
    let x = Matrix::new(data.len(), d, values)?;
    Ok((x, FeatureMapIndex { mode, entries }))
}

#[derive(Serialize)]
struct FeatureDump<'a> {
    features: &'a Matrix,
    index: &'a FeatureMapIndex,
}

/// Writes `{"features": ..., "index": ...}` as JSON for offline inspection.
pub fn write_dump(path: impl AsRef<Path>, x: &Matrix, index: &FeatureMapIndex) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string(&FeatureDump { features: x, index }).expect("dump serializes");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthetic, ImageShape, Tensor};
    use crate::network::Layer;

    fn single_conv(filters: usize, hw: usize) -> Network {
        Network::new(
            ImageShape::new(1, hw, hw),
            vec![
                Layer::conv(1, filters, 3, 1, 1),
                Layer::Relu,
                Layer::GlobalAvgPool,
                Layer::dense(filters, 2),
                Layer::Softmax,
            ],
            3,
        )
        .unwrap()
    }

    #[test]
    fn global_max_one_column_per_filter() {
        let net = single_conv(4, 6);
        let ds = synthetic(3, 2, ImageShape::new(1, 6, 6), 1).unwrap();
        let (x, index) = build_feature_matrix(&net, &ds, PoolingMode::GlobalMax).unwrap();
        assert_eq!(x.shape(), (3, 4));
        for (i, e) in index.entries.iter().enumerate() {
            assert_eq!(e.key, FilterKey::new(0, i));
            assert_eq!(e.columns(), i..i + 1);
        }
    }

    #[test]
    fn max2x2_width_is_pooled_grid() {
        let net = single_conv(2, 8);
        let ds = synthetic(2, 2, ImageShape::new(1, 8, 8), 1).unwrap();
        let (x, index) = build_feature_matrix(&net, &ds, PoolingMode::MaxPool2x2).unwrap();
        assert_eq!(x.shape(), (2, 32));
        assert_eq!(index.entries[1].columns(), 16..32);
    }

    #[test]
    fn constant_map_pools_to_constant() {
        let mut net = single_conv(1, 4);
        if let Layer::Conv2d(c) = &mut net.layers_mut()[0] {
            c.weights.iter_mut().for_each(|w| *w = 0.0);
            c.bias[0] = 5.0;
        }
        let ds = Dataset::new(
            Tensor::new(1, ImageShape::new(1, 4, 4), vec![0.3; 16]).unwrap(),
            vec![0],
            2,
        )
        .unwrap();
        let (gmax, _) = build_feature_matrix(&net, &ds, PoolingMode::GlobalMax).unwrap();
        let (gavg, _) = build_feature_matrix(&net, &ds, PoolingMode::GlobalAvg).unwrap();
        assert_eq!(gmax.as_slice(), &[5.0]);
        assert_eq!(gavg.as_slice(), &[5.0]);
    }

    #[test]
    fn max2x2_rejects_tiny_maps() {
        let net = Network::new(
            ImageShape::new(1, 4, 4),
            vec![
                Layer::conv(1, 2, 3, 1, 1),
                Layer::Relu,
                Layer::MaxPool,
                Layer::MaxPool,
                Layer::conv(2, 2, 1, 1, 0),
                Layer::Relu,
                Layer::Flatten,
                Layer::dense(2, 2),
                Layer::Softmax,
            ],
            0,
        )
        .unwrap();
        let ds = synthetic(2, 2, ImageShape::new(1, 4, 4), 1).unwrap();
        match build_feature_matrix(&net, &ds, PoolingMode::MaxPool2x2) {
            Err(Error::Representation { layer: 4, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pooling_mode_parsing() {
        for m in [PoolingMode::GlobalMax, PoolingMode::GlobalAvg, PoolingMode::MaxPool2x2] {
            assert_eq!(m.as_str().parse::<PoolingMode>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{m}\""));
        }
        assert!("avg".parse::<PoolingMode>().is_err());
    }
}
