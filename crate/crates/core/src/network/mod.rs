//! A small CNN engine for plain layer chains.
//!
//! Tensors are per-sample `(channels, height, width)` buffers in row-major
//! order; fully connected layers see `(features, 1, 1)`. The engine covers
//! exactly what filter pruning needs: forward passes with per-filter
//! activation capture, backpropagation with momentum SGD, FLOPs and
//! parameter accounting, and a versioned JSON model file.

mod io;
mod layers;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ImageShape, Tensor};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

pub use io::{load, save, FORMAT_VERSION};
pub use train::{
    evaluate, evaluate_batched, train_sgd, EpochStats, ParamGrad, SampleGradients, TrainConfig, TrainingLog,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// `(out_channels, in_channels, kernel, kernel)`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weights: vec![0.0; out_channels * in_channels * kernel * kernel],
            bias: vec![0.0; out_channels],
        }
    }

    pub fn kernel_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    /// Weights of one output filter, `(in_channels, kernel, kernel)`.
    pub fn filter(&self, f: usize) -> &[f64] {
        let len = self.kernel_len();
        &self.weights[f * len..(f + 1) * len]
    }

    pub fn output_size(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let span = |x: usize| {
            let padded = x + 2 * self.padding;
            (padded >= self.kernel && self.stride > 0).then(|| (padded - self.kernel) / self.stride + 1)
        };
        Some((span(h)?, span(w)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_features: usize,
    pub out_features: usize,
    /// `(out_features, in_features)`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new(in_features: usize, out_features: usize) -> Self {
        Dense {
            in_features,
            out_features,
            weights: vec![0.0; in_features * out_features],
            bias: vec![0.0; out_features],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Conv2d(Conv2d),
    Relu,
    /// 2x2 window, stride 2, no padding.
    MaxPool,
    GlobalMaxPool,
    GlobalAvgPool,
    Flatten,
    Dense(Dense),
    Softmax,
}

impl Layer {
    pub fn conv(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Layer::Conv2d(Conv2d::new(in_channels, out_channels, kernel, stride, padding))
    }

    pub fn dense(in_features: usize, out_features: usize) -> Self {
        Layer::Dense(Dense::new(in_features, out_features))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::Relu => "relu",
            Layer::MaxPool => "max_pool",
            Layer::GlobalMaxPool => "global_max_pool",
            Layer::GlobalAvgPool => "global_avg_pool",
            Layer::Flatten => "flatten",
            Layer::Dense(_) => "dense",
            Layer::Softmax => "softmax",
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Conv2d(c) => c.weights.len() + c.bias.len(),
            Layer::Dense(d) => d.weights.len() + d.bias.len(),
            _ => 0,
        }
    }

    /// Output shape for the given input, or a description of the mismatch.
    pub fn output_shape(&self, input: ImageShape) -> std::result::Result<ImageShape, String> {
        let ImageShape {
            channels: c,
            height: h,
            width: w,
        } = input;
        match self {
            Layer::Conv2d(conv) => {
                if conv.in_channels != c {
                    return Err(format!("conv expects {} input channels, got {c}", conv.in_channels));
                }
                let (oh, ow) = conv
                    .output_size(h, w)
                    .ok_or_else(|| format!("kernel {} does not fit input {h}x{w}", conv.kernel))?;
                Ok(ImageShape::new(conv.out_channels, oh, ow))
            }
            Layer::Relu => Ok(input),
            Layer::MaxPool => {
                if h < 2 || w < 2 {
                    return Err(format!("2x2 max pool on {h}x{w} input"));
                }
                Ok(ImageShape::new(c, h / 2, w / 2))
            }
            Layer::GlobalMaxPool | Layer::GlobalAvgPool => Ok(ImageShape::new(c, 1, 1)),
            Layer::Flatten => Ok(ImageShape::new(input.len(), 1, 1)),
            Layer::Dense(d) => {
                if h != 1 || w != 1 {
                    return Err(format!("dense needs a flat input, got {input}"));
                }
                if d.in_features != c {
                    return Err(format!("dense expects {} inputs, got {c}", d.in_features));
                }
                Ok(ImageShape::new(d.out_features, 1, 1))
            }
            Layer::Softmax => {
                if h != 1 || w != 1 {
                    return Err(format!("softmax needs a flat input, got {input}"));
                }
                Ok(input)
            }
        }
    }

    fn weight_size_issues(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |what: &str, expected: usize, actual: usize| {
            if expected != actual {
                out.push(format!("{what} length expected {expected}, actual {actual}"));
            }
        };
        match self {
            Layer::Conv2d(c) => {
                check(
                    "conv weight",
                    c.out_channels * c.in_channels * c.kernel * c.kernel,
                    c.weights.len(),
                );
                check("conv bias", c.out_channels, c.bias.len());
            }
            Layer::Dense(d) => {
                check("dense weight", d.out_features * d.in_features, d.weights.len());
                check("dense bias", d.out_features, d.bias.len());
            }
            _ => {}
        }
        out
    }
}

/// A problem found by [`Network::diagnostics`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub layer: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.layer {
            Some(l) => write!(f, "layer {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerFlops {
    pub layer: usize,
    pub kind: String,
    pub flops: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopsBreakdown {
    pub total: u64,
    pub per_layer: Vec<LayerFlops>,
}

/// Post-activation maps of one convolutional layer for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvActivations {
    /// Index of the `Conv2d` in the layer list.
    pub layer: usize,
    /// Shape of one sample's maps.
    pub shape: ImageShape,
    /// `(samples, channels, height, width)`.
    pub data: Vec<f64>,
}

impl ConvActivations {
    pub fn sample(&self, i: usize) -> &[f64] {
        let len = self.shape.len();
        &self.data[i * len..(i + 1) * len]
    }

    pub fn map(&self, sample: usize, filter: usize) -> &[f64] {
        let plane = self.shape.height * self.shape.width;
        &self.sample(sample)[filter * plane..(filter + 1) * plane]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    input_shape: ImageShape,
    rng_seed: u64,
}

impl Network {
    /// Builds a network and initializes every weighted layer He-uniform from
    /// `seed` (biases zero).
    pub fn new(input_shape: ImageShape, mut layers: Vec<Layer>, seed: u64) -> Result<Self> {
        let mut rng = seed::rng(seed::derive(seed, seed::stage::INIT, 0));
        for layer in &mut layers {
            match layer {
                Layer::Conv2d(c) => {
                    let limit = (6.0 / c.kernel_len().max(1) as f64).sqrt();
                    c.weights.iter_mut().for_each(|w| *w = rng.random_range(-limit..limit));
                    c.bias.iter_mut().for_each(|b| *b = 0.0);
                }
                Layer::Dense(d) => {
                    let limit = (6.0 / d.in_features.max(1) as f64).sqrt();
                    d.weights.iter_mut().for_each(|w| *w = rng.random_range(-limit..limit));
                    d.bias.iter_mut().for_each(|b| *b = 0.0);
                }
                _ => {}
            }
        }
        Network::from_layers(input_shape, layers, seed)
    }

    /// Wraps layers that already carry their weights.
    pub fn from_layers(input_shape: ImageShape, layers: Vec<Layer>, rng_seed: u64) -> Result<Self> {
        let net = Network {
            layers,
            input_shape,
            rng_seed,
        };
        net.validate()?;
        Ok(net)
    }

    /// The VGG-style chain used by the examples and the acceptance runs:
    /// `[conv3x3 → relu → maxpool]` per entry of `filters` (no pool after
    /// the last conv), then flatten → dense → softmax.
    pub fn plain_cnn(input_shape: ImageShape, filters: &[usize], classes: usize, seed: u64) -> Result<Self> {
        let mut layers = Vec::new();
        let mut shape = input_shape;
        for (i, &f) in filters.iter().enumerate() {
            let conv = Layer::conv(shape.channels, f, 3, 1, 1);
            shape = conv.output_shape(shape).map_err(Error::Network)?;
            layers.push(conv);
            layers.push(Layer::Relu);
            if i + 1 < filters.len() {
                shape = Layer::MaxPool.output_shape(shape).map_err(Error::Network)?;
                layers.push(Layer::MaxPool);
            }
        }
        layers.push(Layer::Flatten);
        layers.push(Layer::dense(shape.len(), classes));
        layers.push(Layer::Softmax);
        Network::new(input_shape, layers, seed)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access for weight edits; run [`Network::validate`] afterwards
    /// if shapes may have changed.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_shape(&self) -> ImageShape {
        self.input_shape
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn class_count(&self) -> usize {
        self.output_shape().map_or(0, |s| s.channels)
    }

    pub fn output_shape(&self) -> Option<ImageShape> {
        self.layer_shapes().ok().and_then(|s| s.last().copied())
    }

    /// Indices of the `Conv2d` layers, in order.
    pub fn conv_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| matches!(l, Layer::Conv2d(_)).then_some(i))
            .collect()
    }

    pub fn conv(&self, layer: usize) -> Option<&Conv2d> {
        match self.layers.get(layer) {
            Some(Layer::Conv2d(c)) => Some(c),
            _ => None,
        }
    }

    pub fn filter_count(&self) -> usize {
        self.conv_layers()
            .iter()
            .filter_map(|&i| self.conv(i))
            .map(|c| c.out_channels)
            .sum()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Input shape followed by the output shape of every layer.
    pub fn layer_shapes(&self) -> Result<Vec<ImageShape>> {
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        shapes.push(self.input_shape);
        let mut shape = self.input_shape;
        for (i, layer) in self.layers.iter().enumerate() {
            shape = layer
                .output_shape(shape)
                .map_err(|m| Error::Network(format!("layer {i} ({}): {m}", layer.name())))?;
            shapes.push(shape);
        }
        Ok(shapes)
    }

    /// Layer index whose output is captured as the filter activations of the
    /// conv at `layer`: the following ReLU if there is one, else the conv.
    pub fn capture_point(&self, layer: usize) -> usize {
        match self.layers.get(layer + 1) {
            Some(Layer::Relu) => layer + 1,
            _ => layer,
        }
    }

    /// Shape consistency, weight sizes and head structure.
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let at = |layer: usize, message: String| Diagnostic {
            layer: Some(layer),
            message,
        };
        if self.input_shape.is_empty() {
            out.push(Diagnostic {
                layer: None,
                message: format!("empty input shape {}", self.input_shape),
            });
        }
        for (i, layer) in self.layers.iter().enumerate() {
            for m in layer.weight_size_issues() {
                out.push(at(i, m));
            }
            if let Layer::Conv2d(c) = layer {
                if c.out_channels == 0 {
                    out.push(at(i, "conv has no filters".into()));
                }
                if c.stride == 0 || c.kernel == 0 {
                    out.push(at(i, "conv stride and kernel must be positive".into()));
                }
            }
        }
        let mut shape = self.input_shape;
        for (i, layer) in self.layers.iter().enumerate() {
            match layer.output_shape(shape) {
                Ok(s) => shape = s,
                Err(m) => {
                    out.push(at(i, m));
                    break;
                }
            }
        }
        match self.layers.last() {
            Some(Layer::Softmax) => {}
            _ => out.push(Diagnostic {
                layer: self.layers.len().checked_sub(1),
                message: "final layer must be softmax".into(),
            }),
        }
        if let Some(i) = self.layers.iter().position(|l| matches!(l, Layer::Softmax)) {
            if i + 1 != self.layers.len() {
                out.push(at(i, "softmax before the end of the chain".into()));
            }
        }
        let first_conv = self.layers.iter().position(|l| matches!(l, Layer::Conv2d(_)));
        let first_dense = self.layers.iter().position(|l| matches!(l, Layer::Dense(_)));
        match (first_conv, first_dense) {
            (None, _) => out.push(Diagnostic {
                layer: None,
                message: "network has no conv layer".into(),
            }),
            (Some(c), Some(d)) if d < c => out.push(at(d, "dense layer before the first conv".into())),
            _ => {}
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let issues = self.diagnostics();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Network(
                issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "),
            ))
        }
    }

    fn check_batch(&self, batch: &Tensor) -> Result<()> {
        if batch.shape() != self.input_shape {
            return Err(Error::shape(
                "forward",
                format!("network input {}", self.input_shape),
                format!("batch {}", batch.shape()),
            ));
        }
        Ok(())
    }

    /// Class probabilities, one row per sample.
    pub fn forward(&self, batch: &Tensor) -> Result<Matrix> {
        self.check_batch(batch)?;
        let shapes = self.layer_shapes()?;
        let k = shapes.last().map_or(0, ImageShape::len);
        let mut data = Vec::with_capacity(batch.count() * k);
        for i in 0..batch.count() {
            let trace = layers::forward_trace(&self.layers, &shapes, batch.sample(i));
            data.extend_from_slice(trace.last().expect("non-empty trace"));
        }
        Matrix::new(batch.count(), k, data)
    }

    /// Probabilities plus the captured post-activation maps of every conv
    /// layer (see [`Network::capture_point`]).
    pub fn forward_with_activations(&self, batch: &Tensor) -> Result<(Matrix, Vec<ConvActivations>)> {
        self.check_batch(batch)?;
        let shapes = self.layer_shapes()?;
        let k = shapes.last().map_or(0, ImageShape::len);
        let convs = self.conv_layers();
        let mut acts: Vec<ConvActivations> = convs
            .iter()
            .map(|&l| {
                let shape = shapes[self.capture_point(l) + 1];
                ConvActivations {
                    layer: l,
                    shape,
                    data: Vec::with_capacity(batch.count() * shape.len()),
                }
            })
            .collect();
        let mut probs = Vec::with_capacity(batch.count() * k);
        for i in 0..batch.count() {
            let trace = layers::forward_trace(&self.layers, &shapes, batch.sample(i));
            for a in &mut acts {
                a.data.extend_from_slice(&trace[self.capture_point(a.layer) + 1]);
            }
            probs.extend_from_slice(trace.last().expect("non-empty trace"));
        }
        Ok((Matrix::new(batch.count(), k, probs)?, acts))
    }

    /// Multiply and add counted separately: conv `2·k²·C_in·C_out·H_out·W_out`,
    /// dense `2·n_in·n_out`, everything else zero.
    pub fn flops(&self) -> Result<FlopsBreakdown> {
        let shapes = self.layer_shapes()?;
        let per_layer: Vec<LayerFlops> = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, layer)| {
                let out = shapes[i + 1];
                let flops = match layer {
                    Layer::Conv2d(c) => {
                        2 * (c.kernel * c.kernel * c.in_channels * c.out_channels * out.height * out.width) as u64
                    }
                    Layer::Dense(d) => 2 * (d.in_features * d.out_features) as u64,
                    _ => 0,
                };
                LayerFlops {
                    layer: i,
                    kind: layer.name().to_string(),
                    flops,
                }
            })
            .collect();
        Ok(FlopsBreakdown {
            total: per_layer.iter().map(|l| l.flops).sum(),
            per_layer,
        })
    }
}

/// Convenience wrapper for [`Network::flops`].
pub fn flops_count(net: &Network) -> Result<FlopsBreakdown> {
    net.flops()
}
