//! Per-sample forward and backward kernels.

use super::{Conv2d, Dense, Layer};
use crate::data::ImageShape;

/// Runs one sample through the chain. Entry 0 is the input, entry `i + 1`
/// the output of layer `i`.
pub(super) fn forward_trace(layers: &[Layer], shapes: &[ImageShape], input: &[f64]) -> Vec<Vec<f64>> {
    let mut trace = Vec::with_capacity(layers.len() + 1);
    trace.push(input.to_vec());
    for (i, layer) in layers.iter().enumerate() {
        let x = &trace[i];
        let out = forward_layer(layer, shapes[i], shapes[i + 1], x);
        trace.push(out);
    }
    trace
}

fn forward_layer(layer: &Layer, in_shape: ImageShape, out_shape: ImageShape, x: &[f64]) -> Vec<f64> {
    match layer {
        Layer::Conv2d(c) => conv_forward(c, in_shape, out_shape, x),
        Layer::Relu => x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
        Layer::MaxPool => {
            let idx = maxpool_argmax(in_shape, out_shape, x);
            idx.iter().map(|&i| x[i]).collect()
        }
        Layer::GlobalMaxPool => global_argmax(in_shape, x).iter().map(|&i| x[i]).collect(),
        Layer::GlobalAvgPool => {
            let plane = in_shape.height * in_shape.width;
            x.chunks(plane).map(|c| c.iter().sum::<f64>() / plane as f64).collect()
        }
        Layer::Flatten => x.to_vec(),
        Layer::Dense(d) => dense_forward(d, x),
        Layer::Softmax => softmax(x),
    }
}

fn conv_forward(c: &Conv2d, in_shape: ImageShape, out_shape: ImageShape, x: &[f64]) -> Vec<f64> {
    let (ih, iw) = (in_shape.height as isize, in_shape.width as isize);
    let (oh, ow) = (out_shape.height, out_shape.width);
    let k = c.kernel;
    let pad = c.padding as isize;
    let stride = c.stride as isize;
    let mut out = vec![0.0; c.out_channels * oh * ow];
    for oc in 0..c.out_channels {
        let plane = &mut out[oc * oh * ow..(oc + 1) * oh * ow];
        plane.iter_mut().for_each(|v| *v = c.bias[oc]);
        for ic in 0..c.in_channels {
            let input = &x[ic * in_shape.height * in_shape.width..(ic + 1) * in_shape.height * in_shape.width];
            for ky in 0..k {
                for kx in 0..k {
                    let w = c.weights[((oc * c.in_channels + ic) * k + ky) * k + kx];
                    for oy in 0..oh {
                        let iy = oy as isize * stride + ky as isize - pad;
                        if iy < 0 || iy >= ih {
                            continue;
                        }
                        let in_row = &input[iy as usize * iw as usize..(iy as usize + 1) * iw as usize];
                        let out_row = &mut plane[oy * ow..(oy + 1) * ow];
                        for (ox, o) in out_row.iter_mut().enumerate() {
                            let ix = ox as isize * stride + kx as isize - pad;
                            if ix >= 0 && ix < iw {
                                *o += w * in_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn dense_forward(d: &Dense, x: &[f64]) -> Vec<f64> {
    (0..d.out_features)
        .map(|o| {
            let row = &d.weights[o * d.in_features..(o + 1) * d.in_features];
            d.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        })
        .collect()
}

pub(super) fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Source index of every 2x2 pool output; ties keep the first in row-major
/// window order.
fn maxpool_argmax(in_shape: ImageShape, out_shape: ImageShape, x: &[f64]) -> Vec<usize> {
    let (h, w) = (in_shape.height, in_shape.width);
    let mut idx = Vec::with_capacity(out_shape.len());
    for c in 0..in_shape.channels {
        for oy in 0..out_shape.height {
            for ox in 0..out_shape.width {
                let mut best = c * h * w + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let j = c * h * w + (2 * oy + dy) * w + 2 * ox + dx;
                    if x[j] > x[best] {
                        best = j;
                    }
                }
                idx.push(best);
            }
        }
    }
    idx
}

fn global_argmax(in_shape: ImageShape, x: &[f64]) -> Vec<usize> {
    let plane = in_shape.height * in_shape.width;
    (0..in_shape.channels)
        .map(|c| {
            let mut best = c * plane;
            for j in c * plane + 1..(c + 1) * plane {
                if x[j] > x[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Weight and bias gradients of one layer.
pub(super) type LayerGrad = Option<(Vec<f64>, Vec<f64>)>;

/// Backpropagates `grad` (the gradient at the softmax input) through every
/// layer except the final softmax. Returns per-layer parameter gradients and
/// the gradient at the network input.
pub(super) fn backward(
    layers: &[Layer],
    shapes: &[ImageShape],
    trace: &[Vec<f64>],
    mut grad: Vec<f64>,
) -> (Vec<LayerGrad>, Vec<f64>) {
    let mut grads: Vec<LayerGrad> = vec![None; layers.len()];
    let last = layers.len() - 1;
    debug_assert!(matches!(layers[last], Layer::Softmax));
    for i in (0..last).rev() {
        let x = &trace[i];
        let in_shape = shapes[i];
        grad = match &layers[i] {
            Layer::Conv2d(c) => {
                let (gw, gb, gx) = conv_backward(c, in_shape, shapes[i + 1], x, &grad);
                grads[i] = Some((gw, gb));
                gx
            }
            Layer::Relu => x
                .iter()
                .zip(&grad)
                .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
                .collect(),
            Layer::MaxPool => {
                let mut gx = vec![0.0; x.len()];
                for (&j, &g) in maxpool_argmax(in_shape, shapes[i + 1], x).iter().zip(&grad) {
                    gx[j] += g;
                }
                gx
            }
            Layer::GlobalMaxPool => {
                let mut gx = vec![0.0; x.len()];
                for (&j, &g) in global_argmax(in_shape, x).iter().zip(&grad) {
                    gx[j] += g;
                }
                gx
            }
            Layer::GlobalAvgPool => {
                let plane = in_shape.height * in_shape.width;
                let mut gx = vec![0.0; x.len()];
                for (c, chunk) in gx.chunks_mut(plane).enumerate() {
                    chunk.iter_mut().for_each(|v| *v = grad[c] / plane as f64);
                }
                gx
            }
            Layer::Flatten => grad,
            Layer::Dense(d) => {
                let mut gw = vec![0.0; d.weights.len()];
                let mut gx = vec![0.0; d.in_features];
                for (o, &g) in grad.iter().enumerate() {
                    let row = &d.weights[o * d.in_features..(o + 1) * d.in_features];
                    let grow = &mut gw[o * d.in_features..(o + 1) * d.in_features];
                    for j in 0..d.in_features {
                        grow[j] = g * x[j];
                        gx[j] += g * row[j];
                    }
                }
                grads[i] = Some((gw, grad.clone()));
                gx
            }
            Layer::Softmax => unreachable!("softmax only at the end of a validated chain"),
        };
    }
    (grads, grad)
}

fn conv_backward(
    c: &Conv2d,
    in_shape: ImageShape,
    out_shape: ImageShape,
    x: &[f64],
    grad: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (ih, iw) = (in_shape.height as isize, in_shape.width as isize);
    let (oh, ow) = (out_shape.height, out_shape.width);
    let in_plane = in_shape.height * in_shape.width;
    let k = c.kernel;
    let pad = c.padding as isize;
    let stride = c.stride as isize;
    let mut gw = vec![0.0; c.weights.len()];
    let mut gx = vec![0.0; x.len()];
    let gb: Vec<f64> = grad.chunks(oh * ow).map(|p| p.iter().sum()).collect();
    for oc in 0..c.out_channels {
        let gplane = &grad[oc * oh * ow..(oc + 1) * oh * ow];
        for ic in 0..c.in_channels {
            let input = &x[ic * in_plane..(ic + 1) * in_plane];
            let ginput = &mut gx[ic * in_plane..(ic + 1) * in_plane];
            for ky in 0..k {
                for kx in 0..k {
                    let widx = ((oc * c.in_channels + ic) * k + ky) * k + kx;
                    let w = c.weights[widx];
                    let mut acc = 0.0;
                    for oy in 0..oh {
                        let iy = oy as isize * stride + ky as isize - pad;
                        if iy < 0 || iy >= ih {
                            continue;
                        }
                        let base = iy as usize * iw as usize;
                        for ox in 0..ow {
                            let ix = ox as isize * stride + kx as isize - pad;
                            if ix >= 0 && ix < iw {
                                let g = gplane[oy * ow + ox];
                                acc += g * input[base + ix as usize];
                                ginput[base + ix as usize] += g * w;
                            }
                        }
                    }
                    gw[widx] = acc;
                }
            }
        }
    }
    (gw, gb, gx)
}
