//! Independent reference computations shared by the integration tests and
//! the acceptance target.
#![allow(dead_code)]

use plsprune::data::{ImageShape, Tensor};
use plsprune::network::{Layer, Network};
use plsprune::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Row-major `Vec<Vec<f64>>` copy of a matrix.
pub fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

/// Column standardization with the n−1 divisor; constant columns become 0.
pub fn standardize(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = x.len();
    let d = x[0].len();
    let mut out = vec![vec![0.0; d]; m];
    for j in 0..d {
        let mean = x.iter().map(|r| r[j]).sum::<f64>() / m as f64;
        let var = x.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        let sd = var.sqrt();
        for i in 0..m {
            out[i][j] = if sd > 1e-12 { (x[i][j] - mean) / sd } else { 0.0 };
        }
    }
    out
}

pub fn center(y: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = y.len();
    let k = y[0].len();
    let means: Vec<f64> = (0..k).map(|j| y.iter().map(|r| r[j]).sum::<f64>() / m as f64).collect();
    y.iter()
        .map(|r| r.iter().zip(&means).map(|(v, mu)| v - mu).collect())
        .collect()
}

pub fn one_hot(labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    labels
        .iter()
        .map(|&l| (0..k).map(|j| if j == l { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// `AᵀB` for row-major `A` (m×d) and `B` (m×k).
pub fn cross(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = a[0].len();
    let k = b[0].len();
    let mut out = vec![vec![0.0; k]; d];
    for (ra, rb) in a.iter().zip(b) {
        for i in 0..d {
            for j in 0..k {
                out[i][j] += ra[i] * rb[j];
            }
        }
    }
    out
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (norm(a) * norm(b))
}

/// Dominant left singular vector of `A` (d×k) by power iteration on `AAᵀ`.
pub fn dominant_left_singular(a: &[Vec<f64>], seed: u64) -> Vec<f64> {
    let d = a.len();
    let k = a[0].len();
    let mut r = rng(seed);
    let mut v: Vec<f64> = (0..d).map(|_| gaussian(&mut r)).collect();
    let n = norm(&v);
    v.iter_mut().for_each(|x| *x /= n);
    for _ in 0..200_000 {
        let mut t = vec![0.0; k];
        for i in 0..d {
            for j in 0..k {
                t[j] += a[i][j] * v[i];
            }
        }
        let mut next: Vec<f64> = (0..d).map(|i| (0..k).map(|j| a[i][j] * t[j]).sum()).collect();
        let n = norm(&next);
        next.iter_mut().for_each(|x| *x /= n);
        let delta = next.iter().zip(&v).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        v = next;
        if delta < 1e-15 {
            break;
        }
    }
    v
}

/// Ranks with ties sharing their average rank.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &p in &idx[i..=j] {
            out[p] = avg;
        }
        i = j + 1;
    }
    out
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&ranks(a), &ranks(b))
}

/// A random labelled problem with a few label-driven columns.
pub fn planted_problem(seed: u64, m: usize, d: usize, k: usize) -> (Matrix, Vec<usize>) {
    let mut r = rng(seed);
    let labels: Vec<usize> = (0..m).map(|_| r.random_range(0..k)).collect();
    let signal: Vec<Vec<f64>> = (0..d)
        .map(|_| {
            (0..k)
                .map(|_| if r.random_bool(0.3) { gaussian(&mut r) } else { 0.0 })
                .collect()
        })
        .collect();
    let x = Matrix::from_fn(m, d, |i, j| signal[j][labels[i]] + gaussian(&mut r)).unwrap();
    (x, labels)
}

pub fn random_batch(shape: ImageShape, n: usize, seed: u64) -> Tensor {
    let mut r = rng(seed);
    let data = (0..n * shape.len()).map(|_| r.random::<f64>()).collect();
    Tensor::new(n, shape, data).unwrap()
}

/// How the last conv block feeds the classifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Head {
    Flatten,
    GlobalMax,
    GlobalAvg,
}

/// conv/relu(/maxpool) blocks followed by the given head, dense and softmax.
pub fn build_net(
    input: ImageShape,
    filters: &[usize],
    pools: &[bool],
    head: Head,
    classes: usize,
    seed: u64,
) -> Network {
    let mut layers = Vec::new();
    let mut c = input.channels;
    let (mut h, mut w) = (input.height, input.width);
    for (i, &f) in filters.iter().enumerate() {
        layers.push(Layer::conv(c, f, 3, 1, 1));
        layers.push(Layer::Relu);
        if pools[i] {
            layers.push(Layer::MaxPool);
            h /= 2;
            w /= 2;
        }
        c = f;
    }
    let features = match head {
        Head::Flatten => {
            layers.push(Layer::Flatten);
            c * h * w
        }
        Head::GlobalMax => {
            layers.push(Layer::GlobalMaxPool);
            c
        }
        Head::GlobalAvg => {
            layers.push(Layer::GlobalAvgPool);
            layers.push(Layer::Flatten);
            c
        }
    };
    layers.push(Layer::dense(features, classes));
    layers.push(Layer::Softmax);
    Network::new(input, layers, seed).unwrap()
}

/// Relative error with a floor so two near-zero values compare as equal.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Worst relative error between analytic and central-difference gradients
/// over every parameter and input of `net` for one sample.
pub fn gradient_check(net: &Network, input: &[f64], label: usize, eps: f64) -> Vec<(String, f64)> {
    let g = net.sample_gradients(input, label).unwrap();
    let mut out = Vec::new();
    for p in &g.params {
        let mut worst = 0.0f64;
        for (which, analytic) in [("weights", &p.weights), ("bias", &p.bias)] {
            for (i, &a) in analytic.iter().enumerate() {
                let numeric = {
                    let mut plus = net.clone();
                    let mut minus = net.clone();
                    bump(&mut plus, p.layer, which, i, eps);
                    bump(&mut minus, p.layer, which, i, -eps);
                    (plus.loss(input, label).unwrap() - minus.loss(input, label).unwrap()) / (2.0 * eps)
                };
                worst = worst.max(relative_error(a, numeric));
            }
        }
        out.push((format!("layer {} ({})", p.layer, net.layers()[p.layer].name()), worst));
    }
    let mut worst = 0.0f64;
    for (i, &a) in g.input.iter().enumerate() {
        let mut plus = input.to_vec();
        let mut minus = input.to_vec();
        plus[i] += eps;
        minus[i] -= eps;
        let numeric = (net.loss(&plus, label).unwrap() - net.loss(&minus, label).unwrap()) / (2.0 * eps);
        worst = worst.max(relative_error(a, numeric));
    }
    out.push(("input".to_string(), worst));
    out
}

fn bump(net: &mut Network, layer: usize, which: &str, i: usize, eps: f64) {
    let (weights, bias) = match &mut net.layers_mut()[layer] {
        Layer::Conv2d(c) => (&mut c.weights, &mut c.bias),
        Layer::Dense(d) => (&mut d.weights, &mut d.bias),
        _ => unreachable!(),
    };
    if which == "weights" {
        weights[i] += eps;
    } else {
        bias[i] += eps;
    }
}

/// Zeroes every weight that reads the given filter's output, so the
/// filter no longer influences the network output.
pub fn zero_outgoing(net: &mut Network, conv_layer: usize, filter: usize) {
    let shapes = net.layer_shapes().unwrap();
    let layers = net.layers_mut();
    let mut i = conv_layer + 1;
    let mut block = 1;
    let mut global = false;
    while i < layers.len() {
        match &mut layers[i] {
            Layer::Relu | Layer::MaxPool => {}
            Layer::GlobalMaxPool | Layer::GlobalAvgPool => global = true,
            Layer::Flatten => {
                if !global {
                    block = shapes[i].height * shapes[i].width;
                }
            }
            Layer::Conv2d(c) => {
                let kk = c.kernel * c.kernel;
                for o in 0..c.out_channels {
                    let start = (o * c.in_channels + filter) * kk;
                    c.weights[start..start + kk].iter_mut().for_each(|w| *w = 0.0);
                }
                return;
            }
            Layer::Dense(d) => {
                for o in 0..d.out_features {
                    let row = o * d.in_features;
                    d.weights[row + filter * block..row + (filter + 1) * block]
                        .iter_mut()
                        .for_each(|w| *w = 0.0);
                }
                return;
            }
            Layer::Softmax => return,
        }
        i += 1;
    }
}
