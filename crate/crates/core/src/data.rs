//! Datasets: IDX and CSV loaders, a seeded synthetic generator, splits and
//! uniform subsampling.

use std::fs;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ImageShape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        ImageShape {
            channels,
            height,
            width,
        }
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for ImageShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.channels, self.height, self.width)
    }
}

/// Sample-major 4-D tensor `(n, channels, height, width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    count: usize,
    shape: ImageShape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(count: usize, shape: ImageShape, data: Vec<f64>) -> Result<Self> {
        if data.len() != count * shape.len() {
            return Err(Error::shape(
                "Tensor::new",
                format!("{count} x {shape}"),
                format!("{} values", data.len()),
            ));
        }
        Ok(Tensor { count, shape, data })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn shape(&self) -> ImageShape {
        self.shape
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.count, self.shape.channels, self.shape.height, self.shape.width]
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let len = self.shape.len();
        &self.data[i * len..(i + 1) * len]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn select(&self, indices: &[usize]) -> Tensor {
        let mut data = Vec::with_capacity(indices.len() * self.shape.len());
        for &i in indices {
            data.extend_from_slice(self.sample(i));
        }
        Tensor {
            count: indices.len(),
            shape: self.shape,
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl Dataset {
    /// Checks label count and range and that every pixel lies in `[0, 1]`.
    pub fn new(images: Tensor, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if labels.len() != images.count() {
            return Err(Error::Consistency(format!(
                "{} images but {} labels",
                images.count(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::Consistency(format!("label {bad} outside [0, {class_count})")));
        }
        if let Some(v) = images.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Consistency(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Dataset {
            images,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn shape(&self) -> ImageShape {
        self.images.shape()
    }

    /// Rows in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            images: self.images.select(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Parse {
            offset: bytes.len(),
            message: format!("truncated header, needed 4 bytes at offset {offset}"),
        })
}

/// Parses an IDX image file (`0x00000803`, dims n, rows, cols) into
/// `(count, shape, pixels scaled to [0, 1])`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, ImageShape, Vec<f64>)> {
    let magic = read_u32(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "image file magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"
        )));
    }
    let n = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let shape = ImageShape::new(1, rows, cols);
    let expected = n
        .checked_mul(shape.len())
        .ok_or_else(|| Error::Format("image dimensions overflow".into()))?;
    let body = &bytes[16..];
    if body.len() < expected {
        return Err(Error::Parse {
            offset: bytes.len(),
            message: format!("truncated pixel data: {} of {expected} bytes", body.len()),
        });
    }
    let pixels = body[..expected].iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok((n, shape, pixels))
}

/// Parses an IDX label file (`0x00000801`, one dimension).
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = read_u32(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!(
            "label file magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"
        )));
    }
    let n = read_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() < n {
        return Err(Error::Parse {
            offset: bytes.len(),
            message: format!("truncated label data: {} of {n} bytes", body.len()),
        });
    }
    Ok(body[..n].iter().map(|&b| b as usize).collect())
}

pub fn from_idx_bytes(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let (n, shape, pixels) = parse_idx_images(images)?;
    let labels = parse_idx_labels(labels)?;
    if labels.len() != n {
        return Err(Error::Consistency(format!(
            "image file holds {n} images but label file holds {} labels",
            labels.len()
        )));
    }
    let k = labels.iter().max().map_or(1, |m| m + 1);
    Dataset::new(Tensor::new(n, shape, pixels)?, labels, k)
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let images = fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    from_idx_bytes(&images, &labels)
}

/// Declared range of CSV pixel values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PixelRange {
    /// 0..=255, scaled by 1/255.
    #[default]
    Byte,
    /// Already in [0, 1].
    Unit,
}

/// Parses CSV rows `label, pixel_0, ..., pixel_{CHW-1}`. A first row whose
/// label field is not numeric is treated as a header.
pub fn from_csv_str(text: &str, shape: ImageShape, range: PixelRange) -> Result<Dataset> {
    let width = shape.len() + 1;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut labels = Vec::new();
    let mut pixels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| Error::ParseLine {
            line,
            column: None,
            message: e.to_string(),
        })?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if i == 0 && record.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if record.len() != width {
            return Err(Error::ParseLine {
                line,
                column: None,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        let label_field = &record[0];
        let label = label_field.parse::<usize>().map_err(|_| Error::ParseLine {
            line,
            column: Some(1),
            message: format!("label {label_field:?} is not a non-negative integer"),
        })?;
        labels.push(label);
        for (j, field) in record.iter().enumerate().skip(1) {
            let bad = |message: String| Error::ParseLine {
                line,
                column: Some(j + 1),
                message,
            };
            let v: f64 = field
                .parse()
                .map_err(|_| bad(format!("pixel {field:?} is not numeric")))?;
            let v = match range {
                PixelRange::Byte if (0.0..=255.0).contains(&v) => v / 255.0,
                PixelRange::Unit if (0.0..=1.0).contains(&v) => v,
                _ => return Err(bad(format!("pixel {v} outside the declared {range:?} range"))),
            };
            pixels.push(v);
        }
    }
    let n = labels.len();
    let k = labels.iter().max().map_or(1, |m| m + 1);
    Dataset::new(Tensor::new(n, shape, pixels)?, labels, k)
}

pub fn load_csv(path: impl AsRef<Path>, shape: ImageShape, range: PixelRange) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_csv_str(&text, shape, range)
}

/// Seeded synthetic image classification set.
///
/// Class `j` of `k` is a bright bar oriented at `j·π/k` through a jittered
/// center, with random length and amplitude and additive Gaussian noise,
/// clipped to `[0, 1]`. Labels cycle `0, 1, ..., k-1`, so class counts
/// differ by at most one.
pub fn synthetic(n: usize, k: usize, shape: ImageShape, seed: u64) -> Result<Dataset> {
    if k < 2 {
        return Err(Error::Parameter(format!("synthetic data needs k >= 2, got {k}")));
    }
    if shape.height < 4 || shape.width < 4 || shape.channels == 0 {
        return Err(Error::Parameter(format!("image shape {shape} too small")));
    }
    let mut rng = seed::rng(seed::derive(seed, seed::stage::SYNTHETIC, 0));
    let noise = Normal::new(0.0, 0.35).expect("valid normal");
    let (h, w) = (shape.height as f64, shape.width as f64);
    let mut data = Vec::with_capacity(n * shape.len());
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % k;
        let theta = std::f64::consts::PI * class as f64 / k as f64;
        let (dx, dy) = (theta.cos(), theta.sin());
        let cx = rng.random_range(0.35 * w..0.65 * w);
        let cy = rng.random_range(0.35 * h..0.65 * h);
        let half_len = rng.random_range(0.25..0.4) * h.min(w);
        let amplitude = rng.random_range(0.5..1.0);
        for _ in 0..shape.channels {
            for y in 0..shape.height {
                for x in 0..shape.width {
                    let (px, py) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                    let along = px * dx + py * dy;
                    let across = -px * dy + py * dx;
                    let overshoot = (along.abs() - half_len).max(0.0);
                    let dist2 = across * across + overshoot * overshoot;
                    let v = amplitude * (-dist2 / (2.0 * 0.8 * 0.8)).exp() + noise.sample(&mut rng);
                    data.push(v.clamp(0.0, 1.0));
                }
            }
        }
        labels.push(class);
    }
    Dataset::new(Tensor::new(n, shape, data)?, labels, k)
}

/// Draws `⌊fraction·n⌋` rows uniformly without replacement, keeping their
/// original relative order.
pub fn subsample(ds: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    Ok(ds.subset(&subsample_indices(ds.len(), fraction, seed)?))
}

pub fn subsample_indices(n: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Parameter(format!(
            "subsample fraction {fraction} outside (0, 1]"
        )));
    }
    let take = floor_count(fraction, n);
    if take == 0 {
        return Err(Error::Parameter(format!(
            "subsampling {n} rows at fraction {fraction} leaves no rows"
        )));
    }
    if take == n {
        return Ok((0..n).collect());
    }
    let mut rng = seed::rng(seed);
    let mut picked = index::sample(&mut rng, n, take).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Stratified variant of [`subsample`]: `⌊fraction·n_c⌋` rows from every class.
pub fn subsample_stratified(ds: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Parameter(format!(
            "subsample fraction {fraction} outside (0, 1]"
        )));
    }
    let mut rng = seed::rng(seed);
    let mut picked = Vec::new();
    for class in 0..ds.class_count {
        let members: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == class).collect();
        let take = floor_count(fraction, members.len());
        picked.extend(
            index::sample(&mut rng, members.len(), take)
                .into_iter()
                .map(|j| members[j]),
        );
    }
    if picked.is_empty() {
        return Err(Error::Parameter("stratified subsample is empty".into()));
    }
    picked.sort_unstable();
    Ok(ds.subset(&picked))
}

/// Seeded disjoint split: `⌊train_frac·n⌋` rows go to the first part. Both
/// parts keep the original relative order.
pub fn split(ds: &Dataset, train_frac: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Parameter(format!("train fraction {train_frac} outside (0, 1)")));
    }
    let (train, held) = split_indices(ds.len(), train_frac, seed);
    Ok((ds.subset(&train), ds.subset(&held)))
}

pub fn split_indices(n: usize, train_frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed));
    let cut = floor_count(train_frac, n);
    let mut train = order[..cut].to_vec();
    let mut held = order[cut..].to_vec();
    train.sort_unstable();
    held.sort_unstable();
    (train, held)
}

/// `⌊fraction·n⌋` with a small tolerance so that e.g. `0.29 · 100` is 29.
pub(crate) fn floor_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64) + 1e-9).floor() as usize
}
