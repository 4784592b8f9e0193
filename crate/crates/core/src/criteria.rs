//! Per-filter importance scores. Higher always means more important, so
//! surgery can remove the lowest scores regardless of criterion.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::network::{Layer, Network};
use crate::pls::{nipals_fit, one_hot, vip, NipalsOptions, VipScores};
pub use crate::representation::FilterKey;
use crate::representation::{build_feature_matrix, FeatureMapIndex, PoolingMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Criterion {
    #[default]
    #[serde(rename = "pls")]
    PlsVip,
    #[serde(rename = "l1")]
    L1Norm,
    #[serde(rename = "apoz")]
    Apoz,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::PlsVip, Criterion::L1Norm, Criterion::Apoz];

    pub fn as_str(&self) -> &'static str {
        match self {
            Criterion::PlsVip => "pls",
            Criterion::L1Norm => "l1",
            Criterion::Apoz => "apoz",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pls" => Ok(Criterion::PlsVip),
            "l1" => Ok(Criterion::L1Norm),
            "apoz" => Ok(Criterion::Apoz),
            other => Err(Error::Parameter(format!(
                "unknown criterion {other:?} (expected pls, l1 or apoz)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterScore {
    pub key: FilterKey,
    pub score: f64,
    pub criterion: Criterion,
}

/// One score per filter: the filter's VIP value, or the mean of its block
/// of VIP values under 2x2 pooling.
pub fn pls_vip_scores(vip: &VipScores, index: &FeatureMapIndex) -> Result<Vec<FilterScore>> {
    if vip.values.len() != index.feature_count() {
        return Err(Error::Index(format!(
            "{} VIP values for {} indexed features",
            vip.values.len(),
            index.feature_count()
        )));
    }
    Ok(index
        .entries
        .iter()
        .map(|e| {
            let block = &vip.values[e.columns()];
            FilterScore {
                key: e.key,
                score: block.iter().sum::<f64>() / block.len() as f64,
                criterion: Criterion::PlsVip,
            }
        })
        .collect())
}

/// Sum of absolute kernel weights per filter (bias excluded).
pub fn l1_norm_scores(net: &Network) -> Vec<FilterScore> {
    let mut out = Vec::new();
    for layer in net.conv_layers() {
        let conv = net.conv(layer).expect("conv layer");
        for f in 0..conv.out_channels {
            out.push(FilterScore {
                key: FilterKey::new(layer, f),
                score: conv.filter(f).iter().map(|w| w.abs()).sum(),
                criterion: Criterion::L1Norm,
            });
        }
    }
    out
}

/// `1 − APoZ`, where APoZ is the fraction of exactly-zero post-ReLU
/// activations of the filter over all samples and positions.
pub fn apoz_scores(net: &Network, data: &Dataset) -> Result<Vec<FilterScore>> {
    if data.is_empty() {
        return Err(Error::InsufficientData("APoZ needs samples".into()));
    }
    let convs = net.conv_layers();
    for &layer in &convs {
        if !matches!(net.layers().get(layer + 1), Some(Layer::Relu)) {
            return Err(Error::CriterionInapplicable {
                layer,
                message: "APoZ needs a ReLU directly after the conv".into(),
            });
        }
    }
    let mut zeros: Vec<Vec<usize>> = convs
        .iter()
        .map(|&l| vec![0; net.conv(l).expect("conv").out_channels])
        .collect();
    let mut plane = vec![0usize; convs.len()];
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(256) {
        let (_, acts) = net.forward_with_activations(&data.images.select(chunk))?;
        for (ci, a) in acts.iter().enumerate() {
            plane[ci] = a.shape.height * a.shape.width;
            for s in 0..chunk.len() {
                for (f, z) in zeros[ci].iter_mut().enumerate() {
                    *z += a.map(s, f).iter().filter(|&&v| v == 0.0).count();
                }
            }
        }
    }
    let mut out = Vec::new();
    for (ci, &layer) in convs.iter().enumerate() {
        let total = (plane[ci] * data.len()) as f64;
        for (f, &z) in zeros[ci].iter().enumerate() {
            out.push(FilterScore {
                key: FilterKey::new(layer, f),
                score: 1.0 - z as f64 / total,
                criterion: Criterion::Apoz,
            });
        }
    }
    Ok(out)
}

/// Settings for [`score_filters`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringOptions {
    pub criterion: Criterion,
    pub pooling: PoolingMode,
    pub components: usize,
    pub nipals: NipalsOptions,
}

impl Default for ScoringOptions {
    fn default() -> Self {
        ScoringOptions {
            criterion: Criterion::PlsVip,
            pooling: PoolingMode::GlobalMax,
            components: 2,
            nipals: NipalsOptions::default(),
        }
    }
}

/// Scores every filter of `net` under the chosen criterion. For PLS+VIP the
/// feature matrix is built from `data`, PLS is fitted against the one-hot
/// labels, and VIP values are folded back onto filters.
pub fn score_filters(net: &Network, data: &Dataset, opts: &ScoringOptions) -> Result<Vec<FilterScore>> {
    match opts.criterion {
        Criterion::PlsVip => {
            let (x, index) = build_feature_matrix(net, data, opts.pooling)?;
            let y = one_hot(&data.labels, data.class_count)?;
            let model = nipals_fit(&x, &y, opts.components, opts.nipals)?;
            pls_vip_scores(&vip(&model)?, &index)
        }
        Criterion::L1Norm => Ok(l1_norm_scores(net)),
        Criterion::Apoz => apoz_scores(net, data),
    }
}

/// CSV with header `layer_index,filter_index,criterion,score`.
pub fn write_scores_csv<W: Write>(writer: W, scores: &[FilterScore]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Format(format!("writing scores: {e}"));
    w.write_record(["layer_index", "filter_index", "criterion", "score"])
        .map_err(io)?;
    for s in scores {
        w.write_record([
            s.key.layer.to_string(),
            s.key.filter.to_string(),
            s.criterion.to_string(),
            s.score.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Format(format!("writing scores: {e}")))
}
