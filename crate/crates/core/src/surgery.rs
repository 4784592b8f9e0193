//! Global filter selection and structural removal.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::criteria::{FilterKey, FilterScore};
use crate::data::floor_count;
use crate::error::{Error, Result};
use crate::network::{Conv2d, Dense, Diagnostic, Layer, Network};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovalPlan {
    pub ratio: f64,
    /// `⌊ratio · total_filters⌋`.
    pub requested: usize,
    /// Filters to remove, sorted by key.
    pub victims: Vec<FilterKey>,
    /// Candidates passed over because they were the last filter of a layer.
    pub guard_skipped: usize,
    pub per_layer_counts: BTreeMap<usize, usize>,
}

impl RemovalPlan {
    pub fn empty() -> Self {
        RemovalPlan {
            ratio: 0.0,
            requested: 0,
            victims: Vec::new(),
            guard_skipped: 0,
            per_layer_counts: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.victims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.victims.is_empty()
    }
}

/// Ranks all filters on one global ascending scale (ties by ascending
/// `(layer, filter)`) and takes the first `⌊ratio · n⌋`, skipping any
/// filter that is the last survivor of its layer.
pub fn select_filters(scores: &[FilterScore], ratio: f64) -> Result<RemovalPlan> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Parameter(format!("pruning ratio {ratio} outside (0, 1)")));
    }
    let mut remaining: HashMap<usize, usize> = HashMap::new();
    let mut seen = BTreeSet::new();
    for s in scores {
        if !seen.insert(s.key) {
            return Err(Error::Parameter(format!("duplicate score for filter {}", s.key)));
        }
        if !s.score.is_finite() {
            return Err(Error::Parameter(format!("non-finite score for filter {}", s.key)));
        }
        *remaining.entry(s.key.layer).or_default() += 1;
    }
    let requested = floor_count(ratio, scores.len());
    let mut order: Vec<&FilterScore> = scores.iter().collect();
    order.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.key.cmp(&b.key)));

    let mut victims = Vec::with_capacity(requested);
    let mut guard_skipped = 0;
    for s in order {
        if victims.len() == requested {
            break;
        }
        let left = remaining.get_mut(&s.key.layer).expect("counted");
        if *left <= 1 {
            guard_skipped += 1;
            continue;
        }
        *left -= 1;
        victims.push(s.key);
    }
    victims.sort_unstable();
    let mut per_layer_counts = BTreeMap::new();
    for v in &victims {
        *per_layer_counts.entry(v.layer).or_default() += 1;
    }
    Ok(RemovalPlan {
        ratio,
        requested,
        victims,
        guard_skipped,
        per_layer_counts,
    })
}

/// Where the channels of a conv's output land in its consumer.
struct Consumer {
    layer: usize,
    /// Consumer input columns fed by each channel (1 for conv and pooled
    /// dense inputs, `h·w` after a flatten).
    block: usize,
}

fn find_consumer(net: &Network, conv: usize) -> Result<Consumer> {
    let layers = net.layers();
    let shapes = net.layer_shapes()?;
    let mut block = None;
    let mut j = conv + 1;
    while let Some(layer) = layers.get(j) {
        match layer {
            Layer::Relu | Layer::MaxPool => {}
            Layer::GlobalMaxPool | Layer::GlobalAvgPool => {
                block.get_or_insert(1);
            }
            Layer::Flatten => {
                let s = shapes[j];
                block.get_or_insert(s.height * s.width);
            }
            Layer::Conv2d(_) if block.is_none() => return Ok(Consumer { layer: j, block: 1 }),
            Layer::Dense(_) if block.is_some() => {
                return Ok(Consumer {
                    layer: j,
                    block: block.unwrap_or(1),
                })
            }
            other => {
                return Err(Error::Surgery {
                    from: conv,
                    to: j,
                    message: format!("no rewiring rule for conv2d feeding {}", other.name()),
                })
            }
        }
        j += 1;
    }
    Err(Error::Surgery {
        from: conv,
        to: j,
        message: "conv output reaches the end of the chain without a consumer".into(),
    })
}

/// Deletes every victim filter (kernel and bias) and the matching input
/// slices of the next weighted layer.
pub fn prune_network(net: &Network, plan: &RemovalPlan) -> Result<Network> {
    let mut out_keep: BTreeMap<usize, Vec<bool>> = BTreeMap::new();
    for v in &plan.victims {
        let conv = net
            .conv(v.layer)
            .ok_or_else(|| Error::Index(format!("filter {v}: layer {} is not a conv", v.layer)))?;
        if v.filter >= conv.out_channels {
            return Err(Error::Index(format!(
                "filter {v}: layer {} has {} filters",
                v.layer, conv.out_channels
            )));
        }
        out_keep.entry(v.layer).or_insert_with(|| vec![true; conv.out_channels])[v.filter] = false;
    }
    for (&layer, keep) in &out_keep {
        if !keep.iter().any(|&k| k) {
            return Err(Error::Parameter(format!("plan removes every filter of layer {layer}")));
        }
    }
    let mut in_keep: HashMap<usize, (Vec<bool>, usize)> = HashMap::new();
    for (&layer, keep) in &out_keep {
        let consumer = find_consumer(net, layer)?;
        in_keep.insert(consumer.layer, (keep.clone(), consumer.block));
    }

    let layers = net
        .layers()
        .iter()
        .enumerate()
        .map(|(i, layer)| match layer {
            Layer::Conv2d(c) => {
                let outs = out_keep.get(&i).cloned().unwrap_or_else(|| vec![true; c.out_channels]);
                let ins = in_keep
                    .get(&i)
                    .map_or_else(|| vec![true; c.in_channels], |(k, _)| k.clone());
                Layer::Conv2d(slice_conv(c, &outs, &ins))
            }
            Layer::Dense(d) => match in_keep.get(&i) {
                Some((keep, block)) => Layer::Dense(slice_dense(d, keep, *block)),
                None => layer.clone(),
            },
            other => other.clone(),
        })
        .collect();
    Network::from_layers(net.input_shape(), layers, net.rng_seed())
}

fn slice_conv(c: &Conv2d, outs: &[bool], ins: &[bool]) -> Conv2d {
    let kk = c.kernel * c.kernel;
    let mut weights = Vec::new();
    let mut bias = Vec::new();
    for (oc, _) in outs.iter().enumerate().filter(|(_, &k)| k) {
        bias.push(c.bias[oc]);
        for (ic, _) in ins.iter().enumerate().filter(|(_, &k)| k) {
            let start = (oc * c.in_channels + ic) * kk;
            weights.extend_from_slice(&c.weights[start..start + kk]);
        }
    }
    Conv2d {
        in_channels: ins.iter().filter(|&&k| k).count(),
        out_channels: outs.iter().filter(|&&k| k).count(),
        kernel: c.kernel,
        stride: c.stride,
        padding: c.padding,
        weights,
        bias,
    }
}

fn slice_dense(d: &Dense, channel_keep: &[bool], block: usize) -> Dense {
    let cols: Vec<usize> = (0..d.in_features).filter(|&j| channel_keep[j / block]).collect();
    let mut weights = Vec::with_capacity(cols.len() * d.out_features);
    for o in 0..d.out_features {
        let row = &d.weights[o * d.in_features..(o + 1) * d.in_features];
        weights.extend(cols.iter().map(|&j| row[j]));
    }
    Dense {
        in_features: cols.len(),
        out_features: d.out_features,
        weights,
        bias: d.bias.clone(),
    }
}

/// Shape consistency and weight-tensor sizes of the whole chain.
pub fn validate_consistency(net: &Network) -> std::result::Result<(), Vec<Diagnostic>> {
    let issues = net.diagnostics();
    if issues.is_empty() {
        Ok(())
    } else {
        Err(issues)
    }
}
