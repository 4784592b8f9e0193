//! Pruning reports and their JSON/CSV forms.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::criteria::{Criterion, FilterKey, FilterScore};
use crate::error::{Error, Result};
use crate::network::Network;
use crate::pipeline::PruneConfig;

pub const REPORT_VERSION: u64 = 1;

/// Network statistics shared by the baseline and every iteration record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkStats {
    pub flops_total: u64,
    pub flops_per_layer: BTreeMap<usize, u64>,
    pub params: usize,
    pub filters: usize,
    pub filters_per_layer: BTreeMap<usize, usize>,
}

impl NetworkStats {
    pub fn of(net: &Network) -> Result<Self> {
        let flops = net.flops()?;
        Ok(NetworkStats {
            flops_total: flops.total,
            flops_per_layer: flops
                .per_layer
                .iter()
                .filter(|l| l.flops > 0)
                .map(|l| (l.layer, l.flops))
                .collect(),
            params: net.param_count(),
            filters: net.filter_count(),
            filters_per_layer: net
                .conv_layers()
                .into_iter()
                .map(|l| (l, net.conv(l).expect("conv").out_channels))
                .collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub accuracy: f64,
    #[serde(rename = "network")]
    pub stats: NetworkStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub accuracy_before: f64,
    pub accuracy_after_finetune: f64,
    pub flops_reduction_pct: f64,
    pub removed: usize,
    pub per_layer_removed: BTreeMap<usize, usize>,
    pub cumulative_removed_pct: f64,
    pub victims: Vec<FilterKey>,
    /// `None` for criteria that do not fit PLS.
    pub pls_converged: Option<bool>,
    pub scores: Vec<FilterScore>,
    #[serde(rename = "network")]
    pub stats: NetworkStats,
    /// Wall-clock seconds spent on this iteration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_secs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruningReport {
    pub report_version: u64,
    pub criterion: Criterion,
    pub config: PruneConfig,
    pub baseline: Baseline,
    pub iterations: Vec<IterationRecord>,
    /// Set when the run stopped early; the records are then partial.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_secs: Option<f64>,
}

/// Cumulative removal in one conv layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRemoval {
    pub layer: usize,
    pub original: usize,
    pub remaining: usize,
    pub removed_pct: f64,
}

impl PruningReport {
    pub fn final_network_stats(&self) -> &NetworkStats {
        self.iterations.last().map_or(&self.baseline.stats, |r| &r.stats)
    }

    pub fn final_accuracy(&self) -> f64 {
        self.iterations
            .last()
            .map_or(self.baseline.accuracy, |r| r.accuracy_after_finetune)
    }

    /// Baseline accuracy minus final accuracy, in percentage points.
    pub fn accuracy_drop_pp(&self) -> f64 {
        100.0 * (self.baseline.accuracy - self.final_accuracy())
    }

    pub fn final_flops_reduction_pct(&self) -> f64 {
        self.iterations.last().map_or(0.0, |r| r.flops_reduction_pct)
    }

    pub fn layer_histogram(&self) -> Vec<LayerRemoval> {
        let last = self.final_network_stats();
        self.baseline
            .stats
            .filters_per_layer
            .iter()
            .map(|(&layer, &original)| {
                let remaining = last.filters_per_layer.get(&layer).copied().unwrap_or(0);
                LayerRemoval {
                    layer,
                    original,
                    remaining,
                    removed_pct: 100.0 * (original - remaining) as f64 / original as f64,
                }
            })
            .collect()
    }

    /// Copy with every wall-clock field cleared.
    pub fn without_timings(&self) -> PruningReport {
        let mut r = self.clone();
        r.elapsed_secs = None;
        r.iterations.iter_mut().for_each(|i| i.elapsed_secs = None);
        r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: PruningReport = serde_json::from_str(text).map_err(|e| Error::Parse {
            offset: offset_of(text, e.line(), e.column()),
            message: e.to_string(),
        })?;
        if report.report_version != REPORT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: report.report_version,
                expected: REPORT_VERSION,
            });
        }
        Ok(report)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PruningReport::from_json(&text)
    }

    /// One row per iteration; row 0 is the unpruned baseline.
    pub fn write_iterations_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "iteration",
            "accuracy_before",
            "accuracy_after_finetune",
            "flops_total",
            "flops_reduction_pct",
            "params",
            "filters",
            "removed",
            "cumulative_removed_pct",
        ])
        .map_err(csv_err)?;
        let b = &self.baseline;
        w.write_record([
            "0".to_string(),
            b.accuracy.to_string(),
            b.accuracy.to_string(),
            b.stats.flops_total.to_string(),
            "0".to_string(),
            b.stats.params.to_string(),
            b.stats.filters.to_string(),
            "0".to_string(),
            "0".to_string(),
        ])
        .map_err(csv_err)?;
        for r in &self.iterations {
            w.write_record([
                r.iteration.to_string(),
                r.accuracy_before.to_string(),
                r.accuracy_after_finetune.to_string(),
                r.stats.flops_total.to_string(),
                r.flops_reduction_pct.to_string(),
                r.stats.params.to_string(),
                r.stats.filters.to_string(),
                r.removed.to_string(),
                r.cumulative_removed_pct.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))
    }

    /// Per-layer cumulative removal and FLOPs before/after.
    pub fn write_layers_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "layer",
            "original_filters",
            "remaining_filters",
            "removed_pct",
            "flops_before",
            "flops_after",
        ])
        .map_err(csv_err)?;
        let last = self.final_network_stats();
        for h in self.layer_histogram() {
            w.write_record([
                h.layer.to_string(),
                h.original.to_string(),
                h.remaining.to_string(),
                h.removed_pct.to_string(),
                self.baseline
                    .stats
                    .flops_per_layer
                    .get(&h.layer)
                    .copied()
                    .unwrap_or(0)
                    .to_string(),
                last.flops_per_layer.get(&h.layer).copied().unwrap_or(0).to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))
    }

    /// Human-readable trajectory and per-layer removal.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let b = &self.baseline;
        s.push_str(&format!(
            "criterion {} | pooling {} | ratio {} | components {} | mode {}\n",
            self.criterion, self.config.pooling, self.config.ratio, self.config.components, self.config.mode
        ));
        s.push_str(&format!(
            "baseline: accuracy {:.2}% | FLOPs {} | params {} | filters {}\n",
            100.0 * b.accuracy,
            b.stats.flops_total,
            b.stats.params,
            b.stats.filters
        ));
        s.push_str("iter  acc_before  acc_after   FLOPs        FLOPs↓%   params   filters  removed%\n");
        for r in &self.iterations {
            s.push_str(&format!(
                "{:>4}  {:>9.2}%  {:>8.2}%  {:>11}  {:>7.2}  {:>7}  {:>8}  {:>7.2}\n",
                r.iteration,
                100.0 * r.accuracy_before,
                100.0 * r.accuracy_after_finetune,
                r.stats.flops_total,
                r.flops_reduction_pct,
                r.stats.params,
                r.stats.filters,
                r.cumulative_removed_pct
            ));
        }
        s.push_str("layer  original  remaining  removed%\n");
        for h in self.layer_histogram() {
            s.push_str(&format!(
                "{:>5}  {:>8}  {:>9}  {:>7.2}\n",
                h.layer, h.original, h.remaining, h.removed_pct
            ));
        }
        s.push_str(&format!(
            "accuracy drop {:.2} p.p. | FLOPs reduction {:.2}%\n",
            self.accuracy_drop_pp(),
            self.final_flops_reduction_pct()
        ));
        if let Some(reason) = &self.aborted {
            s.push_str(&format!("PARTIAL REPORT: aborted ({reason})\n"));
        }
        s
    }

    /// Every record's per-layer FLOPs must add up to its total.
    pub fn check_flops_sums(&self) -> Result<()> {
        let all =
            std::iter::once((0, &self.baseline.stats)).chain(self.iterations.iter().map(|r| (r.iteration, &r.stats)));
        for (it, stats) in all {
            let sum: u64 = stats.flops_per_layer.values().sum();
            if sum != stats.flops_total {
                return Err(Error::Consistency(format!(
                    "iteration {it}: per-layer FLOPs sum to {sum}, total says {}",
                    stats.flops_total
                )));
            }
        }
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("writing csv: {e}"))
}

fn offset_of(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (start + column.saturating_sub(1)).min(text.len())
}
