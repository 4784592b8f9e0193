//! The pruning loop: score filters, remove the globally weakest, fine-tune,
//! repeat. Each iteration starts from the network the previous one left.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::criteria::{score_filters, Criterion, ScoringOptions};
use crate::data::{self, Dataset};
use crate::error::{Error, Result};
use crate::network::{evaluate, train_sgd, Network, TrainConfig};
use crate::pls::NipalsOptions;
use crate::report::{Baseline, IterationRecord, NetworkStats, PruningReport, REPORT_VERSION};
use crate::representation::PoolingMode;
use crate::seed::{self, stage};
use crate::surgery::{prune_network, select_filters};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PruneMode {
    #[default]
    Iterative,
    Single,
}

impl fmt::Display for PruneMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            PruneMode::Iterative => "iterative",
            PruneMode::Single => "single",
        })
    }
}

impl FromStr for PruneMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iterative" => Ok(PruneMode::Iterative),
            "single" => Ok(PruneMode::Single),
            other => Err(Error::Parameter(format!(
                "unknown mode {other:?} (expected iterative or single)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PruneConfig {
    /// Fraction of the current filters removed per iteration.
    pub ratio: f64,
    pub iterations: usize,
    pub components: usize,
    pub pooling: PoolingMode,
    /// Fraction of the training rows used to build the PLS feature matrix.
    pub pls_sample_fraction: f64,
    /// Draw the PLS rows per class instead of uniformly.
    pub stratified: bool,
    pub criterion: Criterion,
    pub fine_tune: TrainConfig,
    pub nipals_tol: f64,
    pub nipals_max_iter: usize,
    pub seed: u64,
    pub mode: PruneMode,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig {
            ratio: 0.10,
            iterations: 5,
            components: 2,
            pooling: PoolingMode::GlobalMax,
            pls_sample_fraction: 0.10,
            stratified: false,
            criterion: Criterion::PlsVip,
            fine_tune: TrainConfig {
                learning_rate: 0.01,
                epochs: 1,
                ..TrainConfig::default()
            },
            nipals_tol: 1e-6,
            nipals_max_iter: 500,
            seed: 0,
            mode: PruneMode::Iterative,
        }
    }
}

impl PruneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::Parameter(format!("pruning ratio {} outside (0, 1)", self.ratio)));
        }
        if !(self.pls_sample_fraction > 0.0 && self.pls_sample_fraction <= 1.0) {
            return Err(Error::Parameter(format!(
                "PLS sample fraction {} outside (0, 1]",
                self.pls_sample_fraction
            )));
        }
        if self.components == 0 {
            return Err(Error::Parameter("PLS needs at least one component".into()));
        }
        self.fine_tune.validate()
    }
}

/// Rows for the scoring stage of `iteration`.
fn scoring_rows(train: &Dataset, cfg: &PruneConfig, iteration: usize) -> Result<Dataset> {
    let s = seed::derive(cfg.seed, stage::SUBSAMPLE, iteration as u64);
    if cfg.stratified {
        data::subsample_stratified(train, cfg.pls_sample_fraction, s)
    } else {
        data::subsample(train, cfg.pls_sample_fraction, s)
    }
}

/// Scores the filters of `net` exactly as iteration `iteration` of a run
/// with `cfg` would.
pub fn iteration_scores(
    net: &Network,
    train: &Dataset,
    cfg: &PruneConfig,
    iteration: usize,
) -> Result<Vec<crate::criteria::FilterScore>> {
    let rows = scoring_rows(train, cfg, iteration)?;
    score_filters(net, &rows, &scoring_options(cfg, iteration))
}

fn scoring_options(cfg: &PruneConfig, iteration: usize) -> ScoringOptions {
    ScoringOptions {
        criterion: cfg.criterion,
        pooling: cfg.pooling,
        components: cfg.components,
        nipals: NipalsOptions {
            tol: cfg.nipals_tol,
            max_iter: cfg.nipals_max_iter,
            seed: seed::derive(cfg.seed, stage::PLS, iteration as u64),
        },
    }
}

/// Runs `cfg.iterations` rounds of score → select → prune → fine-tune.
/// Accuracy is always measured on `heldout`; scoring and fine-tuning only
/// see `train`.
pub fn run_iterative(
    net: Network,
    train: &Dataset,
    heldout: &Dataset,
    cfg: &PruneConfig,
) -> Result<(Network, PruningReport)> {
    cfg.validate()?;
    let started = Instant::now();
    let baseline = Baseline {
        accuracy: evaluate(&net, heldout)?,
        stats: NetworkStats::of(&net)?,
    };
    let mut report = PruningReport {
        report_version: REPORT_VERSION,
        criterion: cfg.criterion,
        config: cfg.clone(),
        baseline,
        iterations: Vec::with_capacity(cfg.iterations),
        aborted: None,
        elapsed_secs: None,
    };
    let mut net = net;
    let mut accuracy = report.baseline.accuracy;
    for iteration in 1..=cfg.iterations {
        let t0 = Instant::now();
        match run_iteration(&net, train, heldout, cfg, iteration, accuracy, &report) {
            Ok((pruned, mut record)) => {
                record.elapsed_secs = Some(t0.elapsed().as_secs_f64());
                accuracy = record.accuracy_after_finetune;
                report.iterations.push(record);
                net = pruned;
            }
            Err(e) => {
                report.aborted = Some(e.to_string());
                report.elapsed_secs = Some(started.elapsed().as_secs_f64());
                return Err(Error::Aborted {
                    iteration,
                    source: Box::new(e),
                    partial: Box::new(report),
                });
            }
        }
    }
    report.elapsed_secs = Some(started.elapsed().as_secs_f64());
    Ok((net, report))
}

fn run_iteration(
    net: &Network,
    train: &Dataset,
    heldout: &Dataset,
    cfg: &PruneConfig,
    iteration: usize,
    accuracy_before: f64,
    report: &PruningReport,
) -> Result<(Network, IterationRecord)> {
    let rows = scoring_rows(train, cfg, iteration)?;
    let opts = scoring_options(cfg, iteration);
    let (scores, pls_converged) = match cfg.criterion {
        Criterion::PlsVip => {
            let (x, index) = crate::representation::build_feature_matrix(net, &rows, cfg.pooling)?;
            let y = crate::pls::one_hot(&rows.labels, rows.class_count)?;
            let model = crate::pls::nipals_fit(&x, &y, cfg.components, opts.nipals)?;
            let scores = crate::criteria::pls_vip_scores(&crate::pls::vip(&model)?, &index)?;
            (scores, Some(model.all_converged()))
        }
        _ => (score_filters(net, &rows, &opts)?, None),
    };
    let plan = select_filters(&scores, cfg.ratio)?;
    let mut pruned = prune_network(net, &plan)?;
    pruned.validate()?;

    let fine_tune = TrainConfig {
        seed: seed::derive(cfg.seed, stage::FINE_TUNE, iteration as u64),
        ..cfg.fine_tune
    };
    if fine_tune.epochs > 0 {
        train_sgd(&mut pruned, train, &fine_tune)?;
    }
    let stats = NetworkStats::of(&pruned)?;
    let base = &report.baseline.stats;
    let record = IterationRecord {
        iteration,
        accuracy_before,
        accuracy_after_finetune: evaluate(&pruned, heldout)?,
        flops_reduction_pct: 100.0 * (1.0 - stats.flops_total as f64 / base.flops_total as f64),
        removed: plan.len(),
        per_layer_removed: plan.per_layer_counts.clone(),
        cumulative_removed_pct: 100.0 * (1.0 - stats.filters as f64 / base.filters as f64),
        victims: plan.victims,
        pls_converged,
        scores,
        stats,
        elapsed_secs: None,
    };
    Ok((pruned, record))
}

/// One pass at `ratio` followed by one fine-tuning stage.
pub fn run_single_shot(
    net: Network,
    train: &Dataset,
    heldout: &Dataset,
    ratio: f64,
    cfg: &PruneConfig,
) -> Result<(Network, PruningReport)> {
    let single = PruneConfig {
        ratio,
        iterations: 1,
        mode: PruneMode::Single,
        ..cfg.clone()
    };
    run_iterative(net, train, heldout, &single)
}

/// Dispatches on `cfg.mode`.
pub fn run(net: Network, train: &Dataset, heldout: &Dataset, cfg: &PruneConfig) -> Result<(Network, PruningReport)> {
    match cfg.mode {
        PruneMode::Iterative => run_iterative(net, train, heldout, cfg),
        PruneMode::Single => run_single_shot(net, train, heldout, cfg.ratio, cfg),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub criterion: Criterion,
    pub checkpoint_sha256: String,
    pub accuracy_before: f64,
    pub accuracy_after: f64,
    pub accuracy_drop_pp: f64,
    pub removed: usize,
    pub flops_reduction_pct: f64,
    pub params: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionComparison {
    pub ratio: f64,
    pub rows: Vec<ComparisonRow>,
}

impl CriterionComparison {
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<9} {:>11} {:>10} {:>9} {:>8} {:>8}\n",
            "criterion", "acc_before", "acc_after", "drop_pp", "removed", "FLOPs↓%"
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{:<9} {:>10.2}% {:>9.2}% {:>9.2} {:>8} {:>8.2}\n",
                r.criterion.to_string(),
                100.0 * r.accuracy_before,
                100.0 * r.accuracy_after,
                r.accuracy_drop_pp,
                r.removed,
                r.flops_reduction_pct
            ));
        }
        s
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| Error::Format(format!("writing comparison: {e}"));
        w.write_record([
            "criterion",
            "checkpoint_sha256",
            "accuracy_before",
            "accuracy_after",
            "accuracy_drop_pp",
            "removed",
            "flops_reduction_pct",
            "params",
        ])
        .map_err(err)?;
        for r in &self.rows {
            w.write_record([
                r.criterion.to_string(),
                r.checkpoint_sha256.clone(),
                r.accuracy_before.to_string(),
                r.accuracy_after.to_string(),
                r.accuracy_drop_pp.to_string(),
                r.removed.to_string(),
                r.flops_reduction_pct.to_string(),
                r.params.to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))
    }
}

/// SHA-256 of the serialized model, hex encoded.
pub fn checkpoint_hash(net: &Network) -> String {
    Sha256::digest(net.to_json().as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// One pruning iteration per criterion, each from the same starting
/// weights and seed; only the criterion changes.
pub fn compare_criteria(
    net: &Network,
    train: &Dataset,
    heldout: &Dataset,
    cfg: &PruneConfig,
) -> Result<CriterionComparison> {
    let mut rows = Vec::with_capacity(Criterion::ALL.len());
    for criterion in Criterion::ALL {
        let start = net.clone();
        let checkpoint_sha256 = checkpoint_hash(&start);
        let run_cfg = PruneConfig {
            criterion,
            iterations: 1,
            mode: PruneMode::Iterative,
            ..cfg.clone()
        };
        let (_, report) = run_iterative(start, train, heldout, &run_cfg)?;
        let rec = &report.iterations[0];
        rows.push(ComparisonRow {
            criterion,
            checkpoint_sha256,
            accuracy_before: report.baseline.accuracy,
            accuracy_after: rec.accuracy_after_finetune,
            accuracy_drop_pp: report.accuracy_drop_pp(),
            removed: rec.removed,
            flops_reduction_pct: rec.flops_reduction_pct,
            params: rec.stats.params,
        });
    }
    Ok(CriterionComparison { ratio: cfg.ratio, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthetic, ImageShape};

    fn setup() -> (Network, Dataset, Dataset) {
        let shape = ImageShape::new(1, 8, 8);
        let ds = synthetic(240, 3, shape, 1).unwrap();
        let (train, held) = data::split(&ds, 0.75, 2).unwrap();
        let net = Network::plain_cnn(shape, &[6, 8], 3, 3).unwrap();
        (net, train, held)
    }

    fn cfg() -> PruneConfig {
        PruneConfig {
            iterations: 2,
            pls_sample_fraction: 0.5,
            ..PruneConfig::default()
        }
    }

    #[test]
    fn zero_iterations_changes_nothing() {
        let (net, train, held) = setup();
        let c = PruneConfig { iterations: 0, ..cfg() };
        let (out, report) = run_iterative(net.clone(), &train, &held, &c).unwrap();
        assert_eq!(out, net);
        assert!(report.iterations.is_empty());
        assert_eq!(report.final_accuracy(), report.baseline.accuracy);
    }

    #[test]
    fn records_per_iteration() {
        let (net, train, held) = setup();
        let (out, report) = run_iterative(net, &train, &held, &cfg()).unwrap();
        assert_eq!(report.iterations.len(), 2);
        assert_eq!(report.iterations[0].removed, 1);
        assert_eq!(report.iterations[1].removed, 1);
        assert_eq!(out.filter_count(), 12);
        let r = &report.iterations;
        assert!(r[1].flops_reduction_pct >= r[0].flops_reduction_pct);
        assert_eq!(r[1].stats.flops_total, out.flops().unwrap().total);
        assert_eq!(r[1].accuracy_before, r[0].accuracy_after_finetune);
        report.check_flops_sums().unwrap();
    }

    #[test]
    fn single_shot_matches_one_iteration() {
        let (net, train, held) = setup();
        let c = PruneConfig { iterations: 1, ..cfg() };
        let (a, ra) = run_iterative(net.clone(), &train, &held, &c).unwrap();
        let (b, rb) = run_single_shot(net, &train, &held, c.ratio, &c).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.iterations[0].victims, rb.iterations[0].victims);
        assert_eq!(rb.config.mode, PruneMode::Single);
    }

    #[test]
    fn abort_carries_partial_report() {
        let (net, train, held) = setup();
        // Ten components cannot be fitted on 9 subsampled rows.
        let c = PruneConfig {
            components: 10,
            pls_sample_fraction: 0.05,
            ..cfg()
        };
        match run_iterative(net, &train, &held, &c) {
            Err(Error::Aborted { iteration, partial, .. }) => {
                assert_eq!(iteration, 1);
                assert!(partial.iterations.is_empty());
                assert!(partial.aborted.is_some());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn comparison_is_fair() {
        let (net, train, held) = setup();
        let c = cmp_cfg();
        let cmp = compare_criteria(&net, &train, &held, &c).unwrap();
        assert_eq!(cmp.rows.len(), 3);
        assert!(cmp
            .rows
            .iter()
            .all(|r| r.checkpoint_sha256 == cmp.rows[0].checkpoint_sha256));
        assert!(cmp.rows.iter().all(|r| r.removed == cmp.rows[0].removed));
        assert!(cmp.table().lines().count() == 4);
    }

    fn cmp_cfg() -> PruneConfig {
        PruneConfig { ratio: 0.2, ..cfg() }
    }

    #[test]
    fn config_validation() {
        assert!(PruneConfig { ratio: 1.0, ..cfg() }.validate().is_err());
        assert!(PruneConfig {
            pls_sample_fraction: 0.0,
            ..cfg()
        }
        .validate()
        .is_err());
        assert!(PruneConfig::default().validate().is_ok());
        assert_eq!("single".parse::<PruneMode>().unwrap(), PruneMode::Single);
    }
}
