use plsprune::data::{split, synthetic, Dataset};
use plsprune::network::train_sgd;
use plsprune::pipeline::{compare_criteria, run_iterative, run_single_shot};
use plsprune::{Criterion, ImageShape, Network, PoolingMode, PruneConfig, PruningReport, TrainConfig};

fn setup(seed: u64) -> (Network, Dataset, Dataset) {
    let shape = ImageShape::new(1, 12, 12);
    let all = synthetic(360, 3, shape, seed).unwrap();
    let (train, heldout) = split(&all, 0.75, seed).unwrap();
    let mut net = Network::plain_cnn(shape, &[4, 6], 3, seed).unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        seed,
        ..TrainConfig::default()
    };
    train_sgd(&mut net, &train, &cfg).unwrap();
    (net, train, heldout)
}

fn prune_cfg(seed: u64) -> PruneConfig {
    PruneConfig {
        iterations: 3,
        pls_sample_fraction: 0.5,
        seed,
        ..PruneConfig::default()
    }
}

#[test]
fn report_invariants_hold() {
    let (net, train, heldout) = setup(1);
    let (pruned, report) = run_iterative(net.clone(), &train, &heldout, &prune_cfg(1)).unwrap();
    assert_eq!(report.iterations.len(), 3);
    report.check_flops_sums().unwrap();
    let mut last = 0.0;
    for r in &report.iterations {
        assert!(r.flops_reduction_pct >= last);
        last = r.flops_reduction_pct;
        assert_eq!(r.per_layer_removed.values().sum::<usize>(), r.removed);
        assert_eq!(r.scores.len() + r.removed, r.scores.len() + r.victims.len());
        assert_eq!(r.pls_converged, Some(true));
    }
    let stats = report.final_network_stats();
    assert_eq!(stats.filters, pruned.filter_count());
    assert_eq!(stats.params, pruned.param_count());
    let expected = 100.0 * (1.0 - stats.flops_total as f64 / report.baseline.stats.flops_total as f64);
    assert!((report.final_flops_reduction_pct() - expected).abs() < 1e-12);
    for h in report.layer_histogram() {
        assert!((0.0..=100.0).contains(&h.removed_pct));
    }
}

#[test]
fn report_round_trips_through_json_and_csv() {
    let (net, train, heldout) = setup(2);
    let (_, report) = run_iterative(net, &train, &heldout, &prune_cfg(2)).unwrap();
    let back = PruningReport::from_json(&report.to_json()).unwrap();
    assert_eq!(back, report);

    let mut buf = Vec::new();
    report.write_iterations_csv(&mut buf).unwrap();
    let mut rdr = csv::Reader::from_reader(buf.as_slice());
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), report.iterations.len() + 1);
    for (row, rec) in rows[1..].iter().zip(&report.iterations) {
        assert_eq!(row[2].parse::<f64>().unwrap(), rec.accuracy_after_finetune);
        assert_eq!(row[3].parse::<u64>().unwrap(), rec.stats.flops_total);
        assert_eq!(row[4].parse::<f64>().unwrap(), rec.flops_reduction_pct);
    }
}

#[test]
fn same_seed_same_report_bytes() {
    let run = || {
        let (net, train, heldout) = setup(3);
        let (_, report) = run_iterative(net, &train, &heldout, &prune_cfg(3)).unwrap();
        report.without_timings().to_json()
    };
    assert_eq!(run(), run());
}

#[test]
fn single_shot_removes_requested_fraction() {
    let (net, train, heldout) = setup(4);
    let (pruned, report) = run_single_shot(net.clone(), &train, &heldout, 0.3, &prune_cfg(4)).unwrap();
    assert_eq!(report.iterations.len(), 1);
    assert_eq!(net.filter_count() - pruned.filter_count(), 3);
}

#[test]
fn every_pooling_mode_runs() {
    let (net, train, heldout) = setup(5);
    for pooling in [PoolingMode::GlobalMax, PoolingMode::GlobalAvg, PoolingMode::MaxPool2x2] {
        let cfg = PruneConfig {
            pooling,
            iterations: 1,
            ..prune_cfg(5)
        };
        let (_, report) = run_iterative(net.clone(), &train, &heldout, &cfg).unwrap();
        assert_eq!(report.iterations[0].removed, 1);
    }
}

#[test]
fn comparison_covers_all_criteria() {
    let (net, train, heldout) = setup(6);
    let cmp = compare_criteria(&net, &train, &heldout, &prune_cfg(6)).unwrap();
    let criteria: Vec<Criterion> = cmp.rows.iter().map(|r| r.criterion).collect();
    assert_eq!(criteria, Criterion::ALL.to_vec());
    assert!(cmp.rows.iter().all(|r| r.removed == cmp.rows[0].removed));
    assert!(cmp
        .rows
        .iter()
        .all(|r| r.checkpoint_sha256 == cmp.rows[0].checkpoint_sha256));
}
