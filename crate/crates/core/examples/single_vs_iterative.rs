//! Remove the same number of filters once (single shot) or in five 10%
//! steps with fine-tuning in between, and compare held-out accuracy.

use plsprune::config::RunConfig;
use plsprune::network::train_sgd;
use plsprune::pipeline::{run_iterative, run_single_shot};
use plsprune::Network;

fn main() -> plsprune::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.data.samples = 2400;
    cfg.train.epochs = 4;
    cfg.propagate_seed();
    let (train, heldout) = cfg.load_data()?;
    let mut net = Network::plain_cnn(train.shape(), &cfg.network.filters, train.class_count, cfg.seed)?;
    train_sgd(&mut net, &train, &cfg.train)?;

    let (_, iterative) = run_iterative(net.clone(), &train, &heldout, &cfg.prune)?;
    let removed: usize = iterative.iterations.iter().map(|r| r.removed).sum();
    let ratio = removed as f64 / net.filter_count() as f64;
    let (_, single) = run_single_shot(net, &train, &heldout, ratio, &cfg.prune)?;

    println!("baseline accuracy {:.2}%", 100.0 * iterative.baseline.accuracy);
    println!("mode       removed  accuracy  drop (pp)  FLOPs reduction");
    for (name, r) in [("iterative", &iterative), ("single", &single)] {
        println!(
            "{name:<9}  {:>7}  {:>7.2}%  {:>9.2}  {:>14.2}%",
            r.iterations.iter().map(|i| i.removed).sum::<usize>(),
            100.0 * r.final_accuracy(),
            r.accuracy_drop_pp(),
            r.final_flops_reduction_pct()
        );
    }
    Ok(())
}
