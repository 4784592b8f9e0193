//! Train, then prune iteratively (score, remove 10%, fine-tune) five times.
//!
//! Pass a seed as the first argument to vary the run.

use plsprune::config::RunConfig;
use plsprune::network::{evaluate, train_sgd};
use plsprune::pipeline::run_iterative;
use plsprune::Network;

fn main() -> plsprune::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut cfg = RunConfig {
        seed,
        ..RunConfig::default()
    };
    cfg.data.samples = 2400;
    cfg.train.epochs = 4;
    cfg.propagate_seed();

    let (train, heldout) = cfg.load_data()?;
    let mut net = Network::plain_cnn(train.shape(), &cfg.network.filters, train.class_count, seed)?;
    train_sgd(&mut net, &train, &cfg.train)?;
    println!("trained: held-out accuracy {:.3}\n", evaluate(&net, &heldout)?);

    let (pruned, report) = run_iterative(net, &train, &heldout, &cfg.prune)?;
    print!("{}", report.summary());
    println!(
        "\nfinal network: {} filters, {} parameters",
        pruned.filter_count(),
        pruned.param_count()
    );
    Ok(())
}
