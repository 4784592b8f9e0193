//! One pruning step per criterion from the same checkpoint.

use plsprune::config::RunConfig;
use plsprune::network::train_sgd;
use plsprune::pipeline::compare_criteria;
use plsprune::Network;

fn main() -> plsprune::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.data.samples = 2400;
    cfg.train.epochs = 4;
    cfg.prune.ratio = 0.2;
    cfg.propagate_seed();
    let (train, heldout) = cfg.load_data()?;
    let mut net = Network::plain_cnn(train.shape(), &cfg.network.filters, train.class_count, cfg.seed)?;
    train_sgd(&mut net, &train, &cfg.train)?;

    let cmp = compare_criteria(&net, &train, &heldout, &cfg.prune)?;
    print!("{}", cmp.table());
    cmp.write_csv(std::io::stdout())?;
    Ok(())
}
