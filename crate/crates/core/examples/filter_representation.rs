//! Turn every conv filter into feature columns under each pooling mode.

use plsprune::data::{split, synthetic};
use plsprune::network::train_sgd;
use plsprune::representation::build_feature_matrix;
use plsprune::{ImageShape, Network, PoolingMode, TrainConfig};

fn main() -> plsprune::Result<()> {
    let shape = ImageShape::new(1, 16, 16);
    let (train, _) = split(&synthetic(600, 3, shape, 2)?, 0.8, 2)?;
    let mut net = Network::plain_cnn(shape, &[4, 8, 8], 3, 2)?;
    train_sgd(
        &mut net,
        &train,
        &TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        },
    )?;

    for mode in [PoolingMode::GlobalMax, PoolingMode::GlobalAvg, PoolingMode::MaxPool2x2] {
        let (x, index) = build_feature_matrix(&net, &train, mode)?;
        println!(
            "{mode}: X is {} x {} ({} filters)",
            x.rows(),
            x.cols(),
            index.entries.len()
        );
        for e in index.entries.iter().step_by(6) {
            println!("  filter {} -> columns {:?}", e.key, e.columns());
        }
    }
    Ok(())
}
