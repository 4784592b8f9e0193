//! Train the plain CNN on the synthetic dataset, report accuracy and cost,
//! and round-trip the checkpoint through JSON.

use plsprune::data::{split, synthetic};
use plsprune::network::{self, evaluate, train_sgd};
use plsprune::{ImageShape, Network, TrainConfig};

fn main() -> plsprune::Result<()> {
    let shape = ImageShape::new(1, 16, 16);
    let all = synthetic(1800, 3, shape, 1)?;
    let (train, heldout) = split(&all, 5.0 / 6.0, 1)?;

    let mut net = Network::plain_cnn(shape, &[8, 16, 16], 3, 1)?;
    println!(
        "{} layers, {} parameters, {} filters",
        net.layers().len(),
        net.param_count(),
        net.filter_count()
    );

    let cfg = TrainConfig {
        epochs: 4,
        seed: 1,
        ..TrainConfig::default()
    };
    let log = train_sgd(&mut net, &train, &cfg)?;
    for e in &log.epochs {
        println!(
            "epoch {}  loss {:.4}  train accuracy {:.3}",
            e.epoch, e.loss, e.accuracy
        );
    }
    println!("held-out accuracy {:.3}", evaluate(&net, &heldout)?);

    let flops = net.flops()?;
    println!("\nFLOPs {}", flops.total);
    for l in flops.per_layer.iter().filter(|l| l.flops > 0) {
        println!("  layer {:>2} {:<8} {}", l.layer, net.layers()[l.layer].name(), l.flops);
    }

    let path = std::env::temp_dir().join("plsprune-train-example.json");
    network::save(&net, &path)?;
    let back = network::load(&path)?;
    let batch = heldout.images.select(&[0, 1, 2]);
    assert_eq!(net.forward(&batch)?, back.forward(&batch)?);
    println!("checkpoint written to {} and reloaded bit-exactly", path.display());
    Ok(())
}
