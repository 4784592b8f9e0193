//! Score every filter under PLS+VIP, L1-norm and APoZ, and show the lowest
//! ranked filters of each.

use plsprune::criteria::{score_filters, write_scores_csv, ScoringOptions};
use plsprune::data::{split, subsample, synthetic};
use plsprune::network::train_sgd;
use plsprune::{Criterion, ImageShape, Network, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let shape = ImageShape::new(1, 16, 16);
    let (train, _) = split(&synthetic(1200, 3, shape, 3)?, 5.0 / 6.0, 3)?;
    let mut net = Network::plain_cnn(shape, &[8, 16, 16], 3, 3)?;
    train_sgd(
        &mut net,
        &train,
        &TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        },
    )?;
    let rows = subsample(&train, 0.25, 3)?;

    for criterion in Criterion::ALL {
        let opts = ScoringOptions {
            criterion,
            ..ScoringOptions::default()
        };
        let mut scores = score_filters(&net, &rows, &opts)?;
        scores.sort_by(|a, b| a.score.total_cmp(&b.score));
        let lowest: Vec<String> = scores
            .iter()
            .take(5)
            .map(|s| format!("{} ({:.3})", s.key, s.score))
            .collect();
        println!("{criterion:<5} lowest: {}", lowest.join(", "));
        if criterion == Criterion::PlsVip {
            let path = std::env::temp_dir().join("plsprune-scores-example.csv");
            write_scores_csv(std::fs::File::create(&path)?, &scores)?;
            println!("      all scores written to {}", path.display());
        }
    }
    Ok(())
}
