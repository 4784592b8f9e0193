//! How much do PLS+VIP filter rankings move when PLS sees only a fraction
//! of the training rows? Prints the Spearman rank correlation against the
//! full-data ranking.

use plsprune::config::RunConfig;
use plsprune::network::train_sgd;
use plsprune::pipeline::iteration_scores;
use plsprune::{Network, PruneConfig};

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    for (rank, &i) in idx.iter().enumerate() {
        r[i] = rank as f64;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let mean = (n - 1.0) / 2.0;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - mean) * (y - mean)).sum();
    let var: f64 = ra.iter().map(|x| (x - mean).powi(2)).sum();
    cov / var
}

fn main() -> plsprune::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.data.samples = 2400;
    cfg.train.epochs = 4;
    cfg.propagate_seed();
    let (train, _) = cfg.load_data()?;
    let mut net = Network::plain_cnn(train.shape(), &cfg.network.filters, train.class_count, cfg.seed)?;
    train_sgd(&mut net, &train, &cfg.train)?;

    let scores = |fraction: f64| -> plsprune::Result<Vec<f64>> {
        let c = PruneConfig {
            pls_sample_fraction: fraction,
            ..cfg.prune.clone()
        };
        let mut s = iteration_scores(&net, &train, &c, 1)?;
        s.sort_by_key(|f| f.key);
        Ok(s.into_iter().map(|f| f.score).collect())
    };
    let full = scores(1.0)?;
    println!("fraction  rows  Spearman vs full");
    for fraction in [0.02, 0.05, 0.1, 0.25, 0.5] {
        let rows = (fraction * train.len() as f64) as usize;
        println!("{fraction:>8}  {rows:>4}  {:.3}", spearman(&scores(fraction)?, &full));
    }
    Ok(())
}
