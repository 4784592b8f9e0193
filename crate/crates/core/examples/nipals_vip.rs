//! Fit PLS with NIPALS on a labelled feature matrix and rank features by VIP.
//!
//! Columns 0 and 3 carry the class signal; the rest are noise.

use plsprune::pls::{nipals_fit, one_hot, vip, NipalsOptions};
use plsprune::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> plsprune::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (m, d, k) = (300, 6, 3);
    let labels: Vec<usize> = (0..m).map(|i| i % k).collect();
    let x = Matrix::from_fn(m, d, |i, j| {
        let noise: f64 = rng.random_range(-1.0..1.0);
        match j {
            0 => labels[i] as f64 + 0.5 * noise,
            3 => (labels[i] == 2) as u8 as f64 + 0.5 * noise,
            _ => noise,
        }
    })?;
    let y = one_hot(&labels, k)?;

    let model = nipals_fit(&x, &y, 2, NipalsOptions::default())?;
    println!(
        "components: {}  converged: {:?}  iterations: {:?}",
        model.components, model.converged, model.iterations
    );
    println!("explained sum of squares per component: {:?}", model.explained);

    let scores = vip(&model)?;
    let mean_sq = scores.values.iter().map(|f| f * f).sum::<f64>() / d as f64;
    println!("\nfeature  w1       w2       VIP");
    for j in 0..d {
        println!(
            "{j:>7}  {:>7.4}  {:>7.4}  {:.4}",
            model.weights.get(j, 0),
            model.weights.get(j, 1),
            scores.values[j]
        );
    }
    println!("\nmean squared VIP = {mean_sq:.12}");

    let projected = model.transform(&x)?;
    println!("latent projection: {} x {}", projected.rows(), projected.cols());
    Ok(())
}
