mod common;

use common::*;
use plsprune::pls::{nipals_fit, one_hot as pls_one_hot, vip, NipalsOptions, PlsModel};
use plsprune::Matrix;
use rand::Rng;

fn fit(seed: u64, m: usize, d: usize, k: usize, c: usize) -> (Matrix, Vec<usize>, PlsModel) {
    let (x, labels) = planted_problem(seed, m, d, k);
    let y = pls_one_hot(&labels, k).unwrap();
    let model = nipals_fit(
        &x,
        &y,
        c,
        NipalsOptions {
            seed,
            ..NipalsOptions::default()
        },
    )
    .unwrap();
    (x, labels, model)
}

#[test]
fn first_weight_matches_power_iteration() {
    for seed in 0..8 {
        let (x, labels, model) = fit(seed, 60 + 10 * seed as usize, 12, 3, 1);
        let xs = standardize(&rows_of(&x));
        let yc = center(&one_hot(&labels, 3));
        let oracle = dominant_left_singular(&cross(&xs, &yc), seed + 1000);
        let cos = cosine(&model.weights.column(0), &oracle).abs();
        assert!(cos > 1.0 - 1e-6, "seed {seed}: |cos| = {cos}");
    }
}

#[test]
fn signal_column_is_recovered() {
    let m = 1000;
    let mut r = rng(5);
    let labels: Vec<usize> = (0..m).map(|i| i % 2).collect();
    let x = Matrix::from_fn(m, 5, |i, j| {
        if j == 3 {
            labels[i] as f64 - 0.5
        } else {
            gaussian(&mut r)
        }
    })
    .unwrap();
    let model = nipals_fit(&x, &pls_one_hot(&labels, 2).unwrap(), 1, NipalsOptions::default()).unwrap();
    assert!(model.weights.get(3, 0).abs() > 0.99);
}

#[test]
fn first_component_maximizes_covariance() {
    for seed in 0..4 {
        let (x, labels, model) = fit(seed, 80, 10, 4, 1);
        let xs = standardize(&rows_of(&x));
        let yc = center(&one_hot(&labels, 4));
        let q = model.y_loadings.column(0);
        let yq: Vec<f64> = yc.iter().map(|r| r.iter().zip(&q).map(|(a, b)| a * b).sum()).collect();
        let cov = |w: &[f64]| -> f64 {
            xs.iter()
                .zip(&yq)
                .map(|(row, yv)| row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() * yv)
                .sum::<f64>()
                / (xs.len() - 1) as f64
        };
        let best = cov(&model.weights.column(0));
        let mut r = rng(seed + 77);
        for _ in 0..300 {
            let mut v: Vec<f64> = (0..10).map(|_| gaussian(&mut r)).collect();
            let n = norm(&v);
            v.iter_mut().for_each(|e| *e /= n);
            assert!(cov(&v) <= best + 1e-12);
        }
    }
}

#[test]
fn vip_matches_direct_summation() {
    let mut r = rng(9);
    for seed in 0..20 {
        let c = r.random_range(1..=3);
        let (_, _, model) = fit(seed, 50, 8, 3, c);
        let scores = vip(&model).unwrap();
        let d = 8;
        let total: f64 = model.explained.iter().sum();
        for j in 0..d {
            let mut acc = 0.0;
            for i in 0..c {
                let w = model.weights.column(i);
                acc += model.explained[i] * w[j] * w[j] / w.iter().map(|v| v * v).sum::<f64>();
            }
            let expected = (d as f64 * acc / total).sqrt();
            assert!((scores.values[j] - expected).abs() < 1e-12);
        }
        let mean_sq = scores.values.iter().map(|f| f * f).sum::<f64>() / d as f64;
        assert!((mean_sq - 1.0).abs() < 1e-8);
    }
}

#[test]
fn scores_orthogonal_and_vectors_unit() {
    for seed in 0..10 {
        let (_, _, model) = fit(seed, 40, 9, 3, 3);
        for i in 0..3 {
            assert!((norm(&model.weights.column(i)) - 1.0).abs() < 1e-9);
            assert!((norm(&model.y_loadings.column(i)) - 1.0).abs() < 1e-9);
            assert!(model.explained[i] >= 0.0);
            for j in 0..i {
                let ti = model.scores.column(i);
                let tj = model.scores.column(j);
                assert!(cosine(&ti, &tj).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn transform_reproduces_training_scores() {
    let (x, _, model) = fit(3, 30, 6, 2, 2);
    let t = model.transform(&x).unwrap();
    // Scores come from deflated X, the transform from the original; they
    // agree on the first component only.
    for i in 0..30 {
        assert!((t.get(i, 0) - model.scores.get(i, 0)).abs() < 1e-9);
    }
}
