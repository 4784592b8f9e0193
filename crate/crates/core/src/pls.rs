//! Partial least squares via NIPALS, projection to the latent space, and
//! variable importance in projection (VIP).
//!
//! The fit standardizes `X` (zero-variance guard) and centers `Y`. Each
//! component alternates
//!
//! ```text
//! w = Xᵀu / ‖Xᵀu‖,   t = Xw,   q = Yᵀt / ‖Yᵀt‖,   u = Yq
//! ```
//!
//! until `w` stops moving, then deflates with the normalized loadings
//! `p = Xᵀt / t't` and the regression coefficient `b = u't / t't`:
//! `X ← X − t pᵀ`, `Y ← Y − b t qᵀ`. The explained sum of squares of the
//! component is `S = b² t't`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, l2_norm, Matrix};

/// Standard deviations below this are treated as zero-variance columns.
pub const STANDARDIZE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NipalsOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Seed for the random start used when the first column of the deflated
    /// `Y` is all zero.
    pub seed: u64,
}

impl Default for NipalsOptions {
    fn default() -> Self {
        NipalsOptions {
            tol: 1e-6,
            max_iter: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlsModel {
    pub components: usize,
    /// Weight vectors `w_i` as columns, `d x c`.
    pub weights: Matrix,
    /// Scores `t_i` of the training rows, `m x c`.
    pub scores: Matrix,
    /// Unit-norm Y loadings `q_i`, `k x c`.
    pub y_loadings: Matrix,
    /// Deflation loadings `p_i`, `d x c`.
    pub x_loadings: Matrix,
    pub x_means: Vec<f64>,
    pub x_scales: Vec<f64>,
    pub y_means: Vec<f64>,
    /// Explained sum of squares of each component.
    pub explained: Vec<f64>,
    pub converged: Vec<bool>,
    pub iterations: Vec<usize>,
}

/// VIP score per input feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VipScores {
    pub values: Vec<f64>,
}

/// One-hot encodes class labels into an `m x k` matrix of zeros and ones.
pub fn one_hot(labels: &[usize], k: usize) -> Result<Matrix> {
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Parameter(format!("label {bad} outside [0, {k})")));
    }
    Matrix::from_fn(labels.len(), k, |r, c| if labels[r] == c { 1.0 } else { 0.0 })
}

pub fn nipals_fit(x: &Matrix, y: &Matrix, components: usize, opts: NipalsOptions) -> Result<PlsModel> {
    let (m, d) = x.shape();
    if y.rows() != m {
        return Err(Error::shape(
            "nipals_fit",
            format!("X {m}x{d}"),
            format!("Y {}x{}", y.rows(), y.cols()),
        ));
    }
    if m < 2 {
        return Err(Error::InsufficientData(format!(
            "PLS needs at least 2 samples, got {m}"
        )));
    }
    if y.cols() == 0 {
        return Err(Error::Parameter("Y has no columns".into()));
    }
    let max_components = (m - 1).min(d);
    if components == 0 || components > max_components {
        return Err(Error::Parameter(format!(
            "component count {components} outside [1, {max_components}]"
        )));
    }
    if opts.tol.is_nan() || opts.tol <= 0.0 || opts.max_iter == 0 {
        return Err(Error::Parameter("tol must be positive and max_iter at least 1".into()));
    }

    let (mut xr, x_means, x_scales) = x.column_standardize(STANDARDIZE_EPS)?;
    let y_means = y.column_means();
    let mut yr = y.apply_standardization(&y_means, &vec![1.0; y.cols()])?;
    let k = y.cols();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut w_cols = Vec::with_capacity(components);
    let mut t_cols = Vec::with_capacity(components);
    let mut q_cols = Vec::with_capacity(components);
    let mut p_cols = Vec::with_capacity(components);
    let mut explained = Vec::with_capacity(components);
    let mut converged = Vec::with_capacity(components);
    let mut iterations = Vec::with_capacity(components);

    for comp in 0..components {
        let mut u = yr.column(0);
        if u.iter().all(|&v| v == 0.0) {
            u = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        }

        let mut w = normalized(xr.t_mul_vec(&u)?)
            .ok_or_else(|| Error::Degenerate(format!("Xᵀu vanished at component {}", comp + 1)))?;
        let mut t;
        let mut q;
        let mut done = false;
        let mut iters = 0;
        loop {
            iters += 1;
            t = xr.mul_vec(&w)?;
            let yt = yr.t_mul_vec(&t)?;
            match normalized(yt) {
                Some(qn) => q = qn,
                None => {
                    // Y has nothing left that t can explain.
                    q = unit(k, 0);
                    u = vec![0.0; m];
                    done = true;
                    break;
                }
            }
            u = yr.mul_vec(&q)?;
            if iters >= opts.max_iter {
                break;
            }
            let Some(w_new) = normalized(xr.t_mul_vec(&u)?) else {
                done = true;
                break;
            };
            let delta = l2_norm(&w_new.iter().zip(&w).map(|(a, b)| a - b).collect::<Vec<_>>());
            w = w_new;
            if delta < opts.tol {
                // Refresh t, q, u for the accepted w.
                t = xr.mul_vec(&w)?;
                if let Some(qn) = normalized(yr.t_mul_vec(&t)?) {
                    q = qn;
                    u = yr.mul_vec(&q)?;
                }
                done = true;
                break;
            }
        }

        let tt = dot(&t, &t);
        if tt <= f64::MIN_POSITIVE {
            return Err(Error::Degenerate(format!(
                "score vector vanished at component {}",
                comp + 1
            )));
        }
        let b = dot(&u, &t) / tt;
        let p: Vec<f64> = xr.t_mul_vec(&t)?.into_iter().map(|v| v / tt).collect();
        xr.sub_outer(&t, &p);
        let bq: Vec<f64> = q.iter().map(|v| b * v).collect();
        yr.sub_outer(&t, &bq);

        explained.push(b * b * tt);
        converged.push(done);
        iterations.push(iters);
        w_cols.push(w);
        t_cols.push(t);
        q_cols.push(q);
        p_cols.push(p);
    }

    Ok(PlsModel {
        components,
        weights: columns_to_matrix(&w_cols, d)?,
        scores: columns_to_matrix(&t_cols, m)?,
        y_loadings: columns_to_matrix(&q_cols, k)?,
        x_loadings: columns_to_matrix(&p_cols, d)?,
        x_means,
        x_scales,
        y_means,
        explained,
        converged,
        iterations,
    })
}

impl PlsModel {
    pub fn feature_count(&self) -> usize {
        self.weights.rows()
    }

    /// Standardizes `x` with the training statistics and projects it onto
    /// the weight vectors.
    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.feature_count() {
            return Err(Error::shape(
                "transform",
                format!("{} features", self.feature_count()),
                format!("{}x{}", x.rows(), x.cols()),
            ));
        }
        x.apply_standardization(&self.x_means, &self.x_scales)?
            .matmul(&self.weights)
    }

    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }
}

/// `f_j = sqrt(d · Σ_i S_i (w_ij / ‖w_i‖)² / Σ_i S_i)`.
pub fn vip(model: &PlsModel) -> Result<VipScores> {
    let d = model.feature_count();
    let total: f64 = model.explained.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::Degenerate(
            "sum of explained squares is zero; Y was fully deflated".into(),
        ));
    }
    let norms: Vec<f64> = (0..model.components)
        .map(|i| l2_norm(&model.weights.column(i)))
        .collect();
    let values = (0..d)
        .map(|j| {
            let acc: f64 = (0..model.components)
                .map(|i| {
                    let w = model.weights.get(j, i) / norms[i];
                    model.explained[i] * w * w
                })
                .sum();
            (d as f64 * acc / total).sqrt()
        })
        .collect();
    Ok(VipScores { values })
}

fn normalized(v: Vec<f64>) -> Option<Vec<f64>> {
    let n = l2_norm(&v);
    if n > f64::MIN_POSITIVE && n.is_finite() {
        Some(v.into_iter().map(|x| x / n).collect())
    } else {
        None
    }
}

fn unit(len: usize, at: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[at] = 1.0;
    v
}

fn columns_to_matrix(cols: &[Vec<f64>], rows: usize) -> Result<Matrix> {
    Matrix::from_fn(rows, cols.len(), |r, c| cols[c][r])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(m: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(m, d, |_, _| StandardNormal.sample(&mut rng)).unwrap()
    }

    fn labels(m: usize, k: usize, seed: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m).map(|_| rng.random_range(0..k)).collect()
    }

    fn model_with_weights(w: Vec<Vec<f64>>, explained: Vec<f64>) -> PlsModel {
        let d = w[0].len();
        let c = w.len();
        PlsModel {
            components: c,
            weights: columns_to_matrix(&w, d).unwrap(),
            scores: Matrix::zeros(2, c),
            y_loadings: Matrix::zeros(1, c),
            x_loadings: Matrix::zeros(d, c),
            x_means: vec![0.0; d],
            x_scales: vec![1.0; d],
            y_means: vec![0.0],
            explained,
            converged: vec![true; c],
            iterations: vec![1; c],
        }
    }

    #[test]
    fn signal_column_dominates_first_weight() {
        let m = 2000;
        let labs: Vec<usize> = (0..m).map(|i| i % 2).collect();
        let mut x = noise(m, 6, 11).into_vec();
        for (r, &l) in labs.iter().enumerate() {
            x[r * 6 + 2] = l as f64;
        }
        let x = Matrix::new(m, 6, x).unwrap();
        let y = one_hot(&labs, 2).unwrap();
        let model = nipals_fit(&x, &y, 1, NipalsOptions::default()).unwrap();
        let w2 = model.weights.get(2, 0).abs();
        assert!(w2 > 0.99, "{w2}");
    }

    #[test]
    fn weights_and_loadings_are_unit() {
        let x = noise(40, 7, 1);
        let y = one_hot(&labels(40, 3, 2), 3).unwrap();
        let model = nipals_fit(&x, &y, 3, NipalsOptions::default()).unwrap();
        for i in 0..3 {
            assert!((l2_norm(&model.weights.column(i)) - 1.0).abs() < 1e-9);
            assert!((l2_norm(&model.y_loadings.column(i)) - 1.0).abs() < 1e-9);
            assert!(model.explained[i] >= 0.0);
        }
    }

    #[test]
    fn scores_are_orthogonal() {
        let x = noise(60, 10, 5);
        let y = one_hot(&labels(60, 3, 6), 3).unwrap();
        let model = nipals_fit(&x, &y, 2, NipalsOptions::default()).unwrap();
        let t1 = model.scores.column(0);
        let t2 = model.scores.column(1);
        assert!(dot(&t1, &t2).abs() / (l2_norm(&t1) * l2_norm(&t2)) < 1e-6);
    }

    #[test]
    fn component_range_checked() {
        let x = noise(5, 3, 1);
        let y = one_hot(&[0, 1, 0, 1, 1], 2).unwrap();
        assert!(matches!(
            nipals_fit(&x, &y, 0, NipalsOptions::default()),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            nipals_fit(&x, &y, 4, NipalsOptions::default()),
            Err(Error::Parameter(_))
        ));
        let tall = noise(3, 10, 1);
        let y3 = one_hot(&[0, 1, 0], 2).unwrap();
        assert!(nipals_fit(&tall, &y3, 2, NipalsOptions::default()).is_ok());
        assert!(nipals_fit(&tall, &y3, 3, NipalsOptions::default()).is_err());
    }

    #[test]
    fn max_iter_flags_instead_of_failing() {
        let x = noise(50, 8, 3);
        let y = one_hot(&labels(50, 4, 4), 4).unwrap();
        let opts = NipalsOptions {
            max_iter: 1,
            ..NipalsOptions::default()
        };
        let model = nipals_fit(&x, &y, 2, opts).unwrap();
        assert!(!model.all_converged());
        let full = nipals_fit(&x, &y, 2, NipalsOptions::default()).unwrap();
        assert!(full.all_converged());
    }

    #[test]
    fn transform_contract() {
        let x = noise(30, 5, 8);
        let y = one_hot(&labels(30, 2, 9), 2).unwrap();
        let model = nipals_fit(&x, &y, 2, NipalsOptions::default()).unwrap();
        assert_eq!(model.transform(&x).unwrap().shape(), (30, 2));

        let means = Matrix::new(1, 5, model.x_means.clone()).unwrap();
        assert!(model.transform(&means).unwrap().as_slice().iter().all(|&v| v == 0.0));

        let row = x.select_rows(&[4, 4]);
        let z = model.transform(&row).unwrap();
        assert_eq!(z.row(0), z.row(1));

        assert!(matches!(
            model.transform(&Matrix::zeros(2, 4)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn training_scores_match_transform_for_first_component() {
        let x = noise(30, 5, 8);
        let y = one_hot(&labels(30, 2, 9), 2).unwrap();
        let model = nipals_fit(&x, &y, 1, NipalsOptions::default()).unwrap();
        let z = model.transform(&x).unwrap();
        for r in 0..30 {
            assert!((z.get(r, 0) - model.scores.get(r, 0)).abs() < 1e-9);
        }
    }

    #[test]
    fn vip_uniform_weights() {
        let model = model_with_weights(vec![vec![0.5, -0.5, 0.5, 0.5]], vec![3.0]);
        let f = vip(&model).unwrap();
        for v in f.values {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn vip_axis_weight() {
        let model = model_with_weights(vec![vec![1.0, 0.0]], vec![0.7]);
        let f = vip(&model).unwrap();
        assert!((f.values[0] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(f.values[1], 0.0);
    }

    #[test]
    fn vip_degenerate() {
        let model = model_with_weights(vec![vec![1.0, 0.0]], vec![0.0]);
        assert!(matches!(vip(&model), Err(Error::Degenerate(_))));
    }

    #[test]
    fn fully_deflated_y_still_fits() {
        // Constant labels: the centered Y is zero, so nothing is explained.
        let x = noise(10, 3, 1);
        let y = one_hot(&[0; 10], 2).unwrap();
        let model = nipals_fit(&x, &y, 1, NipalsOptions::default()).unwrap();
        assert_eq!(model.explained, vec![0.0]);
        assert!((l2_norm(&model.y_loadings.column(0)) - 1.0).abs() < 1e-12);
        assert!(vip(&model).is_err());
    }

    #[test]
    fn fit_is_deterministic() {
        let x = noise(40, 6, 21);
        let y = one_hot(&labels(40, 3, 22), 3).unwrap();
        let a = nipals_fit(&x, &y, 2, NipalsOptions::default()).unwrap();
        let b = nipals_fit(&x, &y, 2, NipalsOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_rejected_by_matrix() {
        assert!(Matrix::new(2, 1, vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn one_hot_rejects_out_of_range() {
        assert!(one_hot(&[0, 3], 3).is_err());
        let y = one_hot(&[2, 0], 3).unwrap();
        assert_eq!(y.as_slice(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
    }
}
