use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{solve, Matrix};

/// Linear model `ĝ = w₀ + x·w` over flattened course features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsrModel {
    pub intercept: f64,
    pub weights: Vec<f64>,
}

impl CsrModel {
    pub fn raw(&self, x: &[f64]) -> f64 {
        self.intercept + x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.raw(x).clamp(0.0, 4.0)
    }
}

fn check(xs: &[Vec<f64>], ys: &[f64]) -> Result<usize> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::Usage(format!(
            "regression needs matching nonempty inputs ({} rows, {} targets)",
            xs.len(),
            ys.len()
        )));
    }
    let d = xs[0].len();
    if xs.iter().any(|x| x.len() != d) {
        return Err(Error::Usage("feature rows differ in length".into()));
    }
    Ok(d)
}

/// Ridge regression in closed form: minimizes
/// `Σ (y − w₀ − x·w)² + reg ‖w‖²` (intercept unpenalized) through the
/// normal equations.
pub fn train_csr(xs: &[Vec<f64>], ys: &[f64], reg: f64) -> Result<CsrModel> {
    let d = check(xs, ys)?;
    let n = d + 1;
    let mut gram = Matrix::zeros(n, n);
    let mut rhs = vec![0.0; n];
    for (x, &y) in xs.iter().zip(ys) {
        let row: Vec<f64> = std::iter::once(1.0).chain(x.iter().copied()).collect();
        for i in 0..n {
            rhs[i] += row[i] * y;
            for j in 0..n {
                gram.set(i, j, gram.get(i, j) + row[i] * row[j]);
            }
        }
    }
    for i in 1..n {
        gram.set(i, i, gram.get(i, i) + reg);
    }
    let w = solve(&gram, &rhs).map_err(|e| match e {
        Error::Singular(_) => Error::Singular(format!(
            "normal equations are singular (reg = {reg}); use reg > 0"
        )),
        other => other,
    })?;
    Ok(CsrModel {
        intercept: w[0],
        weights: w[1..].to_vec(),
    })
}

/// Same objective as [`train_csr`], minimized by full-batch gradient
/// descent with a fixed step of `1 / L` where `L` bounds the curvature.
pub fn train_csr_gradient_descent(
    xs: &[Vec<f64>],
    ys: &[f64],
    reg: f64,
    max_iters: usize,
    tolerance: f64,
) -> Result<CsrModel> {
    let d = check(xs, ys)?;
    // λ_max(2(XᵀX + reg I)) ≤ 2(‖[1 X]‖_F² + reg)
    let frob: f64 = xs.iter().map(|x| 1.0 + x.iter().map(|v| v * v).sum::<f64>()).sum();
    let step = 1.0 / (2.0 * (frob + reg));
    let mut model = CsrModel {
        intercept: 0.0,
        weights: vec![0.0; d],
    };
    let mut grad_w = vec![0.0; d];
    for _ in 0..max_iters {
        let mut grad_b = 0.0;
        grad_w.iter_mut().for_each(|g| *g = 0.0);
        for (x, &y) in xs.iter().zip(ys) {
            let e = model.raw(x) - y;
            grad_b += 2.0 * e;
            for (g, v) in grad_w.iter_mut().zip(x) {
                *g += 2.0 * e * v;
            }
        }
        for (g, w) in grad_w.iter_mut().zip(&model.weights) {
            *g += 2.0 * reg * w;
        }
        let norm = (grad_b * grad_b + grad_w.iter().map(|g| g * g).sum::<f64>()).sqrt();
        model.intercept -= step * grad_b;
        for (w, g) in model.weights.iter_mut().zip(&grad_w) {
            *w -= step * g;
        }
        if norm < tolerance {
            break;
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn recovers_planted_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let truth = [0.5, -1.25, 2.0];
        let xs: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| 0.7 + x.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let m = train_csr(&xs, &ys, 1e-12).unwrap();
        assert!((m.intercept - 0.7).abs() < 1e-6);
        for (w, t) in m.weights.iter().zip(&truth) {
            assert!((w - t).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_target_centered_features() {
        let xs = vec![vec![1.0], vec![-1.0], vec![2.0], vec![-2.0]];
        let ys = vec![3.0; 4];
        let m = train_csr(&xs, &ys, 0.001).unwrap();
        assert!(m.weights[0].abs() < 1e-9);
        assert!((m.intercept - 3.0).abs() < 1e-9);
    }

    #[test]
    fn huge_regularization_shrinks_to_mean() {
        let xs = vec![vec![0.0, 1.0], vec![1.0, 0.5], vec![0.3, 0.2]];
        let ys = vec![1.0, 3.0, 2.0];
        let m = train_csr(&xs, &ys, 1e12).unwrap();
        assert!(m.weights.iter().all(|w| w.abs() < 1e-9));
        assert!((m.intercept - 2.0).abs() < 1e-6);
    }

    #[test]
    fn singular_without_regularization() {
        // Second column always zero.
        let xs = vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![3.0, 0.0]];
        let err = train_csr(&xs, &[1.0, 2.0, 3.0], 0.0).unwrap_err();
        assert!(err.to_string().contains("reg > 0"), "{err}");
    }
}
