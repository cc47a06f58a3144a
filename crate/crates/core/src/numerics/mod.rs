//! Dense matrices, the reverse-mode tape, Adam, dropout, and a small linear
//! solver. Everything that learns in this crate is built on these pieces.

mod adam;
mod matrix;
mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use matrix::Matrix;
pub use tape::{softmax, ParamId, ParamSet, ParamTensor, Tape, Var};

use rand::Rng;

use crate::error::{Error, Result};

/// Inverted-dropout mask: each entry is 0 with probability `rate`, otherwise
/// `1 / (1 - rate)`.
pub fn dropout_mask(rows: usize, cols: usize, rate: f64, rng: &mut impl Rng) -> Result<Matrix> {
    check_rate(rate)?;
    let keep = 1.0 / (1.0 - rate);
    let data = (0..rows * cols)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    Matrix::from_vec(rows, cols, data)
}

pub fn dropout(m: &Matrix, rate: f64, training: bool, rng: &mut impl Rng) -> Result<Matrix> {
    check_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok(m.clone());
    }
    let mask = dropout_mask(m.rows(), m.cols(), rate, rng)?;
    m.hadamard(&mask)
}

pub(crate) fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
    }
    Ok(())
}

/// Glorot-uniform weights: U(-s, s) with s = √(6 / (fan_in + fan_out)).
pub fn glorot_uniform(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Matrix {
    let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-s..=s)).collect();
    Matrix::from_vec(fan_in, fan_out, data).expect("shape matches data")
}

/// Solves `a x = b` for square `a` by Gaussian elimination with partial pivoting.
pub fn solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(Error::Dimension {
            op: "solve",
            left: a.shape(),
            right: (b.len(), 1),
        });
    }
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|r| {
            let mut row = a.row(r).to_vec();
            row.push(b[r]);
            row
        })
        .collect();
    let scale = a.data().iter().fold(0.0_f64, |acc, v| acc.max(v.abs())).max(1.0);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        if m[pivot][col].abs() <= 1e-12 * scale {
            return Err(Error::Singular(format!(
                "pivot {col} vanishes; the system is rank deficient"
            )));
        }
        m.swap(col, pivot);
        for r in col + 1..n {
            let factor = m[r][col] / m[col][col];
            if factor == 0.0 {
                continue;
            }
            let (upper, lower) = m.split_at_mut(r);
            for (x, p) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                *x -= factor * p;
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let tail: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (m[r][n] - tail) / m[r][r];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dropout_identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![-3.0, 4.0]]);
        assert_eq!(dropout(&m, 0.3, false, &mut rng).unwrap(), m);
        assert_eq!(dropout(&m, 0.0, true, &mut rng).unwrap(), m);
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let m = Matrix::filled(1, 100_000, 1.0);
        let out = dropout(&m, 0.5, true, &mut rng).unwrap();
        let mean = out.sum() / out.len() as f64;
        assert!((0.98..=1.02).contains(&mean), "mean {mean}");
    }

    #[test]
    fn dropout_rejects_bad_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = Matrix::zeros(1, 1);
        assert!(matches!(dropout(&m, 1.0, true, &mut rng), Err(Error::Config(_))));
        assert!(matches!(dropout(&m, -0.1, true, &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn solve_small_system() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]);
        let x = solve(&a, &[3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-12 && (x[1] - 1.4).abs() < 1e-12);
    }

    #[test]
    fn solve_singular() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(matches!(solve(&a, &[1.0, 2.0]), Err(Error::Singular(_))));
    }
}
