use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::HteError;

/// Relative eigenvalue floor below which an unpenalized design is treated
/// as rank deficient.
const RANK_TOL: f64 = 1e-12;

/// Penalized least squares with an unpenalized intercept.
/// Returns `(intercept, coefficients)`.
pub fn fit_ridge(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<(f64, Vec<f64>), HteError> {
    let n = y.len();
    let d = x.first().map_or(0, Vec::len);
    let nf = n as f64;
    let y_mean = y.iter().sum::<f64>() / nf;
    if d == 0 {
        return Ok((y_mean, Vec::new()));
    }
    let mut x_mean = vec![0.0; d];
    for row in x {
        for (m, v) in x_mean.iter_mut().zip(row) {
            *m += v / nf;
        }
    }
    // Centering removes the intercept from the penalized system.
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    let mut centered = vec![0.0; d];
    for (row, &yi) in x.iter().zip(y) {
        for k in 0..d {
            centered[k] = row[k] - x_mean[k];
        }
        let yc = yi - y_mean;
        for a in 0..d {
            rhs[a] += centered[a] * yc;
            for b in a..d {
                gram[(a, b)] += centered[a] * centered[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    if lambda == 0.0 {
        let eig = SymmetricEigen::new(gram.clone());
        let max = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, v| a.min(*v));
        if n <= d || max == 0.0 || min <= RANK_TOL * max {
            return Err(HteError::RankDeficient);
        }
    }
    for a in 0..d {
        gram[(a, a)] += lambda;
    }
    let beta = gram
        .cholesky()
        .ok_or(HteError::RankDeficient)?
        .solve(&rhs);
    let intercept = y_mean - beta.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>();
    Ok((intercept, beta.iter().copied().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Normal equations on the augmented design [1 | X], solved with LU.
    fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let n = y.len();
        let d = x[0].len() + 1;
        let a = DMatrix::from_fn(n, d, |i, k| if k == 0 { 1.0 } else { x[i][k - 1] });
        let ata = a.transpose() * &a;
        let aty = a.transpose() * DVector::from_column_slice(y);
        ata.lu().solve(&aty).unwrap().iter().copied().collect()
    }

    #[test]
    fn recovers_noiseless_linear_coefficients() {
        let x: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let t = i as f64;
                vec![(t * 0.37).sin(), (t * 0.11).cos() * 2.0, t / 40.0]
            })
            .collect();
        let y: Vec<f64> = x.iter().map(|r| 0.7 - 1.2 * r[0] + 0.4 * r[1] + 3.0 * r[2]).collect();
        let (b0, b) = fit_ridge(&x, &y, 0.0).unwrap();
        let oracle = normal_equations(&x, &y);
        assert!((b0 - oracle[0]).abs() < 1e-8);
        for k in 0..3 {
            assert!((b[k] - oracle[k + 1]).abs() < 1e-8);
        }
        assert!((b0 - 0.7).abs() < 1e-8 && (b[2] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn rank_deficient_unpenalized_fails() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(matches!(fit_ridge(&x, &y, 0.0), Err(HteError::RankDeficient)));
        assert!(fit_ridge(&x, &y, 1.0).is_ok());
    }

    #[test]
    fn huge_penalty_shrinks_to_mean() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 20.0]).collect();
        let y: Vec<f64> = (0..20).map(|i| 1.0 + i as f64).collect();
        let (b0, b) = fit_ridge(&x, &y, 1e9).unwrap();
        assert!(b[0].abs() < 1e-6);
        assert!((b0 - 10.5).abs() < 1e-5);
    }
}
