//! Lawson–Hanson active-set nonnegative least squares.

use nalgebra::{DMatrix, DVector};

/// Solves `min ||A x - b||` subject to `x >= 0`.
/// Returns the solution and the residual norm.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, f64) {
    let (rows, cols) = a.shape();
    assert_eq!(rows, b.len(), "nnls: A has {rows} rows but b has {}", b.len());
    let mut x = DVector::<f64>::zeros(cols);
    if cols == 0 {
        return (x, b.norm());
    }
    let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs())) * b.norm().max(1.0);
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE) * (rows.max(cols) as f64);
    let mut passive = vec![false; cols];
    let max_outer = 3 * cols + 10;

    for _ in 0..max_outer {
        let grad = a.transpose() * (b - a * &x);
        let candidate = (0..cols)
            .filter(|&j| !passive[j])
            .max_by(|&p, &q| grad[p].total_cmp(&grad[q]).then(q.cmp(&p)));
        let Some(t) = candidate else { break };
        if grad[t] <= tol {
            break;
        }
        passive[t] = true;

        for _ in 0..max_outer {
            let z = passive_solve(a, b, &passive);
            let infeasible: Vec<usize> = (0..cols).filter(|&j| passive[j] && z[j] <= 0.0).collect();
            if infeasible.is_empty() {
                x = z;
                break;
            }
            let step = infeasible
                .iter()
                .map(|&j| x[j] / (x[j] - z[j]))
                .fold(f64::INFINITY, f64::min);
            x += (z - &x) * step;
            for j in 0..cols {
                if passive[j] && x[j] <= tol {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
    }
    let residual = (a * &x - b).norm();
    (x, residual)
}

/// Unconstrained least squares on the passive columns, zero elsewhere.
fn passive_solve(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[bool]) -> DVector<f64> {
    let idx: Vec<usize> = (0..passive.len()).filter(|&j| passive[j]).collect();
    let sub = a.select_columns(&idx);
    let svd = sub.svd(true, true);
    let sol = svd.solve(b, 1e-14).expect("svd computed with u and v");
    let mut z = DVector::zeros(passive.len());
    for (k, &j) in idx.iter().enumerate() {
        z[j] = sol[k];
    }
    z
}
