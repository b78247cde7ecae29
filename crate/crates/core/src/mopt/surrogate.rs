//! Per-outcome regression surrogates for the search loop: a Gaussian
//! process with a squared-exponential kernel, or a distance-weighted
//! nearest-neighbor regressor when no GP fit succeeds.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

const LENGTH_SCALES: [f64; 9] = [0.03, 0.05, 0.1, 0.18, 0.3, 0.5, 0.8, 1.4, 2.5];
const SIGNAL_VARIANCES: [f64; 4] = [0.25, 0.5, 1.0, 2.0];
const EXTRA_NOISE: [f64; 4] = [1e-6, 1e-4, 1e-2, 1e-1];
const KNN_NEIGHBORS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparameters {
    pub length_scale: f64,
    pub signal_variance: f64,
    /// Homoscedastic noise added on top of the per-point noise
    /// (standardized units).
    pub extra_noise: f64,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone)]
pub struct GaussianProcess {
    x: Vec<Vec<f64>>,
    y_mean: f64,
    y_scale: f64,
    alpha: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    pub hyper: GpHyperparameters,
}

#[derive(Debug, Clone)]
pub struct KnnRegressor {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    noise: f64,
    spread: f64,
}

#[derive(Debug, Clone)]
pub enum Surrogate {
    Gp(GaussianProcess),
    Knn(KnnRegressor),
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

fn mean_sd(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl Surrogate {
    /// Fits on inputs `x` (expected in the unit cube), targets `y` and
    /// per-point noise variances in target units.
    pub fn fit(x: &[Vec<f64>], y: &[f64], noise_var: &[f64]) -> Self {
        match GaussianProcess::fit(x, y, noise_var) {
            Some(gp) => {
                log::debug!("GP on {} points: {:?}", x.len(), gp.hyper);
                Surrogate::Gp(gp)
            }
            None => {
                log::warn!("GP fit failed on {} points; using nearest-neighbor surrogate", x.len());
                Surrogate::Knn(KnnRegressor::fit(x, y, noise_var))
            }
        }
    }

    /// Posterior mean and variance.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        match self {
            Surrogate::Gp(gp) => gp.predict(x),
            Surrogate::Knn(knn) => knn.predict(x),
        }
    }

    pub fn is_gp(&self) -> bool {
        matches!(self, Surrogate::Gp(_))
    }
}

impl GaussianProcess {
    /// Maximum marginal likelihood over the hyperparameter grid; `None`
    /// when no grid point yields a usable factorization.
    pub fn fit(x: &[Vec<f64>], y: &[f64], noise_var: &[f64]) -> Option<Self> {
        let n = x.len();
        if n == 0 || y.len() != n || noise_var.len() != n || y.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let (y_mean, sd) = mean_sd(y);
        let y_scale = if sd > 0.0 { sd } else { 1.0 };
        let ys = DVector::from_iterator(n, y.iter().map(|v| (v - y_mean) / y_scale));
        let noise: Vec<f64> = noise_var.iter().map(|v| v.max(0.0) / (y_scale * y_scale)).collect();
        let d2 = DMatrix::from_fn(n, n, |i, j| sq_dist(&x[i], &x[j]));

        let mut best: Option<(GpHyperparameters, Cholesky<f64, Dyn>, DVector<f64>)> = None;
        for &ls in &LENGTH_SCALES {
            for &sv in &SIGNAL_VARIANCES {
                for &extra in &EXTRA_NOISE {
                    let k = DMatrix::from_fn(n, n, |i, j| {
                        let base = sv * (-d2[(i, j)] / (2.0 * ls * ls)).exp();
                        if i == j { base + noise[i] + extra } else { base }
                    });
                    let Some(chol) = k.cholesky() else { continue };
                    let alpha = chol.solve(&ys);
                    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
                    let ll = -0.5 * ys.dot(&alpha)
                        - log_det
                        - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
                    if !ll.is_finite() {
                        continue;
                    }
                    if best.as_ref().is_none_or(|(h, _, _)| ll > h.log_likelihood) {
                        let hyper = GpHyperparameters {
                            length_scale: ls,
                            signal_variance: sv,
                            extra_noise: extra,
                            log_likelihood: ll,
                        };
                        best = Some((hyper, chol, alpha));
                    }
                }
            }
        }
        let (hyper, chol, alpha) = best?;
        Some(Self { x: x.to_vec(), y_mean, y_scale, alpha, chol, hyper })
    }

    fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let ls = self.hyper.length_scale;
        self.hyper.signal_variance * (-sq_dist(a, b) / (2.0 * ls * ls)).exp()
    }

    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let kstar = DVector::from_iterator(self.x.len(), self.x.iter().map(|xi| self.kernel(xi, x)));
        let mean = kstar.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&kstar)
            .unwrap_or_else(|| DVector::zeros(self.x.len()));
        let var = (self.hyper.signal_variance - v.dot(&v)).max(1e-12);
        (self.y_mean + self.y_scale * mean, var * self.y_scale * self.y_scale)
    }
}

impl KnnRegressor {
    pub fn fit(x: &[Vec<f64>], y: &[f64], noise_var: &[f64]) -> Self {
        let noise = if noise_var.is_empty() { 0.0 } else { noise_var.iter().sum::<f64>() / noise_var.len() as f64 };
        let spread = if y.is_empty() { 0.0 } else { mean_sd(y).1 };
        Self { x: x.to_vec(), y: y.to_vec(), noise, spread }
    }

    /// Inverse-distance weighted mean of the nearest points; the variance
    /// grows with the distance to the nearest one.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        if self.x.is_empty() {
            return (0.0, 1.0);
        }
        let mut dist: Vec<(f64, usize)> =
            self.x.iter().enumerate().map(|(i, xi)| (sq_dist(xi, x).sqrt(), i)).collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let near = &dist[..KNN_NEIGHBORS.min(dist.len())];
        if near[0].0 == 0.0 {
            return (self.y[near[0].1], self.noise.max(1e-12));
        }
        let weights: Vec<f64> = near.iter().map(|(d, _)| 1.0 / d).collect();
        let total: f64 = weights.iter().sum();
        let mean = near.iter().zip(&weights).map(|((_, i), w)| w * self.y[*i]).sum::<f64>() / total;
        let local = near.iter().zip(&weights).map(|((_, i), w)| w * (self.y[*i] - mean).powi(2)).sum::<f64>() / total;
        let var = local + self.noise + (near[0].0 * self.spread).powi(2);
        (mean, var.max(1e-12))
    }
}
