//! Linear-utility decision policies.
//!
//! A policy scores every arm with `u_i = b_i + Σ_j w_j tau_ij(x)` and picks
//! the highest score, ties going to the lowest arm id. The regularized form
//! interpolates each outcome's CATE toward its ATE with `alpha_j` and maps
//! onto (weights, biases); [`representable_as_regularized`] answers the
//! reverse question with a conical-hull membership test.

mod nnls;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use nnls::nnls;

use crate::data::{AteMatrix, Direction};

/// Default relative tolerance for the cone-membership residual.
pub const DEFAULT_CONE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("not canonicalizable: first weight is zero")]
    ZeroLeadWeight,
    #[error("first weight sign does not match the first outcome's direction")]
    SignMismatch,
    #[error("alpha {0} outside [0, 1]")]
    BadAlpha(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl PolicyParams {
    pub fn new(weights: Vec<f64>, biases: Vec<f64>) -> Self {
        Self { weights, biases }
    }

    pub fn n(&self) -> usize {
        self.biases.len()
    }

    pub fn m(&self) -> usize {
        self.weights.len()
    }

    /// Canonical policy from its free entries `(w_2..w_m, b_2..b_n)`.
    pub fn from_free(free: &[f64], lead: Direction, n: usize, m: usize) -> Self {
        assert_eq!(free.len(), n + m - 2, "expected n + m - 2 free parameters");
        let mut weights = vec![lead.sign()];
        weights.extend_from_slice(&free[..m - 1]);
        let mut biases = vec![0.0];
        biases.extend_from_slice(&free[m - 1..]);
        Self { weights, biases }
    }

    /// `(w_2..w_m, b_2..b_n)`; meaningful for canonical params.
    pub fn free_parameters(&self) -> Vec<f64> {
        self.weights[1..].iter().chain(&self.biases[1..]).copied().collect()
    }

    pub fn is_canonical(&self, lead: Direction) -> bool {
        self.weights.first() == Some(&lead.sign()) && self.biases.first() == Some(&0.0)
    }

    /// Arm-`arm` always wins (1-based); weights other than the lead are zero.
    pub fn single_arm(arm: usize, n: usize, m: usize, lead: Direction, magnitude: f64) -> Self {
        let mut weights = vec![0.0; m];
        weights[0] = lead.sign();
        let biases = (1..=n)
            .map(|i| match (i, arm) {
                (1, _) => 0.0,
                (_, 1) => -magnitude,
                (i, a) if i == a => magnitude,
                _ => 0.0,
            })
            .collect();
        Self { weights, biases }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("params serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    fn check(&self, tau: &DMatrix<f64>) -> Result<(), PolicyError> {
        if tau.nrows() != self.n() || tau.ncols() != self.m() {
            return Err(PolicyError::Dimension(format!(
                "tau is {}×{}, params expect {}×{}",
                tau.nrows(),
                tau.ncols(),
                self.n(),
                self.m()
            )));
        }
        Ok(())
    }
}

/// Weight/shrinkage form: `u_i = Σ_j w_j [alpha_j ATE_ij + (1 - alpha_j) tau_ij]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizedParams {
    pub weights: Vec<f64>,
    pub alphas: Vec<f64>,
}

impl RegularizedParams {
    pub fn utility(&self, ate: &AteMatrix, tau: &DMatrix<f64>) -> Vec<f64> {
        (0..tau.nrows())
            .map(|i| {
                (0..tau.ncols())
                    .map(|j| {
                        let a = self.alphas[j];
                        self.weights[j] * (a * ate.matrix()[(i, j)] + (1.0 - a) * tau[(i, j)])
                    })
                    .sum()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentabilityResult {
    pub representable: bool,
    /// Conical coefficients `x_j >= 0`, one per outcome.
    pub coefficients: Vec<f64>,
    pub recovered: Option<RegularizedParams>,
    pub residual: f64,
}

pub fn utility(params: &PolicyParams, tau: &DMatrix<f64>) -> Result<Vec<f64>, PolicyError> {
    params.check(tau)?;
    Ok((0..params.n())
        .map(|i| {
            params.biases[i]
                + params.weights.iter().enumerate().map(|(j, w)| w * tau[(i, j)]).sum::<f64>()
        })
        .collect())
}

/// Index (1-based) of the largest score, lowest id on ties.
pub fn argmax_arm(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &u) in scores.iter().enumerate().skip(1) {
        if u > scores[best] {
            best = i;
        }
    }
    best + 1
}

pub fn decide(params: &PolicyParams, tau: &DMatrix<f64>) -> Result<usize, PolicyError> {
    Ok(argmax_arm(&utility(params, tau)?))
}

/// Scales by `1/|w_1|` and shifts biases so `b_1 = 0`; decisions are unchanged.
pub fn canonicalize(params: &PolicyParams, directions: &[Direction]) -> Result<PolicyParams, PolicyError> {
    let lead = *params.weights.first().ok_or(PolicyError::Dimension("no weights".into()))?;
    let dir = *directions.first().ok_or(PolicyError::Dimension("no directions".into()))?;
    if params.biases.is_empty() {
        return Err(PolicyError::Dimension("no biases".into()));
    }
    if lead == 0.0 {
        return Err(PolicyError::ZeroLeadWeight);
    }
    if lead.signum() != dir.sign() {
        return Err(PolicyError::SignMismatch);
    }
    let scale = lead.abs();
    let shift = params.biases[0] / scale;
    let mut weights: Vec<f64> = params.weights.iter().map(|w| w / scale).collect();
    weights[0] = dir.sign();
    let mut biases: Vec<f64> = params.biases.iter().map(|b| b / scale - shift).collect();
    biases[0] = 0.0;
    Ok(PolicyParams { weights, biases })
}

/// `w'_j = w_j (1 - alpha_j)`, `b'_i = Σ_j w_j alpha_j ATE_ij`.
pub fn from_regularized(reg: &RegularizedParams, ate: &AteMatrix) -> Result<PolicyParams, PolicyError> {
    if reg.weights.len() != ate.m() || reg.alphas.len() != ate.m() {
        return Err(PolicyError::Dimension(format!(
            "{} weights / {} alphas for m = {}",
            reg.weights.len(),
            reg.alphas.len(),
            ate.m()
        )));
    }
    if let Some(&a) = reg.alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(PolicyError::BadAlpha(a));
    }
    let weights = reg.weights.iter().zip(&reg.alphas).map(|(w, a)| w * (1.0 - a)).collect();
    let biases = (1..=ate.n())
        .map(|i| (0..ate.m()).map(|j| reg.weights[j] * reg.alphas[j] * ate.get(i, j)).sum())
        .collect();
    Ok(PolicyParams { weights, biases })
}

/// Is `b'` a nonnegative combination of the ATE columns signed by `w'`?
///
/// Columns with `w'_j = 0` are left out. When representable the recovered
/// shrinkage is `alpha_j = x_j / (|w'_j| + x_j)` and `w_j = w'_j / (1 - alpha_j)`.
pub fn representable_as_regularized(
    params: &PolicyParams,
    ate: &AteMatrix,
    tolerance: f64,
) -> Result<RepresentabilityResult, PolicyError> {
    let (n, m) = (ate.n(), ate.m());
    if params.n() != n || params.m() != m {
        return Err(PolicyError::Dimension(format!(
            "params are {}×{}, ATE is {n}×{m}",
            params.n(),
            params.m()
        )));
    }
    let active: Vec<usize> = (0..m).filter(|&j| params.weights[j] != 0.0).collect();
    let a = DMatrix::from_fn(n, active.len(), |i, k| {
        let j = active[k];
        params.weights[j].signum() * ate.matrix()[(i, j)]
    });
    let b = DVector::from_column_slice(&params.biases);
    let (x_active, residual) = nnls(&a, &b);
    let mut coefficients = vec![0.0; m];
    for (k, &j) in active.iter().enumerate() {
        coefficients[j] = x_active[k];
    }
    let b_norm = b.norm();
    let threshold = if b_norm > 0.0 { tolerance * b_norm } else { tolerance };
    let representable = residual <= threshold;
    let recovered = representable.then(|| {
        let alphas: Vec<f64> = (0..m)
            .map(|j| {
                let w = params.weights[j].abs();
                if coefficients[j] > 0.0 {
                    coefficients[j] / (w + coefficients[j])
                } else {
                    0.0
                }
            })
            .collect();
        let weights = (0..m).map(|j| params.weights[j] / (1.0 - alphas[j])).collect();
        RegularizedParams { weights, alphas }
    });
    Ok(RepresentabilityResult { representable, coefficients, recovered, residual })
}
