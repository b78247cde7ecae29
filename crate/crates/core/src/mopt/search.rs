//! Candidate proposal shared by the offline and online loops: random
//! simplex weights, one surrogate per outcome, expected improvement of the
//! scalarized surrogate, multi-start compass search in the unit cube.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::scalarize::{normalization_ranges, scalarize_unchecked};
use super::surrogate::Surrogate;
use super::MoptError;
use crate::rng::{derive_seed, stream_rng, streams, unit_rng};

const WEIGHT_SALT: u64 = 0x5743;

const EI_SAMPLES: usize = 256;
const RANDOM_STARTS: usize = 64;
const LOCAL_STARTS: usize = 8;
const INITIAL_STEP: f64 = 0.1;
const MIN_STEP: f64 = 1e-3;
const MAX_MOVES: usize = 80;

/// Box over the canonical free parameters `(w_2..w_m, b_2..b_n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SearchBounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, MoptError> {
        if lo.len() != hi.len() {
            return Err(MoptError::Dimension(format!("{} lower vs {} upper bounds", lo.len(), hi.len())));
        }
        if let Some(k) = (0..lo.len()).find(|&k| !(lo[k] <= hi[k]) || !lo[k].is_finite() || !hi[k].is_finite()) {
            return Err(MoptError::Invalid(format!("bound {k}: [{}, {}]", lo[k], hi[k])));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(self.lo.iter().zip(&self.hi)).map(|(t, (l, h))| l + t * (h - l)).collect()
    }

    /// Inverse of [`Self::from_unit`], clamped to the cube; fixed
    /// coordinates map to 0.5.
    pub fn to_unit(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (l, h))| if h > l { ((v - l) / (h - l)).clamp(0.0, 1.0) } else { 0.5 })
            .collect()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim() && p.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| l <= v && v <= h)
    }

    pub(crate) fn free_dims(&self) -> Vec<bool> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h > l).collect()
    }
}

/// An evaluated point in unit-cube coordinates.
#[derive(Debug, Clone)]
pub(crate) struct Observation {
    pub u: Vec<f64>,
    pub objectives: Vec<f64>,
    /// Per-objective noise variance.
    pub noise: Vec<f64>,
}

/// Shifted Halton design in the unit cube.
pub(crate) fn halton_design(count: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    const PRIMES: [u64; 24] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89];
    assert!(dim <= PRIMES.len(), "Halton design supports at most {} dimensions", PRIMES.len());
    let mut rng = unit_rng(seed, streams::SEARCH, 0);
    let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    (1..=count as u64)
        .map(|k| {
            (0..dim)
                .map(|j| {
                    let v = radical_inverse(k, PRIMES[j]) + shift[j];
                    v - v.floor()
                })
                .collect()
        })
        .collect()
}

/// Simplex weights for one iteration: a randomly shifted Halton point
/// pushed through the exponential map, so successive iterations spread
/// over the simplex like stratified Dirichlet(1) draws.
pub(crate) fn scalarization_weights(m: usize, seed: u64, iteration: u64) -> Vec<f64> {
    const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
    if m == 2 {
        let mut rng = stream_rng(derive_seed(seed, WEIGHT_SALT), streams::SEARCH);
        let shift: f64 = rng.random();
        let u = (shift + iteration as f64 * 0.618_033_988_749_894_9).fract();
        return vec![u, 1.0 - u];
    }
    let mut rng = stream_rng(derive_seed(seed, WEIGHT_SALT), streams::SEARCH);
    let raw: Vec<f64> = (0..m)
        .map(|j| {
            let shift: f64 = rng.random();
            let base = PRIMES[j % PRIMES.len()];
            let v = (radical_inverse(iteration + 1, base) + shift).fract();
            -v.max(f64::MIN_POSITIVE).ln()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while k > 0 {
        out += (k % base) as f64 * inv;
        k /= base;
        inv /= base as f64;
    }
    out
}

struct Acquisition {
    surrogates: Vec<Surrogate>,
    weights: Vec<f64>,
    ranges: Vec<(f64, f64)>,
    rho: f64,
    draws: Vec<Vec<f64>>,
    best: f64,
}

impl Acquisition {
    fn posterior(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        self.surrogates.iter().map(|s| {
            let (m, v) = s.predict(u);
            (m, v.sqrt())
        }).unzip()
    }

    fn expected_improvement(&self, u: &[f64]) -> f64 {
        let (mean, sd) = self.posterior(u);
        let mut f = vec![0.0; mean.len()];
        let mut total = 0.0;
        for z in &self.draws {
            for j in 0..f.len() {
                f[j] = mean[j] + sd[j] * z[j];
            }
            total += (self.best - scalarize_unchecked(&f, &self.weights, self.rho, &self.ranges)).max(0.0);
        }
        total / self.draws.len() as f64
    }

    /// Scalarized optimistic posterior (mean plus one sd), negated so
    /// that larger is better like the expected improvement.
    fn optimism(&self, u: &[f64]) -> f64 {
        let (mean, sd) = self.posterior(u);
        let f: Vec<f64> = mean.iter().zip(&sd).map(|(m, s)| m + s).collect();
        -scalarize_unchecked(&f, &self.weights, self.rho, &self.ranges)
    }
}

/// Next point to evaluate, in unit-cube coordinates. `all_objectives`
/// (every successful evaluation) sets the normalization ranges; `train`
/// feeds the surrogates.
pub(crate) fn propose(
    train: &[Observation],
    all_objectives: &[Vec<f64>],
    free: &[bool],
    rho: f64,
    seed: u64,
    iteration: u64,
) -> Vec<f64> {
    let mut rng = unit_rng(seed, streams::SEARCH, iteration);
    let random_point = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        free.iter().map(|&f| if f { rng.random::<f64>() } else { 0.5 }).collect()
    };
    let m = all_objectives.first().map_or(0, Vec::len);
    if train.len() < 2 || m == 0 {
        return random_point(&mut rng);
    }
    let weights = scalarization_weights(m, seed, iteration);
    let draws: Vec<Vec<f64>> =
        (0..EI_SAMPLES).map(|_| (0..m).map(|_| rng.sample(StandardNormal)).collect()).collect();
    let xs: Vec<Vec<f64>> = train.iter().map(|o| o.u.clone()).collect();
    let surrogates: Vec<Surrogate> = (0..m)
        .map(|j| {
            let y: Vec<f64> = train.iter().map(|o| o.objectives[j]).collect();
            let noise: Vec<f64> = train.iter().map(|o| o.noise[j]).collect();
            Surrogate::fit(&xs, &y, &noise)
        })
        .collect();
    let ranges = normalization_ranges(all_objectives);
    let mut acq = Acquisition { surrogates, weights, ranges, rho, draws, best: f64::INFINITY };
    let mut ranked_train: Vec<(f64, usize)> = xs
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let (mean, _) = acq.posterior(u);
            (scalarize_unchecked(&mean, &acq.weights, rho, &acq.ranges), i)
        })
        .collect();
    ranked_train.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    acq.best = ranked_train[0].0;

    let mut starts: Vec<Vec<f64>> = (0..RANDOM_STARTS).map(|_| random_point(&mut rng)).collect();
    starts.extend(ranked_train.iter().take(3).map(|(_, i)| xs[*i].clone()));

    let ei = |u: &[f64]| acq.expected_improvement(u);
    let (point, value) = maximize(&starts, free, &ei);
    let chosen = if value > 1e-12 {
        point
    } else {
        let opt = |u: &[f64]| acq.optimism(u);
        maximize(&starts, free, &opt).0
    };
    if xs.iter().any(|u| u.iter().zip(&chosen).all(|(a, b)| (a - b).abs() < 1e-9)) {
        return random_point(&mut rng);
    }
    chosen
}

/// Multi-start compass search; returns the best point and its value.
fn maximize(starts: &[Vec<f64>], free: &[bool], f: &dyn Fn(&[f64]) -> f64) -> (Vec<f64>, f64) {
    let mut scored: Vec<(f64, usize)> = starts.iter().enumerate().map(|(i, s)| (f(s), i)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut best: (Vec<f64>, f64) = (starts[scored[0].1].clone(), scored[0].0);
    for &(value, i) in scored.iter().take(LOCAL_STARTS) {
        let (p, v) = compass(starts[i].clone(), value, free, f);
        if v > best.1 {
            best = (p, v);
        }
    }
    best
}

fn compass(mut x: Vec<f64>, mut fx: f64, free: &[bool], f: &dyn Fn(&[f64]) -> f64) -> (Vec<f64>, f64) {
    let mut step = INITIAL_STEP;
    let mut moves = 0;
    while step >= MIN_STEP && moves < MAX_MOVES {
        let mut improved = false;
        'dirs: for k in (0..x.len()).filter(|&k| free[k]) {
            for sign in [1.0, -1.0] {
                let mut y = x.clone();
                y[k] = (y[k] + sign * step).clamp(0.0, 1.0);
                if y[k] == x[k] {
                    continue;
                }
                let fy = f(&y);
                if fy > fx {
                    x = y;
                    fx = fy;
                    improved = true;
                    break 'dirs;
                }
            }
        }
        if improved {
            moves += 1;
        } else {
            step *= 0.5;
        }
    }
    (x, fx)
}
