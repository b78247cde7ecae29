//! Ground-truth scenarios: synthetic randomized logs, Monte Carlo policy
//! values, and a simulated online environment with an affine
//! offline-to-online outcome shift.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Direction, LogDataset, OutcomeSpec, UnitRecord};
use crate::rng::{streams, unit_rng};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("run_online needs at least one candidate")]
    NoCandidates,
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Anything that maps covariates to a 1-based arm id.
pub trait Assigner: Sync {
    fn assign(&self, x: &[f64]) -> usize;
}

impl<F> Assigner for F
where
    F: Fn(&[f64]) -> usize + Sync,
{
    fn assign(&self, x: &[f64]) -> usize {
        self(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum CovariateLaw {
    Uniform { lo: f64, hi: f64 },
    Normal { mu: f64, sigma: f64 },
}

impl CovariateLaw {
    pub fn mean(&self) -> f64 {
        match *self {
            CovariateLaw::Uniform { lo, hi } => 0.5 * (lo + hi),
            CovariateLaw::Normal { mu, .. } => mu,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            CovariateLaw::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
            CovariateLaw::Normal { sigma, .. } => sigma * sigma,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            CovariateLaw::Uniform { lo, hi } if lo == hi => lo,
            CovariateLaw::Uniform { lo, hi } => Uniform::new(lo, hi).expect("lo < hi").sample(rng),
            CovariateLaw::Normal { mu, sigma } => {
                Normal::new(mu, sigma).expect("sigma >= 0").sample(rng)
            }
        }
    }
}

/// `intercept + linear·x + Σ coef·x_a·x_b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub intercept: f64,
    pub linear: Vec<f64>,
    #[serde(default)]
    pub interactions: Vec<Interaction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub a: usize,
    pub b: usize,
    pub coef: f64,
}

impl Surface {
    pub fn linear(intercept: f64, linear: Vec<f64>) -> Self {
        Self { intercept, linear, interactions: Vec::new() }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut v = self.intercept;
        for (c, xi) in self.linear.iter().zip(x) {
            v += c * xi;
        }
        for t in &self.interactions {
            v += t.coef * x[t.a] * x[t.b];
        }
        v
    }
}

/// Online outcome = gamma · offline outcome + delta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnlineShift {
    pub delta: f64,
    pub gamma: f64,
}

impl Default for OnlineShift {
    fn default() -> Self {
        Self { delta: 0.0, gamma: 1.0 }
    }
}

impl OnlineShift {
    pub fn apply(&self, y: f64) -> f64 {
        self.gamma * y + self.delta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub covariates: Vec<CovariateLaw>,
    /// `surfaces[i-1][j]` is the mean of outcome `j` under arm `i`.
    pub surfaces: Vec<Vec<Surface>>,
    pub noise_sd: Vec<f64>,
    pub online_shift: Vec<OnlineShift>,
    #[serde(default)]
    pub outcomes: Option<Vec<OutcomeSpec>>,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if self.n < 1 || self.m < 1 {
            return bad(format!("need n >= 1 and m >= 1, got n={} m={}", self.n, self.m));
        }
        if self.covariates.len() != self.d {
            return bad(format!("{} covariate laws for d = {}", self.covariates.len(), self.d));
        }
        for law in &self.covariates {
            match *law {
                CovariateLaw::Uniform { lo, hi } if !(lo <= hi) => {
                    return bad(format!("uniform({lo}, {hi}) has lo > hi"))
                }
                CovariateLaw::Normal { sigma, .. } if !(sigma >= 0.0) => {
                    return bad(format!("normal sigma {sigma} < 0"))
                }
                _ => {}
            }
        }
        if self.surfaces.len() != self.n || self.surfaces.iter().any(|r| r.len() != self.m) {
            return bad("surfaces must be n × m".into());
        }
        for s in self.surfaces.iter().flatten() {
            if s.linear.len() != self.d {
                return bad(format!("surface has {} coefficients for d = {}", s.linear.len(), self.d));
            }
            if s.interactions.iter().any(|t| t.a >= self.d || t.b >= self.d) {
                return bad("interaction index out of range".into());
            }
        }
        if self.noise_sd.len() != self.m || self.noise_sd.iter().any(|s| !(*s >= 0.0)) {
            return bad("noise_sd must have m entries, each >= 0".into());
        }
        if self.online_shift.len() != self.m || self.online_shift.iter().any(|s| !(s.gamma > 0.0)) {
            return bad("online_shift must have m entries with gamma > 0".into());
        }
        if let Some(o) = &self.outcomes {
            if o.len() != self.m {
                return bad("outcomes must have m entries".into());
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: ScenarioSpec = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn outcome_specs(&self) -> Vec<OutcomeSpec> {
        self.outcomes.clone().unwrap_or_else(|| OutcomeSpec::default_specs(self.m))
    }

    pub fn directions(&self) -> Vec<Direction> {
        self.outcome_specs().iter().map(|o| o.direction).collect()
    }

    /// Noiseless mean outcome `j` of arm `arm` (1-based) at `x`.
    pub fn mean_outcome(&self, arm: usize, outcome: usize, x: &[f64]) -> f64 {
        self.surfaces[arm - 1][outcome].eval(x)
    }

    /// True CATE of `arm` vs control on outcome `outcome`.
    pub fn true_cate(&self, arm: usize, outcome: usize, x: &[f64]) -> f64 {
        self.mean_outcome(arm, outcome, x) - self.mean_outcome(1, outcome, x)
    }

    /// Population ATE from the surfaces (exact for independent covariates).
    pub fn true_ate(&self, arm: usize, outcome: usize) -> f64 {
        let a = &self.surfaces[arm - 1][outcome];
        let c = &self.surfaces[0][outcome];
        self.surface_expectation(a) - self.surface_expectation(c)
    }

    fn surface_expectation(&self, s: &Surface) -> f64 {
        let mean: Vec<f64> = self.covariates.iter().map(CovariateLaw::mean).collect();
        let mut v = s.eval(&mean);
        for t in &s.interactions {
            if t.a == t.b {
                v += t.coef * self.covariates[t.a].variance();
            }
        }
        v
    }

    pub fn sample_covariates(&self, seed: u64, stream: u64, index: u64) -> Vec<f64> {
        let mut rng = unit_rng(seed, stream, index);
        self.covariates.iter().map(|law| law.sample(&mut rng)).collect()
    }

    pub(crate) fn noisy_outcomes(&self, arm: usize, x: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.m)
            .map(|j| {
                let mu = self.mean_outcome(arm, j, x);
                let sd = self.noise_sd[j];
                if sd > 0.0 {
                    mu + sd * rng.sample::<f64, _>(rand_distr::StandardNormal)
                } else {
                    mu
                }
            })
            .collect()
    }

    /// Two-arm, two-outcome benchmark. The treatment effect on the first
    /// outcome is `0.2 + x_0 + 0.3·x_0·x_2` (positive on average, negative
    /// for a large minority); the effect on the second is a flat `-0.3`
    /// measured with more noise. Both outcomes are maximized.
    pub fn benchmark() -> Self {
        let cov = CovariateLaw::Uniform { lo: -1.0, hi: 1.0 };
        let control = vec![
            Surface::linear(1.0, vec![0.5, 0.3, 0.0]),
            Surface::linear(1.0, vec![0.2, 0.5, 0.0]),
        ];
        let treated = vec![
            Surface {
                intercept: 1.2,
                linear: vec![1.5, 0.3, 0.0],
                interactions: vec![Interaction { a: 0, b: 2, coef: 0.3 }],
            },
            Surface::linear(0.7, vec![0.2, 0.5, 0.0]),
        ];
        ScenarioSpec {
            n: 2,
            m: 2,
            d: 3,
            covariates: vec![cov; 3],
            surfaces: vec![control, treated],
            noise_sd: vec![1.0, 2.5],
            online_shift: vec![OnlineShift::default(); 2],
            outcomes: Some(vec![
                OutcomeSpec::new("engagement", Direction::Maximize),
                OutcomeSpec::new("retention", Direction::Maximize),
            ]),
            seed: 0,
        }
    }
}

/// Randomized log: arm uniform over `[1, n]`, propensity `1/n`.
pub fn generate_log(scenario: &ScenarioSpec, count: usize, seed: u64) -> LogDataset {
    let n = scenario.n;
    let propensity = 1.0 / n as f64;
    let records = (0..count as u64)
        .map(|k| {
            let x = scenario.sample_covariates(seed, streams::COVARIATES, k);
            let arm = unit_rng(seed, streams::ASSIGNMENT, k).random_range(1..=n);
            let mut noise = unit_rng(seed, streams::NOISE, k);
            let outcomes = scenario.noisy_outcomes(arm, &x, &mut noise);
            UnitRecord { unit_id: format!("u{k}"), covariates: x, arm, propensity, outcomes }
        })
        .collect();
    LogDataset {
        records,
        n,
        m: scenario.m,
        d: scenario.d,
        outcome_specs: scenario.outcome_specs(),
    }
}

/// Monte Carlo mean of the noiseless outcome surfaces under a policy.
pub fn oracle_policy_value(
    scenario: &ScenarioSpec,
    policy: &dyn Assigner,
    samples: usize,
    seed: u64,
) -> Vec<f64> {
    oracle_policy_value_with_stderr(scenario, policy, samples, seed).0
}

/// Same as [`oracle_policy_value`], plus the Monte Carlo standard error.
pub fn oracle_policy_value_with_stderr(
    scenario: &ScenarioSpec,
    policy: &dyn Assigner,
    samples: usize,
    seed: u64,
) -> (Vec<f64>, Vec<f64>) {
    assert!(samples >= 1, "oracle needs at least one sample");
    let m = scenario.m;
    let mut sum = vec![0.0; m];
    let mut sq = vec![0.0; m];
    for k in 0..samples as u64 {
        let x = scenario.sample_covariates(seed, streams::ORACLE, k);
        let arm = policy.assign(&x);
        for j in 0..m {
            let v = scenario.mean_outcome(arm, j, &x);
            sum[j] += v;
            sq[j] += v * v;
        }
    }
    let nf = samples as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    let se = (0..m)
        .map(|j| {
            if samples < 2 {
                return 0.0;
            }
            let var = (sq[j] - nf * mean[j] * mean[j]).max(0.0) / (nf - 1.0);
            (var / nf).sqrt()
        })
        .collect();
    (mean, se)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineRunResult {
    /// `means[c][j]`: measured mean of outcome `j` among units routed to candidate `c`.
    pub means: Vec<Vec<f64>>,
    pub stderrs: Vec<Vec<f64>>,
    pub counts: Vec<usize>,
    /// Online records; propensity is the probability of the logged arm
    /// under the uniform candidate mixture at that unit's covariates.
    pub log: LogDataset,
}

/// Routes `count` fresh units uniformly over the candidates and measures
/// shifted online outcomes.
pub fn run_online(
    scenario: &ScenarioSpec,
    candidates: &[&dyn Assigner],
    count: usize,
    seed: u64,
) -> Result<OnlineRunResult, ScenarioError> {
    run_online_prefixed(scenario, candidates, count, seed, "o")
}

pub(crate) fn run_online_prefixed(
    scenario: &ScenarioSpec,
    candidates: &[&dyn Assigner],
    count: usize,
    seed: u64,
    id_prefix: &str,
) -> Result<OnlineRunResult, ScenarioError> {
    if candidates.is_empty() {
        return Err(ScenarioError::NoCandidates);
    }
    let k = candidates.len();
    let m = scenario.m;
    let mut sum = vec![vec![0.0; m]; k];
    let mut sq = vec![vec![0.0; m]; k];
    let mut counts = vec![0usize; k];
    let mut records = Vec::with_capacity(count);
    for u in 0..count as u64 {
        let x = scenario.sample_covariates(seed, streams::COVARIATES, u);
        let c = unit_rng(seed, streams::ONLINE, u).random_range(0..k);
        let arm = candidates[c].assign(&x);
        let mut noise = unit_rng(seed, streams::NOISE, u);
        let offline = scenario.noisy_outcomes(arm, &x, &mut noise);
        let online: Vec<f64> =
            offline.iter().zip(&scenario.online_shift).map(|(y, s)| s.apply(*y)).collect();
        counts[c] += 1;
        for j in 0..m {
            sum[c][j] += online[j];
            sq[c][j] += online[j] * online[j];
        }
        let agreeing = if k == 1 {
            1
        } else {
            candidates.iter().filter(|cand| cand.assign(&x) == arm).count()
        };
        records.push(UnitRecord {
            unit_id: format!("{id_prefix}{u}"),
            covariates: x,
            arm,
            propensity: agreeing as f64 / k as f64,
            outcomes: online,
        });
    }
    let mut means = vec![vec![f64::NAN; m]; k];
    let mut stderrs = vec![vec![f64::NAN; m]; k];
    for c in 0..k {
        let nc = counts[c] as f64;
        if counts[c] == 0 {
            continue;
        }
        for j in 0..m {
            let mean = sum[c][j] / nc;
            means[c][j] = mean;
            stderrs[c][j] = if counts[c] > 1 {
                ((sq[c][j] - nc * mean * mean).max(0.0) / (nc - 1.0) / nc).sqrt()
            } else {
                0.0
            };
        }
    }
    Ok(OnlineRunResult {
        means,
        stderrs,
        counts,
        log: LogDataset {
            records,
            n: scenario.n,
            m,
            d: scenario.d,
            outcome_specs: scenario.outcome_specs(),
        },
    })
}
