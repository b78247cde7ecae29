use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::search::{halton_design, propose, Observation, SearchBounds};
use super::{FrontSet, MoptError, ParetoPoint};
use crate::data::{AteMatrix, LogDataset};
use crate::hte::CateModel;
use crate::ope::{estimate, Estimator, OpeOptions, PolicyValueEstimate, PredictionTable};
use crate::policy::PolicyParams;

pub const DEFAULT_WEIGHT_BOUND: f64 = 5.0;
pub const BIAS_BOUND_FACTOR: f64 = 3.0;
/// Bias magnitude of the forced single-arm policies.
pub const SINGLE_ARM_MAGNITUDE: f64 = 1e6;
pub const DEFAULT_RHO: f64 = 0.05;

impl SearchBounds {
    /// Weights in `[-5, 5]`, biases in `[-B, B]` with `B = 3·max|ATE|`.
    pub fn default_for(ate: &AteMatrix) -> Self {
        let (n, m) = (ate.n(), ate.m());
        let b = BIAS_BOUND_FACTOR * ate.max_abs();
        let b = if b > 0.0 { b } else { 1.0 };
        let mut lo = vec![-DEFAULT_WEIGHT_BOUND; m - 1];
        lo.extend(std::iter::repeat_n(-b, n - 1));
        let hi = lo.iter().map(|v| -v).collect();
        Self { lo, hi }
    }

    /// Same weight box with every bias pinned to zero.
    pub fn weights_only(ate: &AteMatrix) -> Self {
        let mut b = Self::default_for(ate);
        for k in ate.m() - 1..b.dim() {
            b.lo[k] = 0.0;
            b.hi[k] = 0.0;
        }
        b
    }

    pub fn biases_fixed(&self, m: usize) -> bool {
        (m - 1..self.dim()).all(|k| self.lo[k] == 0.0 && self.hi[k] == 0.0)
    }
}

pub fn minimum_budget(n: usize, m: usize) -> usize {
    2 * (n + m - 2) + 2
}

/// Quasi-random points evaluated before any proposal: `11·d - 1` for `d`
/// free parameters. Budgets below this evaluate a prefix of the design.
pub fn initial_design_size(free: &[bool]) -> usize {
    let d = free.iter().filter(|f| **f).count();
    (11 * d).saturating_sub(1).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfflineOptions {
    pub estimator: Estimator,
    pub ope: OpeOptions,
    pub rho: f64,
    /// Evaluate the pure single-arm policies before searching. Ignored
    /// when the bounds pin every bias to zero.
    pub include_single_arm: bool,
}

impl Default for OfflineOptions {
    fn default() -> Self {
        Self { estimator: Estimator::Dr, ope: OpeOptions::default(), rho: DEFAULT_RHO, include_single_arm: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluationKind {
    SingleArm,
    Initial,
    Proposed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub iteration: usize,
    pub kind: EvaluationKind,
    pub params: PolicyParams,
    pub objectives: Option<Vec<f64>>,
    pub estimate: Option<PolicyValueEstimate>,
    pub error: Option<String>,
}

impl Evaluation {
    pub fn point(&self) -> Option<ParetoPoint> {
        Some(ParetoPoint {
            params: self.params.clone(),
            objectives: self.objectives.clone()?,
            stderr: self.estimate.as_ref().map(|e| e.stderrs()).unwrap_or_default(),
            estimate: self.estimate.clone(),
            iteration: self.iteration,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineRun {
    pub front: FrontSet,
    pub evaluations: Vec<Evaluation>,
    pub bounds: SearchBounds,
}

impl OfflineRun {
    pub fn points(&self) -> Vec<ParetoPoint> {
        self.evaluations.iter().filter_map(Evaluation::point).collect()
    }

    pub fn failures(&self) -> usize {
        self.evaluations.iter().filter(|e| e.error.is_some()).count()
    }
}

struct Evaluator<'a> {
    log: &'a LogDataset,
    table: &'a PredictionTable,
    signs: Vec<f64>,
    opts: OfflineOptions,
}

impl Evaluator<'_> {
    fn run(&self, params: PolicyParams, iteration: usize, kind: EvaluationKind) -> Evaluation {
        let result = self
            .table
            .assignments(&params)
            .and_then(|a| estimate(self.opts.estimator, self.log, &a, Some(self.table), &self.opts.ope));
        match result {
            Ok(est) => {
                let objectives: Vec<f64> = est.values().iter().zip(&self.signs).map(|(v, s)| v * s).collect();
                if objectives.iter().all(|v| v.is_finite()) {
                    Evaluation { iteration, kind, params, objectives: Some(objectives), estimate: Some(est), error: None }
                } else {
                    Evaluation { iteration, kind, params, objectives: None, estimate: Some(est), error: Some("non-finite estimate".into()) }
                }
            }
            Err(e) => {
                log::warn!("candidate at iteration {iteration} failed: {e}");
                Evaluation { iteration, kind, params, objectives: None, estimate: None, error: Some(e.to_string()) }
            }
        }
    }
}

/// Surrogate-guided search for the offline Pareto front over canonical
/// policies, scored by off-policy evaluation on `log`.
pub fn optimize_offline(
    log: &LogDataset,
    model: &CateModel,
    bounds: &SearchBounds,
    budget: usize,
    seed: u64,
    opts: &OfflineOptions,
) -> Result<OfflineRun, MoptError> {
    let table = PredictionTable::new(model, log)?;
    optimize_offline_with_table(log, &table, bounds, budget, seed, opts)
}

/// As [`optimize_offline`] with outcome predictions already computed.
pub fn optimize_offline_with_table(
    log: &LogDataset,
    table: &PredictionTable,
    bounds: &SearchBounds,
    budget: usize,
    seed: u64,
    opts: &OfflineOptions,
) -> Result<OfflineRun, MoptError> {
    let (n, m) = (log.n, log.m);
    let dim = n + m - 2;
    if bounds.dim() != dim {
        return Err(MoptError::Dimension(format!("bounds have {} parameters, policies need {dim}", bounds.dim())));
    }
    let minimum = minimum_budget(n, m);
    if budget < minimum {
        return Err(MoptError::Budget { budget, minimum });
    }
    let directions = log.directions();
    let lead = directions[0];
    let eval = Evaluator { log, table, signs: directions.iter().map(|d| d.sign()).collect(), opts: *opts };
    let mut evaluations = Vec::with_capacity(budget + n);

    if opts.include_single_arm && !bounds.biases_fixed(m) {
        let singles: Vec<Evaluation> = (1..=n)
            .into_par_iter()
            .map(|arm| {
                let p = PolicyParams::single_arm(arm, n, m, lead, SINGLE_ARM_MAGNITUDE);
                eval.run(p, 0, EvaluationKind::SingleArm)
            })
            .collect();
        evaluations.extend(singles);
    }

    let to_params = |u: &[f64]| PolicyParams::from_free(&bounds.from_unit(u), lead, n, m);
    let free = bounds.free_dims();
    let design: Vec<Vec<f64>> = halton_design(initial_design_size(&free).min(budget), dim, seed)
        .into_iter()
        .map(|u| u.iter().zip(&free).map(|(v, f)| if *f { *v } else { 0.5 }).collect())
        .collect();
    let mut observations: Vec<Observation> = Vec::with_capacity(budget);
    let initial: Vec<Evaluation> =
        design.par_iter().map(|u| eval.run(to_params(u), 0, EvaluationKind::Initial)).collect();
    for (u, e) in design.iter().zip(&initial) {
        record(&mut observations, u, e);
    }
    evaluations.extend(initial);

    for t in 1..=budget - design.len() {
        let all: Vec<Vec<f64>> = evaluations.iter().filter_map(|e| e.objectives.clone()).collect();
        let u = propose(&observations, &all, &free, opts.rho, seed, t as u64);
        let e = eval.run(to_params(&u), t, EvaluationKind::Proposed);
        record(&mut observations, &u, &e);
        evaluations.push(e);
    }

    let points: Vec<ParetoPoint> = evaluations.iter().filter_map(Evaluation::point).collect();
    Ok(OfflineRun { front: FrontSet::from_points(&points), evaluations, bounds: bounds.clone() })
}

fn record(observations: &mut Vec<Observation>, u: &[f64], e: &Evaluation) {
    if let (Some(objectives), Some(est)) = (&e.objectives, &e.estimate) {
        observations.push(Observation {
            u: u.to_vec(),
            objectives: objectives.clone(),
            noise: est.stderrs().iter().map(|s| s * s).collect(),
        });
    }
}
