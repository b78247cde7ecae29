use serde::{Deserialize, Serialize};

use super::offline::{DEFAULT_RHO, SINGLE_ARM_MAGNITUDE};
use super::search::{propose, Observation, SearchBounds};
use super::{FrontSet, MoptError, ParetoPoint};
use crate::hte::CateModel;
use crate::ope::ModelPolicy;
use crate::policy::PolicyParams;
use crate::rng::derive_seed;
use crate::simulator::{run_online_prefixed, Assigner, ScenarioSpec};

/// Width multiplier applied to the candidates' bounding box.
pub const ONLINE_BOX_INFLATION: f64 = 1.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineMeasurement {
    pub round: usize,
    /// Index into [`OnlineRun::candidates`].
    pub candidate: usize,
    pub params: PolicyParams,
    pub means: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub count: usize,
    /// Means oriented so larger is better.
    pub objectives: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineRun {
    /// Initial candidates followed by one proposal per later round.
    pub candidates: Vec<PolicyParams>,
    pub measurements: Vec<OnlineMeasurement>,
    pub front: FrontSet,
    pub bounds: SearchBounds,
    /// Measurement with the best online value on the first outcome.
    pub best_primary: usize,
}

fn is_single_arm(p: &PolicyParams) -> bool {
    p.biases.iter().any(|b| b.abs() >= 0.5 * SINGLE_ARM_MAGNITUDE)
}

/// Bounding box of the candidates' free parameters widened by
/// [`ONLINE_BOX_INFLATION`] and clipped to the default offline bounds.
/// Pure single-arm candidates do not shape the box.
pub fn online_bounds(candidates: &[PolicyParams], model: &CateModel) -> SearchBounds {
    let default = SearchBounds::default_for(&model.ate);
    let frees: Vec<Vec<f64>> =
        candidates.iter().filter(|p| !is_single_arm(p)).map(|p| p.free_parameters()).collect();
    if frees.is_empty() {
        return default;
    }
    let dim = default.dim();
    let mut lo = Vec::with_capacity(dim);
    let mut hi = Vec::with_capacity(dim);
    for k in 0..dim {
        let a = frees.iter().map(|f| f[k]).fold(f64::INFINITY, f64::min);
        let b = frees.iter().map(|f| f[k]).fold(f64::NEG_INFINITY, f64::max);
        let center = 0.5 * (a + b);
        let half = if b > a {
            0.5 * ONLINE_BOX_INFLATION * (b - a)
        } else {
            0.1 * 0.5 * (default.hi[k] - default.lo[k])
        };
        let l = (center - half).max(default.lo[k]);
        let h = (center + half).min(default.hi[k]);
        if l <= h {
            lo.push(l);
            hi.push(h);
        } else {
            let v = center.clamp(default.lo[k], default.hi[k]);
            lo.push(v);
            hi.push(v);
        }
    }
    SearchBounds { lo, hi }
}

/// Measures the candidates online, then proposes and measures one new
/// candidate per additional round.
pub fn optimize_online(
    scenario: &ScenarioSpec,
    candidates: &[PolicyParams],
    model: &CateModel,
    rounds: usize,
    units_per_round: usize,
    seed: u64,
) -> Result<OnlineRun, MoptError> {
    if candidates.is_empty() {
        return Err(MoptError::Invalid("need at least one candidate".into()));
    }
    if rounds == 0 || units_per_round == 0 {
        return Err(MoptError::Invalid("rounds and units_per_round must be positive".into()));
    }
    let (n, m) = (scenario.n, scenario.m);
    if let Some(p) = candidates.iter().find(|p| p.n() != n || p.m() != m) {
        return Err(MoptError::Dimension(format!("candidate is {}×{}, scenario {n}×{m}", p.n(), p.m())));
    }
    let directions = scenario.directions();
    let signs: Vec<f64> = directions.iter().map(|d| d.sign()).collect();
    let lead = directions[0];
    let bounds = online_bounds(candidates, model);
    let free = bounds.free_dims();

    let mut all = candidates.to_vec();
    let mut measurements = Vec::new();
    let mut observations = Vec::new();

    let measure = |params: &[PolicyParams], round: usize, first: usize| -> Result<Vec<OnlineMeasurement>, MoptError> {
        let policies: Vec<ModelPolicy> = params.iter().map(|p| ModelPolicy::new(model, p.clone())).collect();
        let refs: Vec<&dyn Assigner> = policies.iter().map(|p| p as &dyn Assigner).collect();
        let run = run_online_prefixed(
            scenario,
            &refs,
            units_per_round,
            derive_seed(seed, round as u64),
            &format!("r{round}-"),
        )?;
        Ok((0..params.len())
            .filter(|&c| run.counts[c] > 0)
            .map(|c| OnlineMeasurement {
                round,
                candidate: first + c,
                params: params[c].clone(),
                means: run.means[c].clone(),
                stderrs: run.stderrs[c].clone(),
                count: run.counts[c],
                objectives: run.means[c].iter().zip(&signs).map(|(v, s)| v * s).collect(),
            })
            .collect())
    };
    let observe = |obs: &mut Vec<Observation>, meas: &OnlineMeasurement| {
        if !is_single_arm(&meas.params) && meas.count >= 2 {
            obs.push(Observation {
                u: bounds.to_unit(&meas.params.free_parameters()),
                objectives: meas.objectives.clone(),
                noise: meas.stderrs.iter().map(|s| s * s).collect(),
            });
        }
    };

    for meas in measure(candidates, 1, 0)? {
        observe(&mut observations, &meas);
        measurements.push(meas);
    }
    for round in 2..=rounds {
        let objs: Vec<Vec<f64>> = measurements.iter().map(|x| x.objectives.clone()).collect();
        let u = propose(&observations, &objs, &free, DEFAULT_RHO, seed, round as u64);
        let params = PolicyParams::from_free(&bounds.from_unit(&u), lead, n, m);
        let index = all.len();
        all.push(params.clone());
        for meas in measure(&[params], round, index)? {
            observe(&mut observations, &meas);
            measurements.push(meas);
        }
    }

    let points: Vec<ParetoPoint> = measurements
        .iter()
        .map(|x| ParetoPoint { params: x.params.clone(), objectives: x.objectives.clone(), stderr: x.stderrs.clone(), estimate: None, iteration: x.round })
        .collect();
    let best_primary = (0..measurements.len())
        .fold(0, |b, i| if measurements[i].objectives[0] > measurements[b].objectives[0] { i } else { b });
    Ok(OnlineRun { candidates: all, measurements, front: FrontSet::from_points(&points), bounds, best_primary })
}
