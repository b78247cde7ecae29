use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::report::{front_csv, BacktestReport, OracleComparison};
use super::{salts, AssignmentCache, CachedAssignment, RunDir, WorkflowError};
use crate::data::{split_log, validate_log, LogDataset, UnitRecord};
use crate::hte::{calibration_report, fit_t_learner, CateModel};
use crate::mopt::{
    dominates, hypervolume, minimum_budget, optimize_offline_with_table, optimize_online, reference_point,
    subset_select, FrontSet, MoptError, OfflineOptions, OfflineRun, OnlineRun, SearchBounds, SubsetMethod,
};
use crate::ope::{ModelPolicy, OpeOptions, PredictionTable};
use crate::policy::PolicyParams;
use crate::rng::{streams, unit_rng};
use crate::simulator::{oracle_policy_value, Assigner};
use crate::stats;

const MODEL: &str = "phase1/model.json";
const CALIBRATION: &str = "phase1/calibration.json";
const OFFLINE_FRONT: &str = "phase1/offline_front.jsonl";
const BIAS_FREE_FRONT: &str = "phase1/offline_front_bias_free.jsonl";
const EVALUATIONS: &str = "phase1/evaluations.json";
const CANDIDATES: &str = "phase1/candidates.json";
const PHASE1_SUMMARY: &str = "phase1/summary.json";
const ONLINE_RUN: &str = "phase2/online_run.json";
const ONLINE_FRONT: &str = "phase2/online_front.jsonl";
const COMPARISON: &str = "phase2/comparison.json";
const RECOMMENDATION: &str = "phase2/recommendation.json";
const MANIFEST: &str = "launch/manifest.json";
const ASSIGNMENTS: &str = "launch/assignments.json";
const TRAFFIC: &str = "launch/traffic.csv";
const HOLDOUT: &str = "launch/holdout.csv";
const BACKTEST: &str = "backtest/report.json";

const RUN_PHASE1: &str = "run `pex phase1` first";
const RUN_PHASE2: &str = "run `pex phase2` first";
const RUN_LAUNCH: &str = "run `pex launch` first";

#[derive(Debug, Clone, PartialEq)]
pub enum CommandOutcome {
    Completed(String),
    /// Stopped at a decision point; rerun with the suggested flag to go on.
    Gated(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCheck {
    pub arm: usize,
    pub outcome: usize,
    pub mean_prediction: f64,
    pub sample_ate: f64,
    pub abs_gap: f64,
    /// Standard error of the gap from the two sample ATEs involved;
    /// absent when an arm has fewer than two records.
    pub stderr: Option<f64>,
    pub within: bool,
}

/// Mean CATE predictions on held-out randomized data against that data's
/// sample ATEs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationGate {
    pub data: String,
    pub records: usize,
    pub z: f64,
    pub passed: bool,
    pub accepted: bool,
    pub entries: Vec<CalibrationCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEntry {
    pub index: usize,
    /// Position in the offline front file.
    pub front_index: usize,
    pub params: PolicyParams,
    /// Offline estimates, oriented so larger is better.
    pub objectives: Vec<f64>,
    pub stderr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFile {
    pub k: usize,
    pub method: SubsetMethod,
    pub hypervolume: f64,
    pub reference_point: Vec<f64>,
    pub candidates: Vec<CandidateEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase1Summary {
    pub contrasts: usize,
    pub free_parameters: usize,
    pub train_records: usize,
    pub evaluation_records: usize,
    pub holdout_records: usize,
    pub retrained: bool,
    pub front_size: usize,
    pub bias_free_front_size: Option<usize>,
    /// Hypervolumes of both fronts against one shared reference point.
    pub hypervolume: f64,
    pub bias_free_hypervolume: Option<f64>,
    pub shared_reference: Vec<f64>,
    pub candidates: usize,
    pub failed_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub candidate: usize,
    pub offline: Vec<f64>,
    pub offline_stderr: Vec<f64>,
    pub online: Vec<f64>,
    pub online_stderr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeComparison {
    pub name: String,
    /// Rank correlation of offline estimates and online means; absent
    /// when either side is constant.
    pub spearman: Option<f64>,
    pub pearson: Option<f64>,
    pub mean_abs_gap: f64,
    pub mean_online_stderr: f64,
}

/// Offline estimates against first-round online measurements, in raw
/// outcome units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineComparison {
    pub rows: Vec<ComparisonRow>,
    pub outcomes: Vec<OutcomeComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    /// Index into the online run's candidate list.
    pub candidate: usize,
    pub measurement: usize,
    pub source: String,
    pub params: PolicyParams,
    pub online_means: Vec<f64>,
    pub online_stderrs: Vec<f64>,
    /// Per measurement; zero off the online front.
    pub hypervolume_contributions: Vec<f64>,
    /// Candidate with the best online value on the first outcome.
    pub best_primary_candidate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaunchManifest {
    pub launched: bool,
    pub candidate: usize,
    pub source: String,
    pub params: PolicyParams,
    pub holdout_fraction: f64,
    pub units: usize,
    pub policy_units: usize,
    pub holdout_units: usize,
}

fn offline_options(dir: &RunDir) -> OfflineOptions {
    OfflineOptions {
        estimator: dir.config.estimator,
        ope: OpeOptions { propensity_clip: dir.config.propensity_clip },
        ..OfflineOptions::default()
    }
}

fn load_model(dir: &RunDir) -> Result<CateModel, WorkflowError> {
    Ok(CateModel::from_json(&dir.read_text(MODEL, RUN_PHASE1)?)?)
}

/// Writes a simulated randomized log and its scenario.
pub fn cmd_simulate(dir: &RunDir) -> Result<CommandOutcome, WorkflowError> {
    let scenario = dir.config.require_scenario()?;
    let log = dir.config.load_or_generate_log()?;
    let path = dir.write_log("data/log.csv", &log)?;
    dir.write_text("data/scenario.json", &(scenario.to_json() + "\n"))?;
    Ok(CommandOutcome::Completed(format!("wrote {} records to {}", log.len(), path.display())))
}

/// Phase 1: train, check calibration, search offline, pick candidates.
pub fn cmd_phase1(dir: &RunDir, accept: bool, retrain: bool) -> Result<CommandOutcome, WorkflowError> {
    let cfg = &dir.config;
    let log = cfg.load_or_generate_log()?;
    let (n, m) = (log.n, log.m);
    let minimum = minimum_budget(n, m);
    if cfg.offline_budget < minimum {
        return Err(MoptError::Budget { budget: cfg.offline_budget, minimum }.into());
    }
    let report = validate_log(&log);
    if let Some(v) = report.violations.first() {
        return Err(WorkflowError::Invalid(format!(
            "log has {} violations, first: {v}",
            report.violations.len()
        )));
    }
    let (main, holdout) = split_log(&log, cfg.holdout_fraction, cfg.seed_for(salts::SPLIT))?;
    let (mut train, eval) = split_log(&main, 1.0 - cfg.train_fraction, cfg.seed_for(salts::SPLIT) ^ 1)?;
    if retrain {
        let extra = dir.read_log(HOLDOUT, RUN_LAUNCH)?;
        log::info!("retraining with {} launch holdout records", extra.len());
        train.extend_from(&extra)?;
    }
    let model = fit_t_learner(&train, &cfg.learner, cfg.seed_for(salts::MODEL))?;
    dir.write_text(MODEL, &(model.to_json() + "\n"))?;

    let (check_data, label) = if holdout.is_empty() { (&eval, "evaluation") } else { (&holdout, "holdout") };
    let mut gate = calibration_gate(&model, &train, check_data, cfg.calibration_z)?;
    gate.data = label.into();
    gate.accepted = accept;
    dir.write_json(CALIBRATION, &gate)?;
    if !gate.passed && !accept {
        let worst = gate.entries.iter().filter(|e| !e.within).map(|e| format!("arm {} outcome {}", e.arm, e.outcome));
        return Ok(CommandOutcome::Gated(format!(
            "calibration gap above {} standard errors for {}; inspect {} and rerun with --accept to continue",
            cfg.calibration_z,
            worst.collect::<Vec<_>>().join(", "),
            dir.file(CALIBRATION).display()
        )));
    }

    let opts = offline_options(dir);
    let table = PredictionTable::new(&model, &eval)?;
    let seed = cfg.seed_for(salts::SEARCH);
    let run = optimize_offline_with_table(&eval, &table, &SearchBounds::default_for(&model.ate), cfg.offline_budget, seed, &opts)?;
    dir.write_text(OFFLINE_FRONT, &run.front.to_json_lines())?;
    dir.write_json(EVALUATIONS, &run.evaluations)?;
    let bias_free: Option<OfflineRun> = if cfg.bias_free_front {
        let b = SearchBounds::weights_only(&model.ate);
        let r = optimize_offline_with_table(&eval, &table, &b, cfg.offline_budget, seed, &opts)?;
        dir.write_text(BIAS_FREE_FRONT, &r.front.to_json_lines())?;
        Some(r)
    } else {
        None
    };

    let selection = subset_select(&run.front, cfg.k)?;
    let candidates = CandidateFile {
        k: cfg.k,
        method: selection.method,
        hypervolume: selection.hypervolume,
        reference_point: run.front.reference_point.clone(),
        candidates: selection
            .indices
            .iter()
            .zip(&selection.points)
            .enumerate()
            .map(|(index, (&front_index, p))| CandidateEntry {
                index,
                front_index,
                params: p.params.clone(),
                objectives: p.objectives.clone(),
                stderr: p.stderr.clone(),
            })
            .collect(),
    };
    dir.write_json(CANDIDATES, &candidates)?;

    let mut all = run.front.objectives();
    if let Some(b) = &bias_free {
        all.extend(b.front.objectives());
    }
    let shared = reference_point(&all);
    let summary = Phase1Summary {
        contrasts: model.contrast_count(),
        free_parameters: n + m - 2,
        train_records: train.len(),
        evaluation_records: eval.len(),
        holdout_records: holdout.len(),
        retrained: retrain,
        front_size: run.front.points.len(),
        bias_free_front_size: bias_free.as_ref().map(|b| b.front.points.len()),
        hypervolume: hypervolume(&run.front.objectives(), &shared)?,
        bias_free_hypervolume: bias_free.as_ref().map(|b| hypervolume(&b.front.objectives(), &shared)).transpose()?,
        shared_reference: shared,
        candidates: candidates.candidates.len(),
        failed_evaluations: run.failures() + bias_free.as_ref().map_or(0, OfflineRun::failures),
    };
    dir.write_json(PHASE1_SUMMARY, &summary)?;
    Ok(CommandOutcome::Completed(format!(
        "{} contrasts, offline front of {} points, {} candidates written to {}",
        summary.contrasts,
        summary.front_size,
        summary.candidates,
        dir.file(CANDIDATES).display()
    )))
}

fn arm_moments(log: &LogDataset, arm: usize, outcome: usize) -> (usize, f64) {
    let ys: Vec<f64> = log.records.iter().filter(|r| r.arm == arm).map(|r| r.outcomes[outcome]).collect();
    let var = if ys.len() >= 2 { stats::variance(&ys) } else { f64::NAN };
    (ys.len(), var)
}

fn ate_variance(log: &LogDataset, arm: usize, outcome: usize) -> Option<f64> {
    let (na, va) = arm_moments(log, arm, outcome);
    let (nc, vc) = arm_moments(log, 1, outcome);
    (na >= 2 && nc >= 2).then(|| va / na as f64 + vc / nc as f64)
}

/// Gap between the model's mean CATE on `data` and `data`'s sample ATE,
/// judged against the sampling error of both the training and the
/// checking sample ATEs.
fn calibration_gate(
    model: &CateModel,
    train: &LogDataset,
    data: &LogDataset,
    z: f64,
) -> Result<CalibrationGate, WorkflowError> {
    let report = calibration_report(model, data)?;
    let entries: Vec<CalibrationCheck> = report
        .entries
        .iter()
        .map(|e| {
            let stderr = match (ate_variance(train, e.arm, e.outcome), ate_variance(data, e.arm, e.outcome)) {
                (Some(a), Some(b)) => Some((a + b).sqrt()),
                _ => None,
            };
            let within = stderr.is_some_and(|s| e.abs_gap <= z * s);
            CalibrationCheck {
                arm: e.arm,
                outcome: e.outcome,
                mean_prediction: e.mean_prediction,
                sample_ate: e.sample_ate,
                abs_gap: e.abs_gap,
                stderr,
                within,
            }
        })
        .collect();
    Ok(CalibrationGate {
        data: String::new(),
        records: data.len(),
        z,
        passed: entries.iter().all(|e| e.within),
        accepted: false,
        entries,
    })
}

/// Hypervolume lost by dropping each point; zero for dominated points and
/// repeated objective vectors after their first occurrence.
pub fn hypervolume_contributions(objectives: &[Vec<f64>], reference: &[f64]) -> Result<Vec<f64>, MoptError> {
    let mut on_front = vec![false; objectives.len()];
    for (i, p) in objectives.iter().enumerate() {
        let mut beaten = false;
        for (k, q) in objectives.iter().enumerate() {
            if dominates(q, p)? || (k < i && q == p) {
                beaten = true;
                break;
            }
        }
        on_front[i] = !beaten;
    }
    let front: Vec<usize> = (0..objectives.len()).filter(|&i| on_front[i]).collect();
    let pick = |skip: Option<usize>| -> Vec<Vec<f64>> {
        front.iter().filter(|&&i| Some(i) != skip).map(|&i| objectives[i].clone()).collect()
    };
    let total = hypervolume(&pick(None), reference)?;
    let mut out = vec![0.0; objectives.len()];
    for &i in &front {
        out[i] = (total - hypervolume(&pick(Some(i)), reference)?).max(0.0);
    }
    Ok(out)
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Phase 2: measure the candidates online and recommend one.
pub fn cmd_phase2(dir: &RunDir, candidate_index: Option<usize>) -> Result<CommandOutcome, WorkflowError> {
    let cfg = &dir.config;
    let scenario = cfg.require_scenario()?;
    let model = load_model(dir)?;
    let cands: CandidateFile = dir.read_json(CANDIDATES, RUN_PHASE1)?;
    let params: Vec<PolicyParams> = cands.candidates.iter().map(|c| c.params.clone()).collect();
    let run = optimize_online(
        &scenario,
        &params,
        &model,
        cfg.online_rounds,
        cfg.online_units_per_round,
        cfg.seed_for(salts::ONLINE),
    )?;
    dir.write_json(ONLINE_RUN, &run)?;
    dir.write_text(ONLINE_FRONT, &run.front.to_json_lines())?;

    let signs: Vec<f64> = scenario.directions().iter().map(|d| d.sign()).collect();
    let rows: Vec<ComparisonRow> = run
        .measurements
        .iter()
        .filter(|x| x.round == 1 && x.candidate < cands.candidates.len())
        .map(|x| {
            let c = &cands.candidates[x.candidate];
            ComparisonRow {
                candidate: x.candidate,
                offline: c.objectives.iter().zip(&signs).map(|(v, s)| v * s).collect(),
                offline_stderr: c.stderr.clone(),
                online: x.means.clone(),
                online_stderr: x.stderrs.clone(),
            }
        })
        .collect();
    let names: Vec<String> = scenario.outcome_specs().into_iter().map(|o| o.name).collect();
    let outcomes = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let off: Vec<f64> = rows.iter().map(|r| r.offline[j]).collect();
            let on: Vec<f64> = rows.iter().map(|r| r.online[j]).collect();
            let gaps: Vec<f64> = off.iter().zip(&on).map(|(a, b)| (a - b).abs()).collect();
            let ses: Vec<f64> = rows.iter().map(|r| r.online_stderr[j]).collect();
            OutcomeComparison {
                name: name.clone(),
                spearman: finite(stats::spearman(&off, &on)),
                pearson: finite(stats::pearson(&off, &on)),
                mean_abs_gap: stats::mean(&gaps),
                mean_online_stderr: stats::mean(&ses),
            }
        })
        .collect();
    dir.write_json(COMPARISON, &OnlineComparison { rows, outcomes })?;

    let objs: Vec<Vec<f64>> = run.measurements.iter().map(|x| x.objectives.clone()).collect();
    let contributions = hypervolume_contributions(&objs, &run.front.reference_point)?;
    let (measurement, source) = match candidate_index {
        Some(c) => {
            let i = run.measurements.iter().position(|x| x.candidate == c).ok_or_else(|| {
                WorkflowError::Invalid(format!("candidate {c} has no online measurement (0..{})", run.candidates.len()))
            })?;
            (i, "experimenter")
        }
        None => {
            let best = (0..contributions.len()).fold(0, |b, i| if contributions[i] > contributions[b] { i } else { b });
            (best, "max_hypervolume_contribution")
        }
    };
    let chosen = &run.measurements[measurement];
    let rec = Recommendation {
        candidate: chosen.candidate,
        measurement,
        source: source.into(),
        params: chosen.params.clone(),
        online_means: chosen.means.clone(),
        online_stderrs: chosen.stderrs.clone(),
        hypervolume_contributions: contributions,
        best_primary_candidate: run.measurements[run.best_primary].candidate,
    };
    dir.write_json(RECOMMENDATION, &rec)?;
    Ok(CommandOutcome::Completed(format!(
        "{} online measurements over {} rounds; recommended candidate {} ({})",
        run.measurements.len(),
        cfg.online_rounds,
        rec.candidate,
        rec.source
    )))
}

fn hash_unit(seed: u64, unit_id: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(unit_id.as_bytes());
    h.finalize().into()
}

fn word(bytes: &[u8]) -> u64 {
    u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
}

/// Holdout membership and holdout arm from a hash of the unit id, so a
/// unit's slice does not depend on traffic order.
pub(crate) fn holdout_assignment(seed: u64, unit_id: &str, fraction: f64, n: usize) -> Option<usize> {
    let h = hash_unit(seed, unit_id);
    let u = word(&h[..8]) as f64 / 2f64.powi(64);
    (u < fraction).then(|| 1 + ((word(&h[8..16]) as u128 * n as u128) >> 64) as usize)
}

/// Launch: route simulated traffic through the chosen policy, keeping a
/// uniformly randomized holdout, with sticky cached assignments.
pub fn cmd_launch(dir: &RunDir, candidate_index: Option<usize>) -> Result<CommandOutcome, WorkflowError> {
    let cfg = &dir.config;
    let scenario = cfg.require_scenario()?;
    let model = load_model(dir)?;
    let online: OnlineRun = dir.read_json(ONLINE_RUN, RUN_PHASE2)?;
    let rec: Recommendation = dir.read_json(RECOMMENDATION, RUN_PHASE2)?;
    let (candidate, source, params) = match candidate_index {
        Some(c) => {
            let p = online.candidates.get(c).ok_or_else(|| {
                WorkflowError::Invalid(format!("candidate index {c} out of range (0..{})", online.candidates.len()))
            })?;
            (c, "experimenter".to_string(), p.clone())
        }
        None => (rec.candidate, rec.source.clone(), rec.params.clone()),
    };
    if params.n() != scenario.n || params.m() != scenario.m || !params.is_canonical(scenario.directions()[0]) {
        return Err(WorkflowError::Invalid(format!(
            "policy is not a canonical {}-arm, {}-outcome policy",
            scenario.n, scenario.m
        )));
    }
    let cache_path = dir.file(ASSIGNMENTS);
    if let Some(parent) = cache_path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| super::io_err(parent, e))?;
    }
    let mut cache = AssignmentCache::load(&cache_path)?;
    let policy = ModelPolicy::new(&model, params.clone());
    let seed = cfg.seed_for(salts::LAUNCH);
    let specs = scenario.outcome_specs();
    let mut launched = LogDataset::empty(scenario.n, scenario.m, scenario.d, specs.clone());
    let mut held = LogDataset::empty(scenario.n, scenario.m, scenario.d, specs);
    let mut hits = 0;
    for k in 0..cfg.launch_units as u64 {
        let unit_id = format!("l{k}");
        let x = scenario.sample_covariates(seed, streams::TRAFFIC, k);
        let (a, hit) = cache.get_or_assign(&unit_id, || {
            match holdout_assignment(seed, &unit_id, cfg.holdout_fraction, scenario.n) {
                Some(arm) => CachedAssignment { arm, holdout: true },
                None => CachedAssignment { arm: policy.assign(&x), holdout: false },
            }
        });
        hits += hit as usize;
        let mut noise = unit_rng(seed, streams::NOISE, k);
        let outcomes: Vec<f64> = scenario
            .noisy_outcomes(a.arm, &x, &mut noise)
            .iter()
            .zip(&scenario.online_shift)
            .map(|(y, s)| s.apply(*y))
            .collect();
        let propensity = if a.holdout { 1.0 / scenario.n as f64 } else { 1.0 };
        let record = UnitRecord { unit_id, covariates: x, arm: a.arm, propensity, outcomes };
        if a.holdout {
            held.records.push(record);
        } else {
            launched.records.push(record);
        }
    }
    cache.save(&cache_path)?;
    dir.write_log(TRAFFIC, &launched)?;
    dir.write_log(HOLDOUT, &held)?;
    let manifest = LaunchManifest {
        launched: true,
        candidate,
        source,
        params,
        holdout_fraction: cfg.holdout_fraction,
        units: cfg.launch_units,
        policy_units: launched.len(),
        holdout_units: held.len(),
    };
    dir.write_json(MANIFEST, &manifest)?;
    Ok(CommandOutcome::Completed(format!(
        "launched candidate {candidate}: {} policy units, {} holdout units, {hits} cached assignments reused",
        manifest.policy_units, manifest.holdout_units
    )))
}

/// Backtest: launched population against the randomized holdout.
pub fn cmd_backtest(dir: &RunDir) -> Result<CommandOutcome, WorkflowError> {
    let cfg = &dir.config;
    let manifest: LaunchManifest = dir.read_json(MANIFEST, RUN_LAUNCH)?;
    let launched = dir.read_log(TRAFFIC, RUN_LAUNCH)?;
    let held = dir.read_log(HOLDOUT, RUN_LAUNCH)?;
    let oracle = match &cfg.scenario {
        Some(_) => {
            let scenario = cfg.require_scenario()?;
            let model = load_model(dir)?;
            let seed = cfg.seed_for(salts::ORACLE);
            let samples = cfg.oracle_samples;
            let policy = ModelPolicy::new(&model, manifest.params.clone());
            let single: Vec<Vec<f64>> = (1..=scenario.n)
                .map(|arm| oracle_policy_value(&scenario, &move |_: &[f64]| arm, samples, seed))
                .collect();
            Some(OracleComparison::new(
                oracle_policy_value(&scenario, &policy, samples, seed),
                single,
                &scenario.directions(),
            ))
        }
        None => None,
    };
    let report = BacktestReport::build(&launched, &held, oracle)?;
    dir.write_json(BACKTEST, &report)?;
    let first = &report.outcomes[0];
    Ok(CommandOutcome::Completed(format!(
        "{}: launched {:.4} vs holdout {:.4} (difference {:.4}, 95% CI [{:.4}, {:.4}])",
        first.name, first.launched.mean, first.holdout.mean, first.difference, first.ci_low, first.ci_high
    )))
}

/// Plot-ready tables from whatever artifacts the run has so far.
pub fn cmd_report(dir: &RunDir) -> Result<CommandOutcome, WorkflowError> {
    let names: Vec<String> = dir
        .config
        .outcome_specs()
        .map(|s| s.into_iter().map(|o| o.name).collect())
        .unwrap_or_default();
    let signs: Vec<f64> = dir
        .config
        .outcome_specs()
        .map(|s| s.iter().map(|o| o.direction.sign()).collect())
        .unwrap_or_default();
    let parse = |rel: &str| -> Result<Vec<crate::mopt::FrontRecord>, WorkflowError> {
        FrontSet::from_json_lines(&dir.read_text(rel, RUN_PHASE1)?)
            .map_err(|e| WorkflowError::Json { path: dir.file(rel), source: e })
    };
    let mut written = Vec::new();

    let front = parse(OFFLINE_FRONT)?;
    let names = if names.len() == front.first().map_or(0, |r| r.objectives.len()) {
        names
    } else {
        let m = front.first().map_or(0, |r| r.objectives.len());
        (0..m).map(|j| format!("y_{j}")).collect()
    };
    let signs = if signs.len() == names.len() { signs } else { vec![1.0; names.len()] };
    let mut csv = front_csv("bias", &front, &names, &signs, true);
    if dir.exists(BIAS_FREE_FRONT) {
        csv.push_str(&front_csv("bias_free", &parse(BIAS_FREE_FRONT)?, &names, &signs, false));
    }
    written.push(dir.write_text("report/offline_fronts.csv", &csv)?);

    let gate: CalibrationGate = dir.read_json(CALIBRATION, RUN_PHASE1)?;
    let mut cal = String::from("arm,outcome,mean_prediction,sample_ate,abs_gap,stderr,within\n");
    for e in &gate.entries {
        cal.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            e.arm,
            names.get(e.outcome).cloned().unwrap_or_else(|| e.outcome.to_string()),
            e.mean_prediction,
            e.sample_ate,
            e.abs_gap,
            e.stderr.map_or(String::new(), |s| s.to_string()),
            e.within
        ));
    }
    written.push(dir.write_text("report/calibration.csv", &cal)?);

    if dir.exists(COMPARISON) {
        let cmp: OnlineComparison = dir.read_json(COMPARISON, RUN_PHASE2)?;
        let mut out = String::from("candidate,outcome,offline,offline_stderr,online,online_stderr\n");
        for r in &cmp.rows {
            for (j, name) in names.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.candidate, name, r.offline[j], r.offline_stderr[j], r.online[j], r.online_stderr[j]
                ));
            }
        }
        written.push(dir.write_text("report/offline_vs_online.csv", &out)?);
    }
    if dir.exists(ONLINE_RUN) {
        let run: OnlineRun = dir.read_json(ONLINE_RUN, RUN_PHASE2)?;
        let mut out = String::from("round,candidate,count,outcome,mean,stderr\n");
        for x in &run.measurements {
            for (j, name) in names.iter().enumerate() {
                out.push_str(&format!("{},{},{},{},{},{}\n", x.round, x.candidate, x.count, name, x.means[j], x.stderrs[j]));
            }
        }
        written.push(dir.write_text("report/online_measurements.csv", &out)?);
    }
    if dir.exists(BACKTEST) {
        let report: BacktestReport = dir.read_json(BACKTEST, RUN_LAUNCH)?;
        written.push(dir.write_text("report/backtest.csv", &report.to_csv())?);
    }
    let files: Vec<String> = written
        .iter()
        .filter_map(|p| p.strip_prefix(&dir.path).ok().map(|r| r.display().to_string()))
        .collect();
    dir.write_json("report/index.json", &files)?;
    Ok(CommandOutcome::Completed(format!("wrote {}", files.join(", "))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contributions_of_a_staircase() {
        let objs = vec![vec![1.0, 3.0], vec![2.0, 2.0], vec![3.0, 1.0], vec![1.0, 1.0]];
        let c = hypervolume_contributions(&objs, &[0.0, 0.0]).unwrap();
        // Total 6; dropping an end point loses 1, the middle one loses 1.
        assert_eq!(c, vec![1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn duplicate_points_contribute_once() {
        let objs = vec![vec![2.0, 1.0], vec![2.0, 1.0]];
        let c = hypervolume_contributions(&objs, &[0.0, 0.0]).unwrap();
        assert_eq!(c, vec![2.0, 0.0]);
    }

    #[test]
    fn holdout_hash_rate_and_stability() {
        let n = 3;
        let ids: Vec<String> = (0..20_000).map(|k| format!("l{k}")).collect();
        let picks: Vec<Option<usize>> = ids.iter().map(|u| holdout_assignment(7, u, 0.05, n)).collect();
        let count = picks.iter().flatten().count();
        // Binomial(20000, 0.05): mean 1000, sd ~30.8.
        assert!((count as f64 - 1000.0).abs() < 4.0 * 30.8, "{count}");
        assert!(picks.iter().flatten().all(|a| (1..=n).contains(a)));
        assert_eq!(holdout_assignment(7, "l5", 0.05, n), picks[5]);
        assert!(ids.iter().all(|u| holdout_assignment(7, u, 0.0, n).is_none()));
    }
}
