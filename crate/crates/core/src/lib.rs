//! Personalized experimentation engine.
//!
//! Trains per-arm outcome models on randomized logs, turns their CATE
//! estimates into linear-utility decision policies, scores those policies
//! offline with inverse-propensity and doubly-robust estimators, searches
//! the policy space for Pareto-efficient trade-offs, and simulates the
//! online tuning and launch phases against a known ground truth.

pub mod data;
pub mod hte;
pub mod mopt;
pub mod ope;
pub mod policy;
pub mod rng;
pub mod simulator;
pub mod stats;
pub mod workflow;

pub use data::{
    compute_ate, split_log, validate_log, AteMatrix, Direction, LogDataset, OutcomeSpec,
    TreatmentArm, UnitRecord, ValidationReport,
};
pub use hte::{calibration_report, fit_base, fit_t_learner, BaseLearnerSpec, CateModel};
pub use mopt::{
    dominates, hypervolume, optimize_offline, optimize_online, pareto_front, scalarize, subset_select, FrontSet,
    ParetoPoint, SearchBounds,
};
pub use ope::{bootstrap_ci, estimate, Estimator, PolicyValueEstimate};
pub use policy::{
    canonicalize, decide, from_regularized, representable_as_regularized, utility, PolicyParams,
    RegularizedParams, RepresentabilityResult,
};
pub use simulator::{generate_log, oracle_policy_value, run_online, Assigner, ScenarioSpec};
pub use workflow::{AssignmentCache, BacktestReport, ExperimentConfig};
