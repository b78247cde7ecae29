//! Multi-objective tools: dominance, Pareto fronts, hypervolume, subset
//! selection and the surrogate-guided offline and online policy searches.

mod hypervolume;
mod offline;
mod online;
mod pareto;
mod scalarize;
mod search;
mod subset;
pub mod surrogate;

use thiserror::Error;

pub use hypervolume::{hypervolume, hypervolume_estimate, HypervolumeEstimate};
pub use offline::{
    minimum_budget, optimize_offline, optimize_offline_with_table, Evaluation, EvaluationKind, OfflineOptions,
    OfflineRun, BIAS_BOUND_FACTOR, DEFAULT_RHO, DEFAULT_WEIGHT_BOUND, SINGLE_ARM_MAGNITUDE,
};
pub use online::{online_bounds, optimize_online, OnlineMeasurement, OnlineRun, ONLINE_BOX_INFLATION};
pub use pareto::{dominates, pareto_front, reference_point, FrontRecord, FrontSet, ParetoPoint};
pub use scalarize::{normalization_ranges, scalarize};
pub use search::SearchBounds;
pub use subset::{binomial, exact_subset, greedy_subset, subset_select, SubsetMethod, SubsetSelection, EXACT_SUBSET_LIMIT};

use crate::hte::HteError;
use crate::ope::OpeError;
use crate::simulator::ScenarioError;

#[derive(Debug, Error)]
pub enum MoptError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{0}")]
    Invalid(String),
    #[error("empty front")]
    EmptyFront,
    #[error("budget {budget} is below the minimum of {minimum}")]
    Budget { budget: usize, minimum: usize },
    #[error(transparent)]
    Ope(#[from] OpeError),
    #[error(transparent)]
    Hte(#[from] HteError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}
