use itertools::Itertools;
use serde::{Deserialize, Serialize};

use super::{hypervolume, FrontSet, MoptError, ParetoPoint};

/// Above this many `k`-subsets the greedy selector is used.
pub const EXACT_SUBSET_LIMIT: u128 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsetMethod {
    Exact,
    Greedy,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSelection {
    /// Indices into the front, ascending.
    pub indices: Vec<usize>,
    pub points: Vec<ParetoPoint>,
    pub hypervolume: f64,
    pub method: SubsetMethod,
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u128::MAX / 1024 {
            return u128::MAX;
        }
    }
    acc
}

/// Picks at most `k` front points maximizing the hypervolume of the subset.
pub fn subset_select(front: &FrontSet, k: usize) -> Result<SubsetSelection, MoptError> {
    if k == 0 {
        return Err(MoptError::Invalid("k must be at least 1".into()));
    }
    if front.points.is_empty() {
        return Err(MoptError::EmptyFront);
    }
    let objs = front.objectives();
    if k >= objs.len() {
        let indices: Vec<usize> = (0..objs.len()).collect();
        return Ok(finish(front, indices, SubsetMethod::All));
    }
    let (indices, method) = if binomial(objs.len(), k) <= EXACT_SUBSET_LIMIT {
        (exact_subset(&objs, &front.reference_point, k)?, SubsetMethod::Exact)
    } else {
        (greedy_subset(&objs, &front.reference_point, k)?, SubsetMethod::Greedy)
    };
    Ok(finish(front, indices, method))
}

fn finish(front: &FrontSet, indices: Vec<usize>, method: SubsetMethod) -> SubsetSelection {
    let points: Vec<ParetoPoint> = indices.iter().map(|&i| front.points[i].clone()).collect();
    let objs: Vec<Vec<f64>> = points.iter().map(|p| p.objectives.clone()).collect();
    let hv = hypervolume(&objs, &front.reference_point).unwrap_or(0.0);
    SubsetSelection { indices, points, hypervolume: hv, method }
}

/// Best `k`-subset by enumeration; the lexicographically first wins ties.
pub fn exact_subset(objs: &[Vec<f64>], reference: &[f64], k: usize) -> Result<Vec<usize>, MoptError> {
    let mut best: Option<(f64, Vec<usize>)> = None;
    for combo in (0..objs.len()).combinations(k) {
        let chosen: Vec<Vec<f64>> = combo.iter().map(|&i| objs[i].clone()).collect();
        let hv = hypervolume(&chosen, reference)?;
        if best.as_ref().is_none_or(|(b, _)| hv > *b) {
            best = Some((hv, combo));
        }
    }
    Ok(best.map(|(_, c)| c).unwrap_or_default())
}

/// Repeatedly adds the point with the largest hypervolume gain.
pub fn greedy_subset(objs: &[Vec<f64>], reference: &[f64], k: usize) -> Result<Vec<usize>, MoptError> {
    let mut chosen: Vec<usize> = Vec::new();
    let mut current: Vec<Vec<f64>> = Vec::new();
    let mut current_hv = 0.0;
    while chosen.len() < k.min(objs.len()) {
        let mut best: Option<(f64, usize)> = None;
        for i in (0..objs.len()).filter(|i| !chosen.contains(i)) {
            current.push(objs[i].clone());
            let gain = hypervolume(&current, reference)? - current_hv;
            current.pop();
            if best.is_none_or(|(g, _)| gain > g) {
                best = Some((gain, i));
            }
        }
        let (gain, i) = best.expect("unchosen points remain");
        chosen.push(i);
        current.push(objs[i].clone());
        current_hv += gain;
    }
    chosen.sort_unstable();
    Ok(chosen)
}
