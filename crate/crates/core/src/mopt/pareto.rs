use serde::{Deserialize, Serialize};

use super::MoptError;
use crate::ope::{Estimator, PolicyValueEstimate};
use crate::policy::PolicyParams;

/// A policy and its estimated objectives, oriented so larger is better.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub params: PolicyParams,
    pub objectives: Vec<f64>,
    /// Standard errors in the same orientation as `objectives`.
    pub stderr: Vec<f64>,
    pub estimate: Option<PolicyValueEstimate>,
    /// Search iteration that produced the point (0 for fixed designs).
    pub iteration: usize,
}

impl ParetoPoint {
    pub fn new(params: PolicyParams, objectives: Vec<f64>) -> Self {
        let stderr = vec![0.0; objectives.len()];
        Self { params, objectives, stderr, estimate: None, iteration: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontSet {
    pub points: Vec<ParetoPoint>,
    pub reference_point: Vec<f64>,
}

/// One line of the front JSON-lines file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontRecord {
    pub params: PolicyParams,
    pub objectives: Vec<f64>,
    pub stderr: Vec<f64>,
    pub estimator: Option<Estimator>,
    pub iteration: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci_low: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci_high: Option<Vec<f64>>,
}

impl FrontSet {
    /// Front of `points` with the default reference point.
    pub fn from_points(points: &[ParetoPoint]) -> Self {
        let objs: Vec<Vec<f64>> = points.iter().map(|p| p.objectives.clone()).collect();
        FrontSet { points: pareto_front(points), reference_point: reference_point(&objs) }
    }

    pub fn objectives(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(|p| p.objectives.clone()).collect()
    }

    pub fn records(&self) -> Vec<FrontRecord> {
        self.points
            .iter()
            .map(|p| {
                let ci = |f: fn(&crate::ope::OutcomeEstimate) -> Option<f64>| {
                    p.estimate.as_ref().and_then(|e| e.outcomes.iter().map(f).collect::<Option<Vec<f64>>>())
                };
                FrontRecord {
                    params: p.params.clone(),
                    objectives: p.objectives.clone(),
                    stderr: p.stderr.clone(),
                    estimator: p.estimate.as_ref().map(|e| e.estimator),
                    iteration: p.iteration,
                    ci_low: ci(|o| o.ci_low),
                    ci_high: ci(|o| o.ci_high),
                }
            })
            .collect()
    }

    pub fn to_json_lines(&self) -> String {
        self.records()
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }

    pub fn from_json_lines(text: &str) -> Result<Vec<FrontRecord>, serde_json::Error> {
        text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
    }
}

/// `a` is at least as good everywhere and strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> Result<bool, MoptError> {
    if a.len() != b.len() {
        return Err(MoptError::Dimension(format!("{} vs {} objectives", a.len(), b.len())));
    }
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return Ok(false);
        }
        if x > y {
            strict = true;
        }
    }
    Ok(strict)
}

/// Non-dominated subset in input order; exact objective duplicates keep
/// the first occurrence.
pub fn pareto_front(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let mut out: Vec<ParetoPoint> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let beaten = points.iter().enumerate().any(|(k, q)| {
            dominates(&q.objectives, &p.objectives).unwrap_or(false)
                || (k < i && q.objectives == p.objectives)
        });
        if !beaten {
            out.push(p.clone());
        }
    }
    out
}

/// Componentwise minimum minus 10% of the observed range.
pub fn reference_point(objectives: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = objectives.first() else {
        return Vec::new();
    };
    (0..first.len())
        .map(|j| {
            let lo = objectives.iter().map(|o| o[j]).fold(f64::INFINITY, f64::min);
            let hi = objectives.iter().map(|o| o[j]).fold(f64::NEG_INFINITY, f64::max);
            let range = hi - lo;
            let margin = if range > 0.0 { 0.1 * range } else { 0.1 * lo.abs().max(1.0) };
            lo - margin
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(objs: &[&[f64]]) -> Vec<ParetoPoint> {
        objs.iter()
            .map(|o| ParetoPoint::new(PolicyParams::new(vec![1.0], vec![0.0, 0.0]), o.to_vec()))
            .collect()
    }

    #[test]
    fn dominance_cases() {
        assert!(dominates(&[2.0, 2.0], &[1.0, 1.0]).unwrap());
        assert!(!dominates(&[1.0, 2.0], &[2.0, 1.0]).unwrap());
        assert!(!dominates(&[2.0, 1.0], &[1.0, 2.0]).unwrap());
        assert!(!dominates(&[1.0, 1.0], &[1.0, 1.0]).unwrap());
        assert!(dominates(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn front_cases() {
        let f = pareto_front(&pts(&[&[1.0, 1.0], &[2.0, 2.0]]));
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].objectives, vec![2.0, 2.0]);
        let f = pareto_front(&pts(&[&[1.0, 2.0], &[2.0, 1.0], &[0.0, 0.0]]));
        assert_eq!(f.iter().map(|p| p.objectives.clone()).collect::<Vec<_>>(), vec![vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(pareto_front(&[]).is_empty());
        let f = pareto_front(&pts(&[&[1.0, 2.0], &[1.0, 2.0]]));
        assert_eq!(f.len(), 1);
    }

    #[test]
    fn reference_point_below_everything() {
        let r = reference_point(&[vec![1.0, 5.0], vec![3.0, 5.0]]);
        assert!((r[0] - 0.8).abs() < 1e-15);
        assert!((r[1] - 4.5).abs() < 1e-15);
    }

    #[test]
    fn json_lines_roundtrip() {
        let front = FrontSet::from_points(&pts(&[&[1.0, 2.0], &[2.0, 1.0]]));
        let text = front.to_json_lines();
        assert_eq!(text.lines().count(), 2);
        let back = FrontSet::from_json_lines(&text).unwrap();
        assert_eq!(back, front.records());
    }
}
