//! Hypervolume of a point set relative to a reference point
//! (larger-is-better orientation).
//!
//! Two objectives use an exact sweep, three use exact slicing along the
//! last axis, more fall back to Monte Carlo with a reported stderr.

use rand::Rng;

use super::MoptError;
use crate::rng::{stream_rng, streams};

const MC_SAMPLES: usize = 200_000;
const MC_SEED: u64 = 0x4856;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypervolumeEstimate {
    pub value: f64,
    /// Zero for the exact methods.
    pub stderr: f64,
}

pub fn hypervolume(points: &[Vec<f64>], reference: &[f64]) -> Result<f64, MoptError> {
    Ok(hypervolume_estimate(points, reference)?.value)
}

pub fn hypervolume_estimate(points: &[Vec<f64>], reference: &[f64]) -> Result<HypervolumeEstimate, MoptError> {
    let dim = reference.len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(MoptError::Dimension(format!("point has {} objectives, reference {dim}", p.len())));
    }
    let kept: Vec<&[f64]> = points
        .iter()
        .map(Vec::as_slice)
        .filter(|p| p.iter().zip(reference).all(|(a, r)| a > r))
        .collect();
    if kept.len() < points.len() {
        log::warn!(
            "{} point(s) do not dominate the reference point and were dropped",
            points.len() - kept.len()
        );
    }
    let exact = |value| Ok(HypervolumeEstimate { value, stderr: 0.0 });
    match dim {
        0 => exact(0.0),
        1 => exact(kept.iter().map(|p| p[0] - reference[0]).fold(0.0, f64::max)),
        2 => exact(sweep_2d(&kept, reference)),
        3 => exact(slice_3d(&kept, reference)),
        _ => Ok(monte_carlo(&kept, reference)),
    }
}

fn sweep_2d(points: &[&[f64]], reference: &[f64]) -> f64 {
    let mut sorted: Vec<(f64, f64)> = points.iter().map(|p| (p[0], p[1])).collect();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
    let mut area = 0.0;
    let mut top = reference[1];
    for (x, y) in sorted {
        if y > top {
            area += (x - reference[0]) * (y - top);
            top = y;
        }
    }
    area
}

fn slice_3d(points: &[&[f64]], reference: &[f64]) -> f64 {
    let mut sorted: Vec<&[f64]> = points.to_vec();
    sorted.sort_by(|a, b| b[2].total_cmp(&a[2]));
    let mut volume = 0.0;
    let mut active: Vec<&[f64]> = Vec::new();
    for (k, p) in sorted.iter().enumerate() {
        active.push(p);
        let next_z = sorted.get(k + 1).map_or(reference[2], |q| q[2]);
        let depth = p[2] - next_z;
        if depth > 0.0 {
            volume += sweep_2d(&active, reference) * depth;
        }
    }
    volume
}

fn monte_carlo(points: &[&[f64]], reference: &[f64]) -> HypervolumeEstimate {
    if points.is_empty() {
        return HypervolumeEstimate { value: 0.0, stderr: 0.0 };
    }
    let dim = reference.len();
    let upper: Vec<f64> = (0..dim)
        .map(|j| points.iter().map(|p| p[j]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let box_volume: f64 = upper.iter().zip(reference).map(|(u, r)| u - r).product();
    let mut rng = stream_rng(MC_SEED, streams::HYPERVOLUME);
    let mut hits = 0usize;
    let mut sample = vec![0.0; dim];
    for _ in 0..MC_SAMPLES {
        for j in 0..dim {
            sample[j] = rng.random_range(reference[j]..upper[j]);
        }
        if points.iter().any(|p| p.iter().zip(&sample).all(|(a, s)| a >= s)) {
            hits += 1;
        }
    }
    let frac = hits as f64 / MC_SAMPLES as f64;
    HypervolumeEstimate {
        value: box_volume * frac,
        stderr: box_volume * (frac * (1.0 - frac) / MC_SAMPLES as f64).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_instances() {
        assert_eq!(hypervolume(&[vec![1.0, 1.0]], &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(hypervolume(&[vec![1.0, 2.0], vec![2.0, 1.0]], &[0.0, 0.0]).unwrap(), 3.0);
        assert_eq!(
            hypervolume(&[vec![1.0, 2.0], vec![2.0, 1.0], vec![0.5, 0.5]], &[0.0, 0.0]).unwrap(),
            3.0
        );
        assert_eq!(hypervolume(&[vec![0.5, 0.5, 0.5]], &[0.0, 0.0, 0.0]).unwrap(), 0.125);
        // Two unit-overlapping boxes: 2 + 2 - 1.
        let v = hypervolume(&[vec![2.0, 1.0, 1.0], vec![1.0, 2.0, 1.0]], &[0.0, 0.0, 0.0]).unwrap();
        assert!((v - 3.0).abs() < 1e-15);
        assert_eq!(hypervolume(&[], &[0.0, 0.0]).unwrap(), 0.0);
        assert!(hypervolume(&[vec![1.0]], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn points_not_dominating_reference_are_dropped() {
        let v = hypervolume(&[vec![1.0, 1.0], vec![-1.0, 5.0]], &[0.0, 0.0]).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn four_objectives_monte_carlo() {
        let est = hypervolume_estimate(&[vec![1.0, 1.0, 1.0, 1.0]], &[0.0; 4]).unwrap();
        assert_eq!(est.value, 1.0);
        let est = hypervolume_estimate(&[vec![1.0, 1.0, 1.0, 2.0], vec![2.0, 1.0, 1.0, 1.0]], &[0.0; 4]).unwrap();
        assert!((est.value - 3.0).abs() < 4.0 * est.stderr + 1e-12);
        assert!(est.stderr > 0.0);
    }

    proptest! {
        #[test]
        fn monotone_and_permutation_invariant(
            raw in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 3), 1..8),
            extra in prop::collection::vec(0.01f64..1.0, 3),
        ) {
            let reference = vec![0.0; 3];
            let base = hypervolume(&raw, &reference).unwrap();
            let mut rev = raw.clone();
            rev.reverse();
            prop_assert!((hypervolume(&rev, &reference).unwrap() - base).abs() < 1e-12);
            let mut more = raw.clone();
            more.push(extra);
            prop_assert!(hypervolume(&more, &reference).unwrap() >= base - 1e-12);
            let two: Vec<Vec<f64>> = raw.iter().map(|p| p[..2].to_vec()).collect();
            let mut two_more = two.clone();
            two_more.push(vec![0.5, 0.5]);
            prop_assert!(hypervolume(&two_more, &[0.0, 0.0]).unwrap() >= hypervolume(&two, &[0.0, 0.0]).unwrap() - 1e-12);
        }
    }
}
