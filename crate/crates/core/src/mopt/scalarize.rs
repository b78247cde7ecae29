use super::MoptError;

/// Augmented Chebyshev scalarization of a larger-is-better objective
/// vector; the result is smaller-is-better.
///
/// With normalized losses `g_j = (hi_j - f_j) / (hi_j - lo_j)`:
/// `s = max_j w_j g_j + rho Σ_j w_j g_j`.
pub fn scalarize(objectives: &[f64], weights: &[f64], rho: f64, ranges: &[(f64, f64)]) -> Result<f64, MoptError> {
    let m = objectives.len();
    if weights.len() != m || ranges.len() != m {
        return Err(MoptError::Dimension(format!(
            "{m} objectives, {} weights, {} ranges",
            weights.len(),
            ranges.len()
        )));
    }
    if weights.iter().any(|w| *w < 0.0) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(MoptError::Invalid("scalarization weights must lie on the simplex".into()));
    }
    if !(rho > 0.0) {
        return Err(MoptError::Invalid(format!("rho {rho} must be positive")));
    }
    if let Some((lo, hi)) = ranges.iter().find(|(lo, hi)| !(hi > lo)) {
        return Err(MoptError::Invalid(format!("degenerate normalization range [{lo}, {hi}]")));
    }
    Ok(scalarize_unchecked(objectives, weights, rho, ranges))
}

pub(crate) fn scalarize_unchecked(objectives: &[f64], weights: &[f64], rho: f64, ranges: &[(f64, f64)]) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    let mut total = 0.0;
    for ((f, w), (lo, hi)) in objectives.iter().zip(weights).zip(ranges) {
        let g = w * (hi - f) / (hi - lo);
        worst = worst.max(g);
        total += g;
    }
    worst + rho * total
}

/// Running min/max per objective, widened where an objective is constant.
pub fn normalization_ranges(objectives: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let m = objectives.first().map_or(0, Vec::len);
    (0..m)
        .map(|j| {
            let lo = objectives.iter().map(|o| o[j]).fold(f64::INFINITY, f64::min);
            let hi = objectives.iter().map(|o| o[j]).fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                (lo, hi)
            } else {
                let pad = 1e-9 * lo.abs().max(1.0);
                (lo - pad, hi + pad)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ideal_point_scores_zero() {
        let r = [(0.0, 2.0), (-1.0, 1.0)];
        assert_eq!(scalarize(&[2.0, 1.0], &[0.3, 0.7], 0.05, &r).unwrap(), 0.0);
    }

    #[test]
    fn plug_in_value() {
        let r = [(0.0, 2.0), (-1.0, 1.0)];
        let s = scalarize(&[0.0, 0.37], &[1.0, 0.0], 0.05, &r).unwrap();
        assert!((s - 1.05).abs() < 1e-15);
    }

    #[test]
    fn monotone_in_each_objective() {
        let r = [(0.0, 1.0), (0.0, 1.0)];
        let w = [0.4, 0.6];
        let mut prev = f64::INFINITY;
        for k in 0..=20 {
            let f = k as f64 / 20.0;
            let s = scalarize(&[f, 0.3], &w, 0.05, &r).unwrap();
            assert!(s <= prev);
            prev = s;
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let r = [(0.0, 1.0), (0.0, 1.0)];
        assert!(scalarize(&[0.0, 0.0], &[0.5, 0.6], 0.05, &r).is_err());
        assert!(scalarize(&[0.0, 0.0], &[0.5, 0.5], 0.0, &r).is_err());
        assert!(scalarize(&[0.0, 0.0], &[0.5, 0.5], 0.05, &[(1.0, 1.0), (0.0, 1.0)]).is_err());
    }
}
