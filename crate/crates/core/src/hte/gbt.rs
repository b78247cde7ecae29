//! Least-squares gradient boosting over depth-limited regression trees.
//!
//! Splits use exact greedy variance reduction over midpoints between
//! consecutive distinct feature values. Ties go to the lowest feature
//! index, then the lowest threshold.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Fits one tree to `target` over all rows of `x`.
pub fn fit_tree(x: &[Vec<f64>], target: &[f64], params: TreeParams) -> RegressionTree {
    let d = x.first().map_or(0, Vec::len);
    let n = target.len();
    let sorted: Vec<Vec<usize>> = (0..d)
        .map(|k| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| x[a][k].total_cmp(&x[b][k]).then(a.cmp(&b)));
            idx
        })
        .collect();
    let mut nodes = Vec::new();
    let mut side = vec![false; n];
    grow(x, target, sorted, 0, params, &mut nodes, &mut side);
    RegressionTree { nodes }
}

// `sorted[k]` lists the rows of this node ordered by feature `k`.
fn grow(
    x: &[Vec<f64>],
    target: &[f64],
    sorted: Vec<Vec<usize>>,
    depth: usize,
    params: TreeParams,
    nodes: &mut Vec<Node>,
    side: &mut [bool],
) -> usize {
    let rows: &[usize] = match sorted.first() {
        Some(r) => r,
        None => &[],
    };
    let count = rows.len();
    let total: f64 = rows.iter().map(|&r| target[r]).sum();
    let here = nodes.len();
    let leaf_value = if count > 0 { total / count as f64 } else { 0.0 };
    nodes.push(Node::Leaf { value: leaf_value });
    if depth >= params.max_depth || count < 2 * params.min_samples_leaf.max(1) {
        return here;
    }
    let Some(best) = best_split(x, target, &sorted, total, params.min_samples_leaf.max(1)) else {
        return here;
    };
    for &r in rows {
        side[r] = x[r][best.feature] <= best.threshold;
    }
    let (left_sorted, right_sorted): (Vec<Vec<usize>>, Vec<Vec<usize>>) = sorted
        .into_iter()
        .map(|list| list.into_iter().partition(|&r| side[r]))
        .unzip();
    let left = grow(x, target, left_sorted, depth + 1, params, nodes, side);
    let right = grow(x, target, right_sorted, depth + 1, params, nodes, side);
    nodes[here] = Node::Split { feature: best.feature, threshold: best.threshold, left, right };
    here
}

fn best_split(
    x: &[Vec<f64>],
    target: &[f64],
    sorted: &[Vec<usize>],
    total: f64,
    min_leaf: usize,
) -> Option<Best> {
    let count = sorted[0].len();
    let parent = total * total / count as f64;
    let mut best: Option<Best> = None;
    for (k, order) in sorted.iter().enumerate() {
        let mut left_sum = 0.0;
        for p in 0..count - 1 {
            left_sum += target[order[p]];
            let here = x[order[p]][k];
            let next = x[order[p + 1]][k];
            if here == next {
                continue;
            }
            let nl = p + 1;
            let nr = count - nl;
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / nl as f64 + right_sum * right_sum / nr as f64 - parent;
            let improves = best.as_ref().map_or(gain > 0.0, |b| gain > b.gain);
            if improves {
                best = Some(Best { gain, feature: k, threshold: 0.5 * (here + next) });
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_split_recovers_step() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..20).map(|i| if i < 8 { -1.0 } else { 2.0 }).collect();
        let tree = fit_tree(&x, &y, TreeParams { max_depth: 1, min_samples_leaf: 1 });
        assert_eq!(tree.depth(), 1);
        match tree.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(feature, 0);
                assert_eq!(threshold, 7.5);
            }
            _ => panic!("expected a split"),
        }
        assert_eq!(tree.predict(&[3.0]), -1.0);
        assert_eq!(tree.predict(&[12.0]), 2.0);
    }

    #[test]
    fn ties_prefer_lowest_feature() {
        // Both columns identical: the split must use feature 0.
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| if i < 5 { 0.0 } else { 1.0 }).collect();
        let tree = fit_tree(&x, &y, TreeParams { max_depth: 1, min_samples_leaf: 1 });
        assert!(matches!(tree.nodes[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn min_leaf_respected() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let mut y = vec![0.0; 10];
        y[9] = 10.0;
        let tree = fit_tree(&x, &y, TreeParams { max_depth: 3, min_samples_leaf: 3 });
        fn leaf_sizes(t: &RegressionTree, x: &[Vec<f64>]) -> Vec<usize> {
            let mut counts = std::collections::BTreeMap::new();
            for row in x {
                *counts.entry(t.predict(row).to_bits()).or_insert(0usize) += 1;
            }
            counts.into_values().collect()
        }
        assert!(leaf_sizes(&tree, &x).iter().all(|&c| c >= 3));
    }

    #[test]
    fn constant_target_is_single_leaf() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let tree = fit_tree(&x, &[4.0; 10], TreeParams { max_depth: 3, min_samples_leaf: 1 });
        assert_eq!(tree.nodes.len(), 1);
        assert_eq!(tree.predict(&[100.0]), 4.0);
    }
}
