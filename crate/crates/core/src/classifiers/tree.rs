//! CART trees shared by the forest and the booster.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Flat binary tree; node 0 is the root. Samples with
/// `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn rec(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + rec(nodes, left).max(rec(nodes, right)),
            }
        }
        rec(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    /// Binary 0/1 targets.
    Gini,
    /// Real-valued targets, variance reduction.
    SquaredError,
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub criterion: Criterion,
    pub max_depth: Option<usize>,
    /// Features examined per split; `None` means all.
    pub max_features: Option<usize>,
    pub min_samples_split: usize,
}

/// Column-major copy of the training matrix.
pub struct Columns {
    pub cols: Vec<Vec<f64>>,
    pub n_rows: usize,
}

impl Columns {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        let cols = (0..d)
            .map(|f| rows.iter().map(|r| r[f]).collect())
            .collect();
        Self {
            cols,
            n_rows: rows.len(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.cols.len()
    }
}

#[derive(Debug, Clone, Copy)]
struct SplitCandidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

// Parallelizing the per-feature scan only pays off for large nodes.
const PAR_THRESHOLD: usize = 4096;

fn best_split_for_feature(
    col: &[f64],
    targets: &[f64],
    idx: &[usize],
    criterion: Criterion,
    feature: usize,
) -> Option<SplitCandidate> {
    let mut order: Vec<(f64, f64)> = idx.iter().map(|&i| (col[i], targets[i])).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    if order[0].0 == order[order.len() - 1].0 {
        return None;
    }
    let n = order.len() as f64;
    let total: f64 = order.iter().map(|p| p.1).sum();
    let parent_score = match criterion {
        Criterion::Gini => {
            let p = total / n;
            1.0 - p * p - (1.0 - p) * (1.0 - p)
        }
        Criterion::SquaredError => total * total / n,
    };
    let mut best: Option<SplitCandidate> = None;
    let mut left_sum = 0.0;
    for k in 0..order.len() - 1 {
        left_sum += order[k].1;
        let (v, next) = (order[k].0, order[k + 1].0);
        if v == next {
            continue;
        }
        let nl = (k + 1) as f64;
        let nr = n - nl;
        let right_sum = total - left_sum;
        let gain = match criterion {
            Criterion::Gini => {
                let gini = |s: f64, m: f64| {
                    let p = s / m;
                    1.0 - p * p - (1.0 - p) * (1.0 - p)
                };
                parent_score - (nl / n) * gini(left_sum, nl) - (nr / n) * gini(right_sum, nr)
            }
            Criterion::SquaredError => {
                left_sum * left_sum / nl + right_sum * right_sum / nr - parent_score
            }
        };
        if best.is_none_or(|b| gain > b.gain) {
            let mut threshold = v + (next - v) / 2.0;
            if threshold >= next {
                threshold = v;
            }
            best = Some(SplitCandidate {
                feature,
                threshold,
                gain,
            });
        }
    }
    best
}

fn pick_best(cands: impl IntoIterator<Item = Option<SplitCandidate>>) -> Option<SplitCandidate> {
    // Candidates arrive in ascending feature order, so a strict comparison
    // keeps the lowest feature index on ties.
    let mut best: Option<SplitCandidate> = None;
    for c in cands.into_iter().flatten() {
        if best.is_none_or(|b| c.gain > b.gain) {
            best = Some(c);
        }
    }
    best
}

fn is_constant(targets: &[f64], idx: &[usize]) -> bool {
    let first = targets[idx[0]];
    idx.iter().all(|&i| targets[i] == first)
}

/// Grows a tree on the (possibly repeated) sample indices `idx`.
/// `leaf_value` maps the samples reaching a leaf to its output.
pub fn grow(
    data: &Columns,
    targets: &[f64],
    idx: Vec<usize>,
    params: &TreeParams,
    mut rng: Option<&mut ChaCha8Rng>,
    leaf_value: &dyn Fn(&[usize]) -> f64,
) -> Tree {
    let d = data.n_features();
    let mut nodes: Vec<Node> = Vec::new();
    // (samples, depth, slot in `nodes` to fill)
    let mut stack: Vec<(Vec<usize>, usize, usize)> = Vec::new();
    nodes.push(Node::Leaf { value: 0.0 });
    stack.push((idx, 0, 0));

    while let Some((samples, depth, slot)) = stack.pop() {
        let stop = samples.len() < params.min_samples_split.max(2)
            || params.max_depth.is_some_and(|m| depth >= m)
            || is_constant(targets, &samples);
        let split = if stop {
            None
        } else {
            find_split(data, targets, &samples, params, rng.as_deref_mut(), d)
        };
        let Some(split) = split else {
            nodes[slot] = Node::Leaf {
                value: leaf_value(&samples),
            };
            continue;
        };
        let col = &data.cols[split.feature];
        let (left, right): (Vec<usize>, Vec<usize>) =
            samples.iter().partition(|&&i| col[i] <= split.threshold);
        let (l, r) = (nodes.len(), nodes.len() + 1);
        nodes.push(Node::Leaf { value: 0.0 });
        nodes.push(Node::Leaf { value: 0.0 });
        nodes[slot] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: l,
            right: r,
        };
        // Right pushed first so the left subtree is expanded first.
        stack.push((right, depth + 1, r));
        stack.push((left, depth + 1, l));
    }
    Tree { nodes }
}

fn find_split(
    data: &Columns,
    targets: &[f64],
    samples: &[usize],
    params: &TreeParams,
    rng: Option<&mut ChaCha8Rng>,
    d: usize,
) -> Option<SplitCandidate> {
    let eval =
        |f: usize| best_split_for_feature(&data.cols[f], targets, samples, params.criterion, f);
    match (params.max_features, rng) {
        (Some(k), Some(rng)) if k < d => {
            let mut perm: Vec<usize> = (0..d).collect();
            perm.shuffle(rng);
            let mut chosen: Vec<usize> = perm[..k].to_vec();
            chosen.sort_unstable();
            let mut best = pick_best(chosen.iter().map(|&f| eval(f)));
            // Keep drawing features until some split is possible.
            let mut next = k;
            while best.is_none() && next < d {
                best = eval(perm[next]);
                next += 1;
            }
            best
        }
        _ => {
            if samples.len() >= PAR_THRESHOLD {
                let cands: Vec<Option<SplitCandidate>> = (0..d).into_par_iter().map(eval).collect();
                pick_best(cands)
            } else {
                pick_best((0..d).map(eval))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_leaf(t: &[f64]) -> impl Fn(&[usize]) -> f64 + '_ {
        move |idx| idx.iter().map(|&i| t[i]).sum::<f64>() / idx.len() as f64
    }

    #[test]
    fn stump_on_separable_data() {
        let rows: Vec<Vec<f64>> = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let y = vec![0.0, 0.0, 1.0, 1.0];
        let params = TreeParams {
            criterion: Criterion::Gini,
            max_depth: None,
            max_features: None,
            min_samples_split: 2,
        };
        let t = grow(
            &Columns::from_rows(&rows),
            &y,
            (0..4).collect(),
            &params,
            None,
            &mean_leaf(&y),
        );
        assert_eq!(t.nodes.len(), 3);
        match t.nodes[0] {
            Node::Split {
                feature, threshold, ..
            } => {
                assert_eq!(feature, 0);
                assert_eq!(threshold, 1.5);
            }
            _ => panic!("root should split"),
        }
        assert_eq!(t.predict(&[0.5]), 0.0);
        assert_eq!(t.predict(&[2.5]), 1.0);
    }

    #[test]
    fn ties_prefer_lowest_feature() {
        // Both features separate perfectly; feature 0 must win.
        let rows: Vec<Vec<f64>> = vec![
            vec![0.0, 10.0],
            vec![1.0, 11.0],
            vec![2.0, 12.0],
            vec![3.0, 13.0],
        ];
        let y = vec![0.0, 0.0, 1.0, 1.0];
        let params = TreeParams {
            criterion: Criterion::SquaredError,
            max_depth: Some(1),
            max_features: None,
            min_samples_split: 2,
        };
        let t = grow(
            &Columns::from_rows(&rows),
            &y,
            (0..4).collect(),
            &params,
            None,
            &mean_leaf(&y),
        );
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn depth_limit_respected() {
        let rows: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..64).map(|i| (i % 2) as f64).collect();
        let params = TreeParams {
            criterion: Criterion::Gini,
            max_depth: Some(3),
            max_features: None,
            min_samples_split: 2,
        };
        let t = grow(
            &Columns::from_rows(&rows),
            &y,
            (0..64).collect(),
            &params,
            None,
            &mean_leaf(&y),
        );
        assert!(t.depth() <= 3);
    }
}
