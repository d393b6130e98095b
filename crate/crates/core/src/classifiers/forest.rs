//! Bagged Gini trees; probability is the fraction of positive votes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow, Columns, Criterion, Tree, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features tried per split; `None` means floor(sqrt(d)).
    pub max_features: Option<usize>,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_features: None,
            max_depth: None,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
}

pub fn fit(rows: &[Vec<f64>], y: &[u8], params: &ForestParams, seed: u64) -> ForestModel {
    let n = rows.len();
    let d = rows[0].len();
    let k = params
        .max_features
        .unwrap_or_else(|| ((d as f64).sqrt().floor() as usize).max(1))
        .clamp(1, d);
    let cols = Columns::from_rows(rows);
    let targets: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let tree_params = TreeParams {
        criterion: Criterion::Gini,
        max_depth: params.max_depth,
        max_features: Some(k),
        min_samples_split: 2,
    };
    let leaf = |idx: &[usize]| {
        let pos = idx.iter().filter(|&&i| y[i] == 1).count();
        if 2 * pos > idx.len() {
            1.0
        } else {
            0.0
        }
    };
    // One independent stream per tree keeps the result independent of
    // scheduling.
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let idx: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow(&cols, &targets, idx, &tree_params, Some(&mut rng), &leaf)
        })
        .collect();
    ForestModel { trees }
}

impl ForestModel {
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let votes: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        votes / self.trees.len() as f64
    }
}
