//! Logistic-loss gradient boosting with Newton-step leaves.

use serde::{Deserialize, Serialize};

use super::tree::{grow, Columns, Criterion, Tree, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostingParams {
    pub n_stages: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
}

impl Default for BoostingParams {
    fn default() -> Self {
        Self {
            n_stages: 100,
            learning_rate: 0.1,
            max_depth: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostingModel {
    pub init: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

fn sigmoid(f: f64) -> f64 {
    if f >= 0.0 {
        1.0 / (1.0 + (-f).exp())
    } else {
        let e = f.exp();
        e / (1.0 + e)
    }
}

/// Mean binomial deviance / 2 (log loss) of raw scores `f`.
pub fn log_loss(f: &[f64], y: &[u8]) -> f64 {
    let total: f64 = f
        .iter()
        .zip(y)
        .map(|(&f, &y)| {
            // log(1 + e^f) - y f, computed without overflow
            let softplus = if f > 0.0 {
                f + (-f).exp().ln_1p()
            } else {
                f.exp().ln_1p()
            };
            softplus - f64::from(y) * f
        })
        .sum();
    total / f.len() as f64
}

pub fn fit(rows: &[Vec<f64>], y: &[u8], params: &BoostingParams) -> BoostingModel {
    let n = rows.len();
    let pos = y.iter().filter(|&&v| v == 1).count() as f64;
    let init = (pos / (n as f64 - pos)).ln();
    let cols = Columns::from_rows(rows);
    let tree_params = TreeParams {
        criterion: Criterion::SquaredError,
        max_depth: Some(params.max_depth),
        max_features: None,
        min_samples_split: 2,
    };
    let mut f = vec![init; n];
    let mut trees = Vec::with_capacity(params.n_stages);
    for _ in 0..params.n_stages {
        let p: Vec<f64> = f.iter().map(|&v| sigmoid(v)).collect();
        let resid: Vec<f64> = y.iter().zip(&p).map(|(&t, &p)| f64::from(t) - p).collect();
        let leaf = |idx: &[usize]| {
            let num: f64 = idx.iter().map(|&i| resid[i]).sum();
            let den: f64 = idx.iter().map(|&i| p[i] * (1.0 - p[i])).sum();
            if den.abs() < 1e-150 {
                0.0
            } else {
                num / den
            }
        };
        let tree = grow(&cols, &resid, (0..n).collect(), &tree_params, None, &leaf);
        for (fi, row) in f.iter_mut().zip(rows) {
            *fi += params.learning_rate * tree.predict(row);
        }
        trees.push(tree);
    }
    BoostingModel {
        init,
        learning_rate: params.learning_rate,
        trees,
    }
}

impl BoostingModel {
    pub fn raw_score(&self, x: &[f64]) -> f64 {
        self.init
            + self
                .trees
                .iter()
                .map(|t| self.learning_rate * t.predict(x))
                .sum::<f64>()
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.raw_score(x))
    }

    /// Training log loss after 0, 1, ..., n_stages stages.
    pub fn staged_loss(&self, rows: &[Vec<f64>], y: &[u8]) -> Vec<f64> {
        let mut f = vec![self.init; rows.len()];
        let mut out = vec![log_loss(&f, y)];
        for t in &self.trees {
            for (fi, row) in f.iter_mut().zip(rows) {
                *fi += self.learning_rate * t.predict(row);
            }
            out.push(log_loss(&f, y));
        }
        out
    }
}
