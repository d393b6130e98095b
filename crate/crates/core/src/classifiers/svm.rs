//! RBF-kernel C-SVC trained with SMO (second-order working-set selection),
//! calibrated with a Platt sigmoid fitted on the training margins.

use std::collections::{HashMap, VecDeque};
use std::rc::Rc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    /// `None` selects 1 / (d * Var(X)).
    pub gamma: Option<f64>,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            gamma: None,
            tolerance: 1e-3,
            max_iter: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub gamma: f64,
    pub rho: f64,
    pub support_vectors: Vec<Vec<f64>>,
    /// alpha_i * y_i per support vector.
    pub dual_coef: Vec<f64>,
    pub platt_a: f64,
    pub platt_b: f64,
}

/// Solution of the dual problem before calibration.
#[derive(Debug, Clone)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    /// Training decision values, sum_k alpha_k y_k K(x_k, x_i) - rho.
    pub decision: Vec<f64>,
    pub iterations: usize,
}

const TAU: f64 = 1e-12;
const FULL_MATRIX_LIMIT: usize = 4000;
const CACHE_BYTES: usize = 256 << 20;

pub fn scale_gamma(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len() * rows[0].len();
    let mean = rows.iter().flatten().sum::<f64>() / n as f64;
    let var = rows
        .iter()
        .flatten()
        .map(|v| (v - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    if var > 0.0 {
        1.0 / (rows[0].len() as f64 * var)
    } else {
        1.0
    }
}

pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

enum Kernel<'a> {
    Full(Vec<Rc<[f64]>>),
    Cached {
        rows: &'a [Vec<f64>],
        gamma: f64,
        cache: HashMap<usize, Rc<[f64]>>,
        lru: VecDeque<usize>,
        capacity: usize,
    },
}

impl<'a> Kernel<'a> {
    fn new(rows: &'a [Vec<f64>], gamma: f64) -> Self {
        let n = rows.len();
        if n <= FULL_MATRIX_LIMIT {
            let full = (0..n)
                .into_par_iter()
                .map(|i| {
                    rows.iter()
                        .map(|r| rbf(&rows[i], r, gamma))
                        .collect::<Vec<f64>>()
                })
                .collect::<Vec<_>>()
                .into_iter()
                .map(Rc::from)
                .collect();
            Kernel::Full(full)
        } else {
            Kernel::Cached {
                rows,
                gamma,
                cache: HashMap::new(),
                lru: VecDeque::new(),
                capacity: (CACHE_BYTES / (8 * n)).max(2),
            }
        }
    }

    fn row(&mut self, i: usize) -> Rc<[f64]> {
        match self {
            Kernel::Full(m) => m[i].clone(),
            Kernel::Cached {
                rows,
                gamma,
                cache,
                lru,
                capacity,
            } => {
                if let Some(r) = cache.get(&i) {
                    let r = r.clone();
                    if let Some(pos) = lru.iter().position(|&k| k == i) {
                        lru.remove(pos);
                    }
                    lru.push_back(i);
                    return r;
                }
                let g = *gamma;
                let row: Rc<[f64]> = rows
                    .par_iter()
                    .map(|r| rbf(&rows[i], r, g))
                    .collect::<Vec<f64>>()
                    .into();
                if cache.len() >= *capacity {
                    if let Some(old) = lru.pop_front() {
                        cache.remove(&old);
                    }
                }
                cache.insert(i, row.clone());
                lru.push_back(i);
                row
            }
        }
    }
}

/// Solves min 1/2 a'Qa - e'a s.t. 0 <= a <= C, y'a = 0 with Q_ij = y_i y_j K_ij.
pub fn solve_dual(
    rows: &[Vec<f64>],
    y: &[f64],
    c: f64,
    gamma: f64,
    eps: f64,
    max_iter: usize,
) -> DualSolution {
    let n = rows.len();
    let mut kernel = Kernel::new(rows, gamma);
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    // K_ii = 1 for the RBF kernel.
    let qd = vec![1.0; n];
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;
    let mut iter = 0;

    while iter < max_iter {
        // Working set selection.
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel: Option<usize> = None;
        for t in 0..n {
            if y[t] > 0.0 {
                if !upper(alpha[t]) && -grad[t] >= gmax {
                    gmax = -grad[t];
                    i_sel = Some(t);
                }
            } else if !lower(alpha[t]) && grad[t] >= gmax {
                gmax = grad[t];
                i_sel = Some(t);
            }
        }
        let Some(i) = i_sel else { break };
        let ki = kernel.row(i);
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel: Option<usize> = None;
        let mut obj_min = f64::INFINITY;
        for j in 0..n {
            let qij = y[i] * y[j] * ki[j];
            if y[j] > 0.0 {
                if !lower(alpha[j]) {
                    let diff = gmax + grad[j];
                    if grad[j] >= gmax2 {
                        gmax2 = grad[j];
                    }
                    if diff > 0.0 {
                        let quad = qd[i] + qd[j] - 2.0 * y[i] * qij;
                        let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                        if obj <= obj_min {
                            j_sel = Some(j);
                            obj_min = obj;
                        }
                    }
                }
            } else if !upper(alpha[j]) {
                let diff = gmax - grad[j];
                if -grad[j] >= gmax2 {
                    gmax2 = -grad[j];
                }
                if diff > 0.0 {
                    let quad = qd[i] + qd[j] + 2.0 * y[i] * qij;
                    let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                    if obj <= obj_min {
                        j_sel = Some(j);
                        obj_min = obj;
                    }
                }
            }
        }
        if gmax + gmax2 < eps {
            break;
        }
        let Some(j) = j_sel else { break };
        iter += 1;
        let kj = kernel.row(j);

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = y[i] * y[j] * ki[j];
        if y[i] != y[j] {
            let quad = qd[i] + qd[j] + 2.0 * qij;
            let delta = (-grad[i] - grad[j]) / if quad > 0.0 { quad } else { TAU };
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = qd[i] + qd[j] - 2.0 * qij;
            let delta = (grad[i] - grad[j]) / if quad > 0.0 { quad } else { TAU };
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for k in 0..n {
            grad[k] += y[i] * y[k] * ki[k] * di + y[j] * y[k] * kj[k] * dj;
        }
    }

    // Offset from free variables, or the midpoint of the feasible interval.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if upper(alpha[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    };
    // grad_t = y_t sum_k alpha_k y_k K_tk - 1
    let decision = (0..n).map(|t| y[t] * (grad[t] + 1.0) - rho).collect();
    DualSolution {
        alpha,
        rho,
        decision,
        iterations: iter,
    }
}

/// Platt sigmoid P(y=1|f) = 1 / (1 + exp(A f + B)) fitted by Newton's
/// method with backtracking on smoothed targets.
pub fn fit_platt(decision: &[f64], labels: &[u8]) -> (f64, f64) {
    let prior1 = labels.iter().filter(|&&v| v == 1).count() as f64;
    let prior0 = labels.len() as f64 - prior1;
    let hi = (prior1 + 1.0) / (prior1 + 2.0);
    let lo = 1.0 / (prior0 + 2.0);
    let t: Vec<f64> = labels
        .iter()
        .map(|&v| if v == 1 { hi } else { lo })
        .collect();
    let objective = |a: f64, b: f64| -> f64 {
        decision
            .iter()
            .zip(&t)
            .map(|(&f, &ti)| {
                let z = f * a + b;
                if z >= 0.0 {
                    ti * z + (-z).exp().ln_1p()
                } else {
                    (ti - 1.0) * z + z.exp().ln_1p()
                }
            })
            .sum()
    };
    let (max_iter, min_step, sigma) = (100, 1e-10, 1e-12);
    let mut a = 0.0;
    let mut b = ((prior0 + 1.0) / (prior1 + 1.0)).ln();
    let mut fval = objective(a, b);
    for _ in 0..max_iter {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (sigma, sigma, 0.0, 0.0, 0.0);
        for (&f, &ti) in decision.iter().zip(&t) {
            let z = f * a + b;
            let (p, q) = if z >= 0.0 {
                let e = (-z).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = z.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
            let d1 = ti - p;
            g1 += f * d1;
            g2 += d1;
        }
        if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        while step >= min_step {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if step < min_step {
            break;
        }
    }
    (a, b)
}

pub fn platt_probability(f: f64, a: f64, b: f64) -> f64 {
    let z = f * a + b;
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

pub fn fit(rows: &[Vec<f64>], labels: &[u8], params: &SvmParams) -> Result<SvmModel> {
    if params.c.is_nan() || params.c <= 0.0 {
        return Err(Error::InvalidFeature(format!(
            "C must be positive, got {}",
            params.c
        )));
    }
    let gamma = params.gamma.unwrap_or_else(|| scale_gamma(rows));
    let y: Vec<f64> = labels
        .iter()
        .map(|&v| if v == 1 { 1.0 } else { -1.0 })
        .collect();
    let sol = solve_dual(rows, &y, params.c, gamma, params.tolerance, params.max_iter);
    let (platt_a, platt_b) = fit_platt(&sol.decision, labels);
    let (mut sv, mut coef) = (Vec::new(), Vec::new());
    for (k, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            sv.push(rows[k].clone());
            coef.push(a * y[k]);
        }
    }
    Ok(SvmModel {
        gamma,
        rho: sol.rho,
        support_vectors: sv,
        dual_coef: coef,
        platt_a,
        platt_b,
    })
}

impl SvmModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coef)
            .map(|(sv, &c)| c * rbf(sv, x, self.gamma))
            .sum::<f64>()
            - self.rho
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        platt_probability(self.decision(x), self.platt_a, self.platt_b)
    }
}
