//! Significance and manifold tables derived from evaluation reports.

use serde::{Deserialize, Serialize};

use super::evaluate::EvalReport;
use crate::analysis::{
    bh_fdr, epsilon_squared, kruskal_wallis, spearman_rho, SignificanceRecord, SIGNIFICANCE_Q,
};
use crate::error::{Error, Result};

/// How Kruskal–Wallis groups are formed within one
/// (dataset, generator, metric) cell.
pub const REPLICATION_UNIT: &str = "factor=feature: one group per feature config, observations are the \
classifiers' scores; factor=classifier: one group per classifier, observations are the feature configs' scores";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrechetRow {
    pub dataset: String,
    pub config: String,
    pub distance: f64,
    pub log10_distance: f64,
    /// Mean over classifiers of the cross-generator average.
    pub mean_accuracy: f64,
    pub mean_mcc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrccRow {
    pub dataset: String,
    pub n_pairs: usize,
    /// Spearman rho between log10 distance and mean MCC; `None` when undefined.
    pub rho: Option<f64>,
    pub abs_rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub replication_unit: String,
    pub significance: Vec<SignificanceRecord>,
    pub frechet: Vec<FrechetRow>,
    pub srcc: Vec<SrccRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Metric {
    Accuracy,
    Mcc,
}

impl Metric {
    fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::Mcc => "mcc",
        }
    }
}

struct Cell {
    dataset: String,
    generator: String,
    metric: Metric,
    factor: &'static str,
    groups: Vec<Vec<f64>>,
}

fn cells_for(r: &EvalReport) -> Vec<Cell> {
    let configs = r.configs();
    let classifiers = r.classifiers();
    let mut out = Vec::new();
    for g in &r.generators {
        for metric in [Metric::Accuracy, Metric::Mcc] {
            let value = |config, classifier| {
                r.cells
                    .iter()
                    .find(|c| &c.generator == g && c.config == config && c.classifier == classifier)
                    .map(|c| match metric {
                        Metric::Accuracy => c.accuracy,
                        Metric::Mcc => c.mcc,
                    })
            };
            let by_feature: Vec<Vec<f64>> = configs
                .iter()
                .map(|&cf| classifiers.iter().filter_map(|&k| value(cf, k)).collect())
                .collect();
            let by_classifier: Vec<Vec<f64>> = classifiers
                .iter()
                .map(|&k| configs.iter().filter_map(|&cf| value(cf, k)).collect())
                .collect();
            for (factor, groups) in [("feature", by_feature), ("classifier", by_classifier)] {
                out.push(Cell {
                    dataset: r.dataset.clone(),
                    generator: g.clone(),
                    metric,
                    factor,
                    groups,
                });
            }
        }
    }
    out
}

/// Kruskal–Wallis per (dataset, generator, metric, factor) cell with
/// BH-FDR across all cells, plus Fréchet / SRCC tables per dataset.
/// Cells whose factor has fewer than two levels (or too few observations)
/// are skipped; if nothing remains the call fails.
pub fn analyze_reports(reports: &[EvalReport]) -> Result<AnalysisReport> {
    let mut tested = Vec::new();
    let mut max_levels = 0;
    for r in reports {
        for cell in cells_for(r) {
            let groups: Vec<Vec<f64>> = cell
                .groups
                .iter()
                .filter(|g| !g.is_empty())
                .cloned()
                .collect();
            max_levels = max_levels.max(groups.len());
            match kruskal_wallis(&groups) {
                Ok(kw) => tested.push((cell, kw)),
                Err(Error::GroupCount { .. }) | Err(Error::InsufficientData(_)) => {
                    log::warn!(
                        "skipping {} / {} / {} / {}: not enough levels or observations",
                        cell.dataset,
                        cell.generator,
                        cell.metric.name(),
                        cell.factor
                    );
                }
                Err(e) => return Err(e),
            }
        }
    }
    if tested.is_empty() {
        return Err(Error::GroupCount {
            min: 2,
            got: max_levels.min(1),
        });
    }
    let p: Vec<f64> = tested.iter().map(|(_, kw)| kw.p_value).collect();
    let q = bh_fdr(&p)?;
    let significance = tested
        .into_iter()
        .zip(q)
        .map(|((cell, kw), q)| SignificanceRecord {
            dataset: cell.dataset,
            generator: cell.generator,
            metric: cell.metric.name().into(),
            factor: cell.factor.into(),
            h: kw.h,
            epsilon_squared: epsilon_squared(kw.h, kw.n),
            p_value: kw.p_value,
            q_value: q,
            significant: q < SIGNIFICANCE_Q,
        })
        .collect();

    let mut frechet = Vec::new();
    let mut srcc = Vec::new();
    for r in reports {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for f in &r.frechet {
            let Some((acc, mcc)) = r.config_mean(f.config) else {
                continue;
            };
            frechet.push(FrechetRow {
                dataset: r.dataset.clone(),
                config: f.config.name(),
                distance: f.distance,
                log10_distance: f.log10_distance,
                mean_accuracy: acc,
                mean_mcc: mcc,
            });
            xs.push(f.log10_distance);
            ys.push(mcc);
        }
        let rho = spearman_rho(&xs, &ys).ok();
        srcc.push(SrccRow {
            dataset: r.dataset.clone(),
            n_pairs: xs.len(),
            rho,
            abs_rho: rho.map(f64::abs),
        });
    }
    Ok(AnalysisReport {
        replication_unit: REPLICATION_UNIT.into(),
        significance,
        frechet,
        srcc,
    })
}
