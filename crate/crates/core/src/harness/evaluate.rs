//! Per-generator evaluation: train on the training split, then score each
//! generator's test fakes against the full natural test pool.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::cache::{extractor_version, FeatureTable};
use super::manifest::{stratified_split, DatasetManifest, Label, SplitIndices};
use crate::analysis::{frechet_distance, gaussian_summary};
use crate::classifiers::{
    decide, train, ClassifierKind, LabeledDataset, TrainedModel, DEFAULT_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::fusion::{fit_standardizer, Family, FeatureConfig, FeatureSet, StandardizationStats};
use crate::metrics::{confusion, ConfusionMatrix};

pub const REPORT_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// One detector per (config, classifier) trained on all generators.
    #[default]
    Pooled,
    /// One detector per generator, trained on natural + that generator.
    PerGenerator,
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub dataset: String,
    pub configs: Vec<FeatureConfig>,
    pub classifiers: Vec<ClassifierKind>,
    pub seed: u64,
    pub test_fraction: f64,
    pub lenient: bool,
    pub protocol: Protocol,
    pub tau: f64,
}

impl EvalOptions {
    pub fn new(dataset: impl Into<String>) -> Self {
        Self {
            dataset: dataset.into(),
            configs: FeatureConfig::SEVEN.to_vec(),
            classifiers: ClassifierKind::ALL.to_vec(),
            seed: 0,
            test_fraction: DEFAULT_TEST_FRACTION,
            lenient: false,
            protocol: Protocol::Pooled,
            tau: DEFAULT_THRESHOLD,
        }
    }

    pub fn families(&self) -> Vec<Family> {
        families_of(&self.configs)
    }
}

pub fn families_of(configs: &[FeatureConfig]) -> Vec<Family> {
    let mut f: Vec<Family> = configs.iter().flat_map(|c| c.families()).collect();
    f.sort();
    f.dedup();
    f
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub config: FeatureConfig,
    pub classifier: ClassifierKind,
    pub generator: String,
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub mcc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalAverage {
    pub config: FeatureConfig,
    pub classifier: ClassifierKind,
    pub accuracy: f64,
    pub mcc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrechetRecord {
    pub config: FeatureConfig,
    pub distance: f64,
    pub log10_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train_natural: usize,
    pub train_genai: usize,
    pub test_natural: usize,
    pub test_genai: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub dataset: String,
    pub seed: u64,
    pub protocol: Protocol,
    pub test_fraction: f64,
    pub tau: f64,
    pub manifest_hash: String,
    pub extractor_versions: BTreeMap<String, String>,
    /// Training group ("pooled" or a generator tag) to stats fingerprint.
    pub stats_fingerprints: BTreeMap<String, String>,
    pub split: SplitSizes,
    pub generators: Vec<String>,
    pub cells: Vec<EvalCell>,
    pub averages: Vec<EvalAverage>,
    /// Natural vs GenAI separation per config on pooled-standardized features.
    pub frechet: Vec<FrechetRecord>,
}

impl EvalReport {
    pub fn configs(&self) -> Vec<FeatureConfig> {
        let mut c: Vec<FeatureConfig> = self.averages.iter().map(|a| a.config).collect();
        c.dedup();
        c
    }

    pub fn classifiers(&self) -> Vec<ClassifierKind> {
        let mut c: Vec<ClassifierKind> = self.averages.iter().map(|a| a.classifier).collect();
        c.sort();
        c.dedup();
        c
    }

    pub fn average(
        &self,
        config: FeatureConfig,
        classifier: ClassifierKind,
    ) -> Option<&EvalAverage> {
        self.averages
            .iter()
            .find(|a| a.config == config && a.classifier == classifier)
    }

    /// Mean over classifiers of the per-generator averages for `config`.
    pub fn config_mean(&self, config: FeatureConfig) -> Option<(f64, f64)> {
        let rows: Vec<&EvalAverage> = self
            .averages
            .iter()
            .filter(|a| a.config == config)
            .collect();
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        Some((
            rows.iter().map(|a| a.accuracy).sum::<f64>() / n,
            rows.iter().map(|a| a.mcc).sum::<f64>() / n,
        ))
    }

    /// Checks that every average is the mean of its per-generator cells.
    pub fn validate(&self) -> Result<()> {
        for a in &self.averages {
            let cells: Vec<&EvalCell> = self
                .cells
                .iter()
                .filter(|c| c.config == a.config && c.classifier == a.classifier)
                .collect();
            if cells.is_empty() {
                return Err(Error::InsufficientData(format!(
                    "no cells for {} / {}",
                    a.config, a.classifier
                )));
            }
            let n = cells.len() as f64;
            let acc = cells.iter().map(|c| c.accuracy).sum::<f64>() / n;
            let mcc = cells.iter().map(|c| c.mcc).sum::<f64>() / n;
            if (acc - a.accuracy).abs() > 1e-12 || (mcc - a.mcc).abs() > 1e-12 {
                return Err(Error::Numerical(format!(
                    "average for {} / {} disagrees with its cells",
                    a.config, a.classifier
                )));
            }
        }
        Ok(())
    }
}

fn sets_of<'a>(table: &'a FeatureTable, idx: &[usize]) -> Vec<&'a FeatureSet> {
    idx.iter().map(|&i| &table.sets[i]).collect()
}

pub(crate) fn rows_for(
    table: &FeatureTable,
    idx: &[usize],
    stats: &StandardizationStats,
    config: FeatureConfig,
) -> Result<Vec<Vec<f64>>> {
    idx.iter()
        .map(|&i| stats.transform(&table.sets[i], config).map(|v| v.values))
        .collect()
}

pub(crate) fn score(
    model: &TrainedModel,
    rows: &[Vec<f64>],
    labels: &[u8],
    tau: f64,
) -> Result<ConfusionMatrix> {
    let preds = rows
        .iter()
        .map(|r| model.predict_proba_values(r).map(|p| decide(p, tau)))
        .collect::<Result<Vec<u8>>>()?;
    confusion(labels, &preds)
}

pub fn fit_model(
    table: &FeatureTable,
    labels: &[u8],
    train_idx: &[usize],
    stats: &StandardizationStats,
    config: FeatureConfig,
    kind: ClassifierKind,
    seed: u64,
) -> Result<TrainedModel> {
    let data = LabeledDataset {
        config,
        stats: stats.clone(),
        features: rows_for(table, train_idx, stats, config)?,
        labels: train_idx.iter().map(|&i| labels[i]).collect(),
    };
    train(&data, &kind.default_hyperparameters(), seed)
}

fn check_alignment(m: &DatasetManifest, table: &FeatureTable, families: &[Family]) -> Result<()> {
    if m.len() != table.len() {
        return Err(Error::Length(m.len(), table.len()));
    }
    for &f in families {
        let missing: Vec<String> = m
            .entries
            .iter()
            .zip(&table.sets)
            .filter(|(_, s)| s.get(f).is_none())
            .map(|(e, _)| e.path.clone())
            .collect();
        if !missing.is_empty() {
            return Err(match f {
                Family::Clip => Error::EmbeddingMiss(missing),
                _ => Error::MissingFeatures {
                    family: f.to_string(),
                    paths: missing,
                },
            });
        }
    }
    Ok(())
}

fn split_sizes(m: &DatasetManifest, s: &SplitIndices) -> SplitSizes {
    let count = |idx: &[usize], l: Label| idx.iter().filter(|&&i| m.entries[i].label == l).count();
    SplitSizes {
        train_natural: count(&s.train, Label::Natural),
        train_genai: count(&s.train, Label::Genai),
        test_natural: count(&s.test, Label::Natural),
        test_genai: count(&s.test, Label::Genai),
    }
}

pub(crate) fn log10_distance(d: f64) -> f64 {
    d.max(f64::MIN_POSITIVE).log10()
}

fn frechet_for(
    m: &DatasetManifest,
    table: &FeatureTable,
    stats: &StandardizationStats,
    config: FeatureConfig,
) -> Result<FrechetRecord> {
    let idx =
        |l: Label| -> Vec<usize> { (0..m.len()).filter(|&i| m.entries[i].label == l).collect() };
    let nat = gaussian_summary(&rows_for(table, &idx(Label::Natural), stats, config)?)?;
    let gen = gaussian_summary(&rows_for(table, &idx(Label::Genai), stats, config)?)?;
    let distance = frechet_distance(&nat, &gen)?;
    Ok(FrechetRecord {
        config,
        distance,
        log10_distance: log10_distance(distance),
    })
}

/// Runs the per-generator protocol over precomputed features.
pub fn evaluate_per_generator(
    m: &DatasetManifest,
    table: &FeatureTable,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let families = opts.families();
    check_alignment(m, table, &families)?;
    if opts.configs.is_empty() || opts.classifiers.is_empty() {
        return Err(Error::InsufficientData(
            "no configs or classifiers requested".into(),
        ));
    }
    let split = stratified_split(m, opts.test_fraction, opts.seed, opts.lenient)?;
    let labels = m.labels();
    let generators = m.generators();
    let natural_test: Vec<usize> = split
        .test
        .iter()
        .copied()
        .filter(|&i| m.entries[i].label == Label::Natural)
        .collect();
    let test_for = |g: &str| -> Vec<usize> {
        let mut idx = natural_test.clone();
        idx.extend(
            split
                .test
                .iter()
                .copied()
                .filter(|&i| m.entries[i].label == Label::Genai && m.entries[i].generator == g),
        );
        idx
    };

    let pooled_stats = fit_standardizer(&sets_of(table, &split.train))?;
    // Training groups: (name, train indices, generators evaluated, stats).
    let mut groups: Vec<(String, Vec<usize>, Vec<String>, StandardizationStats)> = Vec::new();
    match opts.protocol {
        Protocol::Pooled => groups.push((
            "pooled".into(),
            split.train.clone(),
            generators.clone(),
            pooled_stats.clone(),
        )),
        Protocol::PerGenerator => {
            for g in &generators {
                let idx: Vec<usize> = split
                    .train
                    .iter()
                    .copied()
                    .filter(|&i| {
                        m.entries[i].label == Label::Natural || &m.entries[i].generator == g
                    })
                    .collect();
                let stats = fit_standardizer(&sets_of(table, &idx))?;
                groups.push((g.clone(), idx, vec![g.clone()], stats));
            }
        }
    }

    let mut cells = Vec::new();
    for &config in &opts.configs {
        for &kind in &opts.classifiers {
            for (_, train_idx, gens, stats) in &groups {
                let model = fit_model(table, &labels, train_idx, stats, config, kind, opts.seed)?;
                for g in gens {
                    let idx = test_for(g);
                    let rows = rows_for(table, &idx, stats, config)?;
                    let y: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
                    let c = score(&model, &rows, &y, opts.tau)?;
                    cells.push(EvalCell {
                        config,
                        classifier: kind,
                        generator: g.clone(),
                        confusion: c,
                        accuracy: c.accuracy(),
                        mcc: c.mcc(),
                    });
                }
            }
            log::info!("evaluated {config} / {kind}");
        }
    }
    let averages = opts
        .configs
        .iter()
        .flat_map(|&config| opts.classifiers.iter().map(move |&k| (config, k)))
        .map(|(config, classifier)| {
            let sel: Vec<&EvalCell> = cells
                .iter()
                .filter(|c| c.config == config && c.classifier == classifier)
                .collect();
            let n = sel.len() as f64;
            EvalAverage {
                config,
                classifier,
                accuracy: sel.iter().map(|c| c.accuracy).sum::<f64>() / n,
                mcc: sel.iter().map(|c| c.mcc).sum::<f64>() / n,
            }
        })
        .collect();
    let frechet = opts
        .configs
        .iter()
        .map(|&c| frechet_for(m, table, &pooled_stats, c))
        .collect::<Result<Vec<_>>>()?;

    let report = EvalReport {
        format_version: REPORT_FORMAT_VERSION,
        dataset: opts.dataset.clone(),
        seed: opts.seed,
        protocol: opts.protocol,
        test_fraction: opts.test_fraction,
        tau: opts.tau,
        manifest_hash: m.hash(),
        extractor_versions: families
            .iter()
            .map(|&f| (f.to_string(), extractor_version(f).to_string()))
            .collect(),
        stats_fingerprints: groups
            .iter()
            .map(|(n, _, _, s)| (n.clone(), s.fingerprint.clone()))
            .collect(),
        split: split_sizes(m, &split),
        generators,
        cells,
        averages,
        frechet,
    };
    report.validate()?;
    Ok(report)
}
