//! Mixed-generator protocol: the GenAI class is resampled across generators
//! to match the natural count, and each config is scored by the mean and
//! spread over the three classifiers.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cache::FeatureTable;
use super::evaluate::{fit_model, rows_for, score, REPORT_FORMAT_VERSION};
use super::manifest::{stratified_split, DatasetManifest, Label};
use crate::classifiers::{ClassifierKind, DEFAULT_THRESHOLD};
use crate::error::{Error, Result};
use crate::fusion::{fit_standardizer, FeatureConfig, FeatureSet};

const MIXED_TAG: &str = "mixed";

#[derive(Debug, Clone)]
pub struct CompositionOptions {
    pub dataset: String,
    pub configs: Vec<FeatureConfig>,
    pub n_rounds: usize,
    pub seed: u64,
    pub test_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierScore {
    pub classifier: ClassifierKind,
    /// Mean over rounds.
    pub accuracy: f64,
    pub mcc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionRow {
    pub config: FeatureConfig,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub mcc_mean: f64,
    pub mcc_std: f64,
    pub per_classifier: Vec<ClassifierScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionReport {
    pub format_version: u32,
    pub dataset: String,
    pub seed: u64,
    pub n_rounds: usize,
    pub manifest_hash: String,
    pub natural_count: usize,
    /// Sampled GenAI images per generator, summed over rounds.
    pub sampled: BTreeMap<String, usize>,
    pub rows: Vec<CompositionRow>,
}

/// Draws `count` GenAI entries: each draw picks a generator uniformly among
/// those with images left, then an image uniformly within it.
pub fn sample_composition(m: &DatasetManifest, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut pools: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in m.entries.iter().enumerate() {
        if e.label == Label::Genai {
            pools.entry(&e.generator).or_default().push(i);
        }
    }
    let mut pools: Vec<Vec<usize>> = pools.into_values().collect();
    let mut out = Vec::with_capacity(count);
    while out.len() < count && !pools.is_empty() {
        let g = rng.random_range(0..pools.len());
        let k = rng.random_range(0..pools[g].len());
        out.push(pools[g].swap_remove(k));
        if pools[g].is_empty() {
            pools.remove(g);
        }
    }
    out.sort_unstable();
    out
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn random_composition_eval(
    m: &DatasetManifest,
    table: &FeatureTable,
    opts: &CompositionOptions,
) -> Result<CompositionReport> {
    let generators = m.generators();
    if generators.len() < 2 {
        return Err(Error::GeneratorCount(generators.len()));
    }
    if opts.n_rounds == 0 {
        return Err(Error::InsufficientData(
            "n_rounds must be at least 1".into(),
        ));
    }
    if m.len() != table.len() {
        return Err(Error::Length(m.len(), table.len()));
    }
    let naturals: Vec<usize> = (0..m.len())
        .filter(|&i| m.entries[i].label == Label::Natural)
        .collect();
    let kinds = ClassifierKind::ALL;
    // (config, classifier) -> per-round (accuracy, mcc)
    let mut scores: BTreeMap<(FeatureConfig, ClassifierKind), Vec<(f64, f64)>> = BTreeMap::new();
    let mut sampled: BTreeMap<String, usize> = BTreeMap::new();

    for round in 0..opts.n_rounds {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(round as u64);
        let fakes = sample_composition(m, naturals.len(), &mut rng);
        for &i in &fakes {
            *sampled.entry(m.entries[i].generator.clone()).or_default() += 1;
        }
        let mut idx: Vec<usize> = naturals.iter().chain(&fakes).copied().collect();
        idx.sort_unstable();
        let mut sub = m.subset(&idx);
        for e in &mut sub.entries {
            if e.label == Label::Genai {
                e.generator = MIXED_TAG.into();
            }
        }
        let sub_table = table.subset(&idx);
        let split = stratified_split(
            &sub,
            opts.test_fraction,
            opts.seed.wrapping_add(round as u64),
            false,
        )?;
        let train_sets: Vec<&FeatureSet> =
            split.train.iter().map(|&i| &sub_table.sets[i]).collect();
        let stats = fit_standardizer(&train_sets)?;
        let labels = sub.labels();
        let y_test: Vec<u8> = split.test.iter().map(|&i| labels[i]).collect();
        for &config in &opts.configs {
            let test_rows = rows_for(&sub_table, &split.test, &stats, config)?;
            for kind in kinds {
                let model = fit_model(
                    &sub_table,
                    &labels,
                    &split.train,
                    &stats,
                    config,
                    kind,
                    opts.seed,
                )?;
                let c = score(&model, &test_rows, &y_test, DEFAULT_THRESHOLD)?;
                scores
                    .entry((config, kind))
                    .or_default()
                    .push((c.accuracy(), c.mcc()));
            }
        }
        log::info!("composition round {} of {} done", round + 1, opts.n_rounds);
    }

    let rows = opts
        .configs
        .iter()
        .map(|&config| {
            let per_classifier: Vec<ClassifierScore> = kinds
                .iter()
                .map(|&k| {
                    let s = &scores[&(config, k)];
                    let n = s.len() as f64;
                    ClassifierScore {
                        classifier: k,
                        accuracy: s.iter().map(|p| p.0).sum::<f64>() / n,
                        mcc: s.iter().map(|p| p.1).sum::<f64>() / n,
                    }
                })
                .collect();
            let acc: Vec<f64> = per_classifier.iter().map(|s| s.accuracy).collect();
            let mcc: Vec<f64> = per_classifier.iter().map(|s| s.mcc).collect();
            let (accuracy_mean, accuracy_std) = mean_std(&acc);
            let (mcc_mean, mcc_std) = mean_std(&mcc);
            CompositionRow {
                config,
                accuracy_mean,
                accuracy_std,
                mcc_mean,
                mcc_std,
                per_classifier,
            }
        })
        .collect();
    Ok(CompositionReport {
        format_version: REPORT_FORMAT_VERSION,
        dataset: opts.dataset.clone(),
        seed: opts.seed,
        n_rounds: opts.n_rounds,
        manifest_hash: m.hash(),
        natural_count: naturals.len(),
        sampled,
        rows,
    })
}
