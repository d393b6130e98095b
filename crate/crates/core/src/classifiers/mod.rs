//! Binary classifiers over fused vectors and their JSON model format.
//!
//! All three learners map a standardized vector to P(GenAI); the decision
//! rule is `p > threshold`.

pub mod boosting;
pub mod forest;
pub mod svm;
pub mod tree;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{FeatureConfig, FusedVector, StandardizationStats};

pub use boosting::{BoostingModel, BoostingParams};
pub use forest::{ForestModel, ForestParams};
pub use svm::{SvmModel, SvmParams};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Gb,
    Rf,
    Svm,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] =
        [ClassifierKind::Gb, ClassifierKind::Rf, ClassifierKind::Svm];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Gb => "gb",
            ClassifierKind::Rf => "rf",
            ClassifierKind::Svm => "svm",
        }
    }

    pub fn default_hyperparameters(self) -> Hyperparameters {
        match self {
            ClassifierKind::Gb => Hyperparameters::Gb(BoostingParams::default()),
            ClassifierKind::Rf => Hyperparameters::Rf(ForestParams::default()),
            ClassifierKind::Svm => Hyperparameters::Svm(SvmParams::default()),
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gb" | "gbm" | "gradient-boosting" => Ok(ClassifierKind::Gb),
            "rf" | "random-forest" => Ok(ClassifierKind::Rf),
            "svm" => Ok(ClassifierKind::Svm),
            other => Err(Error::Parse {
                line: None,
                message: format!("unknown classifier '{other}' (expected gb, rf or svm)"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Hyperparameters {
    Gb(BoostingParams),
    Rf(ForestParams),
    Svm(SvmParams),
}

impl Hyperparameters {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            Hyperparameters::Gb(_) => ClassifierKind::Gb,
            Hyperparameters::Rf(_) => ClassifierKind::Rf,
            Hyperparameters::Svm(_) => ClassifierKind::Svm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Learned {
    Gb(BoostingModel),
    Rf(ForestModel),
    Svm(SvmModel),
}

impl Learned {
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        match self {
            Learned::Gb(m) => m.predict_proba(x),
            Learned::Rf(m) => m.predict_proba(x),
            Learned::Svm(m) => m.predict_proba(x),
        }
    }
}

/// Training rows for one feature configuration.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub config: FeatureConfig,
    pub stats: StandardizationStats,
    pub features: Vec<Vec<f64>>,
    /// 1 = GenAI, 0 = natural.
    pub labels: Vec<u8>,
}

impl LabeledDataset {
    fn validate(&self) -> Result<()> {
        if self.features.len() != self.labels.len() {
            return Err(Error::Length(self.features.len(), self.labels.len()));
        }
        let d = self.config.dim();
        for (i, row) in self.features.iter().enumerate() {
            if row.len() != d {
                return Err(Error::DimMismatch {
                    expected: d,
                    actual: row.len(),
                    context: Some(format!("training row {i}")),
                });
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidFeature(format!("row {i} contains {v}")));
            }
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l > 1) {
            return Err(Error::InvalidFeature(format!("label {l} is not binary")));
        }
        let pos = self.labels.iter().filter(|&&l| l == 1).count();
        let neg = self.labels.len() - pos;
        if pos == 0 || neg == 0 {
            return Err(Error::SingleClass);
        }
        if pos < 2 || neg < 2 {
            return Err(Error::InsufficientData(format!(
                "need at least 2 samples per class, got {pos} positive / {neg} negative"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub kind: ClassifierKind,
    pub hyperparameters: Hyperparameters,
    pub stats: StandardizationStats,
    pub feature_mask: FeatureConfig,
    pub seed: u64,
    pub threshold: f64,
    pub parameters: Learned,
}

pub fn train(data: &LabeledDataset, hyper: &Hyperparameters, seed: u64) -> Result<TrainedModel> {
    data.validate()?;
    let (x, y) = (&data.features, &data.labels);
    let parameters = match hyper {
        Hyperparameters::Gb(p) => Learned::Gb(boosting::fit(x, y, p)),
        Hyperparameters::Rf(p) => Learned::Rf(forest::fit(x, y, p, seed)),
        Hyperparameters::Svm(p) => Learned::Svm(svm::fit(x, y, p)?),
    };
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        kind: hyper.kind(),
        hyperparameters: *hyper,
        stats: data.stats.clone(),
        feature_mask: data.config,
        seed,
        threshold: DEFAULT_THRESHOLD,
        parameters,
    })
}

/// `1` (GenAI) iff `p > tau`.
pub fn decide(p: f64, tau: f64) -> u8 {
    u8::from(p > tau)
}

impl TrainedModel {
    pub fn predict_proba(&self, x: &FusedVector) -> Result<f64> {
        if x.config != self.feature_mask {
            return Err(Error::FusionOrder(format!(
                "model expects {} features, got {}",
                self.feature_mask, x.config
            )));
        }
        if x.stats_fingerprint != self.stats.fingerprint {
            return Err(Error::StatsMismatch {
                expected: self.stats.fingerprint.clone(),
                actual: x.stats_fingerprint.clone(),
            });
        }
        self.predict_proba_values(&x.values)
    }

    /// Scores a raw standardized row without fingerprint checks.
    pub fn predict_proba_values(&self, x: &[f64]) -> Result<f64> {
        let d = self.feature_mask.dim();
        if x.len() != d {
            return Err(Error::DimMismatch {
                expected: d,
                actual: x.len(),
                context: Some("model input".into()),
            });
        }
        Ok(self.parameters.predict_proba(x))
    }

    pub fn predict(&self, x: &FusedVector, tau: Option<f64>) -> Result<u8> {
        Ok(decide(
            self.predict_proba(x)?,
            tau.unwrap_or(self.threshold),
        ))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Parse {
            line: None,
            message: e.to_string(),
        })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(s).map_err(|e| Error::Parse {
            line: Some(e.line()),
            message: e.to_string(),
        })?;
        let found = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Parse {
                line: None,
                message: "missing format_version".into(),
            })?;
        if found != u64::from(MODEL_FORMAT_VERSION) {
            return Err(Error::Version {
                found: found as u32,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let model: TrainedModel = serde_json::from_value(value).map_err(|e| Error::Parse {
            line: None,
            message: e.to_string(),
        })?;
        if model.kind != model.hyperparameters.kind() {
            return Err(Error::Parse {
                line: None,
                message: "classifier kind does not match hyperparameters".into(),
            });
        }
        model.stats.verify()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::{Family, FamilyStats};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stats() -> StandardizationStats {
        let fs = FamilyStats::fit(Family::Mscn, "t", &[&[0.0; 72], &[1.0; 72]]).unwrap();
        StandardizationStats::from_parts(vec![fs], 2)
    }

    /// Two Gaussian-ish blobs in the 72-dim MSCN space, separated along
    /// the first `k` coordinates.
    fn dataset(n: usize, seed: u64, gap: f64) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let y = (i % 2) as u8;
            let shift = if y == 1 { gap } else { -gap };
            let row = (0..72)
                .map(|j| rng.random_range(-1.0..1.0) + if j < 4 { shift } else { 0.0 })
                .collect();
            features.push(row);
            labels.push(y);
        }
        LabeledDataset {
            config: FeatureConfig::MSCN,
            stats: stats(),
            features,
            labels,
        }
    }

    fn train_accuracy(m: &TrainedModel, d: &LabeledDataset) -> f64 {
        let hits = d
            .features
            .iter()
            .zip(&d.labels)
            .filter(|(x, &y)| decide(m.predict_proba_values(x).unwrap(), 0.5) == y)
            .count();
        hits as f64 / d.labels.len() as f64
    }

    #[test]
    fn all_kinds_separate_blobs() {
        let train_set = dataset(200, 1, 1.5);
        let test_set = dataset(200, 2, 1.5);
        for kind in ClassifierKind::ALL {
            let m = train(&train_set, &kind.default_hyperparameters(), 7).unwrap();
            let acc = train_accuracy(&m, &test_set);
            assert!(acc > 0.95, "{kind}: {acc}");
        }
    }

    #[test]
    fn xor_is_learnable_by_nonlinear_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..400 {
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random_range(-1.0..1.0);
            let mut row = vec![0.0; 72];
            row[0] = a;
            row[1] = b;
            features.push(row);
            labels.push(u8::from((a > 0.0) != (b > 0.0)));
        }
        let data = LabeledDataset {
            config: FeatureConfig::MSCN,
            stats: stats(),
            features,
            labels,
        };
        for kind in ClassifierKind::ALL {
            let m = train(&data, &kind.default_hyperparameters(), 1).unwrap();
            let acc = train_accuracy(&m, &data);
            assert!(acc > 0.9, "{kind}: {acc}");
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let mut d = dataset(10, 1, 1.0);
        d.labels = vec![1; 10];
        for kind in ClassifierKind::ALL {
            assert!(matches!(
                train(&d, &kind.default_hyperparameters(), 0),
                Err(Error::SingleClass)
            ));
        }
    }

    #[test]
    fn non_finite_rejected() {
        let mut d = dataset(10, 1, 1.0);
        d.features[3][5] = f64::NAN;
        assert!(matches!(
            train(&d, &Hyperparameters::Gb(BoostingParams::default()), 0),
            Err(Error::InvalidFeature(_))
        ));
    }

    #[test]
    fn json_round_trip_preserves_predictions() {
        let d = dataset(60, 4, 1.0);
        for kind in ClassifierKind::ALL {
            let m = train(&d, &kind.default_hyperparameters(), 5).unwrap();
            let s = m.to_json().unwrap();
            let back = TrainedModel::from_json(&s).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.to_json().unwrap(), s);
            for x in &d.features {
                assert_eq!(
                    back.predict_proba_values(x).unwrap().to_bits(),
                    m.predict_proba_values(x).unwrap().to_bits()
                );
            }
        }
    }

    #[test]
    fn version_and_parse_errors() {
        let d = dataset(20, 4, 1.0);
        let m = train(
            &d,
            &Hyperparameters::Gb(BoostingParams {
                n_stages: 2,
                ..Default::default()
            }),
            0,
        )
        .unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        v["format_version"] = 99.into();
        assert!(matches!(
            TrainedModel::from_json(&v.to_string()),
            Err(Error::Version {
                found: 99,
                expected: 1
            })
        ));
        assert!(matches!(
            TrainedModel::from_json("{not json"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            TrainedModel::from_json(r#"{"format_version":1}"#),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn seeded_training_is_deterministic() {
        let d = dataset(80, 6, 0.7);
        for kind in ClassifierKind::ALL {
            let a = train(&d, &kind.default_hyperparameters(), 11)
                .unwrap()
                .to_json()
                .unwrap();
            let b = train(&d, &kind.default_hyperparameters(), 11)
                .unwrap()
                .to_json()
                .unwrap();
            assert_eq!(a, b, "{kind}");
        }
    }

    #[test]
    fn rf_seed_changes_model() {
        let d = dataset(80, 6, 0.7);
        let h = ClassifierKind::Rf.default_hyperparameters();
        assert_ne!(
            train(&d, &h, 1).unwrap().parameters,
            train(&d, &h, 2).unwrap().parameters
        );
    }

    #[test]
    fn gb_training_loss_never_increases() {
        let d = dataset(120, 8, 0.5);
        let m = boosting::fit(&d.features, &d.labels, &BoostingParams::default());
        let losses = m.staged_loss(&d.features, &d.labels);
        for w in losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn tree_models_invariant_to_power_of_two_scaling() {
        let d = dataset(80, 9, 0.8);
        let mut scaled = d.clone();
        for row in &mut scaled.features {
            for v in row.iter_mut() {
                *v *= 4.0;
            }
        }
        for kind in [ClassifierKind::Gb, ClassifierKind::Rf] {
            let a = train(&d, &kind.default_hyperparameters(), 3).unwrap();
            let b = train(&scaled, &kind.default_hyperparameters(), 3).unwrap();
            for (x, xs) in d.features.iter().zip(&scaled.features) {
                assert_eq!(
                    a.predict_proba_values(x).unwrap(),
                    b.predict_proba_values(xs).unwrap()
                );
            }
        }
    }

    #[test]
    fn decision_rule_is_strict() {
        assert_eq!(decide(0.5, 0.5), 0);
        assert_eq!(decide(0.5000001, 0.5), 1);
        assert_eq!(decide(0.0, 0.0), 0);
        assert_eq!(decide(1.0, 1.0), 0);
    }

    #[test]
    fn probabilities_in_unit_interval() {
        let d = dataset(60, 10, 0.3);
        for kind in ClassifierKind::ALL {
            let m = train(&d, &kind.default_hyperparameters(), 2).unwrap();
            for x in &d.features {
                let p = m.predict_proba_values(x).unwrap();
                assert!((0.0..=1.0).contains(&p));
            }
        }
    }
}
