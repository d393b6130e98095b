//! Per-family standardization and concatenation into the fused fingerprint.
//!
//! Fused layout is always `[MSCN | CLIP | MLBP]`, restricted to the families
//! enabled in a [`FeatureConfig`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Source feature family. Variant order is the fusion order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Mscn,
    Clip,
    Mlbp,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Mscn, Family::Clip, Family::Mlbp];

    pub fn dim(self) -> usize {
        match self {
            Family::Mscn => 72,
            Family::Clip => 512,
            Family::Mlbp => 36,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Mscn => "mscn",
            Family::Clip => "clip",
            Family::Mlbp => "mlbp",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mscn" => Ok(Family::Mscn),
            "clip" => Ok(Family::Clip),
            "mlbp" => Ok(Family::Mlbp),
            other => Err(Error::UnknownFamily(other.to_string())),
        }
    }
}

/// Raw output of one extractor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub family: Family,
    pub version: String,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(family: Family, version: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.len() != family.dim() {
            return Err(Error::DimMismatch {
                expected: family.dim(),
                actual: values.len(),
                context: Some(family.to_string()),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidFeature(format!(
                "{family}[{i}] is not finite"
            )));
        }
        Ok(Self {
            family,
            version: version.into(),
            values,
        })
    }
}

/// All family vectors extracted for one image.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureSet(BTreeMap<Family, FeatureVector>);

impl FeatureSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, v: FeatureVector) {
        self.0.insert(v.family, v);
    }

    pub fn get(&self, family: Family) -> Option<&FeatureVector> {
        self.0.get(&family)
    }

    pub fn families(&self) -> impl Iterator<Item = Family> + '_ {
        self.0.keys().copied()
    }
}

impl FromIterator<FeatureVector> for FeatureSet {
    fn from_iter<T: IntoIterator<Item = FeatureVector>>(iter: T) -> Self {
        let mut s = FeatureSet::new();
        for v in iter {
            s.insert(v);
        }
        s
    }
}

/// Subset of families fed to a classifier. The seven non-empty subsets are
/// the individual, pairwise and full configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeatureConfig {
    mask: u8,
}

impl FeatureConfig {
    pub const MSCN: FeatureConfig = FeatureConfig { mask: 0b001 };
    pub const CLIP: FeatureConfig = FeatureConfig { mask: 0b010 };
    pub const MLBP: FeatureConfig = FeatureConfig { mask: 0b100 };
    pub const CLIP_MLBP: FeatureConfig = FeatureConfig { mask: 0b110 };
    pub const CLIP_MSCN: FeatureConfig = FeatureConfig { mask: 0b011 };
    pub const MLBP_MSCN: FeatureConfig = FeatureConfig { mask: 0b101 };
    pub const ALL: FeatureConfig = FeatureConfig { mask: 0b111 };

    /// Individual families first, then pairs, then everything.
    pub const SEVEN: [FeatureConfig; 7] = [
        Self::MSCN,
        Self::CLIP,
        Self::MLBP,
        Self::CLIP_MLBP,
        Self::CLIP_MSCN,
        Self::MLBP_MSCN,
        Self::ALL,
    ];

    pub fn from_families(families: &[Family]) -> Result<Self> {
        let mut mask = 0u8;
        for f in families {
            let bit = Self::bit(*f);
            if mask & bit != 0 {
                return Err(Error::FusionOrder(format!("family {f} listed twice")));
            }
            mask |= bit;
        }
        if mask == 0 {
            return Err(Error::FusionOrder("empty feature configuration".into()));
        }
        Ok(Self { mask })
    }

    fn bit(f: Family) -> u8 {
        match f {
            Family::Mscn => 0b001,
            Family::Clip => 0b010,
            Family::Mlbp => 0b100,
        }
    }

    pub fn contains(self, f: Family) -> bool {
        self.mask & Self::bit(f) != 0
    }

    /// Enabled families in fusion order.
    pub fn families(self) -> Vec<Family> {
        Family::ALL
            .into_iter()
            .filter(|f| self.contains(*f))
            .collect()
    }

    pub fn dim(self) -> usize {
        self.families().iter().map(|f| f.dim()).sum()
    }

    pub fn is_single(self) -> bool {
        self.mask.count_ones() == 1
    }

    pub fn name(self) -> String {
        if self == Self::ALL {
            return "all".into();
        }
        // Tables list CLIP first in its pairs and MLBP before MSCN.
        let order = [Family::Clip, Family::Mlbp, Family::Mscn];
        order
            .iter()
            .filter(|f| self.contains(**f))
            .map(|f| f.as_str())
            .collect::<Vec<_>>()
            .join("+")
    }

    /// Parses a comma separated list such as `mscn,clip+mlbp,all`.
    /// `seven` expands to every configuration.
    pub fn parse_list(s: &str) -> Result<Vec<FeatureConfig>> {
        let mut out = Vec::new();
        for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            if tok.eq_ignore_ascii_case("seven") {
                for c in Self::SEVEN {
                    if !out.contains(&c) {
                        out.push(c);
                    }
                }
                continue;
            }
            let c: FeatureConfig = tok.parse()?;
            if !out.contains(&c) {
                out.push(c);
            }
        }
        if out.is_empty() {
            return Err(Error::FusionOrder("no feature configuration given".into()));
        }
        Ok(out)
    }
}

impl fmt::Display for FeatureConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for FeatureConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("all") {
            return Ok(Self::ALL);
        }
        let families = s
            .split('+')
            .map(str::parse)
            .collect::<Result<Vec<Family>>>()?;
        Self::from_families(&families)
    }
}

impl Serialize for FeatureConfig {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for FeatureConfig {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Mean and population variance of one family over the training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyStats {
    pub family: Family,
    pub version: String,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl FamilyStats {
    /// Fits per-dimension moments over `rows`. Dimensions whose values are
    /// all identical get variance exactly 0.
    pub fn fit(family: Family, version: &str, rows: &[&[f64]]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "{family}: need at least 2 samples, got {}",
                rows.len()
            )));
        }
        let d = rows[0].len();
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimMismatch {
                expected: d,
                actual: r.len(),
                context: Some(family.to_string()),
            });
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut variance = vec![0.0; d];
        for (k, var) in variance.iter_mut().enumerate() {
            let first = rows[0][k];
            if rows.iter().all(|r| r[k] == first) {
                mean[k] = first;
                continue;
            }
            *var = rows.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / n;
        }
        Ok(Self {
            family,
            version: version.to_string(),
            mean,
            variance,
        })
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .zip(self.mean.iter().zip(&self.variance))
            .map(|(v, (m, var))| {
                if *var > 0.0 {
                    (v - m) / var.sqrt()
                } else {
                    0.0
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub families: Vec<FamilyStats>,
    pub sample_count: usize,
    pub fingerprint: String,
}

impl StandardizationStats {
    pub fn from_parts(families: Vec<FamilyStats>, sample_count: usize) -> Self {
        let fingerprint = fingerprint(&families, sample_count);
        Self {
            families,
            sample_count,
            fingerprint,
        }
    }

    pub fn family(&self, f: Family) -> Option<&FamilyStats> {
        self.families.iter().find(|s| s.family == f)
    }

    /// Recomputes the fingerprint and compares it with the stored one.
    pub fn verify(&self) -> Result<()> {
        let fp = fingerprint(&self.families, self.sample_count);
        if fp != self.fingerprint {
            return Err(Error::StatsMismatch {
                expected: self.fingerprint.clone(),
                actual: fp,
            });
        }
        Ok(())
    }

    /// Standardizes the families of `config` and fuses them.
    pub fn transform(&self, set: &FeatureSet, config: FeatureConfig) -> Result<FusedVector> {
        let parts = config
            .families()
            .into_iter()
            .map(|f| {
                let v = set
                    .get(f)
                    .ok_or_else(|| Error::FusionOrder(format!("missing family {f}")))?;
                standardize(v, self)
            })
            .collect::<Result<Vec<_>>>()?;
        fuse(&parts, config)
    }
}

fn fingerprint(families: &[FamilyStats], sample_count: usize) -> String {
    let mut h = Sha256::new();
    h.update((sample_count as u64).to_le_bytes());
    for f in families {
        h.update(f.family.as_str().as_bytes());
        h.update([0]);
        h.update(f.version.as_bytes());
        h.update([0]);
        h.update((f.mean.len() as u64).to_le_bytes());
        for v in f.mean.iter().chain(&f.variance) {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(&h.finalize()[..16])
}

/// Fits statistics for every family present in the first sample; all
/// samples must carry the same families.
pub fn fit_standardizer(train: &[&FeatureSet]) -> Result<StandardizationStats> {
    if train.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 training samples, got {}",
            train.len()
        )));
    }
    let families: Vec<Family> = train[0].families().collect();
    let mut stats = Vec::with_capacity(families.len());
    for f in families {
        let mut rows = Vec::with_capacity(train.len());
        let mut version: Option<&str> = None;
        for s in train {
            let v = s
                .get(f)
                .ok_or_else(|| Error::InsufficientData(format!("sample without {f} features")))?;
            match version {
                None => version = Some(&v.version),
                Some(ver) if ver != v.version => {
                    return Err(Error::StatsMismatch {
                        expected: format!("{f} version {ver}"),
                        actual: format!("{f} version {}", v.version),
                    })
                }
                _ => {}
            }
            rows.push(v.values.as_slice());
        }
        stats.push(FamilyStats::fit(f, version.unwrap_or_default(), &rows)?);
    }
    Ok(StandardizationStats::from_parts(stats, train.len()))
}

/// One family after standardization, tagged with the stats it used.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedVector {
    pub family: Family,
    pub stats_fingerprint: String,
    pub values: Vec<f64>,
}

/// `z = (f - mean) / sqrt(var)`; zero-variance dimensions map to 0.
pub fn standardize(f: &FeatureVector, stats: &StandardizationStats) -> Result<StandardizedVector> {
    let fs = stats
        .family(f.family)
        .ok_or_else(|| Error::UnknownFamily(f.family.to_string()))?;
    if fs.mean.len() != f.values.len() {
        return Err(Error::DimMismatch {
            expected: fs.mean.len(),
            actual: f.values.len(),
            context: Some(f.family.to_string()),
        });
    }
    if fs.version != f.version {
        return Err(Error::StatsMismatch {
            expected: format!("{} version {}", f.family, fs.version),
            actual: format!("{} version {}", f.family, f.version),
        });
    }
    Ok(StandardizedVector {
        family: f.family,
        stats_fingerprint: stats.fingerprint.clone(),
        values: fs.apply(&f.values),
    })
}

/// Fused fingerprint restricted to `config`.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedVector {
    pub config: FeatureConfig,
    pub stats_fingerprint: String,
    pub values: Vec<f64>,
}

/// Concatenates standardized parts in `[MSCN | CLIP | MLBP]` order. The parts
/// must be exactly the families of `config`, in that order, and share one
/// stats fingerprint.
pub fn fuse(parts: &[StandardizedVector], config: FeatureConfig) -> Result<FusedVector> {
    let expected = config.families();
    let got: Vec<Family> = parts.iter().map(|p| p.family).collect();
    if got != expected {
        return Err(Error::FusionOrder(format!(
            "expected families {expected:?} for config {config}, got {got:?}"
        )));
    }
    let fp = &parts[0].stats_fingerprint;
    if let Some(p) = parts.iter().find(|p| &p.stats_fingerprint != fp) {
        return Err(Error::StatsMismatch {
            expected: fp.clone(),
            actual: p.stats_fingerprint.clone(),
        });
    }
    let mut values = Vec::with_capacity(config.dim());
    for p in parts {
        values.extend_from_slice(&p.values);
    }
    Ok(FusedVector {
        config,
        stats_fingerprint: fp.clone(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(rng: &mut ChaCha8Rng) -> FeatureSet {
        Family::ALL
            .iter()
            .map(|&f| {
                let vals = (0..f.dim()).map(|_| rng.random_range(-5.0..5.0)).collect();
                FeatureVector::new(f, "1.0.0", vals).unwrap()
            })
            .collect()
    }

    #[test]
    fn one_dimensional_moments() {
        let s = FamilyStats::fit(Family::Mscn, "t", &[&[1.0], &[3.0]]).unwrap();
        assert_eq!(s.mean, vec![2.0]);
        assert_eq!(s.variance, vec![1.0]);
        assert_eq!(s.apply(&[3.0]), vec![1.0]);
        assert_eq!(s.apply(&[2.0]), vec![0.0]);
    }

    #[test]
    fn identical_samples_have_zero_variance() {
        let row = [0.1, 0.7, 1e6];
        let s = FamilyStats::fit(Family::Mscn, "t", &[&row, &row, &row]).unwrap();
        assert_eq!(s.variance, vec![0.0; 3]);
        assert_eq!(s.apply(&[5.0, -3.0, 2.0]), vec![0.0; 3]);
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            FamilyStats::fit(Family::Mscn, "t", &[&[1.0]]),
            Err(Error::InsufficientData(_))
        ));
        assert!(matches!(
            FamilyStats::fit(Family::Mscn, "t", &[&[1.0], &[1.0, 2.0]]),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn shuffled_order_gives_same_stats() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sets: Vec<FeatureSet> = (0..20).map(|_| random_set(&mut rng)).collect();
        let a = fit_standardizer(&sets.iter().collect::<Vec<_>>()).unwrap();
        let mut rev: Vec<&FeatureSet> = sets.iter().collect();
        rev.reverse();
        let b = fit_standardizer(&rev).unwrap();
        for (fa, fb) in a.families.iter().zip(&b.families) {
            for (x, y) in fa.mean.iter().zip(&fb.mean) {
                assert!((x - y).abs() < 1e-12);
            }
            for (x, y) in fa.variance.iter().zip(&fb.variance) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mean_vector_standardizes_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sets: Vec<FeatureSet> = (0..10).map(|_| random_set(&mut rng)).collect();
        let stats = fit_standardizer(&sets.iter().collect::<Vec<_>>()).unwrap();
        let m = FeatureVector {
            family: Family::Mlbp,
            version: "1.0.0".into(),
            values: stats.family(Family::Mlbp).unwrap().mean.clone(),
        };
        let z = standardize(&m, &stats).unwrap();
        assert!(z.values.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn fuse_all_and_subsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sets: Vec<FeatureSet> = (0..10).map(|_| random_set(&mut rng)).collect();
        let stats = fit_standardizer(&sets.iter().collect::<Vec<_>>()).unwrap();
        let all = stats.transform(&sets[0], FeatureConfig::ALL).unwrap();
        assert_eq!(all.values.len(), 620);
        let z_mscn = standardize(sets[0].get(Family::Mscn).unwrap(), &stats).unwrap();
        assert_eq!(&all.values[..72], z_mscn.values.as_slice());
        let pair = stats.transform(&sets[0], FeatureConfig::CLIP_MLBP).unwrap();
        assert_eq!(pair.values.len(), 548);
        assert_eq!(pair.values[..], all.values[72..]);
    }

    #[test]
    fn fuse_rejects_bad_order_and_mixed_stats() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sets: Vec<FeatureSet> = (0..6).map(|_| random_set(&mut rng)).collect();
        let refs: Vec<&FeatureSet> = sets.iter().collect();
        let s1 = fit_standardizer(&refs).unwrap();
        let s2 = fit_standardizer(&refs[1..]).unwrap();
        let z = |f, s| standardize(sets[0].get(f).unwrap(), s).unwrap();
        let (m, c, l) = (
            z(Family::Mscn, &s1),
            z(Family::Clip, &s1),
            z(Family::Mlbp, &s1),
        );
        assert!(matches!(
            fuse(&[m.clone(), l.clone()], FeatureConfig::ALL),
            Err(Error::FusionOrder(_))
        ));
        assert!(matches!(
            fuse(&[c.clone(), m.clone(), l.clone()], FeatureConfig::ALL),
            Err(Error::FusionOrder(_))
        ));
        assert!(matches!(
            fuse(&[m.clone(), m.clone(), l.clone()], FeatureConfig::ALL),
            Err(Error::FusionOrder(_))
        ));
        let c2 = z(Family::Clip, &s2);
        assert!(matches!(
            fuse(&[m, c2, l], FeatureConfig::ALL),
            Err(Error::StatsMismatch { .. })
        ));
    }

    #[test]
    fn standardize_unknown_family() {
        let s = StandardizationStats::from_parts(
            vec![FamilyStats::fit(Family::Mscn, "1.0.0", &[&[0.0; 72], &[1.0; 72]]).unwrap()],
            2,
        );
        let v = FeatureVector::new(Family::Mlbp, "1.0.0", vec![0.0; 36]).unwrap();
        assert!(matches!(standardize(&v, &s), Err(Error::UnknownFamily(_))));
    }

    #[test]
    fn config_names_round_trip() {
        let names: Vec<String> = FeatureConfig::SEVEN.iter().map(|c| c.name()).collect();
        assert_eq!(
            names,
            [
                "mscn",
                "clip",
                "mlbp",
                "clip+mlbp",
                "clip+mscn",
                "mlbp+mscn",
                "all"
            ]
        );
        for c in FeatureConfig::SEVEN {
            assert_eq!(c.name().parse::<FeatureConfig>().unwrap(), c);
        }
        assert_eq!(
            "mscn+clip+mlbp".parse::<FeatureConfig>().unwrap(),
            FeatureConfig::ALL
        );
        assert_eq!(FeatureConfig::parse_list("seven").unwrap().len(), 7);
        assert!("mscn+mscn".parse::<FeatureConfig>().is_err());
    }

    #[test]
    fn fingerprint_detects_tampering() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sets: Vec<FeatureSet> = (0..5).map(|_| random_set(&mut rng)).collect();
        let mut stats = fit_standardizer(&sets.iter().collect::<Vec<_>>()).unwrap();
        stats.verify().unwrap();
        stats.families[0].mean[0] += 1e-9;
        assert!(stats.verify().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn standardized_training_set_is_unit(seed in any::<u64>(), n in 3usize..40, scale in 1e-3f64..1e3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..8).map(|k| if k == 7 { 4.0 } else { rng.random_range(-1.0..1.0) * scale + 10.0 }).collect())
                .collect();
            let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
            let s = FamilyStats::fit(Family::Mscn, "t", &refs).unwrap();
            let z: Vec<Vec<f64>> = rows.iter().map(|r| s.apply(r)).collect();
            let zrefs: Vec<&[f64]> = z.iter().map(|r| r.as_slice()).collect();
            let refit = FamilyStats::fit(Family::Mscn, "t", &zrefs).unwrap();
            for k in 0..7 {
                prop_assert!(refit.mean[k].abs() < 1e-9);
                prop_assert!((refit.variance[k] - 1.0).abs() < 1e-9);
            }
            prop_assert_eq!(refit.variance[7], 0.0);
        }

        #[test]
        fn fuse_is_injective(a in proptest::collection::vec(-3.0f64..3.0, 36), b in proptest::collection::vec(-3.0f64..3.0, 36)) {
            let part = |v: &Vec<f64>| StandardizedVector { family: Family::Mlbp, stats_fingerprint: "x".into(), values: v.clone() };
            let fa = fuse(&[part(&a)], FeatureConfig::MLBP).unwrap();
            let fb = fuse(&[part(&b)], FeatureConfig::MLBP).unwrap();
            prop_assert_eq!(a == b, fa.values == fb.values);
        }
    }
}
