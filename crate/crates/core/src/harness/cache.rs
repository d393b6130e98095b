//! JSON-lines feature cache, one file per extractor, and the extraction
//! driver that fills it.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::DatasetManifest;
use crate::embedding::{EmbeddingProvider, CLIP_VERSION};
use crate::error::{Error, Result};
use crate::fusion::{Family, FeatureSet, FeatureVector};
use crate::imaging::{decode_image, RgbImage};
use crate::lbp::{extract_mlbp_features, MLBP_VERSION};
use crate::nss::{extract_mscn_features, MSCN_VERSION};

#[derive(Debug, Serialize, Deserialize)]
struct CacheRecord {
    path: String,
    extractor_id: String,
    version: String,
    vector: Vec<f64>,
}

pub fn extractor_version(family: Family) -> &'static str {
    match family {
        Family::Mscn => MSCN_VERSION,
        Family::Clip => CLIP_VERSION,
        Family::Mlbp => MLBP_VERSION,
    }
}

pub fn cache_file(dir: &Path, family: Family) -> PathBuf {
    dir.join(format!("{}.jsonl", family.as_str()))
}

/// Reads cached vectors of the current extractor version; a missing file is
/// an empty cache.
pub fn read_cache(dir: &Path, family: Family) -> Result<BTreeMap<String, FeatureVector>> {
    let path = cache_file(dir, family);
    let mut out = BTreeMap::new();
    let file = match std::fs::File::open(&path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(Error::io(&path, e)),
    };
    let version = extractor_version(family);
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CacheRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: Some(i + 1),
            message: format!("{}: {e}", path.display()),
        })?;
        if rec.extractor_id != family.as_str() || rec.version != version {
            continue;
        }
        out.insert(
            rec.path,
            FeatureVector::new(family, rec.version, rec.vector)?,
        );
    }
    Ok(out)
}

/// Writes records sorted by path, so equal contents give equal bytes.
pub fn write_cache(
    dir: &Path,
    family: Family,
    entries: &BTreeMap<String, FeatureVector>,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = cache_file(dir, family);
    let tmp = path.with_extension("jsonl.tmp");
    let mut buf = Vec::new();
    for (key, v) in entries {
        let rec = CacheRecord {
            path: key.clone(),
            extractor_id: family.as_str().to_string(),
            version: v.version.clone(),
            vector: v.values.clone(),
        };
        serde_json::to_writer(&mut buf, &rec).map_err(|e| Error::Parse {
            line: None,
            message: e.to_string(),
        })?;
        buf.push(b'\n');
    }
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&buf).map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExtractionSummary {
    pub extracted: BTreeMap<Family, usize>,
    pub reused: BTreeMap<Family, usize>,
    /// (path, message) for images that could not be processed.
    pub failures: Vec<(String, String)>,
}

fn pixel_features(img: &RgbImage, family: Family) -> Result<FeatureVector> {
    match family {
        Family::Mscn => extract_mscn_features(img),
        Family::Mlbp => extract_mlbp_features(img),
        Family::Clip => unreachable!("semantic features come from the provider"),
    }
}

/// Extracts every requested family for manifest entries missing from the
/// cache and rewrites the affected cache files. Per-image failures are
/// reported in the summary rather than aborting the run.
pub fn extract_to_cache(
    m: &DatasetManifest,
    families: &[Family],
    dir: &Path,
    provider: Option<&dyn EmbeddingProvider>,
) -> Result<ExtractionSummary> {
    let mut summary = ExtractionSummary::default();
    if families.contains(&Family::Clip) && provider.is_none() {
        return Err(Error::ProviderInit(
            "semantic features need --onnx-model or --embedding-store".into(),
        ));
    }
    let mut caches: BTreeMap<Family, BTreeMap<String, FeatureVector>> = BTreeMap::new();
    for &f in families {
        caches.insert(f, read_cache(dir, f)?);
    }
    let missing: Vec<(usize, Vec<Family>)> = m
        .entries
        .iter()
        .enumerate()
        .filter_map(|(i, e)| {
            let need: Vec<Family> = families
                .iter()
                .copied()
                .filter(|f| !caches[f].contains_key(&e.path))
                .collect();
            (!need.is_empty()).then_some((i, need))
        })
        .collect();
    for &f in families {
        let n_missing = missing.iter().filter(|(_, need)| need.contains(&f)).count();
        summary.reused.insert(f, m.len() - n_missing);
    }

    let results: Vec<(usize, Vec<Result<FeatureVector>>)> = missing
        .par_iter()
        .map(|(i, need)| {
            let entry = &m.entries[*i];
            let path = m.resolve(entry);
            let decoded = need
                .iter()
                .any(|&f| f != Family::Clip)
                .then(|| decode_image(&path));
            let out = need
                .iter()
                .map(|&f| match f {
                    Family::Clip => {
                        let load = || decode_image(&path);
                        provider
                            .expect("checked above")
                            .embed(&entry.path, &load)
                            .and_then(|e| e.into_feature())
                    }
                    _ => match decoded.as_ref().expect("decoded for pixel families") {
                        Ok(img) => pixel_features(img, f),
                        Err(e) => Err(Error::Decode {
                            path: path.clone(),
                            message: e.to_string(),
                        }),
                    },
                })
                .collect();
            (*i, out)
        })
        .collect();

    for (i, outs) in results {
        let key = &m.entries[i].path;
        for r in outs {
            match r {
                Ok(v) => {
                    *summary.extracted.entry(v.family).or_default() += 1;
                    caches
                        .get_mut(&v.family)
                        .expect("requested")
                        .insert(key.clone(), v);
                }
                Err(e) => summary.failures.push((key.clone(), e.to_string())),
            }
        }
    }
    summary.failures.dedup();
    for (&f, entries) in &caches {
        let changed = summary.extracted.get(&f).copied().unwrap_or(0) > 0;
        if changed || !cache_file(dir, f).exists() {
            write_cache(dir, f, entries)?;
        }
    }
    Ok(summary)
}

/// Per-entry feature sets aligned with a manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub sets: Vec<FeatureSet>,
}

impl FeatureTable {
    pub fn from_sets(sets: Vec<FeatureSet>) -> Self {
        Self { sets }
    }

    /// Loads the requested families for every manifest entry.
    pub fn from_cache(m: &DatasetManifest, dir: &Path, families: &[Family]) -> Result<Self> {
        let mut sets = vec![FeatureSet::new(); m.len()];
        for &f in families {
            let cache = read_cache(dir, f)?;
            let mut missing = Vec::new();
            for (e, set) in m.entries.iter().zip(sets.iter_mut()) {
                match cache.get(&e.path) {
                    Some(v) => set.insert(v.clone()),
                    None => missing.push(e.path.clone()),
                }
            }
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
        Ok(Self { sets })
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> FeatureTable {
        FeatureTable {
            sets: idx.iter().map(|&i| self.sets[i].clone()).collect(),
        }
    }
}
