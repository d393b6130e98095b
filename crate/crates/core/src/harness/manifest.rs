//! Dataset manifests (`path,label,generator,split` CSV) and stratified splits.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embedding::canonical_key;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Natural,
    Genai,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Natural => 0,
            Label::Genai => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Natural => "natural",
            Label::Genai => "genai",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "natural" | "0" => Ok(Label::Natural),
            "genai" | "1" => Ok(Label::Genai),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Canonical manifest-relative path.
    pub path: String,
    pub label: Label,
    pub generator: String,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>, entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen: HashMap<&str, ()> = HashMap::new();
        for e in &entries {
            if seen.insert(&e.path, ()).is_some() {
                return Err(Error::Duplicate(e.path.clone()));
            }
        }
        Ok(Self {
            root: root.into(),
            entries,
        })
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.entries.iter().map(|e| e.label.as_u8()).collect()
    }

    /// Sorted generator tags of the GenAI entries.
    pub fn generators(&self) -> Vec<String> {
        let mut g: Vec<String> = self
            .entries
            .iter()
            .filter(|e| e.label == Label::Genai)
            .map(|e| e.generator.clone())
            .collect();
        g.sort();
        g.dedup();
        g
    }

    /// Content hash (hex sha256) over the entries, independent of the root.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for e in &self.entries {
            h.update(e.path.as_bytes());
            h.update([0]);
            h.update(e.label.as_str().as_bytes());
            h.update([0]);
            h.update(e.generator.as_bytes());
            h.update([0]);
            h.update(match e.split {
                None => b"-".as_slice(),
                Some(Split::Train) => b"train",
                Some(Split::Test) => b"test",
            });
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    pub fn subset(&self, idx: &[usize]) -> DatasetManifest {
        DatasetManifest {
            root: self.root.clone(),
            entries: idx.iter().map(|&i| self.entries[i].clone()).collect(),
        }
    }
}

/// Parses manifest CSV. Rows are numbered from 1 (the first data row).
pub fn parse_manifest(reader: impl Read, root: impl Into<PathBuf>) -> Result<DatasetManifest> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Schema(e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(pc), Some(lc), Some(gc)) = (col("path"), col("label"), col("generator")) else {
        return Err(Error::Schema(format!(
            "header must contain path, label and generator columns, found {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    };
    let sc = col("split");
    let mut entries = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Schema(format!("row {row}: {e}")))?;
        let field = |c: usize| rec.get(c).unwrap_or("").to_string();
        let path = canonical_key(&field(pc));
        if path.is_empty() {
            return Err(Error::Schema(format!("row {row}: empty path")));
        }
        let raw_label = field(lc);
        let label = raw_label.parse::<Label>().map_err(|_| Error::Label {
            row,
            label: raw_label.clone(),
        })?;
        let split = match sc.map(field).as_deref().map(str::trim) {
            None | Some("") => None,
            Some(s) if s.eq_ignore_ascii_case("train") => Some(Split::Train),
            Some(s) if s.eq_ignore_ascii_case("test") => Some(Split::Test),
            Some(s) => return Err(Error::Schema(format!("row {row}: invalid split {s:?}"))),
        };
        entries.push(ManifestEntry {
            path,
            label,
            generator: field(gc),
            split,
        });
    }
    DatasetManifest::new(root, entries)
}

/// Loads a manifest; paths resolve against its directory. With `strict`,
/// every referenced file must exist.
pub fn load_manifest(path: &Path, strict: bool) -> Result<DatasetManifest> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let m = parse_manifest(file, root)?;
    if strict {
        for e in &m.entries {
            let p = m.resolve(e);
            if !p.is_file() {
                return Err(Error::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "referenced image missing"),
                ));
            }
        }
    }
    Ok(m)
}

/// Entry indices assigned to each side of a split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Strata kept entirely in training under lenient mode.
    pub kept_in_train: Vec<String>,
}

/// Seeded split per (label, generator) stratum; `ceil(fraction * n)` of
/// each stratum goes to test. Entries with a split column keep it.
pub fn stratified_split(
    m: &DatasetManifest,
    test_fraction: f64,
    seed: u64,
    lenient: bool,
) -> Result<SplitIndices> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidFeature(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let whole: Vec<Label> = m.entries.iter().map(|e| e.label).collect();
    if !whole.contains(&Label::Natural) || !whole.contains(&Label::Genai) {
        return Err(Error::SingleClass);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut strata: BTreeMap<(Label, &str), Vec<usize>> = BTreeMap::new();
    for (i, e) in m.entries.iter().enumerate() {
        match e.split {
            Some(Split::Train) => train.push(i),
            Some(Split::Test) => test.push(i),
            None => strata.entry((e.label, &e.generator)).or_default().push(i),
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept_in_train = Vec::new();
    for ((label, generator), mut idx) in strata {
        let name = format!("{label}/{generator}");
        if idx.len() < 2 {
            if lenient {
                log::warn!(
                    "stratum {name} has {} member(s); keeping it in train",
                    idx.len()
                );
                train.extend(idx);
                kept_in_train.push(name);
                continue;
            }
            return Err(Error::Stratum(name));
        }
        idx.shuffle(&mut rng);
        let n_test =
            ((test_fraction * idx.len() as f64 - 1e-9).ceil() as usize).clamp(1, idx.len() - 1);
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    for (side, name) in [(&train, "train"), (&test, "test")] {
        let labels: Vec<Label> = side.iter().map(|&i| m.entries[i].label).collect();
        if !labels.contains(&Label::Natural) || !labels.contains(&Label::Genai) {
            return Err(Error::InsufficientData(format!(
                "{name} split lacks one of the classes"
            )));
        }
    }
    Ok(SplitIndices {
        train,
        test,
        kept_in_train,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_manifest(body: &str) -> Result<DatasetManifest> {
        parse_manifest(body.as_bytes(), "/data")
    }

    fn balanced(n_nat: usize, gens: &[(&str, usize)]) -> DatasetManifest {
        let mut s = String::from("path,label,generator\n");
        for i in 0..n_nat {
            s += &format!("nat/{i}.png,natural,real\n");
        }
        for (g, n) in gens {
            for i in 0..*n {
                s += &format!("{g}/{i}.png,genai,{g}\n");
            }
        }
        csv_manifest(&s).unwrap()
    }

    #[test]
    fn parses_valid_manifest() {
        let m = csv_manifest(
            "path,label,generator,split\n./a.png,natural,real,\nb.png,genai,sd,train\nc\\d.png,genai,mj,test\ne.png,natural,real,\n",
        )
        .unwrap();
        assert_eq!(m.len(), 4);
        assert_eq!(m.entries[0].path, "a.png");
        assert_eq!(m.entries[2].path, "c/d.png");
        assert_eq!(m.entries[1].split, Some(Split::Train));
        assert_eq!(m.generators(), vec!["mj", "sd"]);
        assert_eq!(m.resolve(&m.entries[0]), PathBuf::from("/data/a.png"));
    }

    #[test]
    fn manifest_errors() {
        assert!(matches!(
            csv_manifest("path,label\na.png,natural\n"),
            Err(Error::Schema(_))
        ));
        match csv_manifest("path,label,generator\na.png,natural,x\nb.png,fake,x\n") {
            Err(Error::Label { row, label }) => {
                assert_eq!(row, 2);
                assert_eq!(label, "fake");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            csv_manifest("path,label,generator\na.png,natural,x\n./a.png,genai,y\n"),
            Err(Error::Duplicate(p)) if p == "a.png"
        ));
    }

    #[test]
    fn stratified_arithmetic() {
        let m = balanced(100, &[("sd", 50), ("mj", 50)]);
        let s = stratified_split(&m, 0.2, 7, false).unwrap();
        assert_eq!(s.test.len(), 40);
        let genai_test = s
            .test
            .iter()
            .filter(|&&i| m.entries[i].label == Label::Genai)
            .count();
        assert_eq!(genai_test, 20);
        assert_eq!(s.train.len() + s.test.len(), 200);
        assert_eq!(stratified_split(&m, 0.2, 7, false).unwrap(), s);
        assert_ne!(stratified_split(&m, 0.2, 8, false).unwrap(), s);
    }

    #[test]
    fn explicit_split_column_respected() {
        let m = csv_manifest(
            "path,label,generator,split\na,natural,r,test\nb,natural,r,train\nc,genai,g,train\nd,genai,g,test\n",
        )
        .unwrap();
        let s = stratified_split(&m, 0.5, 1, false).unwrap();
        assert_eq!(s.train, vec![1, 2]);
        assert_eq!(s.test, vec![0, 3]);
    }

    #[test]
    fn small_stratum_strict_and_lenient() {
        let m = balanced(10, &[("sd", 10), ("rare", 1)]);
        assert!(
            matches!(stratified_split(&m, 0.2, 1, false), Err(Error::Stratum(s)) if s == "genai/rare")
        );
        let s = stratified_split(&m, 0.2, 1, true).unwrap();
        assert_eq!(s.kept_in_train, vec!["genai/rare"]);
        let rare = m
            .entries
            .iter()
            .position(|e| e.generator == "rare")
            .unwrap();
        assert!(s.train.contains(&rare));
    }

    #[test]
    fn hash_tracks_content() {
        let a = balanced(3, &[("sd", 3)]);
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.entries[0].generator = "other".into();
        assert_ne!(a.hash(), b.hash());
    }
}
