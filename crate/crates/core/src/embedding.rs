//! 512-d semantic embeddings from a pluggable provider: a JSON-lines store
//! of precomputed vectors, or (with the `onnx` feature) an exported CLIP
//! ViT-B/32 image encoder.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::fusion::{Family, FeatureVector};
use crate::imaging::{resize_center_crop, RgbImage};

pub const EMBEDDING_DIM: usize = 512;
pub const CLIP_VERSION: &str = "1.0.0";
pub const CLIP_INPUT_SIDE: usize = 224;
pub const CLIP_MEAN: [f32; 3] = [0.481_454_66, 0.457_827_5, 0.408_210_73];
pub const CLIP_STD: [f32; 3] = [0.268_629_5, 0.261_302_6, 0.275_777_1];

#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddingProviderConfig {
    OnnxModel {
        model_path: PathBuf,
        input_name: Option<String>,
        output_name: Option<String>,
    },
    PrecomputedStore {
        store_path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticEmbedding {
    pub values: Vec<f64>,
    pub source_id: String,
}

impl SemanticEmbedding {
    pub fn into_feature(self) -> Result<FeatureVector> {
        FeatureVector::new(Family::Clip, CLIP_VERSION, self.values)
    }
}

/// Manifest-relative path with forward slashes and no leading `./`.
pub fn canonical_key(path: &str) -> String {
    let mut s = path.replace('\\', "/");
    while let Some(rest) = s.strip_prefix("./") {
        s = rest.to_string();
    }
    s
}

/// Scales `values` to unit L2 norm.
pub fn l2_normalize(values: &mut [f64]) -> Result<()> {
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return Err(Error::Inference(format!("embedding norm is {norm}")));
    }
    values.iter_mut().for_each(|v| *v /= norm);
    Ok(())
}

pub trait EmbeddingProvider: Send + Sync {
    /// Embeds the image stored under `key`. `image` is only invoked by
    /// backends that need pixels.
    fn embed(&self, key: &str, image: &dyn Fn() -> Result<RgbImage>) -> Result<SemanticEmbedding>;
}

#[derive(Deserialize)]
struct StoreLine {
    path: String,
    embedding: Vec<f64>,
}

/// Immutable map from canonical path to embedding.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingStore {
    entries: HashMap<String, Vec<f64>>,
    source_id: String,
}

impl EmbeddingStore {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(&canonical_key(key))
    }

    pub fn lookup(&self, key: &str) -> Result<SemanticEmbedding> {
        let key = canonical_key(key);
        let raw = self
            .entries
            .get(&key)
            .ok_or_else(|| Error::EmbeddingMiss(vec![key.clone()]))?;
        let mut values = raw.clone();
        l2_normalize(&mut values)?;
        Ok(SemanticEmbedding {
            values,
            source_id: format!("{}:{key}", self.source_id),
        })
    }
}

impl EmbeddingProvider for EmbeddingStore {
    fn embed(&self, key: &str, _image: &dyn Fn() -> Result<RgbImage>) -> Result<SemanticEmbedding> {
        self.lookup(key)
    }
}

/// Reads a JSON-lines store: `{"path": ..., "embedding": [512 numbers]}`.
pub fn load_embedding_store(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut entries = HashMap::new();
    let mut first_line: HashMap<String, usize> = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: StoreLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: Some(lineno),
            message: e.to_string(),
        })?;
        if rec.embedding.len() != EMBEDDING_DIM {
            return Err(Error::DimMismatch {
                expected: EMBEDDING_DIM,
                actual: rec.embedding.len(),
                context: Some(format!("line {lineno}")),
            });
        }
        if rec.embedding.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line: Some(lineno),
                message: "non-finite embedding component".into(),
            });
        }
        let key = canonical_key(&rec.path);
        if let Some(&first) = first_line.get(&key) {
            return Err(Error::DuplicateKey {
                key,
                first,
                second: lineno,
            });
        }
        first_line.insert(key.clone(), lineno);
        entries.insert(key, rec.embedding);
    }
    Ok(EmbeddingStore {
        entries,
        source_id: format!("store:{}", path.display()),
    })
}

/// CLIP preprocessing: bicubic resize + centre crop to 224, scale to
/// `[0, 1]`, per-channel normalization. Returns a `1x3x224x224` CHW tensor.
pub fn clip_preprocess(img: &RgbImage) -> Vec<f32> {
    let crop = resize_center_crop(img, CLIP_INPUT_SIDE);
    let n = CLIP_INPUT_SIDE * CLIP_INPUT_SIDE;
    let mut out = vec![0.0f32; 3 * n];
    for (i, px) in crop.data().chunks_exact(3).enumerate() {
        for c in 0..3 {
            out[c * n + i] = (f32::from(px[c]) / 255.0 - CLIP_MEAN[c]) / CLIP_STD[c];
        }
    }
    out
}

/// Builds the configured provider.
pub fn open_provider(cfg: &EmbeddingProviderConfig) -> Result<Box<dyn EmbeddingProvider>> {
    match cfg {
        EmbeddingProviderConfig::PrecomputedStore { store_path } => {
            if !store_path.exists() {
                return Err(Error::ProviderInit(format!(
                    "embedding store {} not found",
                    store_path.display()
                )));
            }
            Ok(Box::new(load_embedding_store(store_path)?))
        }
        EmbeddingProviderConfig::OnnxModel {
            model_path,
            input_name,
            output_name,
        } => {
            if !model_path.exists() {
                return Err(Error::ProviderInit(format!(
                    "model file {} not found",
                    model_path.display()
                )));
            }
            open_onnx(model_path, input_name.as_deref(), output_name.as_deref())
        }
    }
}

#[cfg(not(feature = "onnx"))]
fn open_onnx(
    _model_path: &Path,
    _input: Option<&str>,
    _output: Option<&str>,
) -> Result<Box<dyn EmbeddingProvider>> {
    Err(Error::ProviderInit(
        "built without ONNX support; rebuild with `--features onnx`".into(),
    ))
}

#[cfg(feature = "onnx")]
fn open_onnx(
    model_path: &Path,
    input: Option<&str>,
    output: Option<&str>,
) -> Result<Box<dyn EmbeddingProvider>> {
    Ok(Box::new(onnx::OnnxEncoder::load(
        model_path, input, output,
    )?))
}

#[cfg(feature = "onnx")]
pub mod onnx {
    use super::*;
    use sha2::{Digest, Sha256};
    use tract_onnx::prelude::*;

    type Plan = Arc<TypedRunnableModel>;

    /// Image encoder session; the optimized plan is shared read-only across
    /// threads.
    pub struct OnnxEncoder {
        plan: Plan,
        source_id: String,
    }

    impl OnnxEncoder {
        pub fn load(path: &Path, input: Option<&str>, output: Option<&str>) -> Result<Self> {
            let init = |e: TractError| Error::ProviderInit(format!("{}: {e}", path.display()));
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            let digest = Sha256::digest(&bytes);
            let mut model = tract_onnx::onnx()
                .model_for_read(&mut bytes.as_slice())
                .map_err(init)?;
            if let Some(name) = input {
                model.set_input_names([name]).map_err(init)?;
            }
            if let Some(name) = output {
                model.select_outputs_by_name([name]).map_err(init)?;
            }
            if model.output_outlets().map_err(init)?.is_empty() {
                return Err(Error::ProviderInit("model has no outputs".into()));
            }
            model
                .set_input_fact(
                    0,
                    f32::fact([1, 3, CLIP_INPUT_SIDE, CLIP_INPUT_SIDE]).into(),
                )
                .map_err(init)?;
            let plan = model
                .into_optimized()
                .and_then(|m| m.into_runnable())
                .map_err(init)?;
            Ok(Self {
                plan,
                source_id: format!("onnx:{}", hex::encode(&digest[..8])),
            })
        }

        pub fn embed_image(&self, img: &RgbImage) -> Result<SemanticEmbedding> {
            let input = clip_preprocess(img);
            let tensor: Tensor = tract_ndarray::Array4::from_shape_vec(
                (1, 3, CLIP_INPUT_SIDE, CLIP_INPUT_SIDE),
                input,
            )
            .map_err(|e| Error::Inference(e.to_string()))?
            .into();
            let outputs = self
                .plan
                .run(tvec!(tensor.into()))
                .map_err(|e| Error::Inference(e.to_string()))?;
            let out = outputs[0]
                .to_plain_array_view::<f32>()
                .map_err(|e| Error::Inference(e.to_string()))?;
            let mut values: Vec<f64> = out.iter().map(|&v| f64::from(v)).collect();
            if values.len() != EMBEDDING_DIM {
                return Err(Error::DimMismatch {
                    expected: EMBEDDING_DIM,
                    actual: values.len(),
                    context: Some("encoder output".into()),
                });
            }
            l2_normalize(&mut values)?;
            Ok(SemanticEmbedding {
                values,
                source_id: self.source_id.clone(),
            })
        }
    }

    impl EmbeddingProvider for OnnxEncoder {
        fn embed(
            &self,
            _key: &str,
            image: &dyn Fn() -> Result<RgbImage>,
        ) -> Result<SemanticEmbedding> {
            self.embed_image(&image()?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn unit(i: usize) -> Vec<f64> {
        let mut v = vec![0.0; EMBEDDING_DIM];
        v[i] = 1.0;
        v
    }

    fn write_store(lines: &[String]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    fn line(path: &str, v: &[f64]) -> String {
        serde_json::json!({ "path": path, "embedding": v }).to_string()
    }

    #[test]
    fn lookup_and_miss() {
        let f = write_store(&[line("a.png", &unit(0)), line("./dir/b.png", &unit(3))]);
        let store = load_embedding_store(f.path()).unwrap();
        assert_eq!(store.len(), 2);
        assert_eq!(store.lookup("a.png").unwrap().values, unit(0));
        assert_eq!(store.lookup("dir/b.png").unwrap().values, unit(3));
        assert!(matches!(
            store.lookup("zzz.png"),
            Err(Error::EmbeddingMiss(_))
        ));
    }

    #[test]
    fn lookup_normalizes() {
        let v: Vec<f64> = (0..EMBEDDING_DIM).map(|i| i as f64 - 100.0).collect();
        let f = write_store(&[line("x.png", &v)]);
        let e = load_embedding_store(f.path())
            .unwrap()
            .lookup("x.png")
            .unwrap();
        let norm = e.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-4);
    }

    #[test]
    fn short_vector_reports_line() {
        let f = write_store(&[line("a.png", &unit(0)), line("b.png", &vec![0.1; 511])]);
        match load_embedding_store(f.path()) {
            Err(Error::DimMismatch {
                expected: 512,
                actual: 511,
                context: Some(c),
            }) => assert_eq!(c, "line 2"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_keys_name_both_lines() {
        let lines: Vec<String> = (0..7)
            .map(|i| {
                let p = if i == 2 || i == 6 {
                    "dup.png".to_string()
                } else {
                    format!("{i}.png")
                };
                line(&p, &unit(i))
            })
            .collect();
        let f = write_store(&lines);
        match load_embedding_store(f.path()) {
            Err(Error::DuplicateKey {
                first: 3,
                second: 7,
                ..
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_line() {
        let f = write_store(&[line("a.png", &unit(0)), "{not json".into()]);
        assert!(matches!(
            load_embedding_store(f.path()),
            Err(Error::Parse { line: Some(2), .. })
        ));
    }

    #[test]
    fn canonical_keys() {
        assert_eq!(canonical_key("./a/b.png"), "a/b.png");
        assert_eq!(canonical_key("a\\b.png"), "a/b.png");
        assert_eq!(canonical_key("././c.png"), "c.png");
    }

    #[test]
    fn missing_backends_fail_init() {
        let cfg = EmbeddingProviderConfig::OnnxModel {
            model_path: "/nonexistent/model.onnx".into(),
            input_name: None,
            output_name: None,
        };
        assert!(matches!(open_provider(&cfg), Err(Error::ProviderInit(_))));
        let cfg = EmbeddingProviderConfig::PrecomputedStore {
            store_path: "/nonexistent/store.jsonl".into(),
        };
        assert!(matches!(open_provider(&cfg), Err(Error::ProviderInit(_))));
    }

    #[test]
    fn preprocess_normalizes_channels() {
        let img = RgbImage::from_fn(300, 240, |_, _| [255, 0, 128]).unwrap();
        let t = clip_preprocess(&img);
        assert_eq!(t.len(), 3 * 224 * 224);
        let n = 224 * 224;
        assert!((t[0] - (1.0 - CLIP_MEAN[0]) / CLIP_STD[0]).abs() < 1e-5);
        assert!((t[n] - (0.0 - CLIP_MEAN[1]) / CLIP_STD[1]).abs() < 1e-5);
        assert!((t[2 * n + 77] - (128.0 / 255.0 - CLIP_MEAN[2]) / CLIP_STD[2]).abs() < 1e-5);
    }
}
