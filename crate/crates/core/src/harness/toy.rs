//! Synthetic two-class fixture. Natural-like images are smoothed Gaussian
//! noise fields; GenAI-like images are periodic tiles overlaid with ring
//! artifacts, one parameter regime per generator tag.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::embedding::EMBEDDING_DIM;
use crate::error::{Error, Result};
use crate::imaging::RgbImage;
use crate::nss::{gaussian_taps, separable_blur};

pub const NATURAL_TAG: &str = "camera";
pub const MANIFEST_NAME: &str = "manifest.csv";
pub const EMBEDDINGS_NAME: &str = "embeddings.jsonl";

#[derive(Debug, Clone)]
pub struct ToyOptions {
    pub n_natural: usize,
    pub n_genai: usize,
    pub generators: Vec<String>,
    pub side: usize,
    pub seed: u64,
    /// Also write a deterministic pseudo-embedding store.
    pub embeddings: bool,
}

impl Default for ToyOptions {
    fn default() -> Self {
        Self {
            n_natural: 200,
            n_genai: 200,
            generators: vec!["tilegen-a".into(), "tilegen-b".into()],
            side: 64,
            seed: 0,
            embeddings: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyDataset {
    pub manifest: PathBuf,
    pub embedding_store: Option<PathBuf>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

pub fn natural_image(rng: &mut ChaCha8Rng, side: usize) -> Result<RgbImage> {
    let n = side * side;
    let sigma: f64 = rng.random_range(1.0..2.5);
    let size = (2.0 * (3.0 * sigma).ceil() + 1.0) as usize;
    let taps = gaussian_taps(size, sigma);
    let field = |rng: &mut ChaCha8Rng| {
        let raw: Vec<f64> = (0..n).map(|_| normal(rng)).collect();
        let s = separable_blur(&raw, side, side, &taps);
        let mean = s.iter().sum::<f64>() / n as f64;
        let sd = (s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64)
            .sqrt()
            .max(1e-12);
        s.into_iter().map(|v| (v - mean) / sd).collect::<Vec<f64>>()
    };
    let base = field(rng);
    let contrast = rng.random_range(25.0..50.0);
    let level = rng.random_range(90.0..160.0);
    let mut channels = Vec::with_capacity(3);
    for _ in 0..3 {
        let tint = field(rng);
        let offset = rng.random_range(-15.0..15.0);
        let ch: Vec<u8> = (0..n)
            .map(|i| {
                let v = level
                    + offset
                    + contrast * (0.85 * base[i] + 0.15 * tint[i])
                    + 1.5 * normal(rng);
                to_u8(v)
            })
            .collect();
        channels.push(ch);
    }
    RgbImage::from_fn(side, side, |x, y| {
        let i = y * side + x;
        [channels[0][i], channels[1][i], channels[2][i]]
    })
}

/// `regime` selects the tile period and ring frequency band.
pub fn genai_image(rng: &mut ChaCha8Rng, side: usize, regime: usize) -> Result<RgbImage> {
    let (period, freq) = if regime.is_multiple_of(2) {
        (rng.random_range(4..=6usize), rng.random_range(0.35..0.6))
    } else {
        (rng.random_range(6..=9usize), rng.random_range(0.6..0.9))
    };
    let tile: Vec<[f64; 3]> = (0..period * period)
        .map(|_| {
            [
                rng.random_range(0.0..255.0),
                rng.random_range(0.0..255.0),
                rng.random_range(0.0..255.0),
            ]
        })
        .collect();
    let cx = rng.random_range(0.0..side as f64);
    let cy = rng.random_range(0.0..side as f64);
    let amp = rng.random_range(25.0..45.0);
    let mix = rng.random_range(0.5..0.7);
    let mut noise: Vec<f64> = (0..side * side * 3).map(|_| normal(rng)).collect();
    noise.iter_mut().for_each(|v| *v *= 1.5);
    RgbImage::from_fn(side, side, |x, y| {
        let t = tile[(y % period) * period + (x % period)];
        let r = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
        let ring = 128.0 + amp * (freq * r).sin();
        let i = (y * side + x) * 3;
        [
            to_u8(mix * t[0] + (1.0 - mix) * ring + noise[i]),
            to_u8(mix * t[1] + (1.0 - mix) * ring + noise[i + 1]),
            to_u8(mix * t[2] + (1.0 - mix) * ring + noise[i + 2]),
        ]
    })
}

#[derive(Serialize)]
struct StoreLine<'a> {
    path: &'a str,
    embedding: Vec<f64>,
}

/// Weakly informative pseudo-embedding: Gaussian noise shifted along a
/// class direction and a per-generator direction.
fn pseudo_embedding(rng: &mut ChaCha8Rng, class: u8, regime: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..EMBEDDING_DIM).map(|_| normal(rng)).collect();
    if class == 1 {
        for x in &mut v[..32] {
            *x += 0.8;
        }
        let off = 32 + 16 * (regime % 8);
        for x in &mut v[off..off + 16] {
            *x += 0.5;
        }
    }
    v
}

struct Planned {
    path: String,
    label: &'static str,
    generator: String,
    regime: usize,
}

/// Writes images, `manifest.csv` and optionally `embeddings.jsonl` under `dir`.
pub fn generate_toy_dataset(dir: &Path, opts: &ToyOptions) -> Result<ToyDataset> {
    if opts.generators.is_empty() && opts.n_genai > 0 {
        return Err(Error::GeneratorCount(0));
    }
    let mut plan = Vec::with_capacity(opts.n_natural + opts.n_genai);
    for i in 0..opts.n_natural {
        plan.push(Planned {
            path: format!("natural/nat_{i:04}.png"),
            label: "natural",
            generator: NATURAL_TAG.into(),
            regime: 0,
        });
    }
    for i in 0..opts.n_genai {
        let g = i % opts.generators.len();
        plan.push(Planned {
            path: format!("genai/{}/gen_{i:04}.png", opts.generators[g]),
            label: "genai",
            generator: opts.generators[g].clone(),
            regime: g,
        });
    }
    for sub in ["natural".to_string()]
        .into_iter()
        .chain(opts.generators.iter().map(|g| format!("genai/{g}")))
    {
        let d = dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let embeddings: Vec<Option<Vec<f64>>> = plan
        .par_iter()
        .enumerate()
        .map(|(k, p)| -> Result<Option<Vec<f64>>> {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(k as u64);
            let img = if p.label == "natural" {
                natural_image(&mut rng, opts.side)?
            } else {
                genai_image(&mut rng, opts.side, p.regime)?
            };
            img.save_png(dir.join(&p.path))?;
            Ok(opts
                .embeddings
                .then(|| pseudo_embedding(&mut rng, u8::from(p.label == "genai"), p.regime)))
        })
        .collect::<Result<_>>()?;

    let manifest = dir.join(MANIFEST_NAME);
    let mut w = csv::Writer::from_path(&manifest).map_err(|e| Error::Parse {
        line: None,
        message: e.to_string(),
    })?;
    let csv_err = |e: csv::Error| Error::Parse {
        line: None,
        message: e.to_string(),
    };
    w.write_record(["path", "label", "generator", "split"])
        .map_err(csv_err)?;
    for p in &plan {
        w.write_record([p.path.as_str(), p.label, p.generator.as_str(), ""])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(&manifest, e))?;

    let embedding_store = if opts.embeddings {
        let path = dir.join(EMBEDDINGS_NAME);
        let mut buf = Vec::new();
        for (p, e) in plan.iter().zip(embeddings) {
            let line = StoreLine {
                path: &p.path,
                embedding: e.expect("embeddings requested"),
            };
            serde_json::to_writer(&mut buf, &line).map_err(|e| Error::Parse {
                line: None,
                message: e.to_string(),
            })?;
            buf.push(b'\n');
        }
        let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(&path, e))?;
        Some(path)
    } else {
        None
    };
    Ok(ToyDataset {
        manifest,
        embedding_store,
    })
}
