//! `fusedet` command-line interface.
//!
//! Exit codes: 0 success, 1 other failure, 2 manifest error, 3 embedding
//! provider error, 4 single-class training data, 5 detect scored no image.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use fusedet::classifiers::{ClassifierKind, TrainedModel};
use fusedet::embedding::{
    canonical_key, open_provider, EmbeddingProvider, EmbeddingProviderConfig,
};
use fusedet::fusion::{Family, FeatureConfig, FeatureSet};
use fusedet::harness::evaluate::{families_of, fit_model, DEFAULT_TEST_FRACTION};
use fusedet::harness::report::{
    eval_csv, read_json, write_analysis_outputs, write_composition_outputs, write_eval_outputs,
    REPORT_JSON,
};
use fusedet::harness::{
    analyze_reports, evaluate_per_generator, extract_to_cache, generate_toy_dataset, load_manifest,
    random_composition_eval, stratified_split, CompositionOptions, DatasetManifest, EvalOptions,
    EvalReport, FeatureTable, Protocol, ToyOptions,
};
use fusedet::imaging::decode_image;
use fusedet::lbp::extract_mlbp_features;
use fusedet::nss::extract_mscn_features;

const EXIT_HELP: &str =
    "Exit codes: 0 ok, 1 other failure, 2 manifest error, 3 embedding provider error, \
4 single-class training data, 5 detect scored no image.";

#[derive(Parser)]
#[command(name = "fusedet", version, about = "Detect AI-generated images from fused NSS, texture and semantic features", after_help = EXIT_HELP)]
struct Cli {
    /// Worker threads (default: logical cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Increase log verbosity on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract features for every manifest entry into a JSON-lines cache.
    Extract(ExtractArgs),
    /// Train one model per (feature config, classifier) on the training split.
    Train(TrainArgs),
    /// Score images with a trained model; JSON-lines verdicts on stdout.
    Detect(DetectArgs),
    /// Run the per-generator protocol and write report.json / report.csv.
    Evaluate(EvaluateArgs),
    /// Kruskal–Wallis, BH-FDR, Fréchet and SRCC tables from evaluation reports.
    Analyze(AnalyzeArgs),
    /// Write the synthetic toy dataset (images, manifest, pseudo-embeddings).
    Toy(ToyArgs),
}

#[derive(Args, Clone)]
struct ProviderArgs {
    /// ONNX image encoder producing 512-d embeddings.
    #[arg(long, conflicts_with = "embedding_store")]
    onnx_model: Option<PathBuf>,
    /// Input tensor name of the ONNX model.
    #[arg(long, requires = "onnx_model")]
    input_name: Option<String>,
    /// Output tensor name of the ONNX model.
    #[arg(long, requires = "onnx_model")]
    output_name: Option<String>,
    /// JSON-lines store of precomputed embeddings: {"path", "embedding"}.
    #[arg(long)]
    embedding_store: Option<PathBuf>,
}

impl ProviderArgs {
    fn config(&self) -> Option<EmbeddingProviderConfig> {
        if let Some(p) = &self.onnx_model {
            Some(EmbeddingProviderConfig::OnnxModel {
                model_path: p.clone(),
                input_name: self.input_name.clone(),
                output_name: self.output_name.clone(),
            })
        } else {
            self.embedding_store
                .as_ref()
                .map(|p| EmbeddingProviderConfig::PrecomputedStore {
                    store_path: p.clone(),
                })
        }
    }

    fn open(&self) -> Result<Option<Box<dyn EmbeddingProvider>>> {
        match self.config() {
            None => Ok(None),
            Some(cfg) => Ok(Some(open_provider(&cfg).context(ProviderFailure)?)),
        }
    }
}

#[derive(Args, Clone, Copy)]
struct Strictness {
    /// Require every manifest file to exist.
    #[arg(long, conflicts_with = "lenient")]
    strict: bool,
    /// Keep undersized split strata in training instead of failing.
    #[arg(long)]
    lenient: bool,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Feature configs whose families to extract, e.g. `mscn,mlbp` or `all`.
    #[arg(long, default_value = "mscn,mlbp")]
    features: String,
    /// Cache directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    provider: ProviderArgs,
    #[command(flatten)]
    strictness: Strictness,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Feature cache directory written by `extract`.
    #[arg(long)]
    cache: PathBuf,
    /// Feature configs: mscn, clip, mlbp, pairwise ids such as mlbp+mscn, all, or seven.
    #[arg(long, visible_alias = "config", default_value = "all")]
    features: String,
    /// Comma-separated classifiers: gb, rf, svm.
    #[arg(long, default_value = "gb,rf,svm")]
    classifier: String,
    #[arg(long)]
    seed: u64,
    /// Decision threshold stored in the model.
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    #[arg(long, default_value_t = DEFAULT_TEST_FRACTION)]
    test_fraction: f64,
    /// Model output directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    strictness: Strictness,
}

#[derive(Args)]
struct DetectArgs {
    /// Model file written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Override the model's decision threshold.
    #[arg(long)]
    tau: Option<f64>,
    #[command(flatten)]
    provider: ProviderArgs,
    /// Images to score.
    #[arg(required = true)]
    images: Vec<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    cache: PathBuf,
    #[arg(long, visible_alias = "config", default_value = "seven")]
    features: String,
    #[arg(long, default_value = "gb,rf,svm")]
    classifier: String,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    #[arg(long, default_value_t = DEFAULT_TEST_FRACTION)]
    test_fraction: f64,
    /// Dataset name recorded in the report (default: manifest directory name).
    #[arg(long)]
    dataset: Option<String>,
    /// Train one detector per generator instead of one pooled detector.
    #[arg(long)]
    per_generator_train: bool,
    /// Also run the mixed-generator composition protocol for this many rounds.
    #[arg(long, default_value_t = 0)]
    composition_rounds: usize,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    strictness: Strictness,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// report.json files or directories containing them (searched one level deep).
    #[arg(long = "reports", required = true, num_args = 1..)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ToyArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    n_natural: usize,
    #[arg(long, default_value_t = 200)]
    n_genai: usize,
    #[arg(long, default_value = "tilegen-a,tilegen-b")]
    generators: String,
    #[arg(long, default_value_t = 64)]
    side: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip the pseudo-embedding store.
    #[arg(long)]
    no_embeddings: bool,
}

#[derive(Debug)]
struct ManifestFailure(PathBuf);

impl fmt::Display for ManifestFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid manifest {}", self.0.display())
    }
}

#[derive(Debug)]
struct ProviderFailure;

impl fmt::Display for ProviderFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("embedding provider unavailable")
    }
}

#[derive(Debug)]
struct NothingScored;

impl fmt::Display for NothingScored {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("no image could be scored")
    }
}

impl std::error::Error for NothingScored {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<NothingScored>().is_some() {
        return 5;
    }
    if err.downcast_ref::<ManifestFailure>().is_some() {
        return 2;
    }
    if err.downcast_ref::<ProviderFailure>().is_some() {
        return 3;
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<fusedet::Error>() {
            use fusedet::Error::*;
            match e {
                Schema(_) | Duplicate(_) | Label { .. } | Stratum(_) => return 2,
                ProviderInit(_) | Inference(_) | EmbeddingMiss(_) => return 3,
                SingleClass => return 4,
                _ => {}
            }
        }
    }
    1
}

fn manifest(path: &Path, strictness: Strictness) -> Result<DatasetManifest> {
    load_manifest(path, strictness.strict).with_context(|| ManifestFailure(path.to_path_buf()))
}

fn configs(s: &str) -> Result<Vec<FeatureConfig>> {
    FeatureConfig::parse_list(s).with_context(|| format!("invalid --features {s:?}"))
}

fn classifiers(s: &str) -> Result<Vec<ClassifierKind>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.parse::<ClassifierKind>().map_err(anyhow::Error::from))
        .collect()
}

fn cmd_extract(a: &ExtractArgs) -> Result<()> {
    let m = manifest(&a.manifest, a.strictness)?;
    let families = families_of(&configs(&a.features)?);
    let provider = if families.contains(&Family::Clip) {
        match a.provider.open()? {
            Some(p) => Some(p),
            None => {
                return Err(anyhow::Error::new(fusedet::Error::ProviderInit(
                    "clip features need --onnx-model or --embedding-store".into(),
                )))
            }
        }
    } else {
        None
    };
    let summary = extract_to_cache(&m, &families, &a.out, provider.as_deref())?;
    for f in &families {
        log::info!(
            "{f}: {} extracted, {} reused",
            summary.extracted.get(f).copied().unwrap_or(0),
            summary.reused.get(f).copied().unwrap_or(0)
        );
    }
    if !summary.failures.is_empty() {
        for (path, msg) in &summary.failures {
            eprintln!("error: {path}: {msg}");
        }
        bail!("{} image(s) failed extraction", summary.failures.len());
    }
    Ok(())
}

fn model_file(dir: &Path, config: FeatureConfig, kind: ClassifierKind) -> PathBuf {
    dir.join(format!("{}_{}.json", config.name().replace('+', "-"), kind))
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let m = manifest(&a.manifest, a.strictness)?;
    let cfgs = configs(&a.features)?;
    let kinds = classifiers(&a.classifier)?;
    let table = FeatureTable::from_cache(&m, &a.cache, &families_of(&cfgs))?;
    let split = stratified_split(&m, a.test_fraction, a.seed, a.strictness.lenient).map_err(
        |e| match e {
            fusedet::Error::Stratum(_) => {
                anyhow::Error::new(e).context(ManifestFailure(a.manifest.clone()))
            }
            e => e.into(),
        },
    )?;
    let train_sets: Vec<&FeatureSet> = split.train.iter().map(|&i| &table.sets[i]).collect();
    let stats = fusedet::fusion::fit_standardizer(&train_sets)?;
    let labels = m.labels();
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for &config in &cfgs {
        for &kind in &kinds {
            let mut model = fit_model(&table, &labels, &split.train, &stats, config, kind, a.seed)?;
            model.threshold = a.tau;
            let path = model_file(&a.out, config, kind);
            model.save(&path)?;
            log::info!("wrote {}", path.display());
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct Verdict<'a> {
    path: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    probability: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn score_image(
    model: &TrainedModel,
    path: &Path,
    provider: Option<&dyn EmbeddingProvider>,
    tau: f64,
) -> fusedet::Result<(f64, u8)> {
    let img = decode_image(path)?;
    let mut set = FeatureSet::new();
    for f in model.feature_mask.families() {
        let v = match f {
            Family::Mscn => extract_mscn_features(&img)?,
            Family::Mlbp => extract_mlbp_features(&img)?,
            Family::Clip => {
                let key = canonical_key(&path.to_string_lossy());
                let p = provider.ok_or_else(|| {
                    fusedet::Error::ProviderInit("model needs semantic features".into())
                })?;
                p.embed(&key, &|| Ok(img.clone()))?.into_feature()?
            }
        };
        set.insert(v);
    }
    let fused = model.stats.transform(&set, model.feature_mask)?;
    let p = model.predict_proba(&fused)?;
    Ok((p, fusedet::classifiers::decide(p, tau)))
}

fn cmd_detect(a: &DetectArgs) -> Result<()> {
    let model = TrainedModel::load(&a.model)
        .with_context(|| format!("loading model {}", a.model.display()))?;
    let provider = if model.feature_mask.contains(Family::Clip) {
        match a.provider.open()? {
            Some(p) => Some(p),
            None => {
                return Err(anyhow::Error::new(fusedet::Error::ProviderInit(
                    "model uses clip features; pass --onnx-model or --embedding-store".into(),
                )))
            }
        }
    } else {
        None
    };
    let tau = a.tau.unwrap_or(model.threshold);
    use rayon::prelude::*;
    let results: Vec<fusedet::Result<(f64, u8)>> = a
        .images
        .par_iter()
        .map(|p| score_image(&model, p, provider.as_deref(), tau))
        .collect();
    let mut scored = 0;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for (path, r) in a.images.iter().zip(results) {
        let shown = path.to_string_lossy();
        let v = match r {
            Ok((p, l)) => {
                scored += 1;
                Verdict {
                    path: &shown,
                    probability: Some(p),
                    label: Some(l),
                    error: None,
                }
            }
            Err(e) => {
                log::warn!("{shown}: {e}");
                Verdict {
                    path: &shown,
                    probability: None,
                    label: None,
                    error: Some(e.to_string()),
                }
            }
        };
        serde_json::to_writer(&mut out, &v)?;
        use std::io::Write;
        writeln!(out)?;
    }
    if scored == 0 {
        return Err(NothingScored.into());
    }
    Ok(())
}

fn dataset_name(manifest: &Path) -> String {
    manifest
        .canonicalize()
        .ok()
        .and_then(|p| {
            p.parent()
                .and_then(|d| d.file_name())
                .map(|s| s.to_string_lossy().into_owned())
        })
        .unwrap_or_else(|| "dataset".into())
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let m = manifest(&a.manifest, a.strictness)?;
    let cfgs = configs(&a.features)?;
    let table = FeatureTable::from_cache(&m, &a.cache, &families_of(&cfgs))?;
    let mut opts = EvalOptions::new(
        a.dataset
            .clone()
            .unwrap_or_else(|| dataset_name(&a.manifest)),
    );
    opts.configs = cfgs.clone();
    opts.classifiers = classifiers(&a.classifier)?;
    opts.seed = a.seed;
    opts.tau = a.tau;
    opts.test_fraction = a.test_fraction;
    opts.lenient = a.strictness.lenient;
    opts.protocol = if a.per_generator_train {
        Protocol::PerGenerator
    } else {
        Protocol::Pooled
    };
    let report = evaluate_per_generator(&m, &table, &opts).map_err(|e| match e {
        fusedet::Error::Stratum(_) => {
            anyhow::Error::new(e).context(ManifestFailure(a.manifest.clone()))
        }
        e => e.into(),
    })?;
    write_eval_outputs(&report, &a.out)?;
    if a.composition_rounds > 0 {
        let c = random_composition_eval(
            &m,
            &table,
            &CompositionOptions {
                dataset: opts.dataset.clone(),
                configs: cfgs,
                n_rounds: a.composition_rounds,
                seed: a.seed,
                test_fraction: a.test_fraction,
            },
        )?;
        write_composition_outputs(&c, &a.out)?;
    }
    use std::io::Write;
    std::io::stdout().write_all(&eval_csv(&report)?)?;
    Ok(())
}

fn find_reports(inputs: &[PathBuf]) -> Vec<PathBuf> {
    let mut found = Vec::new();
    for p in inputs {
        if p.is_file() {
            found.push(p.clone());
        } else if p.is_dir() {
            let direct = p.join(REPORT_JSON);
            if direct.is_file() {
                found.push(direct);
            }
            if let Ok(rd) = std::fs::read_dir(p) {
                let mut subs: Vec<PathBuf> = rd
                    .filter_map(|e| e.ok().map(|e| e.path().join(REPORT_JSON)))
                    .filter(|p| p.is_file())
                    .collect();
                subs.sort();
                found.extend(subs);
            }
        }
    }
    found
}

fn cmd_analyze(a: &AnalyzeArgs) -> Result<()> {
    let paths = find_reports(&a.reports);
    if paths.is_empty() {
        bail!("no reports found");
    }
    let reports = paths
        .iter()
        .map(|p| read_json::<EvalReport>(p).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let analysis = analyze_reports(&reports)?;
    write_analysis_outputs(&analysis, &a.out)?;
    use std::io::Write;
    std::io::stdout().write_all(&fusedet::harness::report::significance_csv(&analysis)?)?;
    Ok(())
}

fn cmd_toy(a: &ToyArgs) -> Result<()> {
    let ds = generate_toy_dataset(
        &a.out,
        &ToyOptions {
            n_natural: a.n_natural,
            n_genai: a.n_genai,
            generators: a
                .generators
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect(),
            side: a.side,
            seed: a.seed,
            embeddings: !a.no_embeddings,
        },
    )?;
    log::info!("wrote {}", ds.manifest.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Extract(a) => cmd_extract(a),
        Command::Train(a) => cmd_train(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Toy(a) => cmd_toy(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot configure worker pool: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
