//! Evaluation harness: manifests, splits, feature caching, the
//! per-generator and mixed-composition protocols, significance analysis,
//! report emission and the synthetic toy fixture.

pub mod analyze;
pub mod cache;
pub mod composition;
pub mod evaluate;
pub mod manifest;
pub mod plots;
pub mod report;
pub mod toy;

pub use analyze::{analyze_reports, AnalysisReport};
pub use cache::{extract_to_cache, read_cache, write_cache, ExtractionSummary, FeatureTable};
pub use composition::{random_composition_eval, CompositionOptions, CompositionReport};
pub use evaluate::{evaluate_per_generator, EvalOptions, EvalReport, Protocol};
pub use manifest::{
    load_manifest, parse_manifest, stratified_split, DatasetManifest, Label, ManifestEntry, Split,
};
pub use toy::{generate_toy_dataset, ToyOptions};
