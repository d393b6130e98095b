//! JSON / CSV / SVG emission for evaluation, composition and analysis
//! results.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::analyze::AnalysisReport;
use super::composition::CompositionReport;
use super::evaluate::EvalReport;
use super::plots::{bar_chart, scatter, Series};
use crate::error::{Error, Result};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const COMPOSITION_JSON: &str = "composition.json";
pub const COMPOSITION_CSV: &str = "composition.csv";
pub const ANALYSIS_JSON: &str = "analysis.json";
pub const SIGNIFICANCE_CSV: &str = "significance.csv";
pub const FRECHET_CSV: &str = "frechet.csv";
pub const SRCC_CSV: &str = "srcc.csv";
pub const BARS_SVG: &str = "accuracy_mcc_bars.svg";
pub const COMPOSITION_SVG: &str = "composition_bars.svg";
pub const SCATTER_SVG: &str = "frechet_vs_mcc.svg";

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn json_error(e: serde_json::Error) -> Error {
    Error::Parse {
        line: Some(e.line()),
        message: e.to_string(),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(json_error)?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&s).map_err(json_error)
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::Parse {
        line: None,
        message: e.to_string(),
    };
    w.write_record(header).map_err(to_err)?;
    for r in rows {
        w.write_record(&r).map_err(to_err)?;
    }
    w.into_inner().map_err(|e| Error::Parse {
        line: None,
        message: e.to_string(),
    })
}

/// Flat per-cell table; `avg` rows carry the cross-generator means and
/// leave the count columns empty.
pub fn eval_csv(r: &EvalReport) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for a in &r.averages {
        for c in r
            .cells
            .iter()
            .filter(|c| c.config == a.config && c.classifier == a.classifier)
        {
            let m = c.confusion;
            rows.push(vec![
                c.config.name(),
                c.classifier.to_string(),
                c.generator.clone(),
                m.tp.to_string(),
                m.tn.to_string(),
                m.fp.to_string(),
                m.fn_.to_string(),
                c.accuracy.to_string(),
                c.mcc.to_string(),
            ]);
        }
        rows.push(vec![
            a.config.name(),
            a.classifier.to_string(),
            "avg".into(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            a.accuracy.to_string(),
            a.mcc.to_string(),
        ]);
    }
    csv_bytes(
        &[
            "config",
            "classifier",
            "generator",
            "tp",
            "tn",
            "fp",
            "fn",
            "accuracy",
            "mcc",
        ],
        rows,
    )
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (
        m,
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt(),
    )
}

/// Mean accuracy and MCC per config with the spread over classifiers.
pub fn eval_bars_svg(r: &EvalReport) -> String {
    let configs = r.configs();
    let mut acc = Series {
        name: "accuracy".into(),
        values: Vec::new(),
        errors: Some(Vec::new()),
    };
    let mut mcc = Series {
        name: "MCC".into(),
        values: Vec::new(),
        errors: Some(Vec::new()),
    };
    for &c in &configs {
        let rows: Vec<_> = r.averages.iter().filter(|a| a.config == c).collect();
        let (am, asd) = mean_std(&rows.iter().map(|a| a.accuracy).collect::<Vec<_>>());
        let (mm, msd) = mean_std(&rows.iter().map(|a| a.mcc).collect::<Vec<_>>());
        acc.values.push(am);
        acc.errors.as_mut().unwrap().push(asd);
        mcc.values.push(mm);
        mcc.errors.as_mut().unwrap().push(msd);
    }
    let cats: Vec<String> = configs.iter().map(|c| c.name()).collect();
    bar_chart(
        &format!("{}: mean over classifiers", r.dataset),
        "score",
        &cats,
        &[acc, mcc],
    )
}

/// Writes `report.json`, `report.csv` and the bar chart; returns the paths.
pub fn write_eval_outputs(r: &EvalReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let paths = [
        dir.join(REPORT_JSON),
        dir.join(REPORT_CSV),
        dir.join(BARS_SVG),
    ];
    write_json(&paths[0], r)?;
    write_bytes(&paths[1], &eval_csv(r)?)?;
    write_bytes(&paths[2], eval_bars_svg(r).as_bytes())?;
    Ok(paths.to_vec())
}

pub fn composition_csv(r: &CompositionReport) -> Result<Vec<u8>> {
    let mut header = vec![
        "config",
        "accuracy_mean",
        "accuracy_std",
        "mcc_mean",
        "mcc_std",
    ];
    let kinds: Vec<String> = r
        .rows
        .first()
        .map(|row| {
            row.per_classifier
                .iter()
                .map(|s| s.classifier.to_string())
                .collect()
        })
        .unwrap_or_default();
    let extra: Vec<String> = kinds
        .iter()
        .flat_map(|k| [format!("{k}_accuracy"), format!("{k}_mcc")])
        .collect();
    header.extend(extra.iter().map(String::as_str));
    let rows = r
        .rows
        .iter()
        .map(|row| {
            let mut v = vec![
                row.config.name(),
                row.accuracy_mean.to_string(),
                row.accuracy_std.to_string(),
                row.mcc_mean.to_string(),
                row.mcc_std.to_string(),
            ];
            for s in &row.per_classifier {
                v.push(s.accuracy.to_string());
                v.push(s.mcc.to_string());
            }
            v
        })
        .collect();
    csv_bytes(&header, rows)
}

pub fn write_composition_outputs(r: &CompositionReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let paths = [
        dir.join(COMPOSITION_JSON),
        dir.join(COMPOSITION_CSV),
        dir.join(COMPOSITION_SVG),
    ];
    write_json(&paths[0], r)?;
    write_bytes(&paths[1], &composition_csv(r)?)?;
    let cats: Vec<String> = r.rows.iter().map(|row| row.config.name()).collect();
    let series = [
        Series {
            name: "accuracy".into(),
            values: r.rows.iter().map(|row| row.accuracy_mean).collect(),
            errors: Some(r.rows.iter().map(|row| row.accuracy_std).collect()),
        },
        Series {
            name: "MCC".into(),
            values: r.rows.iter().map(|row| row.mcc_mean).collect(),
            errors: Some(r.rows.iter().map(|row| row.mcc_std).collect()),
        },
    ];
    let svg = bar_chart(
        &format!(
            "{}: mixed-generator composition ({} rounds)",
            r.dataset, r.n_rounds
        ),
        "mean over classifiers",
        &cats,
        &series,
    );
    write_bytes(&paths[2], svg.as_bytes())?;
    Ok(paths.to_vec())
}

pub fn significance_csv(a: &AnalysisReport) -> Result<Vec<u8>> {
    let rows = a
        .significance
        .iter()
        .map(|s| {
            vec![
                s.dataset.clone(),
                s.generator.clone(),
                s.metric.clone(),
                s.factor.clone(),
                s.h.to_string(),
                s.epsilon_squared.to_string(),
                s.p_value.to_string(),
                s.q_value.to_string(),
                s.significant.to_string(),
            ]
        })
        .collect();
    csv_bytes(
        &[
            "dataset",
            "generator",
            "metric",
            "factor",
            "H",
            "epsilon_squared",
            "p",
            "q",
            "significant",
        ],
        rows,
    )
}

pub fn frechet_csv(a: &AnalysisReport) -> Result<Vec<u8>> {
    let rows = a
        .frechet
        .iter()
        .map(|f| {
            vec![
                f.dataset.clone(),
                f.config.clone(),
                f.distance.to_string(),
                f.log10_distance.to_string(),
                f.mean_accuracy.to_string(),
                f.mean_mcc.to_string(),
            ]
        })
        .collect();
    csv_bytes(
        &[
            "dataset",
            "config",
            "distance",
            "log10_distance",
            "mean_accuracy",
            "mean_mcc",
        ],
        rows,
    )
}

pub fn srcc_csv(a: &AnalysisReport) -> Result<Vec<u8>> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let rows = a
        .srcc
        .iter()
        .map(|s| {
            vec![
                s.dataset.clone(),
                s.n_pairs.to_string(),
                opt(s.rho),
                opt(s.abs_rho),
            ]
        })
        .collect();
    csv_bytes(&["dataset", "n_pairs", "rho", "abs_rho"], rows)
}

pub fn write_analysis_outputs(a: &AnalysisReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let paths = [
        dir.join(ANALYSIS_JSON),
        dir.join(SIGNIFICANCE_CSV),
        dir.join(FRECHET_CSV),
        dir.join(SRCC_CSV),
        dir.join(SCATTER_SVG),
    ];
    write_json(&paths[0], a)?;
    write_bytes(&paths[1], &significance_csv(a)?)?;
    write_bytes(&paths[2], &frechet_csv(a)?)?;
    write_bytes(&paths[3], &srcc_csv(a)?)?;
    let points: Vec<(String, f64, f64)> = a
        .frechet
        .iter()
        .map(|f| {
            (
                format!("{}:{}", f.dataset, f.config),
                f.log10_distance,
                f.mean_mcc,
            )
        })
        .collect();
    let svg = scatter(
        "Fréchet distance vs MCC",
        "log10 Fréchet distance (natural vs GenAI)",
        "mean MCC",
        &points,
    );
    write_bytes(&paths[4], svg.as_bytes())?;
    Ok(paths.to_vec())
}
