//! Result summaries and the plot-ready bundle.
//!
//! A bundle directory holds `manifest.json`, one series table per figure and,
//! when available, the precision heatmap matrix.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::experiment::{io_err, read_summary, Aggregate, EvalError, ExperimentSpec, Metric, HEATMAP_FILE, PLAN_FILE, SUMMARY_FILE};
use super::ablation::COMBINED_FILE;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureEntry {
    /// `curve`, `ablation` or `heatmap`.
    pub kind: String,
    pub title: String,
    pub inputs: Vec<String>,
    pub x_label: String,
    pub y_label: String,
    pub samplers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub seed: u64,
    pub config_hash: String,
    pub figures: Vec<FigureEntry>,
}

/// Final-budget metrics of one sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalRow {
    pub sampler: String,
    pub budget: u64,
    pub metrics: Vec<Aggregate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Improvement {
    pub sampler: String,
    pub over: String,
    pub metric: Metric,
    pub pct: f64,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub spec: Option<ExperimentSpec>,
    pub summary: Vec<Aggregate>,
    pub finals: Vec<FinalRow>,
    pub improvements: Vec<Improvement>,
    pub ablation: Option<String>,
}

fn sampler_order(summary: &[Aggregate]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for a in summary {
        if !out.contains(&a.sampler) {
            out.push(a.sampler.clone());
        }
    }
    out
}

/// Reads an experiment results directory (or an ablation axis directory).
pub fn load_report(dir: &Path) -> Result<Report, EvalError> {
    if !dir.is_dir() {
        return Err(EvalError::Io {
            path: dir.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "results directory not found"),
        });
    }
    let combined = dir.join(COMBINED_FILE);
    if combined.is_file() {
        let text = fs::read_to_string(&combined).map_err(io_err(&combined))?;
        return Ok(Report { spec: None, summary: Vec::new(), finals: Vec::new(), improvements: Vec::new(), ablation: Some(text) });
    }
    let summary_path = dir.join(SUMMARY_FILE);
    if !summary_path.is_file() {
        return Err(EvalError::Parse { path: dir.to_path_buf(), message: format!("no {SUMMARY_FILE} or {COMBINED_FILE} found") });
    }
    let summary = read_summary(&summary_path)?;
    if summary.is_empty() {
        return Err(EvalError::Parse { path: summary_path, message: "summary has no rows".into() });
    }
    let plan = dir.join(PLAN_FILE);
    let spec = if plan.is_file() {
        Some(ExperimentSpec::from_toml(&fs::read_to_string(&plan).map_err(io_err(&plan))?)?)
    } else {
        None
    };
    let mut finals = Vec::new();
    for s in sampler_order(&summary) {
        let budget = summary.iter().filter(|a| a.sampler == s).map(|a| a.budget).max().unwrap_or(0);
        let metrics = summary.iter().filter(|a| a.sampler == s && a.budget == budget).cloned().collect();
        finals.push(FinalRow { sampler: s, budget, metrics });
    }
    let mut improvements = Vec::new();
    for metric in [Metric::Recall, Metric::NormalizedRecall] {
        for a in &finals {
            for b in &finals {
                if a.sampler == b.sampler {
                    continue;
                }
                let mean = |r: &FinalRow| r.metrics.iter().find(|m| m.metric == metric).map(|m| m.interval.mean);
                if let (Some(x), Some(y)) = (mean(a), mean(b)) {
                    improvements.push(Improvement {
                        sampler: a.sampler.clone(),
                        over: b.sampler.clone(),
                        metric,
                        pct: 100.0 * (x - y) / y,
                    });
                }
            }
        }
    }
    Ok(Report { spec, summary, finals, improvements, ablation: None })
}

impl Report {
    /// Human-readable summary printed by the `report` command.
    pub fn render(&self) -> String {
        if let Some(text) = &self.ablation {
            return text.clone();
        }
        let mut out = String::from("sampler\tbudget\trecall\tnormalized_recall\tthroughput\n");
        for row in &self.finals {
            out.push_str(&format!("{}\t{}", row.sampler, row.budget));
            for metric in Metric::ALL {
                match row.metrics.iter().find(|m| m.metric == metric) {
                    Some(m) => out.push_str(&format!("\t{:.4} [{:.4}, {:.4}]", m.interval.mean, m.interval.low, m.interval.high)),
                    None => out.push_str("\tNA"),
                }
            }
            out.push('\n');
        }
        if !self.improvements.is_empty() {
            out.push_str("\nimprovement\tmetric\tpct\n");
            for i in &self.improvements {
                out.push_str(&format!("{} over {}\t{}\t{:+.2}%\n", i.sampler, i.over, i.metric.name(), i.pct));
            }
        }
        out
    }
}

fn series_name(metric: Metric) -> String {
    format!("series_{}.tsv", metric.name())
}

fn y_label(metric: Metric) -> &'static str {
    match metric {
        Metric::Recall => "recall",
        Metric::NormalizedRecall => "normalized recall",
        Metric::Throughput => "throughput rate",
    }
}

/// Writes the plot bundle for the results in `results` into `out`.
pub fn write_bundle(results: &Path, out: &Path) -> Result<Vec<PathBuf>, EvalError> {
    let report = load_report(results)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut written = Vec::new();
    let mut figures = Vec::new();
    let (name, seed, hash) = match &report.spec {
        Some(s) => (s.name.clone(), s.seed, s.config_hash()),
        None => ("ablation".to_string(), 0, String::new()),
    };

    if let Some(text) = &report.ablation {
        let path = out.join("series_ablation.tsv");
        let mut series = String::from("sampler\tvalue\tbudget\tmetric\tmean\tci_low\tci_high\n");
        let mut rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split('\t').collect()).filter(|f: &Vec<&str>| f.len() == 10).collect();
        rows.sort_by(|a, b| {
            let num = |s: &str| s.parse::<f64>().unwrap_or(f64::NAN);
            (a[2], num(a[3])).partial_cmp(&(b[2], num(b[3]))).unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut samplers: Vec<String> = Vec::new();
        for f in &rows {
            series.push_str(&format!("{}\t{}\t{}\t{}\t{}\t{}\t{}\n", f[2], f[1], f[3], f[4], f[5], f[6], f[7]));
            if !samplers.iter().any(|s| s == f[2]) {
                samplers.push(f[2].to_string());
            }
        }
        fs::write(&path, series).map_err(io_err(&path))?;
        let axis = rows.first().map_or("value", |f| f[0]).to_string();
        figures.push(FigureEntry {
            kind: "ablation".into(),
            title: format!("{axis} ablation"),
            inputs: vec!["series_ablation.tsv".into()],
            x_label: axis,
            y_label: "metric".into(),
            samplers,
        });
        written.push(path);
    } else {
        let samplers = sampler_order(&report.summary);
        for metric in Metric::ALL {
            let mut rows: Vec<&Aggregate> = report.summary.iter().filter(|a| a.metric == metric).collect();
            rows.sort_by(|a, b| (&a.sampler, a.budget).cmp(&(&b.sampler, b.budget)));
            let mut text = String::from("sampler\tbudget\tmean\tci_low\tci_high\n");
            for a in rows {
                text.push_str(&format!("{}\t{}\t{}\t{}\t{}\n", a.sampler, a.budget, a.interval.mean, a.interval.low, a.interval.high));
            }
            let path = out.join(series_name(metric));
            fs::write(&path, text).map_err(io_err(&path))?;
            written.push(path);
            figures.push(FigureEntry {
                kind: "curve".into(),
                title: format!("{} vs budget", y_label(metric)),
                inputs: vec![series_name(metric)],
                x_label: "API calls".into(),
                y_label: y_label(metric).into(),
                samplers: samplers.clone(),
            });
        }
        let heatmap = results.join(HEATMAP_FILE);
        if heatmap.is_file() {
            let dest = out.join(HEATMAP_FILE);
            let text = fs::read_to_string(&heatmap).map_err(io_err(&heatmap))?;
            let corner = text.split('\t').next().unwrap_or("");
            let (rows, cols) = corner.split_once('\\').unwrap_or((corner, ""));
            fs::write(&dest, &text).map_err(io_err(&dest))?;
            figures.push(FigureEntry {
                kind: "heatmap".into(),
                title: "query precision".into(),
                inputs: vec![HEATMAP_FILE.into()],
                x_label: cols.to_string(),
                y_label: rows.to_string(),
                samplers: Vec::new(),
            });
            written.push(dest);
        }
    }

    let manifest = Manifest { experiment: name, seed, config_hash: hash, figures };
    let path = out.join(MANIFEST_FILE);
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    fs::write(&path, json).map_err(io_err(&path))?;
    written.push(path);
    Ok(written)
}
