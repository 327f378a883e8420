//! Replicated experiments over a budget grid.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::metrics::{normalized_recall, recall, throughput_rate, Interval};
use super::precision::{precision_heatmap, Heatmap};
use crate::api::{ApiConfig, ApiError, BudgetLedger, QueryIndex, SimulatedApi, DEFAULT_ENUMERATION_CAP};
use crate::dataset::{apply_transform, load_dataset, Dataset, DatasetError, Declaration, TransformSpec};
use crate::rng::{stream_seed, Stream};
use crate::sampler::{build_sampler, run, Catalog, SamplerConfig, SamplerError};
use crate::synth::{generate, SynthError, SynthSpec};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Api(#[from] ApiError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error("invalid experiment: {0}")]
    Spec(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io { path: path.to_path_buf(), source }
}

/// Where the entity table comes from: a delimited file with its declaration,
/// or a synthetic generator.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declaration: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSpec>,
}

impl DatasetSource {
    pub fn file(path: impl Into<PathBuf>, declaration: impl Into<PathBuf>) -> Self {
        DatasetSource { path: Some(path.into()), declaration: Some(declaration.into()), synth: None }
    }

    pub fn synthetic(spec: SynthSpec) -> Self {
        DatasetSource { path: None, declaration: None, synth: Some(spec) }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        match (&self.path, &self.declaration, &self.synth) {
            (Some(_), Some(_), None) | (None, None, Some(_)) => Ok(()),
            _ => Err(EvalError::Spec("dataset needs either `path` and `declaration`, or `synth`".into())),
        }
    }

    /// Makes relative paths relative to `base`.
    pub fn resolve_against(&mut self, base: &Path) {
        for p in [&mut self.path, &mut self.declaration].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn load(&self) -> Result<Dataset, EvalError> {
        self.validate()?;
        if let Some(spec) = &self.synth {
            return Ok(generate(spec)?.dataset);
        }
        let (path, decl) = (self.path.as_ref().unwrap(), self.declaration.as_ref().unwrap());
        let decl = Declaration::from_file(decl)?;
        let (dataset, report) = load_dataset(path, &decl)?;
        if report.rows_dropped_missing > 0 {
            log::info!("{}: dropped {} rows with missing values", path.display(), report.rows_dropped_missing);
        }
        Ok(dataset)
    }
}

fn hundred() -> u32 {
    100
}

fn default_name() -> String {
    "experiment".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "default_name")]
    pub name: String,
    pub budgets: Vec<u64>,
    #[serde(default = "hundred")]
    pub replicates: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enumeration_cap: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Two attribute names; when set, a true-precision matrix is exported.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heatmap: Option<Vec<String>>,
    pub dataset: DatasetSource,
    pub api: ApiConfig,
    #[serde(default)]
    pub transforms: Vec<TransformSpec>,
    pub samplers: Vec<SamplerConfig>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::Spec(m.into()));
        if self.replicates == 0 {
            return bad("replicates must be at least 1");
        }
        if self.budgets.is_empty() || self.budgets[0] == 0 {
            return bad("budgets must be a non-empty list of positive call counts");
        }
        if self.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return bad("budgets must be strictly increasing");
        }
        if self.samplers.is_empty() {
            return bad("at least one sampler is required");
        }
        let mut names: Vec<&str> = self.samplers.iter().map(|s| s.display_name()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("sampler names must be unique; set `name` to tell variants apart");
        }
        for s in &self.samplers {
            s.validate()?;
        }
        self.api.validate()?;
        self.dataset.validate()?;
        if let Some(h) = &self.heatmap {
            if h.len() != 2 {
                return bad("heatmap takes exactly two attribute names");
            }
        }
        Ok(())
    }

    pub fn max_budget(&self) -> u64 {
        self.budgets.last().copied().unwrap_or(0)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment specs always serialize")
    }

    pub fn from_toml(text: &str) -> Result<ExperimentSpec, EvalError> {
        toml::from_str(text).map_err(|e| EvalError::Spec(e.message().to_string()))
    }

    /// Stable 64-bit FNV-1a digest of the resolved plan, as hex.
    pub fn config_hash(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.to_toml().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{h:016x}")
    }

    /// Loads the dataset and applies the configured transforms in order.
    pub fn materialize(&self) -> Result<Dataset, EvalError> {
        let mut d = self.dataset.load()?;
        for (i, t) in self.transforms.iter().enumerate() {
            d = apply_transform(&d, t, stream_seed(self.seed, 0, Stream::Transform, i as u64))?;
        }
        Ok(d)
    }
}

/// Dataset, index and (when needed) the non-empty query catalog.
#[derive(Debug)]
pub struct Prepared {
    pub dataset: Dataset,
    pub index: QueryIndex,
    pub catalog: Option<Arc<Catalog>>,
}

impl Prepared {
    pub fn new(dataset: Dataset, samplers: &[SamplerConfig], cap: usize) -> Result<Prepared, EvalError> {
        let mut needing = samplers.iter().filter(|s| s.kind.needs_catalog()).map(|s| s.arm_set);
        let arm_set = needing.next();
        if needing.any(|a| Some(a) != arm_set) {
            return Err(EvalError::Spec("all catalog-based samplers must share one arm_set".into()));
        }
        let index = QueryIndex::build(&dataset);
        let catalog = match arm_set {
            Some(set) => Some(Arc::new(Catalog::build(&index, set, cap)?)),
            None => None,
        };
        Ok(Prepared { dataset, index, catalog })
    }
}

/// One sampler on one replicate, run to the largest budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub sampler: String,
    pub replicate: u32,
    pub budget: u64,
    pub page_size: usize,
    pub calls: u64,
    pub target_count: u64,
    /// Distinct targets found after each call.
    pub cumulative_targets: Vec<u64>,
}

impl RunResult {
    /// Distinct targets after the first `budget` calls.
    pub fn found_at(&self, budget: u64) -> u64 {
        let k = (budget as usize).min(self.cumulative_targets.len());
        if k == 0 {
            0
        } else {
            self.cumulative_targets[k - 1]
        }
    }

    pub fn metric(&self, metric: Metric, budget: u64) -> f64 {
        let found = self.found_at(budget);
        match metric {
            Metric::Recall => recall(found, self.target_count).unwrap_or(f64::NAN),
            Metric::NormalizedRecall => normalized_recall(found, budget, self.page_size),
            Metric::Throughput => throughput_rate(found, budget, self.page_size),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Recall,
    NormalizedRecall,
    Throughput,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Recall, Metric::NormalizedRecall, Metric::Throughput];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Recall => "recall",
            Metric::NormalizedRecall => "normalized_recall",
            Metric::Throughput => "throughput",
        }
    }

    pub fn parse(s: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.name() == s)
    }
}

/// Cross-replicate summary of one metric for one (sampler, budget).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub sampler: String,
    pub budget: u64,
    pub metric: Metric,
    pub interval: Interval,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub raw: Vec<RunResult>,
    pub aggregates: Vec<Aggregate>,
    pub heatmap: Option<Heatmap>,
}

impl ExperimentOutput {
    pub fn find(&self, sampler: &str, budget: u64, metric: Metric) -> Option<&Interval> {
        self.aggregates
            .iter()
            .find(|a| a.sampler == sampler && a.budget == budget && a.metric == metric)
            .map(|a| &a.interval)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses all available.
    pub jobs: Option<usize>,
}

#[cfg(feature = "parallel")]
pub(crate) fn par_map<T, R, F>(items: Vec<T>, jobs: Option<usize>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    let work = || items.into_par_iter().map(&f).collect();
    match jobs.and_then(|j| rayon::ThreadPoolBuilder::new().num_threads(j).build().ok()) {
        Some(pool) => pool.install(work),
        None => work(),
    }
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map<T, R, F>(items: Vec<T>, _jobs: Option<usize>, f: F) -> Vec<R>
where
    F: Fn(T) -> R,
{
    items.into_iter().map(f).collect()
}

/// Runs one sampler for one replicate on prepared data.
pub fn run_single(spec: &ExperimentSpec, prepared: &Prepared, sampler: usize, replicate: u32) -> Result<RunResult, EvalError> {
    let cfg = &spec.samplers[sampler];
    let mut api_cfg = spec.api.clone();
    api_cfg.rng_seed = stream_seed(spec.seed, replicate as u64, Stream::Api, spec.api.rng_seed);
    let mut scfg = cfg.clone();
    scfg.rng_seed = stream_seed(spec.seed, replicate as u64, Stream::Sampler, cfg.rng_seed);
    let mut api = SimulatedApi::new(&prepared.dataset, &prepared.index, api_cfg.clone())?;
    let mut sampler = build_sampler(&scfg, &api_cfg, &prepared.index, prepared.catalog.clone())?;
    let mut ledger = BudgetLedger::new(spec.max_budget());
    let log = run(sampler.as_mut(), &mut api, &mut ledger)?;
    Ok(RunResult {
        sampler: cfg.display_name().to_string(),
        replicate,
        budget: spec.max_budget(),
        page_size: api_cfg.page_size,
        calls: ledger.calls_made(),
        target_count: prepared.dataset.target_count() as u64,
        cumulative_targets: log.cumulative_targets().to_vec(),
    })
}

/// Runs every sampler on every replicate. `data(r)` supplies the prepared
/// dataset for replicate `r`; results are ordered by (sampler, replicate).
pub fn run_replicates<D>(spec: &ExperimentSpec, opts: RunOptions, data: D) -> Result<Vec<RunResult>, EvalError>
where
    D: Fn(u32) -> Result<Arc<Prepared>, EvalError> + Sync + Send,
{
    spec.validate()?;
    let per_rep = par_map((0..spec.replicates).collect(), opts.jobs, |r| -> Result<Vec<RunResult>, EvalError> {
        let prepared = data(r)?;
        (0..spec.samplers.len()).map(|s| run_single(spec, &prepared, s, r)).collect()
    });
    let mut grid: Vec<Vec<RunResult>> = per_rep.into_iter().collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity(spec.replicates as usize * spec.samplers.len());
    for s in 0..spec.samplers.len() {
        for reps in grid.iter_mut() {
            out.push(reps[s].clone());
        }
    }
    Ok(out)
}

pub fn aggregate(spec: &ExperimentSpec, raw: &[RunResult]) -> Vec<Aggregate> {
    let mut out = Vec::new();
    for cfg in &spec.samplers {
        let name = cfg.display_name();
        let runs: Vec<&RunResult> = raw.iter().filter(|r| r.sampler == name).collect();
        for &b in &spec.budgets {
            for metric in Metric::ALL {
                let values: Vec<f64> = runs.iter().map(|r| r.metric(metric, b)).collect();
                out.push(Aggregate { sampler: name.to_string(), budget: b, metric, interval: Interval::from_values(&values) });
            }
        }
    }
    out
}

/// Loads, transforms and runs the whole experiment.
pub fn run_experiment(spec: &ExperimentSpec, opts: RunOptions) -> Result<ExperimentOutput, EvalError> {
    spec.validate()?;
    let dataset = spec.materialize()?;
    run_on_dataset(spec, dataset, opts)
}

/// Runs the experiment against an already materialized dataset.
pub fn run_on_dataset(spec: &ExperimentSpec, dataset: Dataset, opts: RunOptions) -> Result<ExperimentOutput, EvalError> {
    let prepared = Arc::new(Prepared::new(dataset, &spec.samplers, spec.enumeration_cap.unwrap_or(DEFAULT_ENUMERATION_CAP))?);
    let raw = run_replicates(spec, opts, |_| Ok(prepared.clone()))?;
    let heatmap = match &spec.heatmap {
        Some(names) => {
            let schema = prepared.dataset.schema();
            let find = |n: &String| {
                schema.index_of(n).ok_or_else(|| EvalError::Spec(format!("heatmap attribute `{n}` is not queryable")))
            };
            Some(precision_heatmap(&prepared.index, schema, find(&names[0])?, find(&names[1])?)?)
        }
        None => None,
    };
    let aggregates = aggregate(spec, &raw);
    Ok(ExperimentOutput { raw, aggregates, heatmap })
}

pub const RAW_FILE: &str = "raw.jsonl";
pub const SUMMARY_FILE: &str = "summary.tsv";
pub const PLAN_FILE: &str = "plan.toml";
pub const HEATMAP_FILE: &str = "heatmap.tsv";

pub fn write_raw(path: &Path, raw: &[RunResult]) -> Result<(), EvalError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for r in raw {
        serde_json::to_writer(&mut w, r).map_err(|e| io_err(path)(e.into()))?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_raw(path: &Path) -> Result<Vec<RunResult>, EvalError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    BufReader::new(file)
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|(i, line)| {
            let line = line.map_err(io_err(path))?;
            serde_json::from_str(&line)
                .map_err(|e| EvalError::Parse { path: path.to_path_buf(), message: format!("line {}: {e}", i + 1) })
        })
        .collect()
}

pub const SUMMARY_HEADER: &str = "sampler\tbudget\tmetric\tmean\tci_low\tci_high\tsd\tn";

pub fn write_summary(path: &Path, aggregates: &[Aggregate]) -> Result<(), EvalError> {
    let mut text = String::from(SUMMARY_HEADER);
    text.push('\n');
    for a in aggregates {
        let i = &a.interval;
        text.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            a.sampler,
            a.budget,
            a.metric.name(),
            i.mean,
            i.low,
            i.high,
            i.sd,
            i.n
        ));
    }
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_summary(path: &Path) -> Result<Vec<Aggregate>, EvalError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let bad = |line: usize, m: &str| EvalError::Parse { path: path.to_path_buf(), message: format!("line {line}: {m}") };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == SUMMARY_HEADER => {}
        _ => return Err(bad(1, "unexpected header")),
    }
    let mut out = Vec::new();
    for (i, line) in lines.filter(|(_, l)| !l.is_empty()) {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 8 {
            return Err(bad(i + 1, "expected 8 columns"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(i + 1, "bad number"));
        out.push(Aggregate {
            sampler: f[0].to_string(),
            budget: f[1].parse().map_err(|_| bad(i + 1, "bad budget"))?,
            metric: Metric::parse(f[2]).ok_or_else(|| bad(i + 1, "unknown metric"))?,
            interval: Interval {
                mean: num(f[3])?,
                low: num(f[4])?,
                high: num(f[5])?,
                sd: num(f[6])?,
                n: f[7].parse().map_err(|_| bad(i + 1, "bad count"))?,
            },
        });
    }
    Ok(out)
}

/// Writes the plan, raw runs, summary and optional heatmap into `dir`.
pub fn write_outputs(dir: &Path, spec: &ExperimentSpec, out: &ExperimentOutput) -> Result<Vec<PathBuf>, EvalError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let plan = dir.join(PLAN_FILE);
    fs::write(&plan, spec.to_toml()).map_err(io_err(&plan))?;
    let raw = dir.join(RAW_FILE);
    write_raw(&raw, &out.raw)?;
    let summary = dir.join(SUMMARY_FILE);
    write_summary(&summary, &out.aggregates)?;
    let mut written = vec![plan, raw, summary];
    if let Some(h) = &out.heatmap {
        let path = dir.join(HEATMAP_FILE);
        let mut buf = Vec::new();
        h.write_tsv(&mut buf).map_err(io_err(&path))?;
        fs::write(&path, buf).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}
