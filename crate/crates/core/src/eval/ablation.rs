//! One-factor ablations: page size, queryable-attribute subsets, attribute
//! cardinality and correlation shuffling.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::index::sample;

use super::experiment::{
    aggregate, io_err, run_on_dataset, run_replicates, write_raw, write_summary, Aggregate, EvalError, ExperimentSpec,
    Metric, Prepared, RunOptions, RunResult, RAW_FILE, SUMMARY_FILE,
};
use crate::api::DEFAULT_ENUMERATION_CAP;
use crate::dataset::{apply_transform, Dataset, TransformSpec, DEFAULT_MERGED_LABEL};
use crate::rng::{rng_from_seed, stream_seed, Stream};

/// Subsets evaluated per size before switching to a random sample.
pub const SUBSET_CAP: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    PageSize,
    Attributes,
    Cardinality,
    Shuffle,
}

impl Axis {
    pub const ALL: [Axis; 4] = [Axis::PageSize, Axis::Attributes, Axis::Cardinality, Axis::Shuffle];

    pub fn name(self) -> &'static str {
        match self {
            Axis::PageSize => "page-size",
            Axis::Attributes => "attributes",
            Axis::Cardinality => "cardinality",
            Axis::Shuffle => "shuffle",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Axis, EvalError> {
        Axis::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| {
            EvalError::Spec(format!("unknown axis `{s}`; expected page-size, attributes, cardinality or shuffle"))
        })
    }
}

#[derive(Debug, Clone)]
pub struct AblationPoint {
    pub value: f64,
    pub raw: Vec<RunResult>,
    pub aggregates: Vec<Aggregate>,
    /// Attribute subsets averaged at this point (attributes axis only).
    pub subsets: Vec<Vec<String>>,
}

/// Percentage change in mean recall between consecutive page sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct RecallDelta {
    pub sampler: String,
    pub budget: u64,
    pub from: usize,
    pub to: usize,
    pub recall_from: f64,
    pub recall_to: f64,
    pub delta_pct: f64,
}

#[derive(Debug, Clone)]
pub struct AblationOutput {
    pub axis: Axis,
    pub points: Vec<AblationPoint>,
    pub deltas: Vec<RecallDelta>,
}

impl AblationOutput {
    pub fn point(&self, value: f64) -> Option<&AblationPoint> {
        self.points.iter().find(|p| p.value == value)
    }
}

pub fn delta_pct(before: f64, after: f64) -> f64 {
    100.0 * (after - before) / before
}

fn whole(axis: Axis, v: f64, min: usize) -> Result<usize, EvalError> {
    if v.fract() != 0.0 || v < min as f64 {
        return Err(EvalError::Spec(format!("{axis} values must be integers >= {min}, got {v}")));
    }
    Ok(v as usize)
}

fn check_values(axis: Axis, values: &[f64], dataset: &Dataset) -> Result<(), EvalError> {
    if values.is_empty() {
        return Err(EvalError::Spec("at least one axis value is required".into()));
    }
    let r = dataset.schema().len();
    for &v in values {
        match axis {
            Axis::PageSize => {
                whole(axis, v, 1)?;
            }
            Axis::Attributes => {
                if whole(axis, v, 1)? > r {
                    return Err(EvalError::Spec(format!("subset size {v} exceeds the {r} queryable attributes")));
                }
            }
            Axis::Cardinality => {
                whole(axis, v, 2)?;
            }
            Axis::Shuffle => {
                if !(0.0..=1.0).contains(&v) {
                    return Err(EvalError::Spec(format!("shuffle ratio {v} outside [0, 1]")));
                }
            }
        }
    }
    Ok(())
}

/// All size-`s` subsets of `0..r` in lexicographic order, or a seeded
/// sample of [`SUBSET_CAP`] distinct ones when there are more.
pub fn attribute_subsets(r: usize, s: usize, seed: u64) -> Vec<Vec<usize>> {
    let count = binomial(r, s);
    if count <= SUBSET_CAP as u128 {
        let mut out = Vec::new();
        let mut cur = Vec::with_capacity(s);
        combos(0, r, s, &mut cur, &mut out);
        return out;
    }
    let mut rng = rng_from_seed(seed);
    let mut picked = BTreeSet::new();
    while picked.len() < SUBSET_CAP {
        let mut v = sample(&mut rng, r, s).into_vec();
        v.sort_unstable();
        picked.insert(v);
    }
    picked.into_iter().collect()
}

fn combos(start: usize, r: usize, s: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if cur.len() == s {
        out.push(cur.clone());
        return;
    }
    for i in start..r {
        cur.push(i);
        combos(i + 1, r, s, cur, out);
        cur.pop();
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i as u128 + 1))
}

fn run_point(spec: &ExperimentSpec, dataset: Dataset, opts: RunOptions) -> Result<(Vec<RunResult>, Vec<Aggregate>), EvalError> {
    let out = run_on_dataset(spec, dataset, opts)?;
    Ok((out.raw, out.aggregates))
}

/// Runs `spec` once per axis value, varying only that factor.
pub fn run_ablation(spec: &ExperimentSpec, axis: Axis, values: &[f64], opts: RunOptions) -> Result<AblationOutput, EvalError> {
    spec.validate()?;
    let base = spec.materialize()?;
    check_values(axis, values, &base)?;
    let cap = spec.enumeration_cap.unwrap_or(DEFAULT_ENUMERATION_CAP);
    let mut points = Vec::with_capacity(values.len());
    for &v in values {
        let point = match axis {
            Axis::PageSize => {
                let mut s = spec.clone();
                s.api.page_size = v as usize;
                let (raw, aggregates) = run_point(&s, base.clone(), opts)?;
                AblationPoint { value: v, raw, aggregates, subsets: Vec::new() }
            }
            Axis::Attributes => {
                let size = v as usize;
                let schema = base.schema();
                let seed = stream_seed(spec.seed, 0, Stream::Subsets, size as u64);
                let mut raw = Vec::new();
                let mut subsets = Vec::new();
                for (k, subset) in attribute_subsets(schema.len(), size, seed).into_iter().enumerate() {
                    let names: Vec<String> = subset.iter().map(|&i| schema.attribute(i).name.clone()).collect();
                    let t = TransformSpec::AttributeSubset { attributes: names.clone() };
                    let d = apply_transform(&base, &t, 0)?;
                    let (runs, _) = run_point(spec, d, opts)?;
                    raw.extend(runs.into_iter().map(|mut r| {
                        r.replicate += k as u32 * spec.replicates;
                        r
                    }));
                    subsets.push(names);
                }
                let aggregates = aggregate(spec, &raw);
                AblationPoint { value: v, raw, aggregates, subsets }
            }
            Axis::Cardinality => {
                let c = v as usize;
                let mut d = base.clone();
                for i in 0..base.schema().len() {
                    if base.schema().cardinality(i) > c {
                        let t = TransformSpec::CardinalityMerge {
                            attribute: base.schema().attribute(i).name.clone(),
                            c,
                            merged_label: DEFAULT_MERGED_LABEL.to_string(),
                        };
                        d = apply_transform(&d, &t, 0)?;
                    }
                }
                let (raw, aggregates) = run_point(spec, d, opts)?;
                AblationPoint { value: v, raw, aggregates, subsets: Vec::new() }
            }
            Axis::Shuffle => {
                // Shuffling moves labels only, so the match-count catalog is shared.
                let shared = Prepared::new(base.clone(), &spec.samplers, cap)?;
                let t = TransformSpec::Shuffle { ratio: v, seed: spec.seed };
                let raw = run_replicates(spec, opts, |r| {
                    let seed = stream_seed(spec.seed, r as u64, Stream::Transform, 0);
                    let dataset = apply_transform(&base, &t, seed)?;
                    let index = crate::api::QueryIndex::build(&dataset);
                    Ok(Arc::new(Prepared { dataset, index, catalog: shared.catalog.clone() }))
                })?;
                let aggregates = aggregate(spec, &raw);
                AblationPoint { value: v, raw, aggregates, subsets: Vec::new() }
            }
        };
        points.push(point);
    }
    let deltas = if axis == Axis::PageSize { page_size_deltas(spec, &points) } else { Vec::new() };
    Ok(AblationOutput { axis, points, deltas })
}

fn page_size_deltas(spec: &ExperimentSpec, points: &[AblationPoint]) -> Vec<RecallDelta> {
    let mut out = Vec::new();
    for pair in points.windows(2) {
        for cfg in &spec.samplers {
            let name = cfg.display_name();
            for &b in &spec.budgets {
                let mean = |p: &AblationPoint| {
                    p.aggregates
                        .iter()
                        .find(|a| a.sampler == name && a.budget == b && a.metric == Metric::Recall)
                        .map_or(f64::NAN, |a| a.interval.mean)
                };
                let (ra, rb) = (mean(&pair[0]), mean(&pair[1]));
                out.push(RecallDelta {
                    sampler: name.to_string(),
                    budget: b,
                    from: pair[0].value as usize,
                    to: pair[1].value as usize,
                    recall_from: ra,
                    recall_to: rb,
                    delta_pct: delta_pct(ra, rb),
                });
            }
        }
    }
    out
}

pub const COMBINED_FILE: &str = "combined.tsv";
pub const DELTA_FILE: &str = "delta.tsv";
pub const SUBSETS_FILE: &str = "subsets.tsv";

/// Writes `<dir>/<axis>/<value>/{raw.jsonl,summary.tsv}`, a combined table
/// across values, and the recall-change table for the page-size axis.
pub fn write_ablation(dir: &Path, out: &AblationOutput) -> Result<Vec<PathBuf>, EvalError> {
    let root = dir.join(out.axis.name());
    fs::create_dir_all(&root).map_err(io_err(&root))?;
    let mut written = Vec::new();
    let mut combined = String::from("axis\tvalue\tsampler\tbudget\tmetric\tmean\tci_low\tci_high\tsd\tn\n");
    for p in &out.points {
        let sub = root.join(p.value.to_string());
        fs::create_dir_all(&sub).map_err(io_err(&sub))?;
        let raw = sub.join(RAW_FILE);
        write_raw(&raw, &p.raw)?;
        let summary = sub.join(SUMMARY_FILE);
        write_summary(&summary, &p.aggregates)?;
        written.extend([raw, summary]);
        if !p.subsets.is_empty() {
            let path = sub.join(SUBSETS_FILE);
            let mut text = format!("# cap {SUBSET_CAP}\n");
            for s in &p.subsets {
                text.push_str(&s.join("\t"));
                text.push('\n');
            }
            fs::write(&path, text).map_err(io_err(&path))?;
            written.push(path);
        }
        for a in &p.aggregates {
            let i = &a.interval;
            combined.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                out.axis,
                p.value,
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
    }
    let path = root.join(COMBINED_FILE);
    fs::write(&path, combined).map_err(io_err(&path))?;
    written.push(path);
    if !out.deltas.is_empty() {
        let mut text = String::from("sampler\tbudget\tfrom\tto\trecall_from\trecall_to\tdelta_r_pct\n");
        for d in &out.deltas {
            text.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                d.sampler, d.budget, d.from, d.to, d.recall_from, d.recall_to, d.delta_pct
            ));
        }
        let path = root.join(DELTA_FILE);
        fs::write(&path, text).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}
