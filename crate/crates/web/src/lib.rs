//! Browser demo: recall curves, a two-attribute precision heatmap and a
//! reward explorer, all over synthetic datasets generated in the page.
//!
//! Every export takes and returns JSON strings so the page needs no bundler.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use hiddenpop::api::{BudgetLedger, PagingMode, QueryIndex, SimulatedApi};
use hiddenpop::eval::metrics::Interval;
use hiddenpop::eval::precision::precision_heatmap;
use hiddenpop::rng::{stream_seed, Stream};
use hiddenpop::sampler::{build_sampler, expected_reward, run, Catalog, QueryStats};
use hiddenpop::synth::{generate, SynthProfile, SynthSpec};
use hiddenpop::{ApiConfig, RewardMode, SamplerConfig, SamplerKind};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetParams {
    pub cardinalities: Vec<usize>,
    pub records: usize,
    pub target_fraction: f64,
    #[serde(default)]
    pub correlation: f64,
    #[serde(default)]
    pub clustered: bool,
    #[serde(default)]
    pub seed: u64,
}

impl DatasetParams {
    fn spec(&self) -> SynthSpec {
        let mut s = SynthSpec::new(self.cardinalities.clone(), self.records, self.target_fraction, self.correlation, self.seed);
        if self.clustered {
            s.profile = SynthProfile::Clustered { gap: 0.3, spread: 0.05 };
        }
        s
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    pub dataset: DatasetParams,
    pub samplers: Vec<SamplerKind>,
    pub budget: u64,
    pub page_size: usize,
    pub paging_mode: PagingMode,
    pub replicates: u32,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Curve {
    pub sampler: String,
    pub mean: Vec<f64>,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Simulation {
    pub records: usize,
    pub targets: usize,
    pub curves: Vec<Curve>,
}

/// Mean recall after each call, with 95% bands, for each sampler.
pub fn simulate_curves(p: &SimulateParams) -> Result<Simulation, String> {
    if p.budget == 0 || p.budget > 5000 || p.replicates == 0 || p.replicates > 200 {
        return Err("budget must be in 1..=5000 and replicates in 1..=200".into());
    }
    let d = generate(&p.dataset.spec()).map_err(|e| e.to_string())?.dataset;
    let index = QueryIndex::build(&d);
    let api = ApiConfig::new(p.page_size, p.paging_mode);
    api.validate().map_err(|e| e.to_string())?;
    let catalog = if p.samplers.iter().any(|k| k.needs_catalog()) {
        Some(std::sync::Arc::new(Catalog::build(&index, Default::default(), 200_000).map_err(|e| e.to_string())?))
    } else {
        None
    };
    let total = d.target_count().max(1) as f64;
    let mut curves = Vec::new();
    for &kind in &p.samplers {
        let mut runs: Vec<Vec<u64>> = Vec::new();
        for r in 0..p.replicates as u64 {
            let mut a = api.clone();
            a.rng_seed = stream_seed(p.seed, r, Stream::Api, 0);
            let mut cfg = SamplerConfig::new(kind);
            cfg.rng_seed = stream_seed(p.seed, r, Stream::Sampler, 0);
            let mut sim = SimulatedApi::new(&d, &index, a.clone()).map_err(|e| e.to_string())?;
            let mut sampler = build_sampler(&cfg, &a, &index, catalog.clone()).map_err(|e| e.to_string())?;
            let mut ledger = BudgetLedger::new(p.budget);
            let log = run(sampler.as_mut(), &mut sim, &mut ledger).map_err(|e| e.to_string())?;
            runs.push(log.cumulative_targets().to_vec());
        }
        let mut curve = Curve { sampler: kind.label().into(), mean: vec![], low: vec![], high: vec![] };
        for call in 0..p.budget as usize {
            let values: Vec<f64> = runs.iter().map(|c| c.get(call).or(c.last()).copied().unwrap_or(0) as f64 / total).collect();
            let i = Interval::from_values(&values);
            curve.mean.push(i.mean);
            curve.low.push(i.low);
            curve.high.push(i.high);
        }
        curves.push(curve);
    }
    Ok(Simulation { records: d.len(), targets: d.target_count(), curves })
}

#[derive(Debug, Clone, Serialize)]
pub struct HeatmapView {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub precision: Vec<Vec<Option<f64>>>,
    pub row_precision: Vec<Option<f64>>,
    pub col_precision: Vec<Option<f64>>,
    pub best_cell: Vec<u16>,
}

/// True precision of every pair of values of the first two attributes, plus
/// the single-attribute precisions along each margin.
pub fn heatmap(p: &DatasetParams) -> Result<HeatmapView, String> {
    if p.cardinalities.len() < 2 {
        return Err("the heatmap needs at least two attributes".into());
    }
    let s = generate(&p.spec()).map_err(|e| e.to_string())?;
    let d = &s.dataset;
    let index = QueryIndex::build(d);
    let h = precision_heatmap(&index, d.schema(), 0, 1).map_err(|e| e.to_string())?;
    let margin = |i: usize| {
        let (n, t) = (d.value_counts(i), d.target_counts(i));
        n.iter().zip(&t).map(|(&n, &t)| (n > 0).then(|| t as f64 / n as f64)).collect()
    };
    Ok(HeatmapView {
        rows: h.row_labels,
        cols: h.col_labels,
        precision: h.precision,
        row_precision: margin(0),
        col_precision: margin(1),
        best_cell: s.best_cell,
    })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardParams {
    pub s: f64,
    pub f: f64,
    pub n_seen: u64,
    pub match_count: u64,
    pub max_page: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RewardSeries {
    pub mode: String,
    pub values: Vec<f64>,
}

/// Expected reward of one query under each reward form for page sizes
/// `1..=max_page`.
pub fn reward_table(p: &RewardParams) -> Result<Vec<RewardSeries>, String> {
    if p.max_page == 0 || p.max_page > 1000 {
        return Err("max_page must be in 1..=1000".into());
    }
    let stats = QueryStats { s: p.s, f: p.f, n_seen: p.n_seen, est_match_count: Some(p.match_count) };
    let modes = [
        (RewardMode::WithReplacementUnique, "with-replacement-unique"),
        (RewardMode::WithReplacementLiteral, "with-replacement-literal"),
        (RewardMode::WithoutReplacement, "without-replacement"),
        (RewardMode::UnknownN, "unknown-n"),
    ];
    modes
        .iter()
        .map(|&(mode, name)| {
            let values = (1..=p.max_page)
                .map(|m| expected_reward(&stats, m, mode).map_err(|e| e.to_string()))
                .collect::<Result<_, _>>()?;
            Ok(RewardSeries { mode: name.into(), values })
        })
        .collect()
}

fn call<P: for<'de> Deserialize<'de>, R: Serialize>(json: &str, f: impl FnOnce(&P) -> Result<R, String>) -> Result<String, String> {
    let params: P = serde_json::from_str(json).map_err(|e| e.to_string())?;
    let out = f(&params)?;
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn simulate(params: &str) -> Result<String, JsError> {
    call(params, simulate_curves).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = precisionHeatmap)]
pub fn precision_heatmap_json(params: &str) -> Result<String, JsError> {
    call(params, heatmap).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = rewardTable)]
pub fn reward_table_json(params: &str) -> Result<String, JsError> {
    call(params, reward_table).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DatasetParams {
        DatasetParams { cardinalities: vec![3, 4], records: 600, target_fraction: 0.3, correlation: 0.6, clustered: false, seed: 1 }
    }

    #[test]
    fn curves_are_monotone_and_bounded() {
        let p = SimulateParams {
            dataset: small(),
            samplers: vec![SamplerKind::DtTmp, SamplerKind::Uni, SamplerKind::Cb],
            budget: 30,
            page_size: 5,
            paging_mode: PagingMode::WithoutReplacementPerCall,
            replicates: 3,
            seed: 2,
        };
        let sim = simulate_curves(&p).unwrap();
        assert_eq!(sim.curves.len(), 3);
        for c in &sim.curves {
            assert_eq!(c.mean.len(), 30);
            assert!(c.mean.windows(2).all(|w| w[0] <= w[1]));
            assert!(c.mean.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn json_entry_points() {
        let json = r#"{"dataset":{"cardinalities":[2,2],"records":40,"target_fraction":0.5},"samplers":["dt-tmp","uni"],"budget":5,"page_size":4,"paging_mode":"with-replacement","replicates":2}"#;
        let out: serde_json::Value = serde_json::from_str(&call(json, simulate_curves).unwrap()).unwrap();
        assert_eq!(out["curves"].as_array().unwrap().len(), 2);
        assert!(call::<SimulateParams, Simulation>("{}", simulate_curves).is_err());
        let heat = call(r#"{"cardinalities":[3,4],"records":600,"target_fraction":0.3,"correlation":0.6}"#, heatmap).unwrap();
        assert!(heat.contains("\"rows\":[\"v1\",\"v2\",\"v3\"]"));
    }

    #[test]
    fn heatmap_best_cell_is_darkest() {
        let h = heatmap(&small()).unwrap();
        let (r, c) = (h.best_cell[0] as usize, h.best_cell[1] as usize);
        let best = h.precision[r][c].unwrap();
        assert!(h.precision.iter().flatten().flatten().all(|&p| p <= best));
        assert_eq!(h.row_precision.len(), 3);
    }

    #[test]
    fn reward_forms() {
        let t = reward_table(&RewardParams { s: 3.0, f: 1.0, n_seen: 0, match_count: 100, max_page: 10 }).unwrap();
        assert_eq!(t.len(), 4);
        let get = |name: &str| t.iter().find(|r| r.mode == name).unwrap();
        assert!((get("without-replacement").values[9] - 7.5).abs() < 1e-12);
        assert!((get("unknown-n").values[9] - 7.5).abs() < 1e-12);
        assert!(get("with-replacement-unique").values[9] < 7.5);
        assert!(reward_table(&RewardParams { s: 1.0, f: 1.0, n_seen: 0, match_count: 1, max_page: 0 }).is_err());
    }
}
