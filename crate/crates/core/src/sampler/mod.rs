//! Samplers choosing which query to issue next, and the loop that drives them.

mod baselines;
mod dt_tmp;
mod log;
mod pool;
mod reward;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use baselines::{ContentBased, Exploration, LocalSearch, RandomWalk, Thompson, Uniform};
pub use dt_tmp::DtTmp;
pub use log::{CallRecord, SampleLog};
pub use pool::{Observation, PoolError, PoolNode, QueryPool};
pub use reward::{
    expected_reward, expected_unique, reward_for_precision, thompson_draw, QueryStats, RewardError, RewardMode,
};

use crate::api::{ApiConfig, ApiError, ArmSet, Arms, BudgetLedger, PageToken, PagingMode, QueryIndex, SimulatedApi};
use crate::query::Query;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("{0} needs the list of non-empty queries")]
    MissingCatalog(SamplerKind),
    #[error("invalid sampler configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Api(#[from] ApiError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SamplerKind {
    #[serde(rename = "dt-tmp", alias = "DT-TMP")]
    DtTmp,
    #[serde(rename = "tmp", alias = "TMP")]
    Tmp,
    #[serde(rename = "exp", alias = "EXP")]
    Exp,
    #[serde(rename = "uni", alias = "UNI")]
    Uni,
    #[serde(rename = "rw", alias = "RW")]
    Rw,
    #[serde(rename = "ls", alias = "LS")]
    Ls,
    #[serde(rename = "cb", alias = "CB")]
    Cb,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 7] = [
        SamplerKind::DtTmp,
        SamplerKind::Tmp,
        SamplerKind::Exp,
        SamplerKind::Uni,
        SamplerKind::Rw,
        SamplerKind::Ls,
        SamplerKind::Cb,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SamplerKind::DtTmp => "DT-TMP",
            SamplerKind::Tmp => "TMP",
            SamplerKind::Exp => "EXP",
            SamplerKind::Uni => "UNI",
            SamplerKind::Rw => "RW",
            SamplerKind::Ls => "LS",
            SamplerKind::Cb => "CB",
        }
    }

    /// Whether the sampler is granted the list of non-empty queries.
    pub fn needs_catalog(self) -> bool {
        !matches!(self, SamplerKind::DtTmp | SamplerKind::Uni)
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

fn ten() -> usize {
    10
}

fn half() -> f64 {
    0.5
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    /// Display name; defaults to the kind's label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Calls between pool expansions.
    #[serde(default = "ten")]
    pub epoch: usize,
    /// `None` picks a form matching the paging mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_mode: Option<RewardMode>,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "half")]
    pub rw_generalize_prob: f64,
    #[serde(default = "one")]
    pub cb_alpha: f64,
    #[serde(default)]
    pub arm_set: ArmSet,
}

impl SamplerConfig {
    pub fn new(kind: SamplerKind) -> SamplerConfig {
        SamplerConfig {
            kind,
            name: None,
            epoch: 10,
            reward_mode: None,
            rng_seed: 0,
            rw_generalize_prob: 0.5,
            cb_alpha: 1.0,
            arm_set: ArmSet::AllNonEmpty,
        }
    }

    pub fn display_name(&self) -> &str {
        self.name.as_deref().unwrap_or(self.kind.label())
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.epoch == 0 {
            return Err(SamplerError::Config("epoch must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.rw_generalize_prob) {
            return Err(SamplerError::Config("rw_generalize_prob must lie in [0, 1]".into()));
        }
        if !(self.cb_alpha > 0.0) {
            return Err(SamplerError::Config("cb_alpha must be positive".into()));
        }
        Ok(())
    }

    /// Reward form actually used against `api`. Withheld match counts force
    /// the count-free form.
    pub fn resolved_reward(&self, api: &ApiConfig) -> RewardMode {
        if !api.report_match_count {
            return RewardMode::UnknownN;
        }
        self.reward_mode.unwrap_or(match api.paging_mode {
            PagingMode::WithReplacement => RewardMode::WithReplacementUnique,
            _ => RewardMode::WithoutReplacement,
        })
    }
}

/// The non-empty queries of a dataset, granted to the flat baselines.
#[derive(Debug, Clone)]
pub struct Catalog {
    arms: Arms,
    arm_pos: HashMap<Query, u32>,
    nonempty: HashMap<Query, u32>,
}

impl Catalog {
    pub fn build(index: &QueryIndex, set: ArmSet, cap: usize) -> Result<Catalog, ApiError> {
        let all = index.enumerate_nonempty(ArmSet::AllNonEmpty, cap)?;
        let nonempty: HashMap<Query, u32> =
            all.queries.iter().cloned().zip(all.match_counts.iter().copied()).collect();
        let arms = match set {
            ArmSet::AllNonEmpty => all,
            ArmSet::FullyBound => index.enumerate_nonempty(ArmSet::FullyBound, cap)?,
        };
        let arm_pos = arms.queries.iter().enumerate().map(|(i, q)| (q.clone(), i as u32)).collect();
        Ok(Catalog { arms, arm_pos, nonempty })
    }

    pub fn arms(&self) -> &Arms {
        &self.arms
    }

    pub fn arm_position(&self, q: &Query) -> Option<u32> {
        self.arm_pos.get(q).copied()
    }

    /// Match count of any non-empty query; `None` for empty ones.
    pub fn match_count(&self, q: &Query) -> Option<u32> {
        self.nonempty.get(q).copied()
    }

    pub fn nonempty_len(&self) -> usize {
        self.nonempty.len()
    }
}

/// What a sampler may consult when choosing or learning.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub index: &'a QueryIndex,
    pub log: &'a SampleLog,
    pub page_size: usize,
    pub calls_made: u64,
}

pub trait Sampler {
    fn next_query(&mut self, ctx: &StepContext<'_>) -> Query;

    /// Called after each call, once the page has been appended to the log.
    fn observe(&mut self, issued: &Query, obs: Observation<'_>, ctx: &StepContext<'_>);
}

/// Instantiates the sampler described by `cfg`.
pub fn build_sampler(
    cfg: &SamplerConfig,
    api: &ApiConfig,
    index: &QueryIndex,
    catalog: Option<Arc<Catalog>>,
) -> Result<Box<dyn Sampler>, SamplerError> {
    cfg.validate()?;
    let mode = cfg.resolved_reward(api);
    let m = api.page_size;
    let need = || catalog.clone().ok_or(SamplerError::MissingCatalog(cfg.kind));
    Ok(match cfg.kind {
        SamplerKind::DtTmp => Box::new(DtTmp::new(index.arity(), cfg.epoch, mode, m, cfg.rng_seed)),
        SamplerKind::Uni => Box::new(Uniform::new(index.arity())),
        SamplerKind::Exp => Box::new(Exploration::new(need()?, cfg.rng_seed)),
        SamplerKind::Tmp => Box::new(Thompson::new(need()?, mode, m, cfg.rng_seed)),
        SamplerKind::Rw => Box::new(RandomWalk::new(need()?, index, cfg.rw_generalize_prob, cfg.rng_seed)),
        SamplerKind::Ls => Box::new(LocalSearch::new(need()?, m)),
        SamplerKind::Cb => Box::new(ContentBased::new(need()?, index, cfg.cb_alpha)),
    })
}

/// Issues queries until the ledger is spent. Under fixed ranking each query
/// resumes where its previous page ended.
pub fn run(sampler: &mut dyn Sampler, api: &mut SimulatedApi<'_>, ledger: &mut BudgetLedger) -> Result<SampleLog, ApiError> {
    let index = api.index();
    let page_size = api.page_size();
    let fixed = api.config().paging_mode == PagingMode::FixedRanking;
    let mut offsets: HashMap<Query, usize> = HashMap::new();
    let mut log = SampleLog::new();
    while !ledger.is_exhausted() {
        let ctx = StepContext { index, log: &log, page_size, calls_made: ledger.calls_made() };
        let q = sampler.next_query(&ctx);
        let token = if fixed { offsets.get(&q).map(|&o| PageToken::new(&q, o)) } else { None };
        let resp = api.execute(&q, ledger, token.as_ref())?;
        if fixed {
            *offsets.entry(q.clone()).or_insert(0) += resp.len();
        }
        let targets: Vec<bool> = resp.positions.iter().map(|&p| index.is_target(p)).collect();
        let fresh = log.record(q.clone(), &resp.positions, resp.ids.clone(), targets.clone());
        let ctx = StepContext { index, log: &log, page_size, calls_made: ledger.calls_made() };
        let obs = Observation { positions: &resp.positions, targets: &targets, fresh: &fresh, match_count: resp.match_count };
        sampler.observe(&q, obs, &ctx);
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::fixtures::toy;

    #[test]
    fn config_defaults_and_validation() {
        let cfg: SamplerConfig = toml::from_str("kind = \"dt-tmp\"").unwrap();
        assert_eq!(cfg, SamplerConfig::new(SamplerKind::DtTmp));
        assert!(toml::from_str::<SamplerConfig>("kind = \"dt-tmp\"\nbogus = 1").is_err());
        let mut bad = SamplerConfig::new(SamplerKind::Rw);
        bad.epoch = 0;
        assert!(bad.validate().is_err());
        bad.epoch = 1;
        bad.rw_generalize_prob = 1.5;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn reward_mode_follows_api() {
        let cfg = SamplerConfig::new(SamplerKind::DtTmp);
        let mut api = ApiConfig::new(10, PagingMode::WithReplacement);
        assert_eq!(cfg.resolved_reward(&api), RewardMode::WithReplacementUnique);
        api.paging_mode = PagingMode::WithoutReplacementPerCall;
        assert_eq!(cfg.resolved_reward(&api), RewardMode::WithoutReplacement);
        api.report_match_count = false;
        assert_eq!(cfg.resolved_reward(&api), RewardMode::UnknownN);
    }

    #[test]
    fn catalog_needed_by_flat_baselines() {
        let d = toy();
        let idx = QueryIndex::build(&d);
        let api = ApiConfig::new(4, PagingMode::WithReplacement);
        for kind in SamplerKind::ALL {
            let r = build_sampler(&SamplerConfig::new(kind), &api, &idx, None);
            assert_eq!(r.is_err(), kind.needs_catalog(), "{kind}");
        }
    }

    #[test]
    fn zero_budget_gives_empty_log() {
        let d = toy();
        let idx = QueryIndex::build(&d);
        let cfg = ApiConfig::new(4, PagingMode::WithReplacement);
        let mut api = SimulatedApi::new(&d, &idx, cfg.clone()).unwrap();
        let mut s = build_sampler(&SamplerConfig::new(SamplerKind::DtTmp), &cfg, &idx, None).unwrap();
        let log = run(s.as_mut(), &mut api, &mut BudgetLedger::new(0)).unwrap();
        assert!(log.is_empty());
    }

    #[test]
    fn fixed_ranking_run_resumes_pages() {
        let d = toy();
        let d = crate::Dataset::new(
            d.schema().clone(),
            d.hidden_fields().to_vec(),
            d.records().to_vec(),
            d.target_spec().clone(),
            Some((1..=8).rev().collect()),
        )
        .unwrap();
        let idx = QueryIndex::build(&d);
        let cfg = ApiConfig::new(3, PagingMode::FixedRanking);
        let mut api = SimulatedApi::new(&d, &idx, cfg.clone()).unwrap();
        let mut ledger = BudgetLedger::new(4);
        let mut s = build_sampler(&SamplerConfig::new(SamplerKind::Uni), &cfg, &idx, None).unwrap();
        let log = run(s.as_mut(), &mut api, &mut ledger).unwrap();
        let pages: Vec<Vec<u64>> = log.calls().iter().map(|c| c.ids.clone()).collect();
        assert_eq!(pages, vec![vec![8, 7, 6], vec![5, 4, 3], vec![2, 1], vec![]]);
        assert_eq!(ledger.calls_made(), 4);
    }
}
