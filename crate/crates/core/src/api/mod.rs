//! A simulated, budgeted, paginated attribute-query API.

mod index;

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::io::Write;
use std::rc::Rc;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use index::{ArmSet, Arms, QueryIndex, DEFAULT_ENUMERATION_CAP};

use crate::dataset::{AttributeSchema, Dataset, ValueId};
use crate::query::Query;
use crate::rng::rng_from_seed;

const CACHE_LIMIT: usize = 1 << 14;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("budget of {budget} calls exhausted")]
    BudgetExhausted { budget: u64 },
    #[error("invalid or stale page token `{0}`")]
    InvalidToken(String),
    #[error("query has {query} slots but the index has {schema} attributes")]
    SchemaMismatch { query: usize, schema: usize },
    #[error("value {value} is outside the domain of attribute {attribute}")]
    OutOfDomain { attribute: usize, value: ValueId },
    #[error("more than {cap} non-empty queries; raise the enumeration cap")]
    EnumerationOverflow { cap: usize },
    #[error("invalid API configuration: {0}")]
    Config(String),
    #[error("trace write failed: {0}")]
    Trace(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PagingMode {
    /// `m` i.i.d. uniform draws from the match set.
    WithReplacement,
    /// `min(m, N_q)` distinct entities, drawn afresh on each call.
    #[default]
    WithoutReplacementPerCall,
    /// Successive pages of the match set in dataset rank order.
    FixedRanking,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApiConfig {
    pub page_size: usize,
    #[serde(default)]
    pub paging_mode: PagingMode,
    #[serde(default = "yes")]
    pub report_match_count: bool,
    #[serde(default)]
    pub rng_seed: u64,
}

fn yes() -> bool {
    true
}

impl ApiConfig {
    pub fn new(page_size: usize, paging_mode: PagingMode) -> ApiConfig {
        ApiConfig { page_size, paging_mode, report_match_count: true, rng_seed: 0 }
    }

    pub fn validate(&self) -> Result<(), ApiError> {
        if self.page_size == 0 {
            return Err(ApiError::Config("page_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Resumption point for fixed-ranking pagination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PageToken {
    query_hash: u64,
    offset: usize,
}

impl PageToken {
    /// Token resuming `q` after `offset` already-delivered entities.
    pub fn new(q: &Query, offset: usize) -> PageToken {
        PageToken { query_hash: query_hash(q), offset }
    }
}

impl fmt::Display for PageToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}:{}", self.query_hash, self.offset)
    }
}

impl FromStr for PageToken {
    type Err = ApiError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ApiError::InvalidToken(s.to_string());
        let (h, o) = s.split_once(':').ok_or_else(bad)?;
        Ok(PageToken {
            query_hash: u64::from_str_radix(h, 16).map_err(|_| bad())?,
            offset: o.parse().map_err(|_| bad())?,
        })
    }
}

/// One result page. Entities are record positions into the dataset; `ids`
/// carries the matching entity ids in the same order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ApiResponse {
    pub positions: Vec<u32>,
    pub ids: Vec<u64>,
    pub match_count: Option<usize>,
    pub next_page_token: Option<PageToken>,
}

impl ApiResponse {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Unit-cost call accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetLedger {
    budget: u64,
    calls_made: u64,
    per_query: HashMap<Query, u64>,
}

impl BudgetLedger {
    pub fn new(budget: u64) -> BudgetLedger {
        BudgetLedger { budget, calls_made: 0, per_query: HashMap::new() }
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn calls_made(&self) -> u64 {
        self.calls_made
    }

    pub fn remaining(&self) -> u64 {
        self.budget - self.calls_made
    }

    pub fn is_exhausted(&self) -> bool {
        self.calls_made >= self.budget
    }

    pub fn calls_for(&self, q: &Query) -> u64 {
        self.per_query.get(q).copied().unwrap_or(0)
    }

    fn check(&self) -> Result<(), ApiError> {
        if self.is_exhausted() {
            Err(ApiError::BudgetExhausted { budget: self.budget })
        } else {
            Ok(())
        }
    }

    fn charge(&mut self, q: &Query) {
        self.calls_made += 1;
        *self.per_query.entry(q.clone()).or_insert(0) += 1;
    }
}

#[derive(Serialize)]
struct TraceLine<'a> {
    call: u64,
    query: &'a str,
    returned: usize,
    targets: usize,
}

/// Executes queries against an indexed dataset. One instance per run.
pub struct SimulatedApi<'a> {
    index: &'a QueryIndex,
    schema: &'a AttributeSchema,
    config: ApiConfig,
    rng: ChaCha8Rng,
    cache: HashMap<Query, Rc<[u32]>>,
    trace: Option<Box<dyn Write + 'a>>,
}

impl<'a> SimulatedApi<'a> {
    pub fn new(dataset: &'a Dataset, index: &'a QueryIndex, config: ApiConfig) -> Result<Self, ApiError> {
        config.validate()?;
        if config.paging_mode == PagingMode::FixedRanking && index.rank_of().is_none() {
            return Err(ApiError::Config("fixed-ranking paging needs a dataset rank".into()));
        }
        if index.len() != dataset.len() || index.arity() != dataset.schema().len() {
            return Err(ApiError::Config("index was built from a different dataset".into()));
        }
        Ok(SimulatedApi {
            index,
            schema: dataset.schema(),
            rng: rng_from_seed(config.rng_seed),
            config,
            cache: HashMap::new(),
            trace: None,
        })
    }

    /// Writes one JSON line per call: call number, query text, page length and
    /// number of targets on the page.
    pub fn with_trace(mut self, sink: impl Write + 'a) -> Self {
        self.trace = Some(Box::new(sink));
        self
    }

    pub fn config(&self) -> &ApiConfig {
        &self.config
    }

    pub fn page_size(&self) -> usize {
        self.config.page_size
    }

    pub fn index(&self) -> &'a QueryIndex {
        self.index
    }

    pub fn schema(&self) -> &'a AttributeSchema {
        self.schema
    }

    fn match_set(&mut self, q: &Query) -> Result<Rc<[u32]>, ApiError> {
        if let Some(m) = self.cache.get(q) {
            return Ok(Rc::clone(m));
        }
        let mut m = self.index.match_positions(q)?;
        if let (PagingMode::FixedRanking, Some(rank)) = (self.config.paging_mode, self.index.rank_of()) {
            m.sort_unstable_by_key(|&p| rank[p as usize]);
        }
        if self.cache.len() >= CACHE_LIMIT {
            self.cache.clear();
        }
        let m: Rc<[u32]> = m.into();
        self.cache.insert(q.clone(), Rc::clone(&m));
        Ok(m)
    }

    /// Issues `q`, charging one unit of budget.
    pub fn execute(
        &mut self,
        q: &Query,
        ledger: &mut BudgetLedger,
        page_token: Option<&PageToken>,
    ) -> Result<ApiResponse, ApiError> {
        ledger.check()?;
        let matches = self.match_set(q)?;
        let n = matches.len();
        let m = self.config.page_size;
        let mut next_page_token = None;
        let positions: Vec<u32> = match self.config.paging_mode {
            PagingMode::WithReplacement => {
                if n == 0 {
                    Vec::new()
                } else {
                    (0..m).map(|_| matches[self.rng.random_range(0..n)]).collect()
                }
            }
            PagingMode::WithoutReplacementPerCall => {
                sample(&mut self.rng, n, m.min(n)).into_iter().map(|i| matches[i]).collect()
            }
            PagingMode::FixedRanking => {
                let hash = query_hash(q);
                let offset = match page_token {
                    None => 0,
                    Some(t) if t.query_hash == hash && t.offset <= n => t.offset,
                    Some(t) => return Err(ApiError::InvalidToken(t.to_string())),
                };
                let end = (offset + m).min(n);
                if end < n {
                    next_page_token = Some(PageToken { query_hash: hash, offset: end });
                }
                matches[offset..end].to_vec()
            }
        };
        ledger.charge(q);
        let ids = positions.iter().map(|&p| self.index.id(p)).collect();
        if let Some(trace) = self.trace.as_mut() {
            let text = q.to_text(self.schema);
            let line = TraceLine {
                call: ledger.calls_made(),
                query: &text,
                returned: positions.len(),
                targets: positions.iter().filter(|&&p| self.index.is_target(p)).count(),
            };
            serde_json::to_writer(&mut *trace, &line).map_err(std::io::Error::from)?;
            trace.write_all(b"\n")?;
        }
        Ok(ApiResponse {
            positions,
            ids,
            match_count: self.config.report_match_count.then_some(n),
            next_page_token,
        })
    }
}

fn query_hash(q: &Query) -> u64 {
    let mut h = DefaultHasher::new();
    q.hash(&mut h);
    h.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::fixtures::toy;
    use crate::query::{Query, Slot};
    use std::collections::HashSet;

    fn q(a: Slot, b: Slot) -> Query {
        Query::from_slots(vec![a, b])
    }

    #[test]
    fn toy_postings_and_counts() {
        let d = toy();
        let idx = QueryIndex::build(&d);
        assert_eq!(idx.posting_ids(0, 0), vec![1, 2, 3, 4]);
        assert_eq!(idx.match_count(&q(Slot::Is(0), Slot::Is(1))).unwrap(), 2);
        assert_eq!(idx.match_count(&Query::root(2)).unwrap(), 8);
        assert!(idx.match_count(&Query::root(3)).is_err());
    }

    #[test]
    fn toy_enumeration_matches_brute_force() {
        let d = toy();
        let idx = QueryIndex::build(&d);
        let listed = idx.enumerate_nonempty_queries(DEFAULT_ENUMERATION_CAP).unwrap();
        let slots = [Slot::Any, Slot::Is(0), Slot::Is(1)];
        let mut brute = Vec::new();
        for a in slots {
            for b in slots {
                let query = q(a, b);
                if d.records().iter().any(|e| query.matches(e).unwrap()) {
                    brute.push(query);
                }
            }
        }
        assert_eq!(listed.len(), brute.len());
        assert_eq!(listed.len(), 9);
        assert_eq!(listed[0], Query::root(2));
        let a: HashSet<_> = listed.iter().collect();
        assert!(brute.iter().all(|b| a.contains(b)));
        let full = idx.enumerate_nonempty(ArmSet::FullyBound, 100).unwrap();
        assert_eq!(full.len(), 4);
        assert!(full.match_counts.iter().all(|&c| c == 2));
        assert!(matches!(
            idx.enumerate_nonempty_queries(5),
            Err(ApiError::EnumerationOverflow { cap: 5 })
        ));
    }

    #[test]
    fn tiny_and_empty_enumeration() {
        use crate::dataset::{Attribute, EntityRecord, HiddenField, FieldKind, HiddenValue, Predicate};
        let schema = AttributeSchema::new(vec![Attribute::categorical("A", vec!["v".into()])]).unwrap();
        let fields = vec![HiddenField { name: "t".into(), kind: FieldKind::Number }];
        let one = Dataset::new(
            schema.clone(),
            fields.clone(),
            vec![EntityRecord { id: 1, values: vec![0], hidden: vec![HiddenValue::Number(1.0)] }],
            Predicate::parse("TRUE").unwrap(),
            None,
        )
        .unwrap();
        let qs = QueryIndex::build(&one).enumerate_nonempty_queries(10).unwrap();
        assert_eq!(qs, vec![Query::root(1), Query::from_slots(vec![Slot::Is(0)])]);
        let empty = Dataset::new(schema, fields, vec![], Predicate::parse("TRUE").unwrap(), None).unwrap();
        assert!(QueryIndex::build(&empty).enumerate_nonempty_queries(10).unwrap().is_empty());
    }

    #[test]
    fn without_replacement_returns_whole_small_match_set() {
        let d = toy();
        let idx = QueryIndex::build(&d);
        let mut api = SimulatedApi::new(&d, &idx, ApiConfig::new(10, PagingMode::WithoutReplacementPerCall)).unwrap();
        let mut ledger = BudgetLedger::new(5);
        let r = api.execute(&q(Slot::Is(0), Slot::Any), &mut ledger, None).unwrap();
        let mut ids = r.ids.clone();
        ids.sort();
        assert_eq!(ids, vec![1, 2, 3, 4]);
        assert_eq!(r.match_count, Some(4));
        assert_eq!(ledger.calls_made(), 1);
    }

    #[test]
    fn empty_match_still_costs() {
        let d = toy();
        // drop every (b, x) entity so that cell becomes empty
        let records: Vec<_> = d.records().iter().filter(|r| r.values != [1, 0]).cloned().collect();
        let holed = d.with_parts(d.schema().clone(), records).unwrap();
        let idx = QueryIndex::build(&holed);
        for mode in [PagingMode::WithReplacement, PagingMode::WithoutReplacementPerCall] {
            let mut api = SimulatedApi::new(&holed, &idx, ApiConfig::new(3, mode)).unwrap();
            let mut ledger = BudgetLedger::new(2);
            let r = api.execute(&q(Slot::Is(1), Slot::Is(0)), &mut ledger, None).unwrap();
            assert!(r.is_empty());
            assert_eq!(r.match_count, Some(0));
            assert_eq!(ledger.calls_made(), 1);
        }
    }

    #[test]
    fn with_replacement_singleton_repeats() {
        let d = toy();
        let records: Vec<_> = d.records().iter().filter(|r| r.id != 6).cloned().collect();
        let d = d.with_parts(d.schema().clone(), records).unwrap();
        let idx = QueryIndex::build(&d);
        let mut api = SimulatedApi::new(&d, &idx, ApiConfig::new(10, PagingMode::WithReplacement)).unwrap();
        let mut ledger = BudgetLedger::new(1);
        let r = api.execute(&q(Slot::Is(1), Slot::Is(0)), &mut ledger, None).unwrap();
        assert_eq!(r.ids, vec![5; 10]);
    }

    #[test]
    fn budget_is_enforced() {
        let d = toy();
        let idx = QueryIndex::build(&d);
        let mut api = SimulatedApi::new(&d, &idx, ApiConfig::new(2, PagingMode::WithReplacement)).unwrap();
        let mut ledger = BudgetLedger::new(2);
        let root = Query::root(2);
        api.execute(&root, &mut ledger, None).unwrap();
        api.execute(&root, &mut ledger, None).unwrap();
        assert!(matches!(api.execute(&root, &mut ledger, None), Err(ApiError::BudgetExhausted { budget: 2 })));
        assert_eq!(ledger.calls_made(), 2);
        assert_eq!(ledger.calls_for(&root), 2);
    }

    #[test]
    fn fixed_ranking_pages_cover_match_set_in_order() {
        let d = toy();
        let rank = vec![8, 3, 6, 1, 5, 2, 7, 4];
        let d = Dataset::new(
            d.schema().clone(),
            d.hidden_fields().to_vec(),
            d.records().to_vec(),
            d.target_spec().clone(),
            Some(rank.clone()),
        )
        .unwrap();
        let idx = QueryIndex::build(&d);
        let mut api = SimulatedApi::new(&d, &idx, ApiConfig::new(3, PagingMode::FixedRanking)).unwrap();
        let mut ledger = BudgetLedger::new(10);
        let root = Query::root(2);
        let mut token = None;
        let mut all = Vec::new();
        loop {
            let r = api.execute(&root, &mut ledger, token.as_ref()).unwrap();
            all.extend(r.ids);
            match r.next_page_token {
                Some(t) => token = Some(t),
                None => break,
            }
        }
        assert_eq!(all, rank);
        assert_eq!(ledger.calls_made(), 3);
        let bad = PageToken { query_hash: 1, offset: 0 };
        assert!(matches!(api.execute(&root, &mut ledger, Some(&bad)), Err(ApiError::InvalidToken(_))));
        assert_eq!(ledger.calls_made(), 3);
        let parsed: PageToken = token.unwrap().to_string().parse().unwrap();
        assert_eq!(Some(parsed), token);
    }

    #[test]
    fn fixed_ranking_requires_rank() {
        let d = toy();
        let idx = QueryIndex::build(&d);
        assert!(SimulatedApi::new(&d, &idx, ApiConfig::new(3, PagingMode::FixedRanking)).is_err());
        assert!(SimulatedApi::new(&d, &idx, ApiConfig::new(0, PagingMode::WithReplacement)).is_err());
    }

    #[test]
    fn match_count_can_be_withheld() {
        let d = toy();
        let idx = QueryIndex::build(&d);
        let mut cfg = ApiConfig::new(4, PagingMode::WithReplacement);
        cfg.report_match_count = false;
        let mut api = SimulatedApi::new(&d, &idx, cfg).unwrap();
        let r = api.execute(&Query::root(2), &mut BudgetLedger::new(1), None).unwrap();
        assert_eq!(r.match_count, None);
    }

    #[test]
    fn trace_lines_are_json() {
        let d = toy();
        let idx = QueryIndex::build(&d);
        let mut buf = Vec::new();
        {
            let mut api = SimulatedApi::new(&d, &idx, ApiConfig::new(8, PagingMode::WithoutReplacementPerCall))
                .unwrap()
                .with_trace(&mut buf);
            let mut ledger = BudgetLedger::new(2);
            api.execute(&Query::root(2), &mut ledger, None).unwrap();
            api.execute(&q(Slot::Is(0), Slot::Is(1)), &mut ledger, None).unwrap();
        }
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines[0]["query"], "A1=*&A2=*");
        assert_eq!(lines[0]["returned"], 8);
        assert_eq!(lines[0]["targets"], 4);
        assert_eq!(lines[1]["call"], 2);
        assert_eq!(lines[1]["targets"], 2);
    }
}
