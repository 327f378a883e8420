//! The tree of queries tracked by the decision-tree sampler.

use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use thiserror::Error;

use super::reward::{expected_reward, thompson_draw, QueryStats, RewardMode};
use super::SampleLog;
use crate::api::QueryIndex;
use crate::dataset::ValueId;
use crate::query::{Query, Slot};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PoolError {
    #[error("query is not in the pool")]
    NotInPool,
}

#[derive(Debug, Clone)]
pub struct PoolNode {
    pub query: Query,
    pub stats: QueryStats,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

/// Queries under consideration, keyed by syntax, with the expansion tree.
#[derive(Debug, Clone)]
pub struct QueryPool {
    nodes: Vec<PoolNode>,
    lookup: HashMap<Query, usize>,
}

/// Page contents as seen by the pool update.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub positions: &'a [u32],
    pub targets: &'a [bool],
    /// Positions never sampled before this page.
    pub fresh: &'a [u32],
    pub match_count: Option<usize>,
}

impl QueryPool {
    pub fn new(arity: usize) -> QueryPool {
        let root = Query::root(arity);
        let mut lookup = HashMap::new();
        lookup.insert(root.clone(), 0);
        QueryPool {
            nodes: vec![PoolNode { query: root, stats: QueryStats::default(), parent: None, children: vec![] }],
            lookup,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> &PoolNode {
        &self.nodes[0]
    }

    pub fn nodes(&self) -> &[PoolNode] {
        &self.nodes
    }

    pub fn contains(&self, q: &Query) -> bool {
        self.lookup.contains_key(q)
    }

    pub fn index_of(&self, q: &Query) -> Option<usize> {
        self.lookup.get(q).copied()
    }

    pub fn stats(&self, q: &Query) -> Option<&QueryStats> {
        self.index_of(q).map(|i| &self.nodes[i].stats)
    }

    pub fn stats_mut(&mut self, q: &Query) -> Option<&mut QueryStats> {
        self.index_of(q).map(|i| &mut self.nodes[i].stats)
    }

    pub fn parent(&self, q: &Query) -> Option<&Query> {
        let i = self.index_of(q)?;
        self.nodes[i].parent.map(|p| &self.nodes[p].query)
    }

    pub fn ancestors(&self, q: &Query) -> Vec<&Query> {
        self.nodes
            .iter()
            .filter(|n| n.query != *q && n.query.generalizes_unchecked(q))
            .map(|n| &n.query)
            .collect()
    }

    pub fn descendants(&self, q: &Query) -> Vec<&Query> {
        self.nodes
            .iter()
            .filter(|n| n.query != *q && q.generalizes_unchecked(&n.query))
            .map(|n| &n.query)
            .collect()
    }

    /// Argmax of one Thompson draw per node; ties uniformly at random.
    pub fn select_query<R: Rng + ?Sized>(&self, m: usize, mode: RewardMode, rng: &mut R) -> &Query {
        let draws: Vec<f64> = self
            .nodes
            .iter()
            .map(|n| thompson_draw(&n.stats, m, effective(mode, &n.stats), rng).expect("pool stats stay valid"))
            .collect();
        &self.nodes[argmax_random(&draws, rng)].query
    }

    /// Node with the highest posterior-mean reward; ties uniformly at random.
    pub fn best_query<R: Rng + ?Sized>(&self, m: usize, mode: RewardMode, rng: &mut R) -> &Query {
        let scores: Vec<f64> = self
            .nodes
            .iter()
            .map(|n| expected_reward(&n.stats, m, effective(mode, &n.stats)).expect("pool stats stay valid"))
            .collect();
        &self.nodes[argmax_random(&scores, rng)].query
    }

    /// Folds one page returned for `issued` into every related node.
    pub fn update_on_result(&mut self, issued: &Query, obs: Observation<'_>, index: &QueryIndex) -> Result<(), PoolError> {
        let qi = self.index_of(issued).ok_or(PoolError::NotInPool)?;
        for &p in obs.fresh {
            let row = index.row(p);
            for n in &mut self.nodes {
                if n.query.matches_values(row) {
                    n.stats.n_seen += 1;
                }
            }
        }
        if let Some(c) = obs.match_count {
            self.nodes[qi].stats.est_match_count = Some(c as u64);
        }
        let len = obs.positions.len() as f64;
        let s = obs.targets.iter().filter(|&&t| t).count() as f64;
        let issued_stats = self.nodes[qi].stats;
        {
            let st = &mut self.nodes[qi].stats;
            st.s += s;
            st.f += len - s;
        }
        if obs.positions.is_empty() {
            return Ok(());
        }
        for (j, n) in self.nodes.iter_mut().enumerate() {
            if j == qi {
                continue;
            }
            if issued.generalizes_unchecked(&n.query) {
                let (mut ds, mut df) = (0.0, 0.0);
                for (&p, &t) in obs.positions.iter().zip(obs.targets) {
                    if n.query.matches_values(index.row(p)) {
                        if t {
                            ds += 1.0;
                        } else {
                            df += 1.0;
                        }
                    }
                }
                n.stats.s += ds;
                n.stats.f += df;
            } else if n.query.generalizes_unchecked(issued) {
                let rho = ratio(&issued_stats, &n.stats);
                n.stats.s += rho * s;
                n.stats.f += rho * (len - s);
            }
        }
        Ok(())
    }

    /// Adds every single-binding specialization of `q` whose value was
    /// observed among sampled entities matching `q`. Returns how many nodes
    /// were added.
    pub fn expand(&mut self, q: &Query, log: &SampleLog, index: &QueryIndex) -> Result<usize, PoolError> {
        let qi = self.index_of(q).ok_or(PoolError::NotInPool)?;
        let free: Vec<usize> = (0..q.arity()).filter(|&i| !q.slot(i).is_bound()).collect();
        if free.is_empty() {
            return Ok(0);
        }
        let mut observed: Vec<BTreeSet<ValueId>> = vec![BTreeSet::new(); q.arity()];
        for &p in log.sampled() {
            let row = index.row(p);
            if q.matches_values(row) {
                for &i in &free {
                    observed[i].insert(row[i]);
                }
            }
        }
        let mut added = 0;
        for &i in &free {
            for &v in &observed[i] {
                let child = q.with_slot(i, Slot::Is(v));
                if self.lookup.contains_key(&child) {
                    continue;
                }
                let n_seen = log.sampled().iter().filter(|&&p| child.matches_values(index.row(p))).count() as u64;
                let id = self.nodes.len();
                self.lookup.insert(child.clone(), id);
                self.nodes.push(PoolNode {
                    query: child,
                    stats: QueryStats { n_seen, ..QueryStats::default() },
                    parent: Some(qi),
                    children: vec![],
                });
                self.nodes[qi].children.push(id);
                added += 1;
            }
        }
        Ok(added)
    }
}

/// Match-count ratio of a query to one of its generalizations, from reported
/// counts when both are known, else from sampled coverage, else 1.
fn ratio(specific: &QueryStats, general: &QueryStats) -> f64 {
    match (specific.est_match_count, general.est_match_count) {
        (Some(a), Some(b)) if b > 0 => a as f64 / b as f64,
        _ if general.n_seen > 0 => specific.n_seen as f64 / general.n_seen as f64,
        _ => 1.0,
    }
}

/// Nodes whose match count is still unknown are scored without it.
fn effective(mode: RewardMode, stats: &QueryStats) -> RewardMode {
    if mode.needs_match_count() && stats.est_match_count.is_none() {
        RewardMode::UnknownN
    } else {
        mode
    }
}

pub(crate) fn argmax_random<R: Rng + ?Sized>(values: &[f64], rng: &mut R) -> usize {
    let mut best = f64::NEG_INFINITY;
    let mut pick = 0;
    let mut ties = 0u32;
    for (i, &v) in values.iter().enumerate() {
        if v > best {
            best = v;
            pick = i;
            ties = 1;
        } else if v == best {
            ties += 1;
            if rng.random_range(0..ties) == 0 {
                pick = i;
            }
        }
    }
    pick
}
