//! Baseline query-selection strategies.

use std::cmp::Reverse;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::pool::{argmax_random, Observation};
use super::reward::{reward_for_precision, thompson_draw, QueryStats, RewardMode};
use super::{Catalog, Sampler, StepContext};
use crate::api::QueryIndex;
use crate::dataset::ValueId;
use crate::query::{Query, Slot};
use crate::rng::rng_from_seed;

/// Every query an entity with values `row` matches: one per subset of bound
/// attributes.
pub(crate) fn generalizations(row: &[ValueId]) -> impl Iterator<Item = Query> + '_ {
    let r = row.len();
    (0u64..1 << r).map(move |mask| {
        Query::from_slots(
            (0..r)
                .map(|i| if mask >> i & 1 == 1 { Slot::Is(row[i]) } else { Slot::Any })
                .collect(),
        )
    })
}

/// Issues the root query on every call.
#[derive(Debug, Clone)]
pub struct Uniform {
    root: Query,
}

impl Uniform {
    pub fn new(arity: usize) -> Uniform {
        Uniform { root: Query::root(arity) }
    }
}

impl Sampler for Uniform {
    fn next_query(&mut self, _ctx: &StepContext<'_>) -> Query {
        self.root.clone()
    }

    fn observe(&mut self, _issued: &Query, _obs: Observation<'_>, _ctx: &StepContext<'_>) {}
}

/// Draws an arm uniformly with replacement on every call.
#[derive(Debug, Clone)]
pub struct Exploration {
    catalog: Arc<Catalog>,
    rng: ChaCha8Rng,
}

impl Exploration {
    pub fn new(catalog: Arc<Catalog>, seed: u64) -> Exploration {
        Exploration { catalog, rng: rng_from_seed(seed) }
    }
}

impl Sampler for Exploration {
    fn next_query(&mut self, ctx: &StepContext<'_>) -> Query {
        let arms = &self.catalog.arms().queries;
        if arms.is_empty() {
            return Query::root(ctx.index.arity());
        }
        arms[self.rng.random_range(0..arms.len())].clone()
    }

    fn observe(&mut self, _issued: &Query, _obs: Observation<'_>, _ctx: &StepContext<'_>) {}
}

#[derive(Debug, Clone)]
struct ArmState {
    stats: QueryStats,
    seen: HashSet<u32>,
}

/// Never-issued arms sharing one reward factor.
#[derive(Debug, Clone)]
struct Group {
    factor: f64,
    members: Vec<u32>,
}

/// Flat Thompson sampling with independent arms. Arms that were never
/// issued still hold the uniform prior, so within a group of equal reward
/// factor their maximum draw is sampled directly as `factor · U^(1/k)`.
#[derive(Debug, Clone)]
pub struct Thompson {
    catalog: Arc<Catalog>,
    mode: RewardMode,
    page_size: usize,
    rng: ChaCha8Rng,
    issued: Vec<u32>,
    state: HashMap<u32, ArmState>,
    groups: Vec<Group>,
}

impl Thompson {
    pub fn new(catalog: Arc<Catalog>, mode: RewardMode, page_size: usize, seed: u64) -> Thompson {
        let arms = catalog.arms();
        let mut by_factor: HashMap<u64, usize> = HashMap::new();
        let mut groups: Vec<Group> = Vec::new();
        for (a, &n) in arms.match_counts.iter().enumerate() {
            let factor = reward_for_precision(1.0, 0, Some(n as u64), page_size, mode).expect("count is known");
            let g = *by_factor.entry(factor.to_bits()).or_insert_with(|| {
                groups.push(Group { factor, members: Vec::new() });
                groups.len() - 1
            });
            groups[g].members.push(a as u32);
        }
        Thompson {
            catalog,
            mode,
            page_size,
            rng: rng_from_seed(seed),
            issued: Vec::new(),
            state: HashMap::new(),
            groups,
        }
    }

    fn take_from_group(&mut self, g: usize) -> u32 {
        let k = self.groups[g].members.len();
        let i = self.rng.random_range(0..k);
        let arm = self.groups[g].members.swap_remove(i);
        let n = self.catalog.arms().match_counts[arm as usize] as u64;
        self.issued.push(arm);
        self.state.insert(
            arm,
            ArmState { stats: QueryStats { est_match_count: Some(n), ..QueryStats::default() }, seen: HashSet::new() },
        );
        arm
    }
}

impl Sampler for Thompson {
    fn next_query(&mut self, ctx: &StepContext<'_>) -> Query {
        if self.catalog.arms().is_empty() {
            return Query::root(ctx.index.arity());
        }
        let mut draws = Vec::with_capacity(self.issued.len() + self.groups.len());
        for a in &self.issued {
            let st = &self.state[a].stats;
            draws.push(thompson_draw(st, self.page_size, self.mode, &mut self.rng).expect("arm stats stay valid"));
        }
        for g in &self.groups {
            let k = g.members.len();
            draws.push(if k == 0 {
                f64::NEG_INFINITY
            } else {
                g.factor * self.rng.random::<f64>().powf(1.0 / k as f64)
            });
        }
        let w = argmax_random(&draws, &mut self.rng);
        let arm = if w < self.issued.len() { self.issued[w] } else { self.take_from_group(w - self.issued.len()) };
        self.catalog.arms().queries[arm as usize].clone()
    }

    fn observe(&mut self, issued: &Query, obs: Observation<'_>, _ctx: &StepContext<'_>) {
        let Some(arm) = self.catalog.arm_position(issued) else { return };
        let st = self.state.get_mut(&arm).expect("issued arm has state");
        let s = obs.targets.iter().filter(|&&t| t).count() as f64;
        st.stats.s += s;
        st.stats.f += obs.positions.len() as f64 - s;
        st.seen.extend(obs.positions.iter().copied());
        st.stats.n_seen = st.seen.len() as u64;
    }
}

/// Random walk over the lattice of non-empty queries.
#[derive(Debug, Clone)]
pub struct RandomWalk {
    catalog: Arc<Catalog>,
    cards: Vec<usize>,
    p_generalize: f64,
    rng: ChaCha8Rng,
    current: Query,
}

impl RandomWalk {
    pub fn new(catalog: Arc<Catalog>, index: &QueryIndex, p_generalize: f64, seed: u64) -> RandomWalk {
        RandomWalk {
            catalog,
            cards: index.cardinalities().to_vec(),
            p_generalize,
            rng: rng_from_seed(seed),
            current: Query::root(index.arity()),
        }
    }

    fn step(&mut self) {
        let cur = &self.current;
        let generalize = if cur.is_root() {
            false
        } else if cur.is_fully_bound() {
            true
        } else {
            self.rng.random::<f64>() < self.p_generalize
        };
        if generalize {
            let bound: Vec<usize> = (0..cur.arity()).filter(|&i| cur.slot(i).is_bound()).collect();
            let i = bound[self.rng.random_range(0..bound.len())];
            self.current = cur.with_slot(i, Slot::Any);
        } else {
            let mut children = Vec::new();
            for i in (0..cur.arity()).filter(|&i| !cur.slot(i).is_bound()) {
                for v in 0..self.cards[i] {
                    let child = cur.with_slot(i, Slot::Is(v as ValueId));
                    if self.catalog.match_count(&child).is_some() {
                        children.push(child);
                    }
                }
            }
            if !children.is_empty() {
                let k = self.rng.random_range(0..children.len());
                self.current = children.swap_remove(k);
            }
        }
    }

    pub fn current(&self) -> &Query {
        &self.current
    }
}

impl Sampler for RandomWalk {
    fn next_query(&mut self, _ctx: &StepContext<'_>) -> Query {
        self.step();
        self.current.clone()
    }

    fn observe(&mut self, _issued: &Query, _obs: Observation<'_>, _ctx: &StepContext<'_>) {}
}

/// Greedy cover: issue the arm expected to return the most unseen entities,
/// `min(N_q - seen_q, m)`, preferring smaller match sets on ties.
#[derive(Debug, Clone)]
pub struct LocalSearch {
    catalog: Arc<Catalog>,
    page_size: u32,
    seen: Vec<u32>,
    queue: BTreeSet<(Reverse<u32>, u32, u32)>,
}

impl LocalSearch {
    pub fn new(catalog: Arc<Catalog>, page_size: usize) -> LocalSearch {
        let page_size = page_size as u32;
        let counts = &catalog.arms().match_counts;
        let queue = counts.iter().enumerate().map(|(a, &n)| (Reverse(n.min(page_size)), n, a as u32)).collect();
        let seen = vec![0; counts.len()];
        LocalSearch { catalog, page_size, seen, queue }
    }

    fn key(&self, a: u32) -> (Reverse<u32>, u32, u32) {
        let n = self.catalog.arms().match_counts[a as usize];
        (Reverse((n - self.seen[a as usize]).min(self.page_size)), n, a)
    }
}

impl Sampler for LocalSearch {
    fn next_query(&mut self, ctx: &StepContext<'_>) -> Query {
        match self.queue.first() {
            Some(&(_, _, a)) => self.catalog.arms().queries[a as usize].clone(),
            None => Query::root(ctx.index.arity()),
        }
    }

    fn observe(&mut self, _issued: &Query, obs: Observation<'_>, ctx: &StepContext<'_>) {
        for &p in obs.fresh {
            for g in generalizations(ctx.index.row(p)) {
                if let Some(a) = self.catalog.arm_position(&g) {
                    self.queue.remove(&self.key(a));
                    self.seen[a as usize] += 1;
                    self.queue.insert(self.key(a));
                }
            }
        }
    }
}

/// Greedy on smoothed sample precision over a frontier of specializations
/// of issued queries.
#[derive(Debug, Clone)]
pub struct ContentBased {
    catalog: Arc<Catalog>,
    alpha: f64,
    counts: HashMap<Query, (u32, u32)>,
    candidates: Vec<Query>,
    active: Vec<bool>,
    known: HashMap<Query, usize>,
}

impl ContentBased {
    pub fn new(catalog: Arc<Catalog>, index: &QueryIndex, alpha: f64) -> ContentBased {
        let root = Query::root(index.arity());
        let mut known = HashMap::new();
        known.insert(root.clone(), 0);
        ContentBased { catalog, alpha, counts: HashMap::new(), candidates: vec![root], active: vec![true], known }
    }

    /// `(t + α) / (t + f + 2α)` over distinct sampled entities matching `q`.
    pub fn score(&self, q: &Query) -> f64 {
        let (t, f) = self.counts.get(q).copied().unwrap_or((0, 0));
        (t as f64 + self.alpha) / ((t + f) as f64 + 2.0 * self.alpha)
    }
}

impl Sampler for ContentBased {
    fn next_query(&mut self, ctx: &StepContext<'_>) -> Query {
        let mut best: Option<(f64, usize)> = None;
        for (i, q) in self.candidates.iter().enumerate() {
            if !self.active[i] {
                continue;
            }
            let s = self.score(q);
            if best.is_none_or(|(b, _)| s > b) {
                best = Some((s, i));
            }
        }
        match best {
            Some((_, i)) => self.candidates[i].clone(),
            None => Query::root(ctx.index.arity()),
        }
    }

    fn observe(&mut self, issued: &Query, obs: Observation<'_>, ctx: &StepContext<'_>) {
        for &p in obs.fresh {
            let t = ctx.index.is_target(p);
            for g in generalizations(ctx.index.row(p)) {
                let e = self.counts.entry(g).or_insert((0, 0));
                if t {
                    e.0 += 1;
                } else {
                    e.1 += 1;
                }
            }
        }
        if obs.fresh.is_empty() {
            if let Some(&i) = self.known.get(issued) {
                self.active[i] = false;
            }
        }
        let free: Vec<usize> = (0..issued.arity()).filter(|&i| !issued.slot(i).is_bound()).collect();
        let mut observed: Vec<BTreeSet<ValueId>> = vec![BTreeSet::new(); issued.arity()];
        for &p in ctx.log.sampled() {
            let row = ctx.index.row(p);
            if issued.matches_values(row) {
                for &i in &free {
                    observed[i].insert(row[i]);
                }
            }
        }
        for &i in &free {
            for &v in &observed[i] {
                let child = issued.with_slot(i, Slot::Is(v));
                if !self.known.contains_key(&child) && self.catalog.match_count(&child).is_some() {
                    self.known.insert(child.clone(), self.candidates.len());
                    self.candidates.push(child);
                    self.active.push(true);
                }
            }
        }
    }
}
