//! Decision-tree Thompson sampling over a growing query pool.

use rand_chacha::ChaCha8Rng;

use super::pool::{Observation, QueryPool};
use super::reward::RewardMode;
use super::{Sampler, StepContext};
use crate::query::Query;
use crate::rng::rng_from_seed;

/// Starts from the root query; every `epoch` calls the best pool member is
/// specialized on values seen in the sample.
#[derive(Debug, Clone)]
pub struct DtTmp {
    pool: QueryPool,
    rng: ChaCha8Rng,
    mode: RewardMode,
    page_size: usize,
    epoch: usize,
    expansions: Vec<(u64, Query)>,
}

impl DtTmp {
    pub fn new(arity: usize, epoch: usize, mode: RewardMode, page_size: usize, seed: u64) -> DtTmp {
        DtTmp {
            pool: QueryPool::new(arity),
            rng: rng_from_seed(seed),
            mode,
            page_size,
            epoch: epoch.max(1),
            expansions: Vec::new(),
        }
    }

    pub fn pool(&self) -> &QueryPool {
        &self.pool
    }

    /// (call number, expanded query) for every expansion so far.
    pub fn expansions(&self) -> &[(u64, Query)] {
        &self.expansions
    }
}

impl Sampler for DtTmp {
    fn next_query(&mut self, _ctx: &StepContext<'_>) -> Query {
        self.pool.select_query(self.page_size, self.mode, &mut self.rng).clone()
    }

    fn observe(&mut self, issued: &Query, obs: Observation<'_>, ctx: &StepContext<'_>) {
        self.pool
            .update_on_result(issued, obs, ctx.index)
            .expect("issued queries come from the pool");
        if ctx.calls_made % self.epoch as u64 == 0 {
            let best = self.pool.best_query(self.page_size, self.mode, &mut self.rng).clone();
            self.pool.expand(&best, ctx.log, ctx.index).expect("best query is in the pool");
            self.expansions.push((ctx.calls_made, best));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::api::{ApiConfig, BudgetLedger, PagingMode, QueryIndex, SimulatedApi};
    use crate::dataset::fixtures::toy;
    use crate::sampler::run;

    #[test]
    fn one_expansion_when_budget_equals_epoch() {
        let d = toy();
        let idx = QueryIndex::build(&d);
        let mut api = SimulatedApi::new(&d, &idx, ApiConfig::new(4, PagingMode::WithReplacement)).unwrap();
        let mut s = DtTmp::new(2, 10, RewardMode::WithReplacementUnique, 4, 1);
        run(&mut s, &mut api, &mut BudgetLedger::new(10)).unwrap();
        assert_eq!(s.expansions().len(), 1);
        assert_eq!(s.expansions()[0].0, 10);
        assert!(s.pool().len() > 1);
    }

    #[test]
    fn ancestors_of_every_node_reach_the_root() {
        let d = toy();
        let idx = QueryIndex::build(&d);
        let mut api = SimulatedApi::new(&d, &idx, ApiConfig::new(4, PagingMode::WithReplacement)).unwrap();
        let mut s = DtTmp::new(2, 3, RewardMode::WithReplacementUnique, 4, 2);
        run(&mut s, &mut api, &mut BudgetLedger::new(60)).unwrap();
        for n in s.pool().nodes() {
            let mut cur = n.query.clone();
            while let Some(p) = s.pool().parent(&cur) {
                assert_eq!(p.bound_count() + 1, cur.bound_count());
                assert!(p.is_generalization_of(&cur).unwrap());
                cur = p.clone();
            }
            assert!(cur.is_root());
        }
    }
}
