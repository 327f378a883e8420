//! Inverted index over queryable attribute values.

use crate::dataset::{Dataset, ValueId};
use crate::query::{Query, Slot};

use super::ApiError;

/// Default ceiling for [`QueryIndex::enumerate_nonempty`].
pub const DEFAULT_ENUMERATION_CAP: usize = 10_000_000;

/// Posting lists per (attribute, value), plus a flat copy of every row's
/// values for cheap filtering. Entities are addressed by record position.
#[derive(Debug, Clone)]
pub struct QueryIndex {
    arity: usize,
    cards: Vec<usize>,
    postings: Vec<Vec<Vec<u32>>>,
    values: Vec<ValueId>,
    targets: Vec<bool>,
    ids: Vec<u64>,
    rank_of: Option<Vec<u32>>,
}

/// Which slice of the lattice counts as an arm for flat baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArmSet {
    #[default]
    AllNonEmpty,
    FullyBound,
}

/// Non-empty queries together with their match counts.
#[derive(Debug, Clone, Default)]
pub struct Arms {
    pub queries: Vec<Query>,
    pub match_counts: Vec<u32>,
}

impl Arms {
    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

impl QueryIndex {
    pub fn build(dataset: &Dataset) -> QueryIndex {
        let schema = dataset.schema();
        let arity = schema.len();
        let cards: Vec<usize> = (0..arity).map(|i| schema.cardinality(i)).collect();
        let mut postings: Vec<Vec<Vec<u32>>> = cards.iter().map(|&c| vec![Vec::new(); c]).collect();
        let mut values = Vec::with_capacity(dataset.len() * arity);
        for (pos, rec) in dataset.records().iter().enumerate() {
            for (i, &v) in rec.values.iter().enumerate() {
                postings[i][v as usize].push(pos as u32);
            }
            values.extend_from_slice(&rec.values);
        }
        QueryIndex {
            arity,
            cards,
            postings,
            values,
            targets: dataset.target_flags().to_vec(),
            ids: dataset.records().iter().map(|r| r.id).collect(),
            rank_of: dataset.rank().map(|rank| {
                let mut rank_of = vec![0u32; rank.len()];
                for (r, id) in rank.iter().enumerate() {
                    let pos = dataset.position(*id).expect("rank validated at construction");
                    rank_of[pos] = r as u32;
                }
                rank_of
            }),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn cardinality(&self, i: usize) -> usize {
        self.cards[i]
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cards
    }

    /// Record positions holding value `v` on attribute `i`, ascending.
    pub fn posting(&self, i: usize, v: ValueId) -> &[u32] {
        &self.postings[i][v as usize]
    }

    pub fn posting_ids(&self, i: usize, v: ValueId) -> Vec<u64> {
        self.posting(i, v).iter().map(|&p| self.ids[p as usize]).collect()
    }

    #[inline]
    pub fn row(&self, pos: u32) -> &[ValueId] {
        let start = pos as usize * self.arity;
        &self.values[start..start + self.arity]
    }

    #[inline]
    pub fn is_target(&self, pos: u32) -> bool {
        self.targets[pos as usize]
    }

    #[inline]
    pub fn id(&self, pos: u32) -> u64 {
        self.ids[pos as usize]
    }

    /// Rank of each record position, when the dataset defines an order.
    pub fn rank_of(&self) -> Option<&[u32]> {
        self.rank_of.as_deref()
    }

    fn check(&self, q: &Query) -> Result<(), ApiError> {
        if q.arity() != self.arity {
            return Err(ApiError::SchemaMismatch { query: q.arity(), schema: self.arity });
        }
        for (i, s) in q.slots().iter().enumerate() {
            if let Slot::Is(v) = *s {
                if v as usize >= self.cards[i] {
                    return Err(ApiError::OutOfDomain { attribute: i, value: v });
                }
            }
        }
        Ok(())
    }

    /// Ascending record positions matching `q`.
    pub fn match_positions(&self, q: &Query) -> Result<Vec<u32>, ApiError> {
        self.check(q)?;
        let shortest = q
            .slots()
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.value().map(|v| self.posting(i, v)))
            .min_by_key(|p| p.len());
        Ok(match shortest {
            None => (0..self.len() as u32).collect(),
            Some(list) => list.iter().copied().filter(|&p| q.matches_values(self.row(p))).collect(),
        })
    }

    pub fn match_count(&self, q: &Query) -> Result<usize, ApiError> {
        if q.is_root() {
            self.check(q)?;
            return Ok(self.len());
        }
        Ok(self.match_positions(q)?.len())
    }

    /// (matching entities, matching targets).
    pub fn counts(&self, q: &Query) -> Result<(usize, usize), ApiError> {
        let m = self.match_positions(q)?;
        let t = m.iter().filter(|&&p| self.is_target(p)).count();
        Ok((m.len(), t))
    }

    /// Every query with at least one match, root first, in depth-first order
    /// where the wildcard precedes each attribute's values.
    pub fn enumerate_nonempty_queries(&self, cap: usize) -> Result<Vec<Query>, ApiError> {
        Ok(self.enumerate_nonempty(ArmSet::AllNonEmpty, cap)?.queries)
    }

    pub fn enumerate_nonempty(&self, set: ArmSet, cap: usize) -> Result<Arms, ApiError> {
        let mut arms = Arms::default();
        if self.is_empty() {
            return Ok(arms);
        }
        let all: Vec<u32> = (0..self.len() as u32).collect();
        let mut slots = vec![Slot::Any; self.arity];
        self.visit(0, &mut slots, &all, set, cap, &mut arms)?;
        Ok(arms)
    }

    fn visit(
        &self,
        i: usize,
        slots: &mut Vec<Slot>,
        positions: &[u32],
        set: ArmSet,
        cap: usize,
        out: &mut Arms,
    ) -> Result<(), ApiError> {
        if i == self.arity {
            if out.queries.len() >= cap {
                return Err(ApiError::EnumerationOverflow { cap });
            }
            out.queries.push(Query::from_slots(slots.clone()));
            out.match_counts.push(positions.len() as u32);
            return Ok(());
        }
        if set == ArmSet::AllNonEmpty {
            self.visit(i + 1, slots, positions, set, cap, out)?;
        }
        let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); self.cards[i]];
        for &p in positions {
            buckets[self.row(p)[i] as usize].push(p);
        }
        for (v, bucket) in buckets.iter().enumerate() {
            if bucket.is_empty() {
                continue;
            }
            slots[i] = Slot::Is(v as ValueId);
            self.visit(i + 1, slots, bucket, set, cap, out)?;
        }
        slots[i] = Slot::Any;
        Ok(())
    }
}
