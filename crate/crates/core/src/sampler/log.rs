//! Per-call record of a sampling run.

use std::collections::HashSet;
use std::io::{self, Write};

use serde::Serialize;

use crate::dataset::AttributeSchema;
use crate::query::Query;

#[derive(Debug, Clone, PartialEq)]
pub struct CallRecord {
    pub call: u64,
    pub query: Query,
    pub ids: Vec<u64>,
    pub targets: Vec<bool>,
}

/// Calls issued, distinct entities sampled and the cumulative distinct
/// target count after each call.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleLog {
    calls: Vec<CallRecord>,
    sampled: Vec<u32>,
    seen: HashSet<u32>,
    target_ids: Vec<u64>,
    cumulative_targets: Vec<u64>,
    cumulative_distinct: Vec<u64>,
}

#[derive(Serialize)]
struct CallLine<'a> {
    call: u64,
    query: String,
    ids: &'a [u64],
    targets: &'a [bool],
    distinct_targets: u64,
}

impl SampleLog {
    pub fn new() -> SampleLog {
        SampleLog::default()
    }

    /// Appends one call and returns the record positions seen for the first
    /// time, in page order.
    pub(crate) fn record(&mut self, query: Query, positions: &[u32], ids: Vec<u64>, targets: Vec<bool>) -> Vec<u32> {
        let mut fresh = Vec::new();
        for ((&p, &id), &t) in positions.iter().zip(&ids).zip(&targets) {
            if self.seen.insert(p) {
                self.sampled.push(p);
                fresh.push(p);
                if t {
                    self.target_ids.push(id);
                }
            }
        }
        self.calls.push(CallRecord { call: self.calls.len() as u64 + 1, query, ids, targets });
        self.cumulative_targets.push(self.target_ids.len() as u64);
        self.cumulative_distinct.push(self.sampled.len() as u64);
        fresh
    }

    pub fn calls(&self) -> &[CallRecord] {
        &self.calls
    }

    pub fn len(&self) -> usize {
        self.calls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.calls.is_empty()
    }

    /// Distinct sampled record positions in order of first sighting.
    pub fn sampled(&self) -> &[u32] {
        &self.sampled
    }

    pub fn has_seen(&self, pos: u32) -> bool {
        self.seen.contains(&pos)
    }

    /// Distinct target ids in order of first sighting.
    pub fn target_ids(&self) -> &[u64] {
        &self.target_ids
    }

    pub fn distinct_targets(&self) -> u64 {
        self.target_ids.len() as u64
    }

    pub fn cumulative_targets(&self) -> &[u64] {
        &self.cumulative_targets
    }

    pub fn cumulative_distinct(&self) -> &[u64] {
        &self.cumulative_distinct
    }

    /// One JSON object per call.
    pub fn write_jsonl(&self, schema: &AttributeSchema, mut out: impl Write) -> io::Result<()> {
        for (c, &k) in self.calls.iter().zip(&self.cumulative_targets) {
            let line = CallLine {
                call: c.call,
                query: c.query.to_text(schema),
                ids: &c.ids,
                targets: &c.targets,
                distinct_targets: k,
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_counts_are_cumulative() {
        let mut log = SampleLog::new();
        let fresh = log.record(Query::root(1), &[0, 1, 0], vec![10, 11, 10], vec![true, false, true]);
        assert_eq!(fresh, vec![0, 1]);
        let fresh = log.record(Query::root(1), &[1, 2], vec![11, 12], vec![false, true]);
        assert_eq!(fresh, vec![2]);
        assert_eq!(log.cumulative_targets(), &[1, 2]);
        assert_eq!(log.cumulative_distinct(), &[2, 3]);
        assert_eq!(log.target_ids(), &[10, 12]);
        assert_eq!(log.calls()[1].call, 2);
    }
}
