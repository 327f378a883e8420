//! Exact query precision computed from the full dataset.

use std::io::{self, Write};

use serde::Serialize;

use crate::api::{ApiError, QueryIndex};
use crate::dataset::{AttributeSchema, ValueId};
use crate::query::{Query, Slot};

#[derive(Debug, Clone, PartialEq)]
pub struct QueryPrecision {
    pub query: Query,
    pub matches: usize,
    pub targets: usize,
    /// `None` for queries with no matches.
    pub precision: Option<f64>,
}

pub fn true_precision_map(index: &QueryIndex, queries: &[Query]) -> Result<Vec<QueryPrecision>, ApiError> {
    queries
        .iter()
        .map(|q| {
            let (matches, targets) = index.counts(q)?;
            Ok(QueryPrecision {
                query: q.clone(),
                matches,
                targets,
                precision: (matches > 0).then(|| targets as f64 / matches as f64),
            })
        })
        .collect()
}

/// Precision of `q` next to the match-weighted mean precision of its
/// non-empty specializations on wildcard slot `attr`, and the best of those.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChildDecomposition {
    pub parent: f64,
    pub weighted: f64,
    pub best_child: f64,
}

pub fn child_decomposition(index: &QueryIndex, q: &Query, attr: usize) -> Result<Option<ChildDecomposition>, ApiError> {
    assert!(!q.slot(attr).is_bound(), "slot {attr} must be a wildcard");
    let positions = index.match_positions(q)?;
    if positions.is_empty() {
        return Ok(None);
    }
    let card = index.cardinality(attr);
    let mut n = vec![0usize; card];
    let mut t = vec![0usize; card];
    for &p in &positions {
        let v = index.row(p)[attr] as usize;
        n[v] += 1;
        if index.is_target(p) {
            t[v] += 1;
        }
    }
    let total = positions.len() as f64;
    let parent = t.iter().sum::<usize>() as f64 / total;
    let mut weighted = 0.0;
    let mut best_child = f64::NEG_INFINITY;
    for v in 0..card {
        if n[v] == 0 {
            continue;
        }
        let p = t[v] as f64 / n[v] as f64;
        weighted += n[v] as f64 / total * p;
        best_child = best_child.max(p);
    }
    Ok(Some(ChildDecomposition { parent, weighted, best_child }))
}

/// True precision of every (value of `row_attr`, value of `col_attr`) pair,
/// other attributes left as wildcards.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Heatmap {
    pub row_attribute: String,
    pub col_attribute: String,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub matches: Vec<Vec<usize>>,
    pub precision: Vec<Vec<Option<f64>>>,
}

pub fn precision_heatmap(
    index: &QueryIndex,
    schema: &AttributeSchema,
    row_attr: usize,
    col_attr: usize,
) -> Result<Heatmap, ApiError> {
    let (rc, cc) = (schema.cardinality(row_attr), schema.cardinality(col_attr));
    let mut matches = vec![vec![0; cc]; rc];
    let mut precision = vec![vec![None; cc]; rc];
    for a in 0..rc {
        for b in 0..cc {
            let mut slots = vec![Slot::Any; schema.len()];
            slots[row_attr] = Slot::Is(a as ValueId);
            slots[col_attr] = Slot::Is(b as ValueId);
            let (n, t) = index.counts(&Query::from_slots(slots))?;
            matches[a][b] = n;
            precision[a][b] = (n > 0).then(|| t as f64 / n as f64);
        }
    }
    let labels = |i: usize| schema.attribute(i).domain.clone();
    Ok(Heatmap {
        row_attribute: schema.attribute(row_attr).name.clone(),
        col_attribute: schema.attribute(col_attr).name.clone(),
        row_labels: labels(row_attr),
        col_labels: labels(col_attr),
        matches,
        precision,
    })
}

impl Heatmap {
    /// Tab-separated matrix: header row of column labels, then one row per
    /// row label. Empty cells are written as `NA`.
    pub fn write_tsv(&self, mut out: impl Write) -> io::Result<()> {
        write!(out, "{}\\{}", self.row_attribute, self.col_attribute)?;
        for c in &self.col_labels {
            write!(out, "\t{c}")?;
        }
        writeln!(out)?;
        for (label, row) in self.row_labels.iter().zip(&self.precision) {
            write!(out, "{label}")?;
            for p in row {
                match p {
                    Some(p) => write!(out, "\t{p}")?,
                    None => write!(out, "\tNA")?,
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::fixtures::toy;

    #[test]
    fn toy_precisions() {
        let d = toy();
        let idx = QueryIndex::build(&d);
        let qs = vec![Query::cell(&[0, 1]), Query::root(2), Query::cell(&[1, 0])];
        let map = true_precision_map(&idx, &qs).unwrap();
        assert_eq!(map[0].precision, Some(1.0));
        assert_eq!(map[1].precision, Some(0.5));
        assert_eq!(map[2].precision, Some(0.0));
    }

    #[test]
    fn decomposition_is_exact_on_toy() {
        let d = toy();
        let idx = QueryIndex::build(&d);
        let c = child_decomposition(&idx, &Query::root(2), 1).unwrap().unwrap();
        assert!((c.parent - c.weighted).abs() < 1e-12);
        assert_eq!(c.best_child, 0.75);
    }

    #[test]
    fn heatmap_tsv() {
        let d = toy();
        let idx = QueryIndex::build(&d);
        let h = precision_heatmap(&idx, d.schema(), 0, 1).unwrap();
        assert_eq!(h.precision[0][1], Some(1.0));
        let mut buf = Vec::new();
        h.write_tsv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "A1\\A2\tx\ty\na\t0.5\t1\nb\t0\t0.5\n");
    }
}
