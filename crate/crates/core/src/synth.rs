//! Planted-correlation synthetic datasets.
//!
//! Entities are spread over the cells of a product of categorical domains.
//! Target labels are then assigned with exact per-group counts so that the
//! precision of chosen cells, and the overall target fraction, hit requested
//! values.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    Attribute, AttributeSchema, Dataset, DatasetError, EntityRecord, FieldKind, HiddenField, HiddenValue, Predicate,
    ValueId,
};
use crate::rng::rng_from_seed;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("infeasible synthetic dataset: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// How target precision varies across cells.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SynthProfile {
    /// One hot cell with precision `f + s(1 - f)`; every other entity is a
    /// target with the probability that keeps the overall fraction at `f`.
    #[default]
    Planted,
    /// Cells grouped by the value of the first attribute. Group `i` of `k`
    /// centres on `f + gap·((k-1)/2 - i)`; cells inside a group are spaced
    /// evenly across `spread`, so exactly one cell is best overall.
    Clustered { gap: f64, spread: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub cardinalities: Vec<usize>,
    pub records: usize,
    pub target_fraction: f64,
    /// Strength `s` in `[0, 1]` of the planted cell.
    #[serde(default)]
    pub correlation: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub profile: SynthProfile,
    /// Fill cells in contiguous equal blocks instead of uniformly at random.
    #[serde(default)]
    pub balanced: bool,
    /// Hot cell for the planted profile; drawn from the seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hot_cell: Option<Vec<ValueId>>,
}

impl SynthSpec {
    pub fn new(cardinalities: Vec<usize>, records: usize, target_fraction: f64, correlation: f64, seed: u64) -> Self {
        SynthSpec {
            cardinalities,
            records,
            target_fraction,
            correlation,
            seed,
            profile: SynthProfile::Planted,
            balanced: false,
            hot_cell: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: Dataset,
    /// The planted cell, or the unique best cell of a clustered profile.
    pub best_cell: Vec<ValueId>,
}

fn decode(mut cell: usize, cards: &[usize]) -> Vec<ValueId> {
    let mut out = vec![0; cards.len()];
    for i in (0..cards.len()).rev() {
        out[i] = (cell % cards[i]) as ValueId;
        cell /= cards[i];
    }
    out
}

fn encode(values: &[ValueId], cards: &[usize]) -> usize {
    values.iter().zip(cards).fold(0, |acc, (&v, &c)| acc * c + v as usize)
}

pub fn generate(spec: &SynthSpec) -> Result<Synthetic, SynthError> {
    let bad = |m: String| Err(SynthError::Infeasible(m));
    let cards = &spec.cardinalities;
    if cards.is_empty() || cards.iter().any(|&c| c == 0 || c > ValueId::MAX as usize) {
        return bad("every attribute needs between 1 and 65535 values".into());
    }
    let f = spec.target_fraction;
    if !(0.0..=1.0).contains(&f) {
        return bad(format!("target fraction {f} outside [0, 1]"));
    }
    if !(0.0..=1.0).contains(&spec.correlation) {
        return bad(format!("correlation {} outside [0, 1]", spec.correlation));
    }
    let cells: usize = cards.iter().product();
    let n = spec.records;
    let mut rng = rng_from_seed(spec.seed);

    let cell_of: Vec<usize> = if spec.balanced {
        (0..n).map(|i| i * cells / n.max(1)).collect()
    } else {
        (0..n).map(|_| rng.random_range(0..cells)).collect()
    };
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); cells];
    for (i, &c) in cell_of.iter().enumerate() {
        members[c].push(i);
    }
    let mut is_target = vec![false; n];
    let mut mark = |group: &[usize], k: usize, rng: &mut rand_chacha::ChaCha8Rng| {
        for j in sample(rng, group.len(), k) {
            is_target[group[j]] = true;
        }
    };

    let best = match &spec.profile {
        SynthProfile::Planted => {
            let hot = match &spec.hot_cell {
                Some(v) => {
                    if v.len() != cards.len() || v.iter().zip(cards).any(|(&x, &c)| x as usize >= c) {
                        return bad("hot cell does not fit the cardinalities".into());
                    }
                    encode(v, cards)
                }
                None => rng.random_range(0..cells),
            };
            let p_hot = f + spec.correlation * (1.0 - f);
            let total = (f * n as f64).round() as usize;
            let hot_targets = (p_hot * members[hot].len() as f64).round() as usize;
            let rest: Vec<usize> = (0..n).filter(|&i| cell_of[i] != hot).collect();
            if hot_targets > total || total - hot_targets > rest.len() {
                return bad(format!(
                    "hot cell needs {hot_targets} targets but the fraction allows {total} in total over {n} records"
                ));
            }
            mark(&members[hot], hot_targets, &mut rng);
            mark(&rest, total - hot_targets, &mut rng);
            hot
        }
        SynthProfile::Clustered { gap, spread } => {
            let k = cards[0];
            let per = cells / k;
            let mut best = (f64::NEG_INFINITY, 0);
            for i in 0..k {
                let level = f + gap * ((k as f64 - 1.0) / 2.0 - i as f64);
                let mut order: Vec<usize> = (0..per).map(|j| i * per + j).collect();
                order.shuffle(&mut rng);
                for (j, &c) in order.iter().enumerate() {
                    let offset = if per > 1 { 0.5 - j as f64 / (per - 1) as f64 } else { 0.0 };
                    let p = level + spread * offset;
                    if !(0.0..=1.0).contains(&p) {
                        return bad(format!("cell precision {p:.3} outside [0, 1]; reduce gap or spread"));
                    }
                    if p > best.0 {
                        best = (p, c);
                    }
                    let t = (p * members[c].len() as f64).round() as usize;
                    mark(&members[c], t, &mut rng);
                }
            }
            best.1
        }
    };

    let schema = AttributeSchema::new(
        cards
            .iter()
            .enumerate()
            .map(|(i, &c)| Attribute::categorical(format!("A{}", i + 1), (1..=c).map(|v| format!("v{v}")).collect()))
            .collect(),
    )?;
    let records = (0..n)
        .map(|i| EntityRecord {
            id: i as u64 + 1,
            values: decode(cell_of[i], cards),
            hidden: vec![HiddenValue::Number(if is_target[i] { 1.0 } else { 0.0 })],
        })
        .collect();
    let dataset = Dataset::new(
        schema,
        vec![HiddenField { name: "target".into(), kind: FieldKind::Number }],
        records,
        Predicate::parse("target = 1").expect("fixed predicate parses"),
        None,
    )?;
    Ok(Synthetic { dataset, best_cell: decode(best, cards) })
}
