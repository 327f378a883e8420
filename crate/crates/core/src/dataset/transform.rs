//! Dataset transforms used by the ablation studies.

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use super::{Attribute, AttributeSchema, AttributeSource, Dataset, DatasetError, HiddenValue, ValueId};
use crate::rng::{derive_seed, rng_from_seed};

pub const DEFAULT_MERGED_LABEL: &str = "MERGED";

fn default_merged_label() -> String {
    DEFAULT_MERGED_LABEL.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TransformSpec {
    /// Keep the `c - 1` values with the most targets, fold the rest into one label.
    CardinalityMerge {
        attribute: String,
        c: usize,
        #[serde(default = "default_merged_label")]
        merged_label: String,
    },
    /// Permute hidden fields among a random `ceil(ratio * n)` subset of rows.
    Shuffle { ratio: f64, seed: u64 },
    /// Keep only the listed queryable attributes.
    AttributeSubset { attributes: Vec<String> },
    /// Add a queryable attribute by binning a numeric hidden field.
    Discretize {
        field: String,
        edges: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
}

impl TransformSpec {
    /// Whether the output depends on the seed passed to [`apply_transform`].
    pub fn is_seeded(&self) -> bool {
        matches!(self, TransformSpec::Shuffle { ratio, .. } if *ratio > 0.0)
    }
}

pub fn apply_transform(dataset: &Dataset, t: &TransformSpec, rng_seed: u64) -> Result<Dataset, DatasetError> {
    match t {
        TransformSpec::CardinalityMerge { attribute, c, merged_label } => {
            cardinality_merge(dataset, attribute, *c, merged_label)
        }
        TransformSpec::Shuffle { ratio, seed } => shuffle(dataset, *ratio, derive_seed(*seed, &[rng_seed])),
        TransformSpec::AttributeSubset { attributes } => attribute_subset(dataset, attributes),
        TransformSpec::Discretize { field, edges, name } => discretize(dataset, field, edges, name.as_deref()),
    }
}

fn cardinality_merge(dataset: &Dataset, attribute: &str, c: usize, label: &str) -> Result<Dataset, DatasetError> {
    let schema = dataset.schema();
    let ai = schema
        .index_of(attribute)
        .ok_or_else(|| DatasetError::UnknownAttribute(attribute.to_string()))?;
    let card = schema.cardinality(ai);
    if c < 2 {
        return Err(DatasetError::Transform(format!("cardinality must be at least 2, got {c}")));
    }
    if c > card {
        return Err(DatasetError::Transform(format!(
            "cardinality {c} exceeds |dom({attribute})| = {card}"
        )));
    }
    let yields = dataset.target_counts(ai);
    let mut order: Vec<usize> = (0..card).collect();
    // stable sort keeps domain order among ties
    order.sort_by(|&a, &b| yields[b].cmp(&yields[a]));
    let mut keep: Vec<usize> = order[..c - 1].to_vec();
    keep.sort_unstable();
    let old = &schema.attribute(ai).domain;
    if keep.iter().any(|&k| old[k] == label) {
        return Err(DatasetError::Transform(format!("merged label `{label}` collides with a kept value")));
    }
    let mut remap = vec![(c - 1) as ValueId; card];
    let mut domain = Vec::with_capacity(c);
    for (new, &k) in keep.iter().enumerate() {
        remap[k] = new as ValueId;
        domain.push(old[k].clone());
    }
    domain.push(label.to_string());

    let mut attrs = schema.attributes().to_vec();
    attrs[ai].domain = domain;
    let new_schema = AttributeSchema::new(attrs)?;
    let records = dataset
        .records()
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.values[ai] = remap[r.values[ai] as usize];
            r
        })
        .collect();
    dataset.with_parts(new_schema, records)
}

fn shuffle(dataset: &Dataset, ratio: f64, seed: u64) -> Result<Dataset, DatasetError> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(DatasetError::Transform(format!("shuffle ratio {ratio} outside [0, 1]")));
    }
    let n = dataset.len();
    let k = ((ratio * n as f64).ceil() as usize).min(n);
    if k < 2 {
        return Ok(dataset.clone());
    }
    let mut rng = rng_from_seed(seed);
    let mut chosen = index::sample(&mut rng, n, k).into_vec();
    chosen.sort_unstable();
    let mut order = chosen.clone();
    order.shuffle(&mut rng);
    let mut records = dataset.records().to_vec();
    let hidden: Vec<Vec<HiddenValue>> = order.iter().map(|&p| records[p].hidden.clone()).collect();
    for (&dst, h) in chosen.iter().zip(hidden) {
        records[dst].hidden = h;
    }
    dataset.with_parts(dataset.schema().clone(), records)
}

fn attribute_subset(dataset: &Dataset, names: &[String]) -> Result<Dataset, DatasetError> {
    if names.is_empty() {
        return Err(DatasetError::Transform("attribute subset must be non-empty".into()));
    }
    let schema = dataset.schema();
    let mut keep = Vec::with_capacity(names.len());
    for n in names {
        let i = schema.index_of(n).ok_or_else(|| DatasetError::UnknownAttribute(n.clone()))?;
        if !keep.contains(&i) {
            keep.push(i);
        }
    }
    keep.sort_unstable();
    let attrs = keep.iter().map(|&i| schema.attribute(i).clone()).collect();
    let records = dataset
        .records()
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.values = keep.iter().map(|&i| r.values[i]).collect();
            r
        })
        .collect();
    dataset.with_parts(AttributeSchema::new(attrs)?, records)
}

fn discretize(dataset: &Dataset, field: &str, edges: &[f64], name: Option<&str>) -> Result<Dataset, DatasetError> {
    let fi = dataset
        .hidden_fields()
        .iter()
        .position(|f| f.name == field)
        .ok_or_else(|| DatasetError::UnknownField(field.to_string()))?;
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(DatasetError::Transform("bin edges must be strictly increasing".into()));
    }
    let n = edges.len() - 1;
    let labels = (0..n)
        .map(|i| format!("[{},{}{}", edges[i], edges[i + 1], if i + 1 == n { ']' } else { ')' }))
        .collect();
    let attr_name = name.unwrap_or(field).to_string();
    let mut attrs = dataset.schema().attributes().to_vec();
    attrs.push(Attribute {
        name: attr_name.clone(),
        domain: labels,
        source: AttributeSource::Binned { column: field.to_string(), edges: edges.to_vec() },
    });
    let schema = AttributeSchema::new(attrs)?;
    let mut records = dataset.records().to_vec();
    for (row, r) in records.iter_mut().enumerate() {
        let x = match &r.hidden[fi] {
            HiddenValue::Number(x) => *x,
            HiddenValue::Text(_) => {
                return Err(DatasetError::Transform(format!("hidden field `{field}` is not numeric")))
            }
        };
        let bin = if x == edges[n] {
            Some(n - 1)
        } else if x >= edges[0] && x < edges[n] {
            Some(edges.partition_point(|&e| e <= x) - 1)
        } else {
            None
        };
        let bin = bin.ok_or_else(|| DatasetError::OutOfDomain {
            row: row + 1,
            attribute: attr_name.clone(),
            value: x.to_string(),
        })?;
        r.values.push(bin as ValueId);
    }
    dataset.with_parts(schema, records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::fixtures::toy;
    use crate::dataset::{EntityRecord, FieldKind, HiddenField, Predicate};

    #[test]
    fn merge_keeps_top_yielding_values() {
        let d = toy();
        // target counts on A2: x -> 1 (id 1), y -> 3 (ids 3, 4, 8)
        assert_eq!(d.target_counts(1), vec![1, 3]);
        let t = TransformSpec::CardinalityMerge { attribute: "A2".into(), c: 2, merged_label: "MERGED".into() };
        let m = apply_transform(&d, &t, 0).unwrap();
        assert_eq!(m.schema().attribute(1).domain, vec!["y", "MERGED"]);
        for (before, after) in d.records().iter().zip(m.records()) {
            let label = m.schema().value_label(1, after.values[1]);
            let was = d.schema().value_label(1, before.values[1]);
            assert_eq!(label, if was == "x" { "MERGED" } else { "y" });
        }
        assert_eq!(m.target_count(), d.target_count());
        assert_eq!(m.len(), d.len());
    }

    #[test]
    fn merge_rejects_bad_cardinality() {
        let d = toy();
        let too_big = TransformSpec::CardinalityMerge { attribute: "A1".into(), c: 3, merged_label: "M".into() };
        assert!(apply_transform(&d, &too_big, 0).is_err());
        let too_small = TransformSpec::CardinalityMerge { attribute: "A1".into(), c: 1, merged_label: "M".into() };
        assert!(apply_transform(&d, &too_small, 0).is_err());
        let unknown = TransformSpec::CardinalityMerge { attribute: "Z".into(), c: 2, merged_label: "M".into() };
        assert!(matches!(apply_transform(&d, &unknown, 0), Err(DatasetError::UnknownAttribute(_))));
    }

    #[test]
    fn merge_ties_break_by_domain_order() {
        let d = toy();
        // A1: a -> 3 targets, b -> 1; make a four-valued attribute with ties via discretize-free setup
        let schema = AttributeSchema::new(vec![Attribute::categorical(
            "A",
            vec!["p".into(), "q".into(), "r".into(), "s".into()],
        )])
        .unwrap();
        let cells = [0u16, 1, 2, 3, 1, 2];
        let targets = [true, true, true, false, false, false];
        let records = cells
            .iter()
            .zip(targets)
            .enumerate()
            .map(|(i, (&v, t))| EntityRecord {
                id: i as u64,
                values: vec![v],
                hidden: vec![HiddenValue::Text(if t { "yes" } else { "no" }.into())],
            })
            .collect();
        let ds = Dataset::new(
            schema,
            d.hidden_fields().to_vec(),
            records,
            Predicate::parse("label = 'yes'").unwrap(),
            None,
        )
        .unwrap();
        let t = TransformSpec::CardinalityMerge { attribute: "A".into(), c: 3, merged_label: "M".into() };
        let m = apply_transform(&ds, &t, 0).unwrap();
        // p, q, r tie at one target each; the first two in domain order survive
        assert_eq!(m.schema().attribute(0).domain, vec!["p", "q", "M"]);
    }

    #[test]
    fn shuffle_zero_is_identity() {
        let d = toy();
        let s = apply_transform(&d, &TransformSpec::Shuffle { ratio: 0.0, seed: 9 }, 3).unwrap();
        assert_eq!(s.records(), d.records());
    }

    #[test]
    fn shuffle_full_preserves_target_count_and_is_reproducible() {
        let d = toy();
        let t = TransformSpec::Shuffle { ratio: 1.0, seed: 9 };
        let a = apply_transform(&d, &t, 3).unwrap();
        let b = apply_transform(&d, &t, 3).unwrap();
        assert_eq!(a.target_count(), d.target_count());
        assert_eq!(a.records(), b.records());
        for (x, y) in a.records().iter().zip(d.records()) {
            assert_eq!(x.values, y.values);
            assert_eq!(x.id, y.id);
        }
    }

    #[test]
    fn shuffle_touches_only_the_chosen_fraction() {
        let schema = AttributeSchema::new(vec![Attribute::categorical("A", vec!["v".into()])]).unwrap();
        let records = (0..1000)
            .map(|i| EntityRecord { id: i, values: vec![0], hidden: vec![HiddenValue::Number(i as f64)] })
            .collect();
        let d = Dataset::new(
            schema,
            vec![HiddenField { name: "h".into(), kind: FieldKind::Number }],
            records,
            Predicate::parse("h < 100").unwrap(),
            None,
        )
        .unwrap();
        let s = apply_transform(&d, &TransformSpec::Shuffle { ratio: 0.25, seed: 1 }, 0).unwrap();
        let moved = s.records().iter().zip(d.records()).filter(|(a, b)| a.hidden != b.hidden).count();
        assert!(moved <= 250);
        assert!(moved > 200, "moved {moved}");
        assert_eq!(s.target_count(), 100);
    }

    #[test]
    fn shuffle_rejects_bad_ratio() {
        assert!(apply_transform(&toy(), &TransformSpec::Shuffle { ratio: 1.5, seed: 0 }, 0).is_err());
    }

    #[test]
    fn subset_keeps_counts() {
        let d = toy();
        let s = apply_transform(&d, &TransformSpec::AttributeSubset { attributes: vec!["A2".into()] }, 0).unwrap();
        assert_eq!(s.schema().len(), 1);
        assert_eq!(s.schema().attribute(0).name, "A2");
        assert_eq!(s.len(), d.len());
        assert_eq!(s.target_count(), d.target_count());
        assert!(apply_transform(&d, &TransformSpec::AttributeSubset { attributes: vec![] }, 0).is_err());
        assert!(apply_transform(&d, &TransformSpec::AttributeSubset { attributes: vec!["Q".into()] }, 0).is_err());
    }

    #[test]
    fn discretize_adds_attribute() {
        let schema = AttributeSchema::new(vec![Attribute::categorical("A", vec!["v".into()])]).unwrap();
        let records = (0..4)
            .map(|i| EntityRecord { id: i, values: vec![0], hidden: vec![HiddenValue::Number(i as f64 * 10.0)] })
            .collect();
        let d = Dataset::new(
            schema,
            vec![HiddenField { name: "km".into(), kind: FieldKind::Number }],
            records,
            Predicate::parse("km < 15").unwrap(),
            None,
        )
        .unwrap();
        let t = TransformSpec::Discretize { field: "km".into(), edges: vec![0.0, 15.0, 30.0], name: None };
        let x = apply_transform(&d, &t, 0).unwrap();
        assert_eq!(x.schema().len(), 2);
        let bins: Vec<u16> = x.records().iter().map(|r| r.values[1]).collect();
        assert_eq!(bins, vec![0, 0, 1, 1]);
    }

    #[test]
    fn transform_spec_serde() {
        let t: TransformSpec = toml::from_str("kind = \"shuffle\"\nratio = 0.5\nseed = 2\n").unwrap();
        assert_eq!(t, TransformSpec::Shuffle { ratio: 0.5, seed: 2 });
        let m: TransformSpec = toml::from_str("kind = \"cardinality-merge\"\nattribute = \"A\"\nc = 3\n").unwrap();
        assert!(matches!(m, TransformSpec::CardinalityMerge { ref merged_label, .. } if merged_label == "MERGED"));
    }
}
