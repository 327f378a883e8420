//! Entity datasets with a queryable schema and a hidden target property.

mod load;
mod predicate;
mod transform;

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use load::{load_dataset, write_dataset, Declaration, DomainDecl, HiddenDecl, LoadReport, QueryableDecl};
pub use predicate::{CmpOp, Literal, Predicate};
pub use transform::{apply_transform, TransformSpec, DEFAULT_MERGED_LABEL};

/// Index of a value inside an attribute domain.
pub type ValueId = u16;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("attribute name `{0}` declared twice")]
    DuplicateAttribute(String),
    #[error("attribute `{0}` has an empty domain")]
    EmptyDomain(String),
    #[error("attribute `{attribute}` repeats domain value `{value}`")]
    DuplicateValue { attribute: String, value: String },
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("unknown hidden field `{0}`")]
    UnknownField(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: value `{value}` is outside the domain of `{attribute}`")]
    OutOfDomain { row: usize, attribute: String, value: String },
    #[error("row {row}: {message}")]
    BadRow { row: usize, message: String },
    #[error("duplicate entity id {0}")]
    DuplicateId(u64),
    #[error("unknown entity id {0}")]
    UnknownId(u64),
    #[error("rank must be a permutation of all record ids")]
    BadRank,
    #[error("invalid predicate: {0}")]
    Predicate(String),
    #[error("invalid transform: {0}")]
    Transform(String),
    #[error("declaration: {0}")]
    Declaration(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Where the values of a queryable attribute come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AttributeSource {
    Column(String),
    /// Numeric column discretized into closed-open bins; the last bin is closed.
    Binned { column: String, edges: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub domain: Vec<String>,
    pub source: AttributeSource,
}

impl Attribute {
    pub fn categorical(name: impl Into<String>, domain: Vec<String>) -> Self {
        let name = name.into();
        Attribute {
            source: AttributeSource::Column(name.clone()),
            name,
            domain,
        }
    }

    pub fn cardinality(&self) -> usize {
        self.domain.len()
    }
}

/// Ordered queryable attributes. The wildcard is not a domain value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSchema {
    attributes: Vec<Attribute>,
    #[serde(skip)]
    lookup: Vec<HashMap<String, ValueId>>,
}

impl AttributeSchema {
    pub fn new(attributes: Vec<Attribute>) -> Result<Self, DatasetError> {
        let mut names = HashSet::new();
        let mut lookup = Vec::with_capacity(attributes.len());
        for attr in &attributes {
            if !names.insert(attr.name.as_str()) {
                return Err(DatasetError::DuplicateAttribute(attr.name.clone()));
            }
            if attr.domain.is_empty() {
                return Err(DatasetError::EmptyDomain(attr.name.clone()));
            }
            if attr.domain.len() > ValueId::MAX as usize {
                return Err(DatasetError::Declaration(format!(
                    "attribute `{}` has more than {} values",
                    attr.name,
                    ValueId::MAX
                )));
            }
            let mut values = HashMap::with_capacity(attr.domain.len());
            for (i, v) in attr.domain.iter().enumerate() {
                if values.insert(v.clone(), i as ValueId).is_some() {
                    return Err(DatasetError::DuplicateValue {
                        attribute: attr.name.clone(),
                        value: v.clone(),
                    });
                }
            }
            lookup.push(values);
        }
        Ok(AttributeSchema { attributes, lookup })
    }

    /// Number of queryable attributes.
    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn attribute(&self, i: usize) -> &Attribute {
        &self.attributes[i]
    }

    pub fn cardinality(&self, i: usize) -> usize {
        self.attributes[i].domain.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn value_id(&self, attribute: usize, value: &str) -> Option<ValueId> {
        self.lookup[attribute].get(value).copied()
    }

    pub fn value_label(&self, attribute: usize, value: ValueId) -> &str {
        &self.attributes[attribute].domain[value as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Text,
    Number,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenField {
    pub name: String,
    pub kind: FieldKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HiddenValue {
    Text(String),
    Number(f64),
}

impl fmt::Display for HiddenValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HiddenValue::Text(s) => f.write_str(s),
            HiddenValue::Number(x) => write!(f, "{x}"),
        }
    }
}

/// One entity. `hidden` is aligned with [`Dataset::hidden_fields`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub id: u64,
    pub values: Vec<ValueId>,
    pub hidden: Vec<HiddenValue>,
}

/// An immutable entity table. Target flags are evaluated once at construction.
#[derive(Debug, Clone)]
pub struct Dataset {
    schema: AttributeSchema,
    hidden_fields: Vec<HiddenField>,
    records: Vec<EntityRecord>,
    target: Predicate,
    rank: Option<Vec<u64>>,
    targets: Vec<bool>,
    target_count: usize,
    positions: HashMap<u64, usize>,
}

impl Dataset {
    pub fn new(
        schema: AttributeSchema,
        hidden_fields: Vec<HiddenField>,
        records: Vec<EntityRecord>,
        target: Predicate,
        rank: Option<Vec<u64>>,
    ) -> Result<Self, DatasetError> {
        let mut positions = HashMap::with_capacity(records.len());
        for (pos, rec) in records.iter().enumerate() {
            if rec.values.len() != schema.len() {
                return Err(DatasetError::BadRow {
                    row: pos + 1,
                    message: format!(
                        "expected {} queryable values, found {}",
                        schema.len(),
                        rec.values.len()
                    ),
                });
            }
            for (i, &v) in rec.values.iter().enumerate() {
                if v as usize >= schema.cardinality(i) {
                    return Err(DatasetError::OutOfDomain {
                        row: pos + 1,
                        attribute: schema.attribute(i).name.clone(),
                        value: v.to_string(),
                    });
                }
            }
            if rec.hidden.len() != hidden_fields.len() {
                return Err(DatasetError::BadRow {
                    row: pos + 1,
                    message: "hidden fields do not match declaration".into(),
                });
            }
            if positions.insert(rec.id, pos).is_some() {
                return Err(DatasetError::DuplicateId(rec.id));
            }
        }
        if let Some(rank) = &rank {
            if rank.len() != records.len() {
                return Err(DatasetError::BadRank);
            }
            let mut seen = HashSet::with_capacity(rank.len());
            for id in rank {
                if !positions.contains_key(id) || !seen.insert(*id) {
                    return Err(DatasetError::BadRank);
                }
            }
        }
        let compiled = target.compile(&hidden_fields)?;
        let targets: Vec<bool> = records.iter().map(|r| compiled.eval(&r.hidden)).collect();
        let target_count = targets.iter().filter(|&&t| t).count();
        Ok(Dataset {
            schema,
            hidden_fields,
            records,
            target,
            rank,
            targets,
            target_count,
            positions,
        })
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn hidden_fields(&self) -> &[HiddenField] {
        &self.hidden_fields
    }

    pub fn records(&self) -> &[EntityRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn target_spec(&self) -> &Predicate {
        &self.target
    }

    pub fn rank(&self) -> Option<&[u64]> {
        self.rank.as_deref()
    }

    /// Number of records satisfying the hidden predicate.
    pub fn target_count(&self) -> usize {
        self.target_count
    }

    pub fn target_fraction(&self) -> f64 {
        if self.records.is_empty() {
            0.0
        } else {
            self.target_count as f64 / self.records.len() as f64
        }
    }

    pub fn position(&self, id: u64) -> Option<usize> {
        self.positions.get(&id).copied()
    }

    /// Oracle lookup by entity id.
    pub fn evaluate_target(&self, id: u64) -> Result<bool, DatasetError> {
        self.position(id)
            .map(|p| self.targets[p])
            .ok_or(DatasetError::UnknownId(id))
    }

    /// Oracle lookup by record position.
    pub fn is_target_at(&self, pos: usize) -> bool {
        self.targets[pos]
    }

    pub fn target_flags(&self) -> &[bool] {
        &self.targets
    }

    /// Rebuilds the dataset with a new schema and records, keeping hidden
    /// fields, target predicate and rank.
    pub(crate) fn with_parts(
        &self,
        schema: AttributeSchema,
        records: Vec<EntityRecord>,
    ) -> Result<Dataset, DatasetError> {
        Dataset::new(
            schema,
            self.hidden_fields.clone(),
            records,
            self.target.clone(),
            self.rank.clone(),
        )
    }

    /// Count of records per value of attribute `i`.
    pub fn value_counts(&self, i: usize) -> Vec<usize> {
        let mut counts = vec![0; self.schema.cardinality(i)];
        for r in &self.records {
            counts[r.values[i] as usize] += 1;
        }
        counts
    }

    /// Count of target records per value of attribute `i`.
    pub fn target_counts(&self, i: usize) -> Vec<usize> {
        let mut counts = vec![0; self.schema.cardinality(i)];
        for (r, &t) in self.records.iter().zip(&self.targets) {
            if t {
                counts[r.values[i] as usize] += 1;
            }
        }
        counts
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::toy;
    use super::*;

    #[test]
    fn toy_target_count() {
        let d = toy();
        assert_eq!(d.len(), 8);
        assert_eq!(d.target_count(), 4);
    }

    #[test]
    fn toy_oracle() {
        let d = toy();
        assert!(d.evaluate_target(1).unwrap());
        assert!(!d.evaluate_target(5).unwrap());
        assert!(matches!(d.evaluate_target(99), Err(DatasetError::UnknownId(99))));
    }

    #[test]
    fn constant_true_predicate() {
        let d = toy();
        let all = Dataset::new(
            d.schema().clone(),
            d.hidden_fields().to_vec(),
            d.records().to_vec(),
            Predicate::parse("TRUE").unwrap(),
            None,
        )
        .unwrap();
        assert!((1..=8).all(|id| all.evaluate_target(id).unwrap()));
    }

    #[test]
    fn domains_partition_population() {
        let d = toy();
        for i in 0..d.schema().len() {
            assert_eq!(d.value_counts(i).iter().sum::<usize>(), d.len());
        }
    }

    #[test]
    fn schema_rejects_bad_domains() {
        let dup = AttributeSchema::new(vec![
            Attribute::categorical("A", vec!["x".into()]),
            Attribute::categorical("A", vec!["y".into()]),
        ]);
        assert!(matches!(dup, Err(DatasetError::DuplicateAttribute(_))));
        let empty = AttributeSchema::new(vec![Attribute::categorical("A", vec![])]);
        assert!(matches!(empty, Err(DatasetError::EmptyDomain(_))));
        let repeated = AttributeSchema::new(vec![Attribute::categorical("A", vec!["x".into(), "x".into()])]);
        assert!(matches!(repeated, Err(DatasetError::DuplicateValue { .. })));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let d = toy();
        let mut recs = d.records().to_vec();
        recs[1].id = 1;
        let r = Dataset::new(d.schema().clone(), d.hidden_fields().to_vec(), recs, d.target_spec().clone(), None);
        assert!(matches!(r, Err(DatasetError::DuplicateId(1))));
    }

    #[test]
    fn rank_must_be_permutation() {
        let d = toy();
        let bad = Dataset::new(
            d.schema().clone(),
            d.hidden_fields().to_vec(),
            d.records().to_vec(),
            d.target_spec().clone(),
            Some(vec![1, 2, 3, 4, 5, 6, 7, 7]),
        );
        assert!(matches!(bad, Err(DatasetError::BadRank)));
        let good = Dataset::new(
            d.schema().clone(),
            d.hidden_fields().to_vec(),
            d.records().to_vec(),
            d.target_spec().clone(),
            Some(vec![8, 7, 6, 5, 4, 3, 2, 1]),
        );
        assert!(good.is_ok());
    }
}
