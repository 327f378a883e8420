//! Conjunctive attributed queries and the generalization lattice.
//!
//! A query binds every schema attribute either to a domain value or to the
//! wildcard. Identity is syntactic: two queries are equal iff slot-wise equal.

use std::fmt;

use thiserror::Error;

use crate::dataset::{AttributeSchema, EntityRecord, ValueId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QueryError {
    #[error("query has {query} slots but the schema has {schema} attributes")]
    SchemaMismatch { query: usize, schema: usize },
    #[error("slot {0} is already bound")]
    AlreadyBound(usize),
    #[error("value {value} is outside the domain of attribute {attribute}")]
    OutOfDomain { attribute: usize, value: ValueId },
    #[error("attribute index {0} out of range")]
    NoSuchAttribute(usize),
    #[error("cannot parse query `{text}`: {reason}")]
    Parse { text: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slot {
    Any,
    Is(ValueId),
}

impl Slot {
    pub fn value(self) -> Option<ValueId> {
        match self {
            Slot::Any => None,
            Slot::Is(v) => Some(v),
        }
    }

    pub fn is_bound(self) -> bool {
        matches!(self, Slot::Is(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryRelation {
    Generalizes,
    Specializes,
    Equal,
    Incomparable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Generalize,
    Specialize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Query {
    slots: Box<[Slot]>,
}

impl Query {
    /// The all-wildcard query over `arity` attributes.
    pub fn root(arity: usize) -> Query {
        Query { slots: vec![Slot::Any; arity].into_boxed_slice() }
    }

    pub fn from_slots(slots: Vec<Slot>) -> Query {
        Query { slots: slots.into_boxed_slice() }
    }

    /// Fully bound query for an entity's values.
    pub fn cell(values: &[ValueId]) -> Query {
        Query { slots: values.iter().map(|&v| Slot::Is(v)).collect() }
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn slot(&self, i: usize) -> Slot {
        self.slots[i]
    }

    pub fn arity(&self) -> usize {
        self.slots.len()
    }

    pub fn bound_count(&self) -> usize {
        self.slots.iter().filter(|s| s.is_bound()).count()
    }

    pub fn is_root(&self) -> bool {
        self.slots.iter().all(|s| !s.is_bound())
    }

    pub fn is_fully_bound(&self) -> bool {
        self.slots.iter().all(|s| s.is_bound())
    }

    pub fn validate(&self, schema: &AttributeSchema) -> Result<(), QueryError> {
        if self.arity() != schema.len() {
            return Err(QueryError::SchemaMismatch { query: self.arity(), schema: schema.len() });
        }
        for (i, s) in self.slots.iter().enumerate() {
            if let Slot::Is(v) = *s {
                if v as usize >= schema.cardinality(i) {
                    return Err(QueryError::OutOfDomain { attribute: i, value: v });
                }
            }
        }
        Ok(())
    }

    /// Conjunctive match against raw values; arity must agree.
    #[inline]
    pub fn matches_values(&self, values: &[ValueId]) -> bool {
        debug_assert_eq!(values.len(), self.slots.len());
        self.slots.iter().zip(values).all(|(s, &v)| match *s {
            Slot::Any => true,
            Slot::Is(b) => b == v,
        })
    }

    pub fn matches(&self, e: &EntityRecord) -> Result<bool, QueryError> {
        if e.values.len() != self.arity() {
            return Err(QueryError::SchemaMismatch { query: self.arity(), schema: e.values.len() });
        }
        Ok(self.matches_values(&e.values))
    }

    /// Syntactic subsumption: every bound slot of `self` is bound identically in
    /// `other`. Reflexive.
    pub fn is_generalization_of(&self, other: &Query) -> Result<bool, QueryError> {
        if self.arity() != other.arity() {
            return Err(QueryError::SchemaMismatch { query: self.arity(), schema: other.arity() });
        }
        Ok(self.generalizes_unchecked(other))
    }

    #[inline]
    pub(crate) fn generalizes_unchecked(&self, other: &Query) -> bool {
        self.slots.iter().zip(other.slots.iter()).all(|(a, b)| match *a {
            Slot::Any => true,
            Slot::Is(_) => a == b,
        })
    }

    pub fn relation(&self, other: &Query) -> Result<QueryRelation, QueryError> {
        let up = self.is_generalization_of(other)?;
        let down = other.generalizes_unchecked(self);
        Ok(match (up, down) {
            (true, true) => QueryRelation::Equal,
            (true, false) => QueryRelation::Generalizes,
            (false, true) => QueryRelation::Specializes,
            (false, false) => QueryRelation::Incomparable,
        })
    }

    /// Binds wildcard slot `i` to `v`.
    pub fn specialize(&self, schema: &AttributeSchema, i: usize, v: ValueId) -> Result<Query, QueryError> {
        if i >= self.arity() {
            return Err(QueryError::NoSuchAttribute(i));
        }
        if self.slots[i].is_bound() {
            return Err(QueryError::AlreadyBound(i));
        }
        if i >= schema.len() || v as usize >= schema.cardinality(i) {
            return Err(QueryError::OutOfDomain { attribute: i, value: v });
        }
        Ok(self.with_slot(i, Slot::Is(v)))
    }

    pub(crate) fn with_slot(&self, i: usize, s: Slot) -> Query {
        let mut q = self.clone();
        q.slots[i] = s;
        q
    }

    /// One-step neighbours. For `Specialize`, `observed[i]` lists candidate
    /// values of attribute `i`; pass `None` to use full domains.
    pub fn lattice_neighbors(
        &self,
        schema: &AttributeSchema,
        direction: Direction,
        observed: Option<&[Vec<ValueId>]>,
    ) -> Vec<Query> {
        let mut out = Vec::new();
        for (i, s) in self.slots.iter().enumerate() {
            match (direction, *s) {
                (Direction::Generalize, Slot::Is(_)) => out.push(self.with_slot(i, Slot::Any)),
                (Direction::Specialize, Slot::Any) => match observed {
                    Some(obs) => out.extend(obs[i].iter().map(|&v| self.with_slot(i, Slot::Is(v)))),
                    None => out.extend((0..schema.cardinality(i)).map(|v| self.with_slot(i, Slot::Is(v as ValueId)))),
                },
                _ => {}
            }
        }
        out
    }

    /// Renders `attr=value&attr=*` in schema order.
    pub fn display<'a>(&'a self, schema: &'a AttributeSchema) -> QueryDisplay<'a> {
        QueryDisplay { query: self, schema }
    }

    pub fn to_text(&self, schema: &AttributeSchema) -> String {
        self.display(schema).to_string()
    }

    /// Parses the `attr=value&...` form. Omitted attributes are wildcards.
    pub fn parse(schema: &AttributeSchema, text: &str) -> Result<Query, QueryError> {
        let err = |reason: String| QueryError::Parse { text: text.to_string(), reason };
        let mut q = Query::root(schema.len());
        let mut seen = vec![false; schema.len()];
        for part in text.split('&').filter(|p| !p.is_empty()) {
            let (name, value) = part.split_once('=').ok_or_else(|| err(format!("`{part}` lacks `=`")))?;
            let name = unescape(name).map_err(&err)?;
            let i = schema.index_of(&name).ok_or_else(|| err(format!("unknown attribute `{name}`")))?;
            if std::mem::replace(&mut seen[i], true) {
                return Err(err(format!("attribute `{name}` given twice")));
            }
            if value == "*" {
                continue;
            }
            let value = unescape(value).map_err(&err)?;
            let v = schema
                .value_id(i, &value)
                .ok_or_else(|| err(format!("`{value}` is not in the domain of `{name}`")))?;
            q.slots[i] = Slot::Is(v);
        }
        Ok(q)
    }
}

pub struct QueryDisplay<'a> {
    query: &'a Query,
    schema: &'a AttributeSchema,
}

impl fmt::Display for QueryDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.query.slots.iter().enumerate() {
            if i > 0 {
                f.write_str("&")?;
            }
            let attr = self.schema.attribute(i);
            escape(f, &attr.name)?;
            f.write_str("=")?;
            match *s {
                Slot::Any => f.write_str("*")?,
                Slot::Is(v) => escape(f, self.schema.value_label(i, v))?,
            }
        }
        Ok(())
    }
}

fn escape(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    if s == "*" {
        return f.write_str("%2A");
    }
    for c in s.chars() {
        match c {
            '%' => f.write_str("%25")?,
            '&' => f.write_str("%26")?,
            '=' => f.write_str("%3D")?,
            c => write!(f, "{c}")?,
        }
    }
    Ok(())
}

fn unescape(s: &str) -> Result<String, String> {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = s.get(i + 1..i + 3).ok_or_else(|| format!("truncated escape in `{s}`"))?;
            let b = u8::from_str_radix(hex, 16).map_err(|_| format!("bad escape `%{hex}`"))?;
            out.push(b);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).map_err(|_| format!("escape in `{s}` is not UTF-8"))
}
