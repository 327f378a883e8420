//! Delimited-text datasets described by a TOML sidecar declaration.
//!
//! ```toml
//! target = "income IN ['>50K', '>50K.']"
//! delimiter = ","            # optional
//! id_column = "id"           # optional, defaults to the 1-based data row number
//! missing = ["", "NA"]       # rows with these tokens in a declared column are dropped
//!
//! [[queryable]]
//! name = "education"
//! domain = "infer"           # or an explicit list of values
//!
//! [[queryable]]
//! name = "age_band"
//! column = "age"
//! bins = [17, 30, 50, 91]    # closed-open bins, last bin closed
//!
//! [[hidden]]
//! name = "income"
//! type = "text"
//! ```

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{
    Attribute, AttributeSchema, AttributeSource, Dataset, DatasetError, EntityRecord, FieldKind, HiddenField,
    HiddenValue, Predicate, ValueId,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DomainDecl {
    Keyword(String),
    Values(Vec<String>),
}

impl Default for DomainDecl {
    fn default() -> Self {
        DomainDecl::Keyword("infer".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryableDecl {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
    #[serde(default)]
    pub domain: DomainDecl,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl QueryableDecl {
    fn column(&self) -> &str {
        self.column.as_deref().unwrap_or(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HiddenDecl {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
    #[serde(rename = "type")]
    pub kind: FieldKind,
}

impl HiddenDecl {
    fn column(&self) -> &str {
        self.column.as_deref().unwrap_or(&self.name)
    }
}

fn default_delimiter() -> char {
    ','
}

fn default_missing() -> Vec<String> {
    vec![String::new()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Declaration {
    pub target: Predicate,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_column: Option<String>,
    /// Numeric column whose ascending order defines the fixed ranking.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_column: Option<String>,
    /// Seed of a random permutation used as the fixed ranking when no rank column is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_seed: Option<u64>,
    #[serde(default = "default_missing")]
    pub missing: Vec<String>,
    pub queryable: Vec<QueryableDecl>,
    #[serde(default)]
    pub hidden: Vec<HiddenDecl>,
}

impl Declaration {
    pub fn from_toml(text: &str) -> Result<Self, DatasetError> {
        toml::from_str(text).map_err(|e| DatasetError::Declaration(e.message().to_string()))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("declaration serializes")
    }
}

/// What the loader did besides producing the dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_dropped_missing: usize,
}

enum Resolver {
    Closed(HashMap<String, ValueId>),
    Bins { edges: Vec<f64> },
}

fn bin_labels(edges: &[f64]) -> Vec<String> {
    let n = edges.len() - 1;
    (0..n)
        .map(|i| {
            let close = if i + 1 == n { ']' } else { ')' };
            format!("[{},{}{close}", edges[i], edges[i + 1])
        })
        .collect()
}

fn bin_of(edges: &[f64], x: f64) -> Option<usize> {
    let n = edges.len() - 1;
    if x.is_nan() || x < edges[0] || x > edges[n] {
        return None;
    }
    if x == edges[n] {
        return Some(n - 1);
    }
    // first edge strictly greater than x, minus one
    Some(edges.partition_point(|&e| e <= x) - 1)
}

fn natural_sort(values: BTreeSet<String>) -> Vec<String> {
    let mut v: Vec<String> = values.into_iter().collect();
    let numeric: Option<Vec<f64>> = v.iter().map(|s| s.parse::<f64>().ok()).collect();
    if let Some(nums) = numeric {
        let mut pairs: Vec<(f64, String)> = nums.into_iter().zip(v).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        v = pairs.into_iter().map(|p| p.1).collect();
    }
    v
}

/// Loads a delimited file with a header row according to `decl`.
pub fn load_dataset(path: impl AsRef<Path>, decl: &Declaration) -> Result<(Dataset, LoadReport), DatasetError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_from_bytes(&bytes, decl)
}

pub(crate) fn load_from_bytes(bytes: &[u8], decl: &Declaration) -> Result<(Dataset, LoadReport), DatasetError> {
    if decl.queryable.is_empty() {
        return Err(DatasetError::Declaration("no queryable attributes declared".into()));
    }
    if !decl.delimiter.is_ascii() {
        return Err(DatasetError::Declaration("delimiter must be a single ASCII character".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(decl.delimiter as u8)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| DatasetError::BadRow { row: 1, message: e.to_string() })?
        .clone();
    let col = |name: &str| -> Result<usize, DatasetError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
    };
    let q_cols: Vec<usize> = decl.queryable.iter().map(|q| col(q.column())).collect::<Result<_, _>>()?;
    let h_cols: Vec<usize> = decl.hidden.iter().map(|h| col(h.column())).collect::<Result<_, _>>()?;
    let id_col = decl.id_column.as_deref().map(col).transpose()?;
    let rank_col = decl.rank_column.as_deref().map(col).transpose()?;

    let mut watched: Vec<usize> = q_cols.iter().chain(&h_cols).copied().collect();
    watched.extend(id_col);
    watched.extend(rank_col);

    let mut report = LoadReport::default();
    let mut rows: Vec<(usize, csv::StringRecord)> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| DatasetError::BadRow { row: line, message: e.to_string() })?;
        report.rows_read += 1;
        if watched.iter().any(|&c| decl.missing.iter().any(|m| m == &rec[c])) {
            report.rows_dropped_missing += 1;
            continue;
        }
        rows.push((line, rec));
    }
    if report.rows_dropped_missing > 0 {
        log::warn!(
            "dropped {} of {} rows with missing values",
            report.rows_dropped_missing,
            report.rows_read
        );
    }

    // Resolve domains.
    let mut attributes = Vec::with_capacity(decl.queryable.len());
    let mut resolvers = Vec::with_capacity(decl.queryable.len());
    for (qd, &c) in decl.queryable.iter().zip(&q_cols) {
        let source_col = qd.column().to_string();
        if let Some(edges) = &qd.bins {
            if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(DatasetError::Declaration(format!(
                    "bins of `{}` must be at least two strictly increasing edges",
                    qd.name
                )));
            }
            let labels = match &qd.labels {
                Some(l) if l.len() == edges.len() - 1 => l.clone(),
                Some(_) => {
                    return Err(DatasetError::Declaration(format!(
                        "`{}` needs exactly {} bin labels",
                        qd.name,
                        edges.len() - 1
                    )))
                }
                None => bin_labels(edges),
            };
            attributes.push(Attribute {
                name: qd.name.clone(),
                domain: labels,
                source: AttributeSource::Binned { column: source_col, edges: edges.clone() },
            });
            resolvers.push(Resolver::Bins { edges: edges.clone() });
            continue;
        }
        let domain = match &qd.domain {
            DomainDecl::Values(v) => v.clone(),
            DomainDecl::Keyword(k) if k == "infer" => {
                natural_sort(rows.iter().map(|(_, r)| r[c].to_string()).collect::<BTreeSet<_>>())
            }
            DomainDecl::Keyword(k) => {
                return Err(DatasetError::Declaration(format!(
                    "domain of `{}` must be a list or \"infer\", got \"{k}\"",
                    qd.name
                )))
            }
        };
        let map = domain.iter().enumerate().map(|(i, v)| (v.clone(), i as ValueId)).collect();
        attributes.push(Attribute {
            name: qd.name.clone(),
            domain,
            source: AttributeSource::Column(source_col),
        });
        resolvers.push(Resolver::Closed(map));
    }
    if let Some(a) = attributes.iter().find(|a| a.domain.is_empty()) {
        return Err(DatasetError::Declaration(format!(
            "cannot infer the domain of `{}` from a file without rows",
            a.name
        )));
    }
    let schema = AttributeSchema::new(attributes)?;

    let hidden_fields: Vec<HiddenField> = decl
        .hidden
        .iter()
        .map(|h| HiddenField { name: h.name.clone(), kind: h.kind })
        .collect();

    let mut records = Vec::with_capacity(rows.len());
    let mut rank_keys = Vec::new();
    for (n, (line, rec)) in rows.iter().enumerate() {
        let mut values = Vec::with_capacity(q_cols.len());
        for (i, (&c, resolver)) in q_cols.iter().zip(&resolvers).enumerate() {
            let raw = &rec[c];
            let v = match resolver {
                Resolver::Closed(map) => map.get(raw).copied(),
                Resolver::Bins { edges } => raw
                    .parse::<f64>()
                    .ok()
                    .and_then(|x| bin_of(edges, x))
                    .map(|b| b as ValueId),
            };
            let v = v.ok_or_else(|| DatasetError::OutOfDomain {
                row: *line,
                attribute: schema.attribute(i).name.clone(),
                value: raw.to_string(),
            })?;
            values.push(v);
        }
        let mut hidden = Vec::with_capacity(h_cols.len());
        for (hd, &c) in decl.hidden.iter().zip(&h_cols) {
            let raw = &rec[c];
            hidden.push(match hd.kind {
                FieldKind::Text => HiddenValue::Text(raw.to_string()),
                FieldKind::Number => HiddenValue::Number(raw.parse().map_err(|_| DatasetError::BadRow {
                    row: *line,
                    message: format!("`{}` is not numeric: `{raw}`", hd.name),
                })?),
            });
        }
        let id = match id_col {
            Some(c) => rec[c].parse::<u64>().map_err(|_| DatasetError::BadRow {
                row: *line,
                message: format!("id `{}` is not a non-negative integer", &rec[c]),
            })?,
            None => n as u64 + 1,
        };
        if let Some(c) = rank_col {
            let key: f64 = rec[c].parse().map_err(|_| DatasetError::BadRow {
                row: *line,
                message: format!("rank `{}` is not numeric", &rec[c]),
            })?;
            rank_keys.push((key, id));
        }
        records.push(EntityRecord { id, values, hidden });
    }

    let rank = if rank_col.is_some() {
        rank_keys.sort_by(|a, b| a.0.total_cmp(&b.0));
        Some(rank_keys.into_iter().map(|(_, id)| id).collect())
    } else if let Some(seed) = decl.rank_seed {
        let mut ids: Vec<u64> = records.iter().map(|r| r.id).collect();
        ids.shuffle(&mut crate::rng::rng_from_seed(seed));
        Some(ids)
    } else {
        None
    };

    let dataset = Dataset::new(schema, hidden_fields, records, decl.target.clone(), rank)?;
    Ok((dataset, report))
}

/// Writes `dataset` as CSV plus a declaration with explicit domains.
pub fn write_dataset(dataset: &Dataset, csv_path: &Path, decl_path: &Path) -> Result<Declaration, DatasetError> {
    let io = |p: &Path| {
        let p = p.display().to_string();
        move |source| DatasetError::Io { path: p.clone(), source }
    };
    let schema = dataset.schema();
    let mut out = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        let mut header = vec!["id".to_string()];
        header.extend(schema.attributes().iter().map(|a| a.name.clone()));
        header.extend(dataset.hidden_fields().iter().map(|h| h.name.clone()));
        w.write_record(&header).map_err(|e| DatasetError::Declaration(e.to_string()))?;
        for r in dataset.records() {
            let mut row = vec![r.id.to_string()];
            row.extend(r.values.iter().enumerate().map(|(i, &v)| schema.value_label(i, v).to_string()));
            row.extend(r.hidden.iter().map(|h| h.to_string()));
            w.write_record(&row).map_err(|e| DatasetError::Declaration(e.to_string()))?;
        }
        w.flush().map_err(io(csv_path))?;
    }
    fs::write(csv_path, out).map_err(io(csv_path))?;

    let decl = Declaration {
        target: dataset.target_spec().clone(),
        delimiter: ',',
        id_column: Some("id".into()),
        rank_column: None,
        rank_seed: None,
        missing: default_missing(),
        queryable: schema
            .attributes()
            .iter()
            .map(|a| QueryableDecl {
                name: a.name.clone(),
                column: None,
                domain: DomainDecl::Values(a.domain.clone()),
                bins: None,
                labels: None,
            })
            .collect(),
        hidden: dataset
            .hidden_fields()
            .iter()
            .map(|h| HiddenDecl { name: h.name.clone(), column: None, kind: h.kind })
            .collect(),
    };
    let mut f = fs::File::create(decl_path).map_err(io(decl_path))?;
    f.write_all(decl.to_toml().as_bytes()).map_err(io(decl_path))?;
    Ok(decl)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY_CSV: &str = "id,A1,A2,label\n1,a,x,yes\n2,a,x,no\n3,a,y,yes\n4,a,y,yes\n5,b,x,no\n6,b,x,no\n7,b,y,no\n8,b,y,yes\n";

    fn toy_decl() -> Declaration {
        Declaration::from_toml(
            r#"
            target = "label = 'yes'"
            id_column = "id"
            [[queryable]]
            name = "A1"
            domain = ["a", "b"]
            [[queryable]]
            name = "A2"
            domain = "infer"
            [[hidden]]
            name = "label"
            type = "text"
            "#,
        )
        .unwrap()
    }

    #[test]
    fn loads_toy() {
        let (d, report) = load_from_bytes(TOY_CSV.as_bytes(), &toy_decl()).unwrap();
        assert_eq!(d.len(), 8);
        assert_eq!(d.target_count(), 4);
        assert_eq!(report.rows_dropped_missing, 0);
        assert_eq!(d.schema().attribute(1).domain, vec!["x", "y"]);
        assert!(d.evaluate_target(1).unwrap());
        assert!(!d.evaluate_target(5).unwrap());
    }

    #[test]
    fn empty_file_with_header() {
        let mut decl = toy_decl();
        decl.queryable[1].domain = DomainDecl::Values(vec!["x".into(), "y".into()]);
        let (d, _) = load_from_bytes(b"id,A1,A2,label\n", &decl).unwrap();
        assert_eq!(d.len(), 0);
        assert_eq!(d.target_count(), 0);
        // nothing to infer from
        assert!(load_from_bytes(b"id,A1,A2,label\n", &toy_decl()).is_err());
    }

    #[test]
    fn deterministic() {
        let (a, _) = load_from_bytes(TOY_CSV.as_bytes(), &toy_decl()).unwrap();
        let (b, _) = load_from_bytes(TOY_CSV.as_bytes(), &toy_decl()).unwrap();
        assert_eq!(a.records(), b.records());
        assert_eq!(a.schema(), b.schema());
    }

    #[test]
    fn missing_column() {
        let e = load_from_bytes(b"id,A1,label\n1,a,yes\n", &toy_decl()).unwrap_err();
        assert!(matches!(e, DatasetError::MissingColumn(c) if c == "A2"));
    }

    #[test]
    fn out_of_closed_domain_reports_line() {
        let e = load_from_bytes(b"id,A1,A2,label\n1,a,x,yes\n2,c,x,no\n", &toy_decl()).unwrap_err();
        assert!(matches!(e, DatasetError::OutOfDomain { row: 3, .. }), "{e}");
    }

    #[test]
    fn duplicate_ids() {
        let e = load_from_bytes(b"id,A1,A2,label\n1,a,x,yes\n1,b,x,no\n", &toy_decl()).unwrap_err();
        assert!(matches!(e, DatasetError::DuplicateId(1)));
    }

    #[test]
    fn unparsable_row_reports_line() {
        let e = load_from_bytes(b"id,A1,A2,label\n1,a,x,yes\n2,a\n", &toy_decl()).unwrap_err();
        assert!(matches!(e, DatasetError::BadRow { row: 3, .. }), "{e}");
        let e = load_from_bytes(b"id,A1,A2,label\nseven,a,x,yes\n", &toy_decl()).unwrap_err();
        assert!(matches!(e, DatasetError::BadRow { row: 2, .. }), "{e}");
    }

    #[test]
    fn rows_with_missing_values_are_dropped_and_counted() {
        let (d, report) = load_from_bytes(b"id,A1,A2,label\n1,a,x,yes\n2,,x,no\n3,b,y,\n", &toy_decl()).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(report.rows_read, 3);
        assert_eq!(report.rows_dropped_missing, 2);
    }

    #[test]
    fn numeric_bins_are_closed_open_with_closed_last() {
        let decl = Declaration::from_toml(
            r#"
            target = "m < 40000"
            [[queryable]]
            name = "age"
            bins = [0, 10, 20]
            [[hidden]]
            name = "m"
            type = "number"
            "#,
        )
        .unwrap();
        let csv = b"age,m\n0,1\n9.99,1\n10,1\n20,50000\n";
        let (d, _) = load_from_bytes(csv, &decl).unwrap();
        let vals: Vec<u16> = d.records().iter().map(|r| r.values[0]).collect();
        assert_eq!(vals, vec![0, 0, 1, 1]);
        assert_eq!(d.schema().attribute(0).domain, vec!["[0,10)", "[10,20]"]);
        assert_eq!(d.target_count(), 3);
        let e = load_from_bytes(b"age,m\n21,1\n", &decl).unwrap_err();
        assert!(matches!(e, DatasetError::OutOfDomain { .. }));
    }

    #[test]
    fn rank_column_orders_ids() {
        let mut decl = toy_decl();
        decl.rank_column = Some("r".into());
        let csv = b"id,A1,A2,label,r\n1,a,x,yes,3\n2,a,y,no,1\n3,b,x,no,2\n";
        let (d, _) = load_from_bytes(csv, &decl).unwrap();
        assert_eq!(d.rank().unwrap(), &[2, 3, 1]);
    }

    #[test]
    fn unknown_declaration_keys_rejected() {
        let e = Declaration::from_toml("target = 'TRUE'\nbogus = 1\n[[queryable]]\nname='a'\n");
        assert!(e.is_err());
    }

    #[test]
    fn write_then_load_round_trips() {
        let (d, _) = load_from_bytes(TOY_CSV.as_bytes(), &toy_decl()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("t.csv");
        let decl = dir.path().join("t.toml");
        write_dataset(&d, &csv, &decl).unwrap();
        let (again, _) = load_dataset(&csv, &Declaration::from_file(&decl).unwrap()).unwrap();
        assert_eq!(again.records(), d.records());
        assert_eq!(again.target_count(), d.target_count());
    }
}
