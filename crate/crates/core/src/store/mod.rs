//! In-memory relational store.
//!
//! A row is the four-tuple (primary key, foreign keys, attributes, time).
//! Tables keep their rows sorted by `(time, primary key)`; the position of
//! a row in that order is its dense local id, used by every downstream
//! module. Original keys stay on the rows for reporting.

mod load;
mod validate;

pub use load::{load_database, load_database_unchecked, read_manifest, write_database, Manifest};
pub use validate::{validate, DanglingKey, DuplicateKey, ValidationReport};

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::{Timestamp, SENTINEL_STATIC};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("missing data file for table '{table}': {path}")]
    MissingFile { table: String, path: String },
    #[error("csv error in table '{table}': {message}")]
    Csv { table: String, message: String },
    #[error("table '{table}', row {row}, column '{column}': {message}")]
    Cell {
        table: String,
        row: usize,
        column: String,
        message: String,
    },
    #[error("table '{table}': {message}")]
    Schema { table: String, message: String },
    #[error("duplicate primary key {key} in table '{table}'")]
    DuplicateKey { table: String, key: i64 },
    #[error("referential integrity: table '{table}', row key {row_key}, column '{column}' references missing key {value} in '{target}'")]
    Dangling {
        table: String,
        row_key: i64,
        column: String,
        target: String,
        value: i64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnKind {
    PrimaryKey,
    ForeignKey { target: String },
    Numerical,
    Categorical,
    Text,
    Timestamp,
}

impl ColumnKind {
    pub fn name(&self) -> &'static str {
        match self {
            ColumnKind::PrimaryKey => "primary_key",
            ColumnKind::ForeignKey { .. } => "foreign_key",
            ColumnKind::Numerical => "numerical",
            ColumnKind::Categorical => "categorical",
            ColumnKind::Text => "text",
            ColumnKind::Timestamp => "timestamp",
        }
    }

    pub fn is_attribute(&self) -> bool {
        matches!(self, ColumnKind::Numerical | ColumnKind::Categorical | ColumnKind::Text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    pub nullable: bool,
}

impl ColumnSpec {
    pub fn new(name: &str, kind: ColumnKind) -> Self {
        let nullable = !matches!(kind, ColumnKind::PrimaryKey | ColumnKind::Timestamp);
        ColumnSpec {
            name: name.to_string(),
            kind,
            nullable,
        }
    }

    pub fn primary_key(name: &str) -> Self {
        Self::new(name, ColumnKind::PrimaryKey)
    }

    pub fn foreign_key(name: &str, target: &str) -> Self {
        Self::new(
            name,
            ColumnKind::ForeignKey {
                target: target.to_string(),
            },
        )
    }
}

/// A typed attribute cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Num(f64),
    Cat(String),
    Text(String),
    /// Null or malformed cell; encoders see it through a missing mask.
    Missing,
}

impl Value {
    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Num(v) => Some(*v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub key: i64,
    /// One slot per foreign-key column, in column order.
    pub fkeys: Vec<Option<i64>>,
    /// One slot per attribute column, in column order.
    pub attrs: Vec<Value>,
    pub time: Timestamp,
}

impl Row {
    pub fn new(key: i64, fkeys: Vec<Option<i64>>, attrs: Vec<Value>, time: Timestamp) -> Self {
        Row {
            key,
            fkeys,
            attrs,
            time,
        }
    }
}

/// Column indices of a table's spec grouped by role.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub primary_key: usize,
    /// `(spec index, target table)` per foreign-key column.
    pub foreign_keys: Vec<(usize, String)>,
    pub attributes: Vec<usize>,
    pub timestamp: Option<usize>,
}

impl Layout {
    fn from_columns(table: &str, columns: &[ColumnSpec]) -> Result<Layout, StoreError> {
        let schema_err = |message: String| StoreError::Schema {
            table: table.to_string(),
            message,
        };
        let mut pk = Vec::new();
        let mut fks = Vec::new();
        let mut attrs = Vec::new();
        let mut ts = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, c) in columns.iter().enumerate() {
            if !seen.insert(c.name.as_str()) {
                return Err(schema_err(format!("duplicate column '{}'", c.name)));
            }
            match &c.kind {
                ColumnKind::PrimaryKey => pk.push(i),
                ColumnKind::ForeignKey { target } => fks.push((i, target.clone())),
                ColumnKind::Timestamp => ts.push(i),
                _ => attrs.push(i),
            }
        }
        if pk.len() != 1 {
            return Err(schema_err(format!(
                "expected exactly one primary_key column, found {}",
                pk.len()
            )));
        }
        if ts.len() > 1 {
            return Err(schema_err(format!(
                "at most one timestamp column allowed, found {}",
                ts.len()
            )));
        }
        Ok(Layout {
            primary_key: pk[0],
            foreign_keys: fks,
            attributes: attrs,
            timestamp: ts.first().copied(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    name: String,
    columns: Vec<ColumnSpec>,
    layout: Layout,
    rows: Vec<Row>,
    index: HashMap<i64, u32>,
}

impl PartialEq for Table {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.columns == other.columns && self.rows == other.rows
    }
}

impl Table {
    /// Builds a table, checking the column invariants and row arity, then
    /// sorts rows by `(time, key)` and indexes primary keys. Duplicate keys
    /// are kept (the first occurrence wins the index) so that [`validate`]
    /// can report them.
    pub fn new(name: &str, columns: Vec<ColumnSpec>, mut rows: Vec<Row>) -> Result<Table, StoreError> {
        let layout = Layout::from_columns(name, &columns)?;
        for r in &rows {
            if r.fkeys.len() != layout.foreign_keys.len() || r.attrs.len() != layout.attributes.len() {
                return Err(StoreError::Schema {
                    table: name.to_string(),
                    message: format!("row with key {} does not match the column arity", r.key),
                });
            }
            if layout.timestamp.is_none() && r.time != SENTINEL_STATIC {
                return Err(StoreError::Schema {
                    table: name.to_string(),
                    message: format!("static table row {} carries a timestamp", r.key),
                });
            }
        }
        rows.sort_by_key(|r| (r.time, r.key));
        let mut index = HashMap::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            index.entry(r.key).or_insert(i as u32);
        }
        Ok(Table {
            name: name.to_string(),
            columns,
            layout,
            rows,
            index,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn row(&self, local: u32) -> &Row {
        &self.rows[local as usize]
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_temporal(&self) -> bool {
        self.layout.timestamp.is_some()
    }

    /// Dense local id of a primary key.
    pub fn lookup(&self, key: i64) -> Option<u32> {
        self.index.get(&key).copied()
    }

    /// Position of the foreign-key column named `column` among the row's
    /// `fkeys` slots.
    pub fn fk_slot(&self, column: &str) -> Option<usize> {
        self.layout
            .foreign_keys
            .iter()
            .position(|(i, _)| self.columns[*i].name == column)
    }

    /// Position of the attribute column named `column` among `attrs`.
    pub fn attr_slot(&self, column: &str) -> Option<usize> {
        self.layout
            .attributes
            .iter()
            .position(|i| self.columns[*i].name == column)
    }

    pub fn attribute_specs(&self) -> impl Iterator<Item = &ColumnSpec> {
        self.layout.attributes.iter().map(move |&i| &self.columns[i])
    }

    /// `(column name, target table)` per foreign-key column.
    pub fn foreign_key_specs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.layout
            .foreign_keys
            .iter()
            .map(move |(i, t)| (self.columns[*i].name.as_str(), t.as_str()))
    }

    /// Consumes the table and returns its rows, for rebuilding after edits.
    pub fn into_parts(self) -> (String, Vec<ColumnSpec>, Vec<Row>) {
        (self.name, self.columns, self.rows)
    }
}

/// A link `(fkey table, pkey table)` together with the column inducing it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Link {
    pub fkey_table: String,
    pub column: String,
    pub pkey_table: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Database {
    tables: BTreeMap<String, Table>,
}

impl Database {
    /// Assembles a database; every foreign-key target must name a table.
    pub fn new(tables: Vec<Table>) -> Result<Database, StoreError> {
        let mut map = BTreeMap::new();
        for t in tables {
            let name = t.name.clone();
            if map.insert(name.clone(), t).is_some() {
                return Err(StoreError::Manifest(format!("table '{name}' declared twice")));
            }
        }
        for t in map.values() {
            for (col, target) in t.foreign_key_specs() {
                if !map.contains_key(target) {
                    return Err(StoreError::Schema {
                        table: t.name.clone(),
                        message: format!("foreign key '{col}' targets unknown table '{target}'"),
                    });
                }
            }
        }
        Ok(Database { tables: map })
    }

    /// Tables in lexicographic name order; this order defines table type ids.
    pub fn tables(&self) -> impl Iterator<Item = &Table> {
        self.tables.values()
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.get(name)
    }

    pub fn table_names(&self) -> Vec<String> {
        self.tables.keys().cloned().collect()
    }

    pub fn into_tables(self) -> Vec<Table> {
        self.tables.into_values().collect()
    }

    /// Every foreign-key column as a link, sorted.
    pub fn links(&self) -> Vec<Link> {
        let mut out: Vec<Link> = self
            .tables
            .values()
            .flat_map(|t| {
                t.foreign_key_specs().map(move |(c, target)| Link {
                    fkey_table: t.name.clone(),
                    column: c.to_string(),
                    pkey_table: target.to_string(),
                })
            })
            .collect();
        out.sort();
        out
    }

    /// The link set L as table pairs.
    pub fn link_pairs(&self) -> BTreeSet<(String, String)> {
        self.links()
            .into_iter()
            .map(|l| (l.fkey_table, l.pkey_table))
            .collect()
    }

    /// Largest real timestamp over all tables.
    pub fn max_time(&self) -> Option<Timestamp> {
        self.tables
            .values()
            .filter(|t| t.is_temporal())
            .filter_map(|t| t.rows.last().map(|r| r.time))
            .max()
    }

    /// Smallest real timestamp over all tables.
    pub fn min_time(&self) -> Option<Timestamp> {
        self.tables
            .values()
            .filter(|t| t.is_temporal())
            .filter_map(|t| t.rows.first().map(|r| r.time))
            .min()
    }
}

/// Exact row counts per table.
pub fn row_count_summary(db: &Database) -> BTreeMap<String, usize> {
    db.tables().map(|t| (t.name().to_string(), t.len())).collect()
}
