use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{validate, ColumnKind, ColumnSpec, Database, Row, StoreError, Table, Value};
use crate::time::{format_timestamp, parse_timestamp, SENTINEL_STATIC};

/// JSON schema manifest: `{"tables":[{"name","file","columns":[...]}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tables: Vec<ManifestTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestTable {
    pub name: String,
    pub file: String,
    pub columns: Vec<ManifestColumn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestColumn {
    pub name: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nullable: Option<bool>,
}

impl ManifestColumn {
    fn to_spec(&self, table: &str) -> Result<ColumnSpec, StoreError> {
        let kind = match self.kind.as_str() {
            "primary_key" => ColumnKind::PrimaryKey,
            "foreign_key" => ColumnKind::ForeignKey {
                target: self.target.clone().ok_or_else(|| {
                    StoreError::Manifest(format!(
                        "table '{table}': foreign_key column '{}' has no target",
                        self.name
                    ))
                })?,
            },
            "numerical" => ColumnKind::Numerical,
            "categorical" => ColumnKind::Categorical,
            "text" => ColumnKind::Text,
            "timestamp" => ColumnKind::Timestamp,
            other => {
                return Err(StoreError::Manifest(format!(
                    "table '{table}': column '{}' has unknown kind '{other}'",
                    self.name
                )))
            }
        };
        let mut spec = ColumnSpec::new(&self.name, kind);
        if let Some(n) = self.nullable {
            if n && matches!(spec.kind, ColumnKind::PrimaryKey) {
                return Err(StoreError::Manifest(format!(
                    "table '{table}': primary key '{}' cannot be nullable",
                    self.name
                )));
            }
            spec.nullable = n;
        }
        Ok(spec)
    }

    fn from_spec(spec: &ColumnSpec) -> ManifestColumn {
        let target = match &spec.kind {
            ColumnKind::ForeignKey { target } => Some(target.clone()),
            _ => None,
        };
        let default_nullable = ColumnSpec::new("", spec.kind.clone()).nullable;
        ManifestColumn {
            name: spec.name.clone(),
            kind: spec.kind.name().to_string(),
            target,
            nullable: (spec.nullable != default_nullable).then_some(spec.nullable),
        }
    }
}

pub fn read_manifest(path: &Path) -> Result<Manifest, StoreError> {
    let text = fs::read_to_string(path).map_err(|source| StoreError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| StoreError::Manifest(format!("{}: {e}", path.display())))
}

/// Loads and type-checks every table without checking referential
/// integrity. Use [`load_database`] unless you want to inspect a faulty
/// database with [`validate`].
pub fn load_database_unchecked(manifest_path: &Path, data_dir: &Path) -> Result<Database, StoreError> {
    let manifest = read_manifest(manifest_path)?;
    let tables = manifest
        .tables
        .par_iter()
        .map(|mt| load_table(mt, data_dir))
        .collect::<Result<Vec<_>, _>>()?;
    Database::new(tables)
}

/// Loads a database and rejects duplicate primary keys and dangling
/// foreign keys.
pub fn load_database(manifest_path: &Path, data_dir: &Path) -> Result<Database, StoreError> {
    let db = load_database_unchecked(manifest_path, data_dir)?;
    let report = validate(&db);
    if let Some(d) = report.duplicate_keys.first() {
        return Err(StoreError::DuplicateKey {
            table: d.table.clone(),
            key: d.key,
        });
    }
    if let Some(d) = report.dangling.first() {
        return Err(StoreError::Dangling {
            table: d.table.clone(),
            row_key: d.row_key,
            column: d.column.clone(),
            target: d.target.clone(),
            value: d.value,
        });
    }
    Ok(db)
}

fn load_table(mt: &ManifestTable, data_dir: &Path) -> Result<Table, StoreError> {
    let columns = mt
        .columns
        .iter()
        .map(|c| c.to_spec(&mt.name))
        .collect::<Result<Vec<_>, _>>()?;
    let path: PathBuf = data_dir.join(&mt.file);
    if !path.is_file() {
        return Err(StoreError::MissingFile {
            table: mt.name.clone(),
            path: path.display().to_string(),
        });
    }
    let csv_err = |e: csv::Error| StoreError::Csv {
        table: mt.name.clone(),
        message: e.to_string(),
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(&path)
        .map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let positions = columns
        .iter()
        .map(|c| {
            headers.iter().position(|h| h == c.name).ok_or_else(|| StoreError::Schema {
                table: mt.name.clone(),
                message: format!("column '{}' missing from {}", c.name, path.display()),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        // header is line 1
        let row_no = line + 2;
        let mut key = None;
        let mut fkeys = Vec::new();
        let mut attrs = Vec::new();
        let mut time = SENTINEL_STATIC;
        for (spec, &pos) in columns.iter().zip(&positions) {
            let cell = record.get(pos).unwrap_or("");
            let err = |message: String| StoreError::Cell {
                table: mt.name.clone(),
                row: row_no,
                column: spec.name.clone(),
                message,
            };
            if cell.is_empty() && !spec.nullable {
                return Err(err("null in non-nullable column".into()));
            }
            match &spec.kind {
                ColumnKind::PrimaryKey => {
                    key = Some(cell.trim().parse::<i64>().map_err(|_| {
                        err(format!("expected integer primary key, got '{cell}'"))
                    })?);
                }
                ColumnKind::ForeignKey { .. } => {
                    if cell.is_empty() {
                        fkeys.push(None);
                    } else {
                        fkeys.push(Some(cell.trim().parse::<i64>().map_err(|_| {
                            err(format!("expected integer foreign key, got '{cell}'"))
                        })?));
                    }
                }
                ColumnKind::Timestamp => {
                    time = parse_timestamp(cell)
                        .ok_or_else(|| err(format!("expected ISO-8601 timestamp, got '{cell}'")))?;
                }
                ColumnKind::Numerical => attrs.push(
                    cell.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .map(Value::Num)
                        .unwrap_or(Value::Missing),
                ),
                ColumnKind::Categorical => attrs.push(if cell.is_empty() {
                    Value::Missing
                } else {
                    Value::Cat(cell.to_string())
                }),
                ColumnKind::Text => attrs.push(if cell.is_empty() {
                    Value::Missing
                } else {
                    Value::Text(cell.to_string())
                }),
            }
        }
        let key = key.expect("layout guarantees a primary key");
        rows.push(Row::new(key, fkeys, attrs, time));
    }
    Table::new(&mt.name, columns, rows)
}

/// Writes `manifest.json` plus one CSV per table into `dir`.
pub fn write_database(db: &Database, dir: &Path) -> Result<Manifest, StoreError> {
    let io_err = |path: &Path| {
        let path = path.display().to_string();
        move |source| StoreError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut manifest = Manifest { tables: Vec::new() };
    for table in db.tables() {
        let file = format!("{}.csv", table.name());
        let path = dir.join(&file);
        write_table_csv(table, &path)?;
        manifest.tables.push(ManifestTable {
            name: table.name().to_string(),
            file,
            columns: table.columns().iter().map(ManifestColumn::from_spec).collect(),
        });
    }
    let mpath = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&mpath, text + "\n").map_err(io_err(&mpath))?;
    Ok(manifest)
}

fn write_table_csv(table: &Table, path: &Path) -> Result<(), StoreError> {
    let csv_err = |e: csv::Error| StoreError::Csv {
        table: table.name().to_string(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(table.columns().iter().map(|c| c.name.as_str()))
        .map_err(csv_err)?;
    let mut cells = Vec::with_capacity(table.columns().len());
    for row in table.rows() {
        cells.clear();
        let (mut fk, mut at) = (0, 0);
        for spec in table.columns() {
            cells.push(match &spec.kind {
                ColumnKind::PrimaryKey => row.key.to_string(),
                ColumnKind::ForeignKey { .. } => {
                    fk += 1;
                    row.fkeys[fk - 1].map(|k| k.to_string()).unwrap_or_default()
                }
                ColumnKind::Timestamp => format_timestamp(row.time),
                _ => {
                    at += 1;
                    match &row.attrs[at - 1] {
                        Value::Num(v) => v.to_string(),
                        Value::Cat(s) | Value::Text(s) => s.clone(),
                        Value::Missing => String::new(),
                    }
                }
            });
        }
        w.write_record(&cells).map_err(csv_err)?;
    }
    w.flush().map_err(|source| StoreError::Io {
        path: path.display().to_string(),
        source,
    })
}
