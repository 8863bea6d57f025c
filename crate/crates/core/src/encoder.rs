//! Column encoders and the per-table fusion map.
//!
//! Every attribute column gets a frozen encoder fitted on rows with
//! `τ ≤ t_val` (static rows always count):
//!
//! | kind        | raw slots      | content                                      |
//! |-------------|----------------|----------------------------------------------|
//! | numerical   | 2              | standardized value, missing flag             |
//! | categorical | vocab + 1      | one-hot, last slot is the OOV bucket         |
//! | text        | `text_dim`     | L2-normalized hashed character 3-gram counts |
//!
//! The raw slots of a row are concatenated in column order and multiplied
//! by the table's fusion matrix (`embed_dim × raw_dim`) to give the initial
//! node embedding. The fusion matrix here is only its seeded initial value;
//! the model owns and trains its copy.
//!
//! Text hashing is FNV-1a 64 over the UTF-8 bytes of each window of three
//! consecutive characters, reduced modulo `text_dim`. Strings shorter than
//! three characters hash as a single gram; empty strings encode to zero.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binio::*;
use crate::rng::stream_rng;
use crate::store::{ColumnKind, Database, Row, Table, Value};
use crate::time::{is_static, Timestamp};

pub const STD_FLOOR: f64 = 1e-9;
const MAGIC: &[u8; 8] = b"RELENCOD";
const VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("unknown table '{0}'")]
    UnknownTable(String),
    #[error("row of table '{table}' has {got} attributes, encoder expects {expected}")]
    RowMismatch { table: String, expected: usize, got: usize },
    #[error("table '{table}' column '{column}': expected {expected} cell")]
    CellKind { table: String, column: String, expected: &'static str },
    #[error("encoder options: {0}")]
    Options(String),
    #[error("encoder file: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderOptions {
    /// Default output dimension per table.
    pub embed_dim: usize,
    /// Per-table overrides of `embed_dim`.
    #[serde(default)]
    pub embed_dims: BTreeMap<String, usize>,
    pub text_dim: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for EncoderOptions {
    fn default() -> Self {
        EncoderOptions {
            embed_dim: 64,
            embed_dims: BTreeMap::new(),
            text_dim: 32,
            seed: 0,
        }
    }
}

impl EncoderOptions {
    pub fn embed_dim_for(&self, table: &str) -> usize {
        self.embed_dims.get(table).copied().unwrap_or(self.embed_dim)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnEncoder {
    Numerical { name: String, mean: f64, std: f64 },
    /// Vocabulary in index order; index `vocab.len()` is the OOV bucket.
    Categorical { name: String, vocab: Vec<String>, index: BTreeMap<String, usize> },
    Text { name: String, dim: usize },
}

impl ColumnEncoder {
    pub fn name(&self) -> &str {
        match self {
            ColumnEncoder::Numerical { name, .. } | ColumnEncoder::Categorical { name, .. } | ColumnEncoder::Text { name, .. } => name,
        }
    }

    pub fn width(&self) -> usize {
        match self {
            ColumnEncoder::Numerical { .. } => 2,
            ColumnEncoder::Categorical { vocab, .. } => vocab.len() + 1,
            ColumnEncoder::Text { dim, .. } => *dim,
        }
    }

    fn categorical(name: &str, vocab: Vec<String>) -> Self {
        let index = vocab.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect();
        ColumnEncoder::Categorical {
            name: name.to_string(),
            vocab,
            index,
        }
    }

    fn encode_into(&self, table: &str, cell: &Value, out: &mut [f64]) -> Result<(), EncoderError> {
        let kind_err = |expected| EncoderError::CellKind {
            table: table.to_string(),
            column: self.name().to_string(),
            expected,
        };
        match self {
            ColumnEncoder::Numerical { mean, std, .. } => match cell {
                Value::Num(x) => out[0] = (x - mean) / std,
                Value::Missing => out[1] = 1.0,
                _ => return Err(kind_err("numerical")),
            },
            ColumnEncoder::Categorical { vocab, index, .. } => {
                let slot = match cell {
                    Value::Cat(s) => index.get(s).copied().unwrap_or(vocab.len()),
                    Value::Missing => vocab.len(),
                    _ => return Err(kind_err("categorical")),
                };
                out[slot] = 1.0;
            }
            ColumnEncoder::Text { dim, .. } => match cell {
                Value::Text(s) => hash_text_into(s, *dim, out),
                Value::Missing => {}
                _ => return Err(kind_err("text")),
            },
        }
        Ok(())
    }
}

/// FNV-1a, 64-bit.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn hash_text_into(s: &str, dim: usize, out: &mut [f64]) {
    if s.is_empty() || dim == 0 {
        return;
    }
    let bounds: Vec<usize> = s.char_indices().map(|(i, _)| i).chain(std::iter::once(s.len())).collect();
    let chars = bounds.len() - 1;
    if chars < 3 {
        out[(fnv1a64(s.as_bytes()) % dim as u64) as usize] += 1.0;
    } else {
        for i in 0..chars - 2 {
            let gram = &s.as_bytes()[bounds[i]..bounds[i + 3]];
            out[(fnv1a64(gram) % dim as u64) as usize] += 1.0;
        }
    }
    let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
    out.iter_mut().for_each(|x| *x /= norm);
}

/// Hashed character 3-gram encoding of one string.
pub fn hash_text(s: &str, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    hash_text_into(s, dim, &mut v);
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableEncoder {
    pub table: String,
    pub columns: Vec<ColumnEncoder>,
    pub embed_dim: usize,
    /// Row-major `embed_dim × raw_dim`.
    pub fusion: Vec<f64>,
}

impl TableEncoder {
    pub fn raw_dim(&self) -> usize {
        self.columns.iter().map(ColumnEncoder::width).sum()
    }

    pub fn raw_into(&self, row: &Row, out: &mut [f64]) -> Result<(), EncoderError> {
        if row.attrs.len() != self.columns.len() {
            return Err(EncoderError::RowMismatch {
                table: self.table.clone(),
                expected: self.columns.len(),
                got: row.attrs.len(),
            });
        }
        out.iter_mut().for_each(|x| *x = 0.0);
        let mut at = 0;
        for (col, cell) in self.columns.iter().zip(&row.attrs) {
            let w = col.width();
            col.encode_into(&self.table, cell, &mut out[at..at + w])?;
            at += w;
        }
        Ok(())
    }
}

/// Frozen pre-processing for every table, in table-name order.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderState {
    pub cutoff: Timestamp,
    pub tables: Vec<TableEncoder>,
}

fn eligible(row: &Row, cutoff: Timestamp) -> bool {
    is_static(row.time) || row.time <= cutoff
}

fn fit_table(table: &Table, table_id: usize, cutoff: Timestamp, opts: &EncoderOptions) -> TableEncoder {
    let rows: Vec<&Row> = table.rows().iter().filter(|r| eligible(r, cutoff)).collect();
    let columns = table
        .attribute_specs()
        .enumerate()
        .map(|(slot, spec)| match spec.kind {
            ColumnKind::Numerical => {
                let xs: Vec<f64> = rows.iter().filter_map(|r| r.attrs[slot].as_f64()).collect();
                let (mean, std) = if xs.is_empty() {
                    (0.0, 1.0)
                } else {
                    let n = xs.len() as f64;
                    let mean = xs.iter().sum::<f64>() / n;
                    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
                    (mean, var.sqrt().max(STD_FLOOR))
                };
                ColumnEncoder::Numerical {
                    name: spec.name.clone(),
                    mean,
                    std,
                }
            }
            ColumnKind::Categorical => {
                let vocab: std::collections::BTreeSet<&str> = rows
                    .iter()
                    .filter_map(|r| match &r.attrs[slot] {
                        Value::Cat(s) => Some(s.as_str()),
                        _ => None,
                    })
                    .collect();
                ColumnEncoder::categorical(&spec.name, vocab.into_iter().map(str::to_string).collect())
            }
            _ => ColumnEncoder::Text {
                name: spec.name.clone(),
                dim: opts.text_dim,
            },
        })
        .collect::<Vec<_>>();
    let embed_dim = opts.embed_dim_for(table.name());
    let raw_dim: usize = columns.iter().map(ColumnEncoder::width).sum();
    TableEncoder {
        table: table.name().to_string(),
        fusion: uniform_init(opts.seed, table_id as u64, embed_dim, raw_dim),
        columns,
        embed_dim,
    }
}

/// Seeded `uniform(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn uniform_init(seed: u64, stream: u64, rows: usize, cols: usize) -> Vec<f64> {
    if rows * cols == 0 {
        return Vec::new();
    }
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let mut rng = stream_rng(seed, stream);
    (0..rows * cols).map(|_| rng.gen_range(-a..a)).collect()
}

/// Fits statistics and vocabularies over rows with `τ ≤ cutoff`. A table
/// without eligible rows falls back to mean 0, std 1 and empty vocabularies.
pub fn fit_encoders(db: &Database, cutoff: Timestamp, opts: &EncoderOptions) -> Result<EncoderState, EncoderError> {
    if opts.text_dim == 0 {
        return Err(EncoderError::Options("text_dim must be positive".into()));
    }
    if let Some((t, _)) = std::iter::once(("", opts.embed_dim))
        .chain(opts.embed_dims.iter().map(|(k, v)| (k.as_str(), *v)))
        .find(|(_, d)| *d == 0)
    {
        return Err(EncoderError::Options(format!("embed dim for '{t}' must be positive")));
    }
    let tables: Vec<&Table> = db.tables().collect();
    let tables = tables
        .par_iter()
        .enumerate()
        .map(|(i, t)| fit_table(t, i, cutoff, opts))
        .collect();
    Ok(EncoderState { cutoff, tables })
}

/// Raw feature rows of every table, indexed like the schema's table ids.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFeatures {
    pub dims: Vec<usize>,
    pub values: Vec<Vec<f64>>,
}

impl RawFeatures {
    pub fn row(&self, table: usize, local: u32) -> &[f64] {
        let d = self.dims[table];
        let at = local as usize * d;
        &self.values[table][at..at + d]
    }
}

impl EncoderState {
    pub fn table_id(&self, name: &str) -> Option<usize> {
        self.tables.binary_search_by(|t| t.table.as_str().cmp(name)).ok()
    }

    pub fn table(&self, name: &str) -> Result<&TableEncoder, EncoderError> {
        self.table_id(name)
            .map(|i| &self.tables[i])
            .ok_or_else(|| EncoderError::UnknownTable(name.to_string()))
    }

    pub fn raw_features(&self, table: &str, row: &Row) -> Result<Vec<f64>, EncoderError> {
        let enc = self.table(table)?;
        let mut out = vec![0.0; enc.raw_dim()];
        enc.raw_into(row, &mut out)?;
        Ok(out)
    }

    /// Initial embedding `fusion · raw` with the untrained fusion matrix.
    pub fn encode_row(&self, table: &str, row: &Row) -> Result<Vec<f64>, EncoderError> {
        let enc = self.table(table)?;
        let raw = self.raw_features(table, row)?;
        let n = raw.len();
        Ok((0..enc.embed_dim)
            .map(|i| enc.fusion[i * n..(i + 1) * n].iter().zip(&raw).map(|(w, x)| w * x).sum())
            .collect())
    }

    /// Encodes every row of the database; tables must match the fitted ones.
    pub fn raw_matrix(&self, db: &Database) -> Result<RawFeatures, EncoderError> {
        let tables: Vec<&Table> = db.tables().collect();
        if tables.len() != self.tables.len() {
            return Err(EncoderError::Options(format!(
                "database has {} tables, encoder has {}",
                tables.len(),
                self.tables.len()
            )));
        }
        let parts = tables
            .par_iter()
            .zip(&self.tables)
            .map(|(t, enc)| {
                if t.name() != enc.table {
                    return Err(EncoderError::UnknownTable(t.name().to_string()));
                }
                let d = enc.raw_dim();
                let mut values = vec![0.0; d * t.len()];
                if d > 0 {
                    for (row, out) in t.rows().iter().zip(values.chunks_mut(d)) {
                        enc.raw_into(row, out)?;
                    }
                }
                Ok((d, values))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let (dims, values) = parts.into_iter().unzip();
        Ok(RawFeatures { dims, values })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        write_header(w, MAGIC, VERSION)?;
        write_i64(w, self.cutoff)?;
        write_u64(w, self.tables.len() as u64)?;
        for t in &self.tables {
            write_str(w, &t.table)?;
            write_u64(w, t.embed_dim as u64)?;
            write_u64(w, t.columns.len() as u64)?;
            for c in &t.columns {
                match c {
                    ColumnEncoder::Numerical { name, mean, std } => {
                        write_u64(w, 0)?;
                        write_str(w, name)?;
                        write_f64(w, *mean)?;
                        write_f64(w, *std)?;
                    }
                    ColumnEncoder::Categorical { name, vocab, .. } => {
                        write_u64(w, 1)?;
                        write_str(w, name)?;
                        write_u64(w, vocab.len() as u64)?;
                        vocab.iter().try_for_each(|v| write_str(w, v))?;
                    }
                    ColumnEncoder::Text { name, dim } => {
                        write_u64(w, 2)?;
                        write_str(w, name)?;
                        write_u64(w, *dim as u64)?;
                    }
                }
            }
            write_f64_slice(w, &t.fusion)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> io::Result<EncoderState> {
        let bad = |m: String| io::Error::new(io::ErrorKind::InvalidData, m);
        expect_header(r, MAGIC, VERSION)?;
        let cutoff = read_i64(r)?;
        let n = read_len(r, 1 << 20)?;
        let mut tables = Vec::with_capacity(n);
        for _ in 0..n {
            let table = read_str(r)?;
            let embed_dim = read_len(r, 1 << 20)?;
            let ncols = read_len(r, 1 << 20)?;
            let mut columns = Vec::with_capacity(ncols);
            for _ in 0..ncols {
                let tag = read_u64(r)?;
                let name = read_str(r)?;
                columns.push(match tag {
                    0 => ColumnEncoder::Numerical {
                        name,
                        mean: read_f64(r)?,
                        std: read_f64(r)?,
                    },
                    1 => {
                        let k = read_len(r, 1 << 32)?;
                        let vocab = (0..k).map(|_| read_str(r)).collect::<io::Result<Vec<_>>>()?;
                        ColumnEncoder::categorical(&name, vocab)
                    }
                    2 => ColumnEncoder::Text {
                        name,
                        dim: read_len(r, 1 << 24)?,
                    },
                    t => return Err(bad(format!("unknown column encoder tag {t}"))),
                });
            }
            let fusion = read_f64_vec(r)?;
            let enc = TableEncoder {
                table,
                columns,
                embed_dim,
                fusion,
            };
            if enc.fusion.len() != enc.embed_dim * enc.raw_dim() {
                return Err(bad(format!("fusion shape mismatch for table '{}'", enc.table)));
            }
            tables.push(enc);
        }
        Ok(EncoderState { cutoff, tables })
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()
    }

    pub fn load(path: &Path) -> io::Result<EncoderState> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::fixtures::shop;
    use crate::store::ColumnSpec;
    use crate::time::SENTINEL_STATIC;

    type Person<'a> = (Option<f64>, Option<&'a str>, Option<&'a str>, Timestamp);

    fn people(values: &[Person]) -> Database {
        let rows = values
            .iter()
            .enumerate()
            .map(|(i, (x, c, s, t))| {
                Row::new(
                    i as i64,
                    vec![],
                    vec![
                        x.map_or(Value::Missing, Value::Num),
                        c.map_or(Value::Missing, |c| Value::Cat(c.into())),
                        s.map_or(Value::Missing, |s| Value::Text(s.into())),
                    ],
                    *t,
                )
            })
            .collect();
        let t = Table::new(
            "people",
            vec![
                ColumnSpec::primary_key("id"),
                ColumnSpec::new("x", ColumnKind::Numerical),
                ColumnSpec::new("c", ColumnKind::Categorical),
                ColumnSpec::new("s", ColumnKind::Text),
                ColumnSpec::new("t", ColumnKind::Timestamp),
            ],
            rows,
        )
        .unwrap();
        Database::new(vec![t]).unwrap()
    }

    fn opts() -> EncoderOptions {
        EncoderOptions {
            embed_dim: 3,
            text_dim: 8,
            ..Default::default()
        }
    }

    #[test]
    fn statistics_use_eligible_rows_only() {
        let db = people(&[
            (Some(1.0), Some("a"), None, 1),
            (Some(2.0), Some("b"), None, 2),
            (Some(3.0), None, None, 3),
            (Some(100.0), Some("late"), None, 9),
        ]);
        let st = fit_encoders(&db, 3, &opts()).unwrap();
        match &st.tables[0].columns[0] {
            ColumnEncoder::Numerical { mean, std, .. } => {
                assert_eq!(*mean, 2.0);
                assert!((std - 0.816_496_6).abs() < 1e-7);
            }
            c => panic!("{c:?}"),
        }
        match &st.tables[0].columns[1] {
            ColumnEncoder::Categorical { vocab, .. } => assert_eq!(vocab, &["a", "b"]),
            c => panic!("{c:?}"),
        }
        // "late" first appears after the cutoff and lands in the OOV slot
        let row = &db.table("people").unwrap().rows()[3];
        let raw = st.raw_features("people", row).unwrap();
        assert_eq!(&raw[2..5], &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn constant_column_and_missing_cells() {
        let db = people(&[(Some(4.0), None, None, 1), (Some(4.0), None, Some(""), 2), (None, None, None, 3)]);
        let st = fit_encoders(&db, 10, &opts()).unwrap();
        let rows = db.table("people").unwrap().rows();
        let a = st.raw_features("people", &rows[0]).unwrap();
        assert_eq!(&a[..2], &[0.0, 0.0]);
        let m = st.raw_features("people", &rows[2]).unwrap();
        assert_eq!(&m[..2], &[0.0, 1.0]);
        // empty vocabulary: everything is OOV; empty text encodes to zero
        assert_eq!(m[2], 1.0);
        assert!(st.raw_features("people", &rows[1]).unwrap()[3..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn no_eligible_rows_falls_back() {
        let db = people(&[(Some(7.0), Some("a"), None, 50)]);
        let st = fit_encoders(&db, 10, &opts()).unwrap();
        assert_eq!(
            st.tables[0].columns[0],
            ColumnEncoder::Numerical {
                name: "x".into(),
                mean: 0.0,
                std: 1.0
            }
        );
        assert_eq!(st.tables[0].columns[1].width(), 1);
    }

    #[test]
    fn text_hash_is_pinned() {
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
        let v = hash_text("hello", 16);
        assert_eq!(v, hash_text("hello", 16));
        // three distinct grams: hel, ell, llo
        let mut expect = vec![0.0; 16];
        for g in ["hel", "ell", "llo"] {
            expect[(fnv1a64(g.as_bytes()) % 16) as usize] += 1.0;
        }
        let norm = expect.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
        expect.iter_mut().for_each(|x| *x /= norm);
        assert_eq!(v, expect);
        let short = hash_text("ab", 16);
        assert_eq!(short[(fnv1a64(b"ab") % 16) as usize], 1.0);
        assert!(hash_text("", 16).iter().all(|&x| x == 0.0));
        // multi-byte characters count as one character each
        assert_eq!(hash_text("héé", 16).iter().filter(|&&x| x > 0.0).count(), 1);
    }

    #[test]
    fn golden_row_matches_stepwise_recomputation() {
        let db = shop();
        let st = fit_encoders(&db, 100, &opts()).unwrap();
        let products = db.table("products").unwrap();
        let row = &products.rows()[1];
        let got = st.encode_row("products", row).unwrap();
        // price {5, 7.5}: mean 6.25, std 1.25 → 7.5 standardizes to 1
        let raw = [1.0, 0.0];
        let f = &st.table("products").unwrap().fusion;
        assert_eq!(f.len(), 6);
        for i in 0..3 {
            assert_eq!(got[i], f[2 * i] * raw[0] + f[2 * i + 1] * raw[1]);
        }
        let a = (6.0f64 / 5.0).sqrt();
        assert!(f.iter().all(|w| w.abs() < a));
    }

    #[test]
    fn row_mismatch_and_unknown_table() {
        let db = shop();
        let st = fit_encoders(&db, 100, &opts()).unwrap();
        let customer = &db.table("customers").unwrap().rows()[0];
        assert!(matches!(st.encode_row("products", customer), Err(EncoderError::CellKind { .. })));
        let wide = Row::new(1, vec![], vec![Value::Num(1.0), Value::Num(2.0)], SENTINEL_STATIC);
        assert!(matches!(st.encode_row("products", &wide), Err(EncoderError::RowMismatch { .. })));
        assert!(matches!(st.encode_row("nope", customer), Err(EncoderError::UnknownTable(_))));
    }

    #[test]
    fn dims_and_overrides() {
        let mut o = opts();
        o.embed_dims.insert("transactions".into(), 5);
        let st = fit_encoders(&shop(), 100, &o).unwrap();
        let dims: Vec<usize> = st.tables.iter().map(|t| t.embed_dim).collect();
        assert_eq!(dims, [3, 3, 5]);
        let raw = st.raw_matrix(&shop()).unwrap();
        assert_eq!(raw.dims, [3, 2, 2]);
        assert_eq!(raw.row(0, 1), &[0.0, 1.0, 0.0]);
        o.embed_dim = 0;
        assert!(fit_encoders(&shop(), 100, &o).is_err());
    }

    #[test]
    fn binary_round_trip() {
        let db = people(&[(Some(1.0), Some("a"), Some("text"), 1), (Some(2.0), Some("b"), None, 2)]);
        let st = fit_encoders(&db, 5, &opts()).unwrap();
        let mut buf = Vec::new();
        st.write_to(&mut buf).unwrap();
        assert_eq!(EncoderState::read_from(&mut buf.as_slice()).unwrap(), st);
        buf[0] = b'X';
        assert!(EncoderState::read_from(&mut buf.as_slice()).is_err());
    }
}
