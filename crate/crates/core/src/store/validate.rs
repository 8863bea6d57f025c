use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use super::Database;
use crate::time::SENTINEL_STATIC;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DanglingKey {
    pub table: String,
    pub row_key: i64,
    pub column: String,
    pub target: String,
    pub value: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DuplicateKey {
    pub table: String,
    pub key: i64,
    pub count: usize,
}

/// Integrity diagnostics. Only `dangling`, `duplicate_keys` and
/// `static_time_violations` count as violations; the remaining fields are
/// informational.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub dangling: Vec<DanglingKey>,
    pub duplicate_keys: Vec<DuplicateKey>,
    /// `(table, key)` of rows whose time disagrees with the table kind.
    pub static_time_violations: Vec<(String, i64)>,
    /// Adjacent row pairs with decreasing time, per table, in stored order.
    pub time_order_violations: BTreeMap<String, usize>,
    /// Fraction of null cells per table and nullable column.
    pub null_rates: BTreeMap<String, BTreeMap<String, f64>>,
}

impl ValidationReport {
    pub fn violation_count(&self) -> usize {
        self.dangling.len() + self.duplicate_keys.len() + self.static_time_violations.len()
    }

    /// True when the database is valid.
    pub fn is_empty(&self) -> bool {
        self.violation_count() == 0
    }
}

pub fn validate(db: &Database) -> ValidationReport {
    let mut report = ValidationReport::default();
    for table in db.tables() {
        let name = table.name().to_string();

        let mut counts: HashMap<i64, usize> = HashMap::new();
        for r in table.rows() {
            *counts.entry(r.key).or_default() += 1;
        }
        let mut dups: Vec<_> = counts.into_iter().filter(|&(_, c)| c > 1).collect();
        dups.sort_unstable();
        report.duplicate_keys.extend(dups.into_iter().map(|(key, count)| DuplicateKey {
            table: name.clone(),
            key,
            count,
        }));

        let fk_specs: Vec<(&str, &str)> = table.foreign_key_specs().collect();
        for r in table.rows() {
            for (slot, &(column, target)) in fk_specs.iter().enumerate() {
                let Some(value) = r.fkeys[slot] else { continue };
                let resolves = db.table(target).is_some_and(|t| t.lookup(value).is_some());
                if !resolves {
                    report.dangling.push(DanglingKey {
                        table: name.clone(),
                        row_key: r.key,
                        column: column.to_string(),
                        target: target.to_string(),
                        value,
                    });
                }
            }
            if table.is_temporal() == (r.time == SENTINEL_STATIC) {
                report.static_time_violations.push((name.clone(), r.key));
            }
        }

        let disorder = table.rows().windows(2).filter(|w| w[1].time < w[0].time).count();
        report.time_order_violations.insert(name.clone(), disorder);

        let n = table.len().max(1) as f64;
        let mut rates = BTreeMap::new();
        for (slot, (column, _)) in fk_specs.iter().enumerate() {
            let nulls = table.rows().iter().filter(|r| r.fkeys[slot].is_none()).count();
            rates.insert(column.to_string(), nulls as f64 / n);
        }
        for (slot, spec) in table.attribute_specs().enumerate() {
            let nulls = table.rows().iter().filter(|r| r.attrs[slot].is_missing()).count();
            rates.insert(spec.name.clone(), nulls as f64 / n);
        }
        report.null_rates.insert(name, rates);
    }
    report
}
