//! Training tables: supervision rows `(entity key, seed time, label)`
//! computed from historical data.
//!
//! Labels aggregate fact rows in the half-open window `(t, t + δ]`; facts
//! at exactly `t` are model inputs, never labels. Validation rows sit at
//! `t_val`, test rows at `t_test`, and training rows at
//! `t_val - δ, t_val - δ - stride, ...` so no training label looks past
//! `t_val`.

mod io;
mod spec;

pub use io::{read_examples, read_table, write_table, ExamplesFile};
pub use spec::{EntityFilter, LabelRule, Metric, SplitConfig, TaskKind, TaskSpec};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{ColumnKind, Database, Table};
use crate::time::Timestamp;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("task spec: {0}")]
    Spec(String),
    #[error("split: {0}")]
    Split(String),
    #[error("label window ending at {end} exceeds the data horizon {horizon}")]
    WindowExceedsHorizon { end: Timestamp, horizon: Timestamp },
    #[error("io error on {0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("malformed training table {path}: {message}")]
    Malformed { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// One supervision row. `target` is set only for link-level tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub entity: i64,
    pub target: Option<i64>,
    pub time: Timestamp,
    pub label: f64,
}

impl TrainingExample {
    pub fn node(entity: i64, time: Timestamp, label: f64) -> Self {
        TrainingExample {
            entity,
            target: None,
            time,
            label,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTable {
    pub task: String,
    pub entity_table: String,
    pub split: Split,
    pub examples: Vec<TrainingExample>,
}

impl TrainingTable {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.examples.iter().map(|e| e.label).collect()
    }

    pub fn is_link_level(&self) -> bool {
        self.examples.iter().any(|e| e.target.is_some())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskTables {
    pub train: TrainingTable,
    pub val: TrainingTable,
    pub test: TrainingTable,
    /// Non-fatal conditions, e.g. a timestamp where no entity passed the
    /// filter.
    pub warnings: Vec<String>,
}

/// Per-entity fact events `(time, value)` sorted by time.
struct EventIndex {
    events: Vec<Vec<(Timestamp, f64)>>,
}

impl EventIndex {
    fn build<'a>(db: &'a Database, spec: &TaskSpec) -> Result<(EventIndex, &'a Table), TaskError> {
        let entity = db
            .table(&spec.entity_table)
            .ok_or_else(|| TaskError::Spec(format!("unknown entity table '{}'", spec.entity_table)))?;
        let fact_name = spec.label.fact_table();
        let fact = db
            .table(fact_name)
            .ok_or_else(|| TaskError::Spec(format!("unknown fact table '{fact_name}'")))?;
        if !fact.is_temporal() {
            return Err(TaskError::Spec(format!("fact table '{fact_name}' has no timestamp column")));
        }
        let fk = spec.label.fk();
        let slot = fact
            .fk_slot(fk)
            .ok_or_else(|| TaskError::Spec(format!("'{fk}' is not a foreign key of '{fact_name}'")))?;
        let target = fact.foreign_key_specs().nth(slot).map(|(_, t)| t).unwrap_or_default();
        if target != spec.entity_table {
            return Err(TaskError::Spec(format!(
                "'{fact_name}.{fk}' points at '{target}', not at '{}'",
                spec.entity_table
            )));
        }
        let value_slot = match &spec.label {
            LabelRule::SumAttribute { attribute, .. } => {
                let s = fact.attr_slot(attribute).ok_or_else(|| {
                    TaskError::Spec(format!("'{attribute}' is not an attribute of '{fact_name}'"))
                })?;
                let spec_col = fact.attribute_specs().nth(s).expect("slot exists");
                if spec_col.kind != ColumnKind::Numerical {
                    return Err(TaskError::Spec(format!("'{attribute}' is not numerical")));
                }
                Some(s)
            }
            _ => None,
        };
        let mut events = vec![Vec::new(); entity.len()];
        // fact rows are stored in time order, so each list comes out sorted
        for r in fact.rows() {
            let Some(e) = r.fkeys[slot].and_then(|k| entity.lookup(k)) else { continue };
            let v = value_slot.and_then(|s| r.attrs[s].as_f64()).unwrap_or(0.0);
            events[e as usize].push((r.time, v));
        }
        Ok((EventIndex { events }, entity))
    }

    /// Events with time in `(lo, hi]`.
    fn window(&self, entity: u32, lo: Timestamp, hi: Timestamp) -> &[(Timestamp, f64)] {
        let ev = &self.events[entity as usize];
        let a = ev.partition_point(|&(t, _)| t <= lo);
        let b = ev.partition_point(|&(t, _)| t <= hi);
        &ev[a..b.max(a)]
    }

    /// Whether any event has time in `[lo, hi]`.
    fn any_in_closed(&self, entity: u32, lo: Timestamp, hi: Timestamp) -> bool {
        let ev = &self.events[entity as usize];
        let a = ev.partition_point(|&(t, _)| t < lo);
        a < ev.len() && ev[a].0 <= hi
    }

    fn passes(&self, filter: EntityFilter, entity: u32, t: Timestamp) -> bool {
        match filter {
            EntityFilter::None => true,
            EntityFilter::ActiveWithin { lookback } => self.any_in_closed(entity, t.saturating_sub(lookback), t),
        }
    }

    fn label(&self, rule: &LabelRule, entity: u32, t: Timestamp, window: Timestamp) -> f64 {
        let w = self.window(entity, t, t + window);
        match rule {
            LabelRule::CountEvents { .. } => w.len() as f64,
            LabelRule::SumAttribute { .. } => w.iter().map(|&(_, v)| v).sum(),
            LabelRule::ExistsEvent { .. } => (!w.is_empty()) as u8 as f64,
            LabelRule::NegatedExists { .. } => w.is_empty() as u8 as f64,
        }
    }
}

/// Entities kept by the task's filter at time `t`, by primary key. Entities
/// whose own row appears after `t` are never kept.
pub fn apply_entity_filter(db: &Database, spec: &TaskSpec, t: Timestamp) -> Result<BTreeSet<i64>, TaskError> {
    let (index, entity) = EventIndex::build(db, spec)?;
    Ok(filtered(&index, entity, spec.filter, t).map(|(_, key)| key).collect())
}

fn filtered<'a>(
    index: &'a EventIndex,
    entity: &'a Table,
    filter: EntityFilter,
    t: Timestamp,
) -> impl Iterator<Item = (u32, i64)> + 'a {
    entity
        .rows()
        .iter()
        .enumerate()
        .filter(move |(_, r)| r.time <= t)
        .map(|(i, r)| (i as u32, r.key))
        .filter(move |&(i, _)| index.passes(filter, i, t))
}

fn examples_at(index: &EventIndex, entity: &Table, spec: &TaskSpec, t: Timestamp) -> Vec<TrainingExample> {
    let mut out: Vec<TrainingExample> = filtered(index, entity, spec.filter, t)
        .map(|(i, key)| TrainingExample::node(key, t, index.label(&spec.label, i, t, spec.window)))
        .collect();
    out.sort_by_key(|e| e.entity);
    out
}

/// Seed times of the training split, newest first.
pub fn train_timestamps(spec: &TaskSpec, split: &SplitConfig, min_time: Timestamp) -> Vec<Timestamp> {
    let stride = split.stride.unwrap_or(spec.window);
    (0..split.train_strides as i64)
        .map(|k| split.t_val - spec.window - k * stride)
        .take_while(|&t| t >= min_time)
        .collect()
}

pub fn generate_training_table(db: &Database, spec: &TaskSpec, split: &SplitConfig) -> Result<TaskTables, TaskError> {
    spec.check()?;
    if split.t_val >= split.t_test {
        return Err(TaskError::Split(format!(
            "t_val ({}) must precede t_test ({})",
            split.t_val, split.t_test
        )));
    }
    if split.stride.is_some_and(|s| s <= 0) {
        return Err(TaskError::Split("stride must be positive".into()));
    }
    let (index, entity) = EventIndex::build(db, spec)?;
    let (Some(min_time), Some(max_time)) = (db.min_time(), db.max_time()) else {
        return Err(TaskError::Split("database has no timestamped rows".into()));
    };
    let end = split.t_test + spec.window;
    if end > max_time {
        return Err(TaskError::WindowExceedsHorizon { end, horizon: max_time });
    }

    let mut warnings = Vec::new();
    let mut collect = |ts: &[Timestamp], split_kind: Split| {
        let mut examples = Vec::new();
        for &t in ts {
            let ex = examples_at(&index, entity, spec, t);
            if ex.is_empty() {
                let msg = format!("{}: no entity passes the filter at t={t}", split_kind.name());
                log::warn!("{msg}");
                warnings.push(msg);
            }
            examples.extend(ex);
        }
        TrainingTable {
            task: spec.name.clone(),
            entity_table: spec.entity_table.clone(),
            split: split_kind,
            examples,
        }
    };
    let train = collect(&train_timestamps(spec, split, min_time), Split::Train);
    let val = collect(&[split.t_val], Split::Val);
    let test = collect(&[split.t_test], Split::Test);
    Ok(TaskTables {
        train,
        val,
        test,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{ColumnSpec, Row, Value};
    use crate::time::SENTINEL_STATIC;

    /// users 1..=3; events (user, time, amount).
    fn db(events: &[(i64, Timestamp, f64)]) -> Database {
        let users = Table::new(
            "users",
            vec![ColumnSpec::primary_key("id")],
            (1..=3).map(|k| Row::new(k, vec![], vec![], SENTINEL_STATIC)).collect(),
        )
        .unwrap();
        let ev = Table::new(
            "events",
            vec![
                ColumnSpec::primary_key("id"),
                ColumnSpec::foreign_key("user_id", "users"),
                ColumnSpec::new("amount", ColumnKind::Numerical),
                ColumnSpec::new("ts", ColumnKind::Timestamp),
            ],
            events
                .iter()
                .enumerate()
                .map(|(i, &(u, t, a))| Row::new(i as i64, vec![Some(u)], vec![Value::Num(a)], t))
                .collect(),
        )
        .unwrap();
        Database::new(vec![users, ev]).unwrap()
    }

    fn spec(label: LabelRule, filter: EntityFilter, window: Timestamp) -> TaskSpec {
        let binary = label.is_binary();
        TaskSpec {
            name: "t".into(),
            entity_table: "users".into(),
            kind: if binary { TaskKind::BinaryClassification } else { TaskKind::Regression },
            window,
            label,
            filter,
            metric: if binary { Metric::Ap } else { Metric::Mae },
        }
    }

    fn churn(filter: EntityFilter) -> TaskSpec {
        spec(
            LabelRule::NegatedExists {
                fact_table: "events".into(),
                fk: "user_id".into(),
            },
            filter,
            100,
        )
    }

    fn ltv() -> TaskSpec {
        spec(
            LabelRule::SumAttribute {
                fact_table: "events".into(),
                attribute: "amount".into(),
                fk: "user_id".into(),
            },
            EntityFilter::None,
            100,
        )
    }

    #[test]
    fn stride_arithmetic() {
        let s = SplitConfig::new(1000, 1100, 3);
        assert_eq!(train_timestamps(&churn(EntityFilter::None), &s, 0), vec![900, 800, 700]);
        // timestamps below the data start are dropped
        assert_eq!(train_timestamps(&churn(EntityFilter::None), &s, 750), vec![900, 800]);
        let shorter = SplitConfig { stride: Some(50), ..s };
        assert_eq!(train_timestamps(&churn(EntityFilter::None), &shorter, 0), vec![900, 850, 800]);
    }

    #[test]
    fn churn_labels_and_window_boundaries() {
        // user 1: event at exactly t (feature, not label); user 2: event at t+δ (label)
        let d = db(&[(1, 1000, 1.0), (2, 1100, 1.0), (3, 1250, 1.0), (1, 1300, 0.0)]);
        let s = SplitConfig::new(1000, 1100, 0);
        let tables = generate_training_table(&d, &churn(EntityFilter::None), &s).unwrap();
        let val: Vec<(i64, f64)> = tables.val.examples.iter().map(|e| (e.entity, e.label)).collect();
        assert_eq!(val, vec![(1, 1.0), (2, 0.0), (3, 1.0)]);
        assert!(tables.val.examples.iter().all(|e| e.time == 1000));
        assert!(tables.test.examples.iter().all(|e| e.time == 1100));
    }

    #[test]
    fn ltv_sums_window_amounts() {
        let d = db(&[(1, 1010, 2.5), (1, 1090, 4.0), (2, 1200, 9.0), (1, 1300, 0.0)]);
        let tables = generate_training_table(&d, &ltv(), &SplitConfig::new(1000, 1100, 0)).unwrap();
        let labels: Vec<f64> = tables.val.labels();
        assert_eq!(labels, vec![6.5, 0.0, 0.0]);
        assert_eq!(tables.test.labels(), vec![0.0, 9.0, 0.0]);
    }

    #[test]
    fn active_within_is_closed_on_both_ends() {
        let d = db(&[(1, 900, 1.0), (2, 899, 1.0), (3, 1000, 1.0), (3, 2000, 1.0)]);
        let keep = apply_entity_filter(&d, &churn(EntityFilter::ActiveWithin { lookback: 100 }), 1000).unwrap();
        assert_eq!(keep, BTreeSet::from([1, 3]));
        let all = apply_entity_filter(&d, &churn(EntityFilter::None), 1000).unwrap();
        assert_eq!(all.len(), 3);
    }

    #[test]
    fn user_without_events_is_dropped() {
        let d = db(&[(1, 950, 1.0), (1, 2000, 1.0)]);
        let keep = apply_entity_filter(&d, &churn(EntityFilter::ActiveWithin { lookback: 1_000_000 }), 1000).unwrap();
        assert_eq!(keep, BTreeSet::from([1]));
    }

    #[test]
    fn horizon_and_split_errors() {
        let d = db(&[(1, 0, 1.0), (1, 1150, 1.0)]);
        let e = generate_training_table(&d, &churn(EntityFilter::None), &SplitConfig::new(1000, 1100, 1));
        assert!(matches!(e, Err(TaskError::WindowExceedsHorizon { end: 1200, horizon: 1150 })));
        let e = generate_training_table(&d, &churn(EntityFilter::None), &SplitConfig::new(1000, 1000, 1));
        assert!(matches!(e, Err(TaskError::Split(_))));
    }

    #[test]
    fn empty_filter_result_is_a_warning() {
        let d = db(&[(1, 0, 1.0), (1, 5000, 1.0)]);
        let t = generate_training_table(
            &d,
            &churn(EntityFilter::ActiveWithin { lookback: 10 }),
            &SplitConfig::new(1000, 1100, 2),
        )
        .unwrap();
        assert!(t.val.is_empty());
        assert_eq!(t.warnings.len(), 4);
    }

    #[test]
    fn train_windows_end_before_validation() {
        let events: Vec<_> = (0..300).map(|i| (1 + i % 3, i * 17, 1.0)).collect();
        let d = db(&events);
        let s = SplitConfig::new(3000, 4000, 10);
        let t = generate_training_table(&d, &ltv(), &s).unwrap();
        assert!(!t.train.is_empty());
        assert!(t.train.examples.iter().all(|e| e.time + 100 <= s.t_val));
        let again = generate_training_table(&d, &ltv(), &s).unwrap();
        assert_eq!(t, again);
    }

    #[test]
    fn rejects_bad_fact_references() {
        let d = db(&[(1, 0, 1.0)]);
        let mut s = ltv();
        s.label = LabelRule::SumAttribute {
            fact_table: "events".into(),
            attribute: "nope".into(),
            fk: "user_id".into(),
        };
        assert!(apply_entity_filter(&d, &s, 0).is_err());
        s.label = LabelRule::CountEvents {
            fact_table: "users".into(),
            fk: "user_id".into(),
        };
        assert!(apply_entity_filter(&d, &s, 0).is_err());
    }
}
