//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the code paths it checks.

#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use relgraph::gnn::{HeadKind, HeteroGnn, ModelShape, NodeInput};
use relgraph::store::{ColumnKind, ColumnSpec, Row, Value};
use relgraph::task::{EntityFilter, LabelRule};
use relgraph::time::SENTINEL_STATIC;
use relgraph::{ComputationGraph, Database, EncoderState, EntityGraph, NodeRef, Table, TaskSpec, Timestamp};

/// Three tables with every attribute kind: 4 customers, 3 products, 9
/// transactions (one with a null product).
pub fn toy_shop() -> Database {
    let customers = Table::new(
        "customers",
        vec![
            ColumnSpec::primary_key("customer_id"),
            ColumnSpec::new("name", ColumnKind::Text),
            ColumnSpec::new("region", ColumnKind::Categorical),
        ],
        (1..=4)
            .map(|k| {
                Row::new(
                    k,
                    vec![],
                    vec![
                        Value::Text(format!("customer number {k}")),
                        Value::Cat(["north", "south"][k as usize % 2].into()),
                    ],
                    SENTINEL_STATIC,
                )
            })
            .collect(),
    )
    .unwrap();
    let products = Table::new(
        "products",
        vec![
            ColumnSpec::primary_key("product_id"),
            ColumnSpec::new("price", ColumnKind::Numerical),
            ColumnSpec::new("size", ColumnKind::Categorical),
        ],
        vec![
            Row::new(10, vec![], vec![Value::Num(5.0), Value::Cat("s".into())], SENTINEL_STATIC),
            Row::new(11, vec![], vec![Value::Num(7.5), Value::Cat("m".into())], SENTINEL_STATIC),
            Row::new(12, vec![], vec![Value::Num(12.0), Value::Missing], SENTINEL_STATIC),
        ],
    )
    .unwrap();
    let tx = [
        (100, 1, Some(10), 5.0, 10),
        (101, 1, Some(11), 7.5, 20),
        (102, 2, Some(10), 5.0, 25),
        (103, 2, Some(12), 12.0, 30),
        (104, 3, Some(11), 7.5, 35),
        (105, 1, Some(12), 12.0, 40),
        (106, 4, None, 3.0, 45),
        (107, 3, Some(10), 5.0, 60),
        (108, 2, Some(11), 7.5, 90),
    ];
    let transactions = Table::new(
        "transactions",
        vec![
            ColumnSpec::primary_key("transaction_id"),
            ColumnSpec::foreign_key("customer_id", "customers"),
            ColumnSpec { nullable: true, ..ColumnSpec::foreign_key("product_id", "products") },
            ColumnSpec::new("price", ColumnKind::Numerical),
            ColumnSpec::new("time", ColumnKind::Timestamp),
        ],
        tx.iter()
            .map(|&(k, c, p, price, t)| Row::new(k, vec![Some(c), p], vec![Value::Num(price)], t))
            .collect(),
    )
    .unwrap();
    Database::new(vec![customers, products, transactions]).unwrap()
}

fn visible(t_row: Timestamp, t: Timestamp) -> bool {
    t_row == SENTINEL_STATIC || t_row <= t
}

/// Rows adjacent to `(table, key)` through any foreign key in either
/// direction, restricted to rows visible at `t`. Scans the raw tables.
fn raw_neighbors(db: &Database, table: &str, key: i64, t: Timestamp) -> Vec<(String, i64)> {
    let mut out = Vec::new();
    let this = db.table(table).unwrap();
    let row = this.rows().iter().find(|r| r.key == key).unwrap();
    for (slot, (_, target)) in this.foreign_key_specs().enumerate() {
        if let Some(k) = row.fkeys[slot] {
            let dst = db.table(target).unwrap();
            let r = dst.rows().iter().find(|r| r.key == k).unwrap();
            if visible(r.time, t) {
                out.push((target.to_string(), k));
            }
        }
    }
    for other in db.tables() {
        for (slot, (_, target)) in other.foreign_key_specs().enumerate() {
            if target != table {
                continue;
            }
            for r in other.rows() {
                if r.fkeys[slot] == Some(key) && visible(r.time, t) {
                    out.push((other.name().to_string(), r.key));
                }
            }
        }
    }
    out
}

/// Every row within `hops` foreign-key hops of the seed, using only rows
/// visible at `t`.
pub fn bfs_oracle(db: &Database, table: &str, key: i64, t: Timestamp, hops: usize) -> BTreeSet<(String, i64)> {
    let seed = (table.to_string(), key);
    let mut seen = BTreeSet::from([seed.clone()]);
    let mut queue = VecDeque::from([(seed, 0)]);
    while let Some(((tb, k), d)) = queue.pop_front() {
        if d == hops {
            continue;
        }
        for nb in raw_neighbors(db, &tb, k, t) {
            if seen.insert(nb.clone()) {
                queue.push_back((nb, d + 1));
            }
        }
    }
    seen
}

pub fn node_ids(g: &EntityGraph, cg: &ComputationGraph) -> BTreeSet<(String, i64)> {
    cg.nodes
        .iter()
        .map(|n| (g.schema().table_name(n.node.table as usize).to_string(), g.key(n.node)))
        .collect()
}

pub fn node_of(g: &EntityGraph, table: &str, key: i64) -> NodeRef {
    let t = g.schema().table_id(table).unwrap();
    NodeRef::new(t, g.key_index(t)[&key])
}

/// Label of `entity` at `t` by scanning every fact row.
pub fn scan_label(db: &Database, spec: &TaskSpec, entity: i64, t: Timestamp) -> f64 {
    let fact = db.table(spec.label.fact_table()).unwrap();
    let fk = fact.fk_slot(spec.label.fk()).unwrap();
    let mut count = 0usize;
    let mut sum = 0.0;
    for r in fact.rows() {
        if r.fkeys[fk] == Some(entity) && r.time > t && r.time <= t + spec.window {
            count += 1;
            if let LabelRule::SumAttribute { attribute, .. } = &spec.label {
                sum += r.attrs[fact.attr_slot(attribute).unwrap()].as_f64().unwrap_or(0.0);
            }
        }
    }
    match spec.label {
        LabelRule::CountEvents { .. } => count as f64,
        LabelRule::SumAttribute { .. } => sum,
        LabelRule::ExistsEvent { .. } => (count > 0) as u8 as f64,
        LabelRule::NegatedExists { .. } => (count == 0) as u8 as f64,
    }
}

/// Whether `entity` passes the task's filter at `t`, by a full scan.
pub fn scan_filter(db: &Database, spec: &TaskSpec, entity: i64, t: Timestamp) -> bool {
    match spec.filter {
        EntityFilter::None => true,
        EntityFilter::ActiveWithin { lookback } => {
            let fact = db.table(spec.label.fact_table()).unwrap();
            let fk = fact.fk_slot(spec.label.fk()).unwrap();
            fact.rows()
                .iter()
                .any(|r| r.fkeys[fk] == Some(entity) && r.time >= t - lookback && r.time <= t)
        }
    }
}

/// Average precision from its definition: for each positive, the
/// precision among items ranked at or above it. Ties rank by input order.
pub fn naive_ap(scores: &[f64], labels: &[f64]) -> f64 {
    let n = scores.len();
    let above = |i: usize, j: usize| scores[j] > scores[i] || (scores[j] == scores[i] && j <= i);
    let mut total = 0.0;
    let mut positives = 0;
    for i in 0..n {
        if labels[i] != 1.0 {
            continue;
        }
        positives += 1;
        let ranked: Vec<usize> = (0..n).filter(|&j| above(i, j)).collect();
        let hits = ranked.iter().filter(|&&j| labels[j] == 1.0).count();
        total += hits as f64 / ranked.len() as f64;
    }
    total / positives as f64
}

pub fn naive_mae(preds: &[f64], targets: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..preds.len() {
        s += (preds[i] - targets[i]).abs();
    }
    s / preds.len() as f64
}

/// Max relative error between the analytic gradient of the head output
/// and central differences, over every parameter.
pub fn max_gradient_error(model: &mut HeteroGnn, parts: &[(ComputationGraph, Vec<NodeInput>)], h: f64) -> f64 {
    let score = |m: &HeteroGnn| {
        let p: Vec<(&ComputationGraph, Vec<NodeInput>)> = parts.iter().map(|(c, x)| (c, x.clone())).collect();
        m.score(p).unwrap()
    };
    let (_, traces) = score(model);
    let mut grads = vec![0.0; model.num_params()];
    model.score_backward(&traces, 1.0, &mut grads).unwrap();
    let mut worst: f64 = 0.0;
    for (i, &analytic) in grads.iter().enumerate() {
        let keep = model.params.values[i];
        model.params.values[i] = keep + h;
        let up = score(model).0;
        model.params.values[i] = keep - h;
        let down = score(model).0;
        model.params.values[i] = keep;
        let numeric = (up - down) / (2.0 * h);
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(err);
    }
    worst
}

/// Model over `db` with the given head, built only through public setup.
pub fn model_for(
    db: &Database,
    graph: &EntityGraph,
    cfg: &relgraph::ModelConfig,
    head: HeadKind,
    entity: &str,
    seed: u64,
) -> (HeteroGnn, EncoderState) {
    let enc = relgraph::fit_encoders(db, db.max_time().unwrap(), &cfg.encoder_options()).unwrap();
    let shape = ModelShape::new(graph.schema(), &enc, cfg, head, entity).unwrap();
    (HeteroGnn::new(shape, &enc, seed).unwrap(), enc)
}
