//! Reference checks beyond the acceptance suite: every head and
//! aggregator against finite differences, and entity selection against a
//! full scan.

mod common;

use std::collections::BTreeSet;

use relgraph::gnn::{gather_inputs, Aggregator, HeadKind};
use relgraph::synth::{churn_task, ltv_task};
use relgraph::task::apply_entity_filter;
use relgraph::{
    build_entity_graph, build_schema_graph, generate, generate_training_table, sample, ModelConfig, SamplerConfig,
    SplitConfig, Strategy, SynthConfig,
};

use common::*;

fn small_cfg(agg: Aggregator, layers: usize) -> ModelConfig {
    ModelConfig {
        layers,
        hidden_dim: 3,
        embed_dim: 4,
        text_dim: 4,
        aggregator: agg,
        target_table: Some("products".into()),
        sampler: SamplerConfig::new(vec![8; layers], Strategy::Uniform, 0),
        ..Default::default()
    }
}

#[test]
fn node_heads_match_finite_differences() {
    let db = toy_shop();
    let g = build_entity_graph(&db, &build_schema_graph(&db));
    for agg in [Aggregator::Mean, Aggregator::Sum, Aggregator::Max] {
        for head in [HeadKind::NodeBinary, HeadKind::NodeRegression] {
            for layers in 1..=3 {
                let cfg = small_cfg(agg, layers);
                let (mut model, enc) = model_for(&db, &g, &cfg, head, "customers", 11);
                let feats = enc.raw_matrix(&db).unwrap();
                let cg = sample(&g, node_of(&g, "customers", 2), 90, &cfg.sampler);
                let x = gather_inputs(&g, &feats, &cg);
                let err = max_gradient_error(&mut model, &[(cg, x)], 1e-5);
                assert!(err < 1e-4, "{agg:?} {head:?} L={layers}: {err:.3e}");
            }
        }
    }
}

#[test]
fn link_head_matches_finite_differences() {
    let db = toy_shop();
    let g = build_entity_graph(&db, &build_schema_graph(&db));
    let cfg = small_cfg(Aggregator::Mean, 2);
    let (mut model, enc) = model_for(&db, &g, &cfg, HeadKind::LinkScore, "customers", 5);
    let feats = enc.raw_matrix(&db).unwrap();
    let parts: Vec<_> = [("customers", 1), ("products", 11)]
        .iter()
        .map(|&(table, key)| {
            let cg = sample(&g, node_of(&g, table, key), 60, &cfg.sampler);
            let x = gather_inputs(&g, &feats, &cg);
            (cg, x)
        })
        .collect();
    let err = max_gradient_error(&mut model, &parts, 1e-5);
    assert!(err < 1e-4, "{err:.3e}");
}

#[test]
fn selected_entities_equal_the_scan() {
    let db = generate(&SynthConfig {
        n_customers: 300,
        n_products: 40,
        n_transactions: 6000,
        ..Default::default()
    })
    .unwrap()
    .db;
    for spec in [churn_task(30), ltv_task(14)] {
        let split = SplitConfig::latest(db.max_time().unwrap(), spec.window, 4);
        let tables = generate_training_table(&db, &spec, &split).unwrap();
        let times: BTreeSet<_> = tables.train.examples.iter().map(|e| e.time).collect();
        assert_eq!(times.len(), 4);
        for t in times.into_iter().chain([split.t_val, split.t_test]) {
            let want: BTreeSet<i64> = db
                .table("customers")
                .unwrap()
                .rows()
                .iter()
                .map(|r| r.key)
                .filter(|&k| scan_filter(&db, &spec, k, t))
                .collect();
            assert_eq!(apply_entity_filter(&db, &spec, t).unwrap(), want);
            let all = [&tables.train, &tables.val, &tables.test];
            let got: BTreeSet<i64> = all
                .iter()
                .flat_map(|tt| tt.examples.iter())
                .filter(|e| e.time == t)
                .map(|e| e.entity)
                .collect();
            assert_eq!(got, want, "{} at {t}", spec.name);
        }
    }
}

#[test]
fn worked_examples() {
    let db = toy_shop();
    // customer 1 bought at 10, 20, 40: window (20, 50] holds one purchase
    assert_eq!(scan_label(&db, &churn_task(0), 1, 20), 1.0);
    let mut spec = ltv_task(0);
    spec.window = 30;
    assert_eq!(scan_label(&db, &spec, 1, 20), 12.0);
    assert_eq!(scan_label(&db, &spec, 1, 40), 0.0);
    assert!((naive_ap(&[0.9, 0.8, 0.7], &[1.0, 0.0, 1.0]) - 5.0 / 6.0).abs() < 1e-15);
    // the BFS oracle sees a null product as no edge
    let reach = bfs_oracle(&db, "customers", 4, 100, 2);
    assert_eq!(reach, BTreeSet::from([("customers".into(), 4), ("transactions".into(), 106)]));
}
