//! Property tests over randomly generated databases and inputs.

mod common;

use proptest::prelude::*;

use relgraph::gnn::{gather_inputs, Aggregator, HeadKind};
use relgraph::rng::stream_rng;
use relgraph::store::{load_database, write_database, Value};
use relgraph::time::SENTINEL_STATIC;
use relgraph::{
    average_precision, build_entity_graph, build_schema_graph, fit_encoders, generate, mae, sample, sample_batch,
    validate, Database, EncoderOptions, ModelConfig, NodeRef, SamplerConfig, Strategy as Pick, SynthConfig, Table, Timestamp,
};

use common::*;

fn small_db(customers: usize, products: usize, transactions: usize, seed: u64) -> Database {
    generate(&SynthConfig {
        n_customers: customers,
        n_products: products,
        n_transactions: transactions,
        seed,
        ..Default::default()
    })
    .unwrap()
    .db
}

fn db_strategy() -> impl Strategy<Value = Database> {
    (1usize..25, 1usize..8, 1usize..300, any::<u64>()).prop_map(|(c, p, t, s)| small_db(c, p, t, s))
}

fn strategy_of(i: u8) -> Pick {
    match i % 3 {
        0 => Pick::Uniform,
        1 => Pick::Ordered,
        _ => Pick::Biased { half_life: 86_400.0 * 10.0 },
    }
}

/// A time between the first and last event, from a unit fraction.
fn time_at(db: &Database, frac: f64) -> Timestamp {
    let (lo, hi) = (db.min_time().unwrap(), db.max_time().unwrap());
    lo + ((hi - lo) as f64 * frac) as Timestamp
}

/// Drops every row newer than `t`, the strongest edit of the future.
fn drop_future(db: &Database, t: Timestamp) -> Database {
    let tables = db
        .clone()
        .into_tables()
        .into_iter()
        .map(|table| {
            let (name, cols, rows) = table.into_parts();
            let rows = rows
                .into_iter()
                .filter(|r| r.time == SENTINEL_STATIC || r.time <= t)
                .collect();
            Table::new(&name, cols, rows).unwrap()
        })
        .collect();
    Database::new(tables).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn edges_pair_with_inverses_and_stay_time_sorted(db in db_strategy()) {
        let g = build_entity_graph(&db, &build_schema_graph(&db));
        let s = g.schema();
        let non_null: usize = db
            .tables()
            .map(|t| t.rows().iter().map(|r| r.fkeys.iter().flatten().count()).sum::<usize>())
            .sum();
        prop_assert_eq!(g.num_edges(), 2 * non_null);
        for e in s.edge_types() {
            let inv = s.inverse_of(e.id);
            prop_assert_eq!(s.edge_type(inv).src, e.dst);
            prop_assert_eq!(s.edge_type(inv).dst, e.src);
            for v in 0..g.table_len(e.dst) as u32 {
                let dst = NodeRef::new(e.dst, v);
                let nb = g.neighbors(dst, e.id).unwrap();
                prop_assert!(nb.times.windows(2).all(|w| w[0] <= w[1]));
                for &w in nb.ids {
                    let back = g.neighbors(NodeRef::new(e.src, w), inv).unwrap();
                    prop_assert!(back.ids.contains(&v));
                }
                // binary-searched prefix equals linear filtering
                let t = nb.times.get(nb.len() / 2).copied().unwrap_or(0);
                let cut = g.neighbors_before(dst, e.id, t).unwrap();
                let linear = nb.times.iter().filter(|&&x| x == SENTINEL_STATIC || x <= t).count();
                prop_assert_eq!(cut.len(), linear);
            }
        }
    }

    #[test]
    fn csv_round_trip_and_clean_validation(db in db_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        write_database(&db, dir.path()).unwrap();
        let back = load_database(&dir.path().join("manifest.json"), dir.path()).unwrap();
        prop_assert_eq!(&back, &db);
        prop_assert_eq!(validate(&db).violation_count(), 0);
        for t in db.tables() {
            for (slot, (_, target)) in t.foreign_key_specs().enumerate() {
                let dst = db.table(target).unwrap();
                for r in t.rows() {
                    if let Some(k) = r.fkeys[slot] {
                        prop_assert!(dst.rows().iter().any(|x| x.key == k));
                    }
                }
            }
        }
    }

    #[test]
    fn samples_ignore_the_future(db in db_strategy(), frac in 0.0f64..1.0, pick in any::<u32>(), st in any::<u8>(), seed in any::<u64>()) {
        let t = time_at(&db, frac);
        let g = build_entity_graph(&db, &build_schema_graph(&db));
        let customers = g.schema().table_id("customers").unwrap();
        let v = NodeRef::new(customers, pick % g.table_len(customers) as u32);
        let cfg = SamplerConfig::new(vec![3, 2], strategy_of(st), seed);
        let cg = sample(&g, v, t, &cfg);
        let visible = |n: &relgraph::sampler::CgNode| g.time(n.node) == SENTINEL_STATIC || g.time(n.node) <= t;
        prop_assert!(cg.nodes.iter().all(visible));
        prop_assert!(cg.len() <= cfg.node_bound(g.schema().edge_types().len()));
        let pruned = drop_future(&db, t);
        let g2 = build_entity_graph(&pruned, &build_schema_graph(&pruned));
        prop_assert_eq!(sample(&g2, v, t, &cfg), cg);
    }

    #[test]
    fn batch_equals_sequential_loop(db in db_strategy(), frac in 0.0f64..1.0, seed in any::<u64>()) {
        let t = time_at(&db, frac);
        let g = build_entity_graph(&db, &build_schema_graph(&db));
        let customers = g.schema().table_id("customers").unwrap();
        let examples: Vec<_> = (0..g.table_len(customers) as u32).map(|i| (NodeRef::new(customers, i), t)).collect();
        let cfg = SamplerConfig::new(vec![2, 2], Pick::Uniform, seed);
        let batch = sample_batch(&g, &examples, &cfg);
        for (i, &(v, t)) in examples.iter().enumerate() {
            let one = relgraph::sampler::sample_with_rng(&g, v, t, &cfg, &mut stream_rng(seed, i as u64));
            prop_assert_eq!(&batch[i], &one);
        }
    }

    #[test]
    fn strategies_agree_when_fanout_covers_history(db in db_strategy(), frac in 0.0f64..1.0, pick in any::<u32>()) {
        let t = time_at(&db, frac);
        let g = build_entity_graph(&db, &build_schema_graph(&db));
        let customers = g.schema().table_id("customers").unwrap();
        let v = NodeRef::new(customers, pick % g.table_len(customers) as u32);
        let m = g.max_degree().max(1);
        let sets: Vec<_> = (0..3)
            .map(|i| node_ids(&g, &sample(&g, v, t, &SamplerConfig::new(vec![m, m], strategy_of(i), 9))))
            .collect();
        prop_assert_eq!(&sets[0], &sets[1]);
        prop_assert_eq!(&sets[0], &sets[2]);
    }

    #[test]
    fn encoder_statistics_ignore_rows_after_cutoff(db in db_strategy(), frac in 0.0f64..1.0) {
        let t = time_at(&db, frac);
        let opts = EncoderOptions::default();
        let full = fit_encoders(&db, t, &opts).unwrap();
        let pruned = fit_encoders(&drop_future(&db, t), t, &opts).unwrap();
        prop_assert_eq!(full, pruned);
    }

    #[test]
    fn predictions_ignore_the_future(db in db_strategy(), frac in 0.0f64..1.0, pick in any::<u32>(), agg in 0u8..3) {
        let t = time_at(&db, frac);
        let cfg = ModelConfig {
            hidden_dim: 6,
            embed_dim: 6,
            text_dim: 8,
            aggregator: [Aggregator::Mean, Aggregator::Sum, Aggregator::Max][agg as usize],
            sampler: SamplerConfig::new(vec![4, 4], Pick::Uniform, 5),
            ..Default::default()
        };
        let score = |db: &Database| {
            let g = build_entity_graph(db, &build_schema_graph(db));
            let enc = fit_encoders(db, t, &cfg.encoder_options()).unwrap();
            let shape = relgraph::gnn::ModelShape::new(g.schema(), &enc, &cfg, HeadKind::NodeRegression, "customers").unwrap();
            let model = relgraph::HeteroGnn::new(shape, &enc, 1).unwrap();
            let customers = g.schema().table_id("customers").unwrap();
            let cg = sample(&g, NodeRef::new(customers, pick % g.table_len(customers) as u32), t, &cfg.sampler);
            let x = gather_inputs(&g, &enc.raw_matrix(db).unwrap(), &cg);
            model.score(vec![(&cg, x)]).unwrap().0
        };
        prop_assert_eq!(score(&db).to_bits(), score(&drop_future(&db, t)).to_bits());
    }

    #[test]
    fn aggregation_ignores_edge_order(db in db_strategy(), frac in 0.5f64..1.0, pick in any::<u32>(), agg in 0u8..3, shuffle in any::<u64>()) {
        let t = time_at(&db, frac);
        let g = build_entity_graph(&db, &build_schema_graph(&db));
        let cfg = ModelConfig {
            hidden_dim: 5,
            embed_dim: 5,
            text_dim: 4,
            aggregator: [Aggregator::Mean, Aggregator::Sum, Aggregator::Max][agg as usize],
            sampler: SamplerConfig::new(vec![5, 5], Pick::Uniform, 2),
            ..Default::default()
        };
        let (model, enc) = model_for(&db, &g, &cfg, HeadKind::NodeBinary, "customers", 4);
        let customers = g.schema().table_id("customers").unwrap();
        let cg = sample(&g, NodeRef::new(customers, pick % g.table_len(customers) as u32), t, &cfg.sampler);
        let x = gather_inputs(&g, &enc.raw_matrix(&db).unwrap(), &cg);
        let mut permuted = cg.clone();
        let mut rng = stream_rng(shuffle, 0);
        rand::seq::SliceRandom::shuffle(permuted.edges.as_mut_slice(), &mut rng);
        let a = model.score(vec![(&cg, x.clone())]).unwrap().0;
        let b = model.score(vec![(&permuted, x)]).unwrap().0;
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn ap_is_invariant_to_increasing_transforms(raw in prop::collection::vec((0i64..50, any::<bool>()), 1..80)) {
        prop_assume!(raw.iter().any(|&(_, y)| y));
        let labels: Vec<f64> = raw.iter().map(|&(_, y)| y as u8 as f64).collect();
        let scores: Vec<f64> = raw.iter().map(|&(s, _)| s as f64).collect();
        // exact in f64 for these magnitudes, so ties survive the transform
        let cubed: Vec<f64> = raw.iter().map(|&(s, _)| (s * s * s + 7 * s - 3) as f64).collect();
        let a = average_precision(&scores, &labels).unwrap();
        prop_assert_eq!(a, average_precision(&cubed, &labels).unwrap());
        prop_assert!((a - naive_ap(&scores, &labels)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn mae_is_translation_equivariant(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..80), c in -1e3f64..1e3) {
        let (p, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let base = mae(&p, &y).unwrap();
        let p2: Vec<f64> = p.iter().map(|x| x + c).collect();
        let y2: Vec<f64> = y.iter().map(|x| x + c).collect();
        prop_assert!((mae(&p2, &y2).unwrap() - base).abs() <= 1e-9 * (1.0 + base));
        prop_assert!((base - naive_mae(&p, &y)).abs() < 1e-12);
    }
}

#[test]
fn missing_numeric_cells_survive_round_trip() {
    let db = toy_shop();
    let dir = tempfile::tempdir().unwrap();
    write_database(&db, dir.path()).unwrap();
    let back = load_database(&dir.path().join("manifest.json"), dir.path()).unwrap();
    let products = back.table("products").unwrap();
    assert_eq!(products.rows()[2].attrs[1], Value::Missing);
    assert_eq!(back, db);
}
