//! Samples computation graphs with each neighbor strategy and checks that
//! no sampled node is newer than the seed time.

use relgraph::time::{SECONDS_PER_DAY, SENTINEL_STATIC};
use relgraph::{build_entity_graph, build_schema_graph, generate, sample, NodeRef, SamplerConfig, Strategy, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let synth = generate(&SynthConfig::default())?;
    let db = &synth.db;
    let graph = build_entity_graph(db, &build_schema_graph(db));
    let customers = graph.schema().table_id("customers").expect("synthetic schema");
    let t = db.max_time().unwrap_or_default() - 60 * SECONDS_PER_DAY;

    let strategies = [
        Strategy::Uniform,
        Strategy::Ordered,
        Strategy::Biased {
            half_life: 14.0 * SECONDS_PER_DAY as f64,
        },
    ];
    for strategy in strategies {
        let cfg = SamplerConfig::new(vec![3, 3], strategy, 7);
        let mut nodes = 0;
        for local in 0..100 {
            let cg = sample(&graph, NodeRef::new(customers, local), t, &cfg);
            let newest = cg
                .nodes
                .iter()
                .map(|n| graph.time(n.node))
                .filter(|&ts| ts != SENTINEL_STATIC)
                .max();
            assert!(newest.is_none_or(|ts| ts <= t));
            nodes += cg.len();
        }
        println!("{strategy:?}: {:.1} nodes per graph", nodes as f64 / 100.0);
    }
    Ok(())
}
