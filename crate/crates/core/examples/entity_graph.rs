//! Builds the row-level graph, prints degree statistics and shows the
//! time-sorted neighborhood of one customer before a cutoff.

use std::time::Instant;

use relgraph::time::format_timestamp;
use relgraph::{build_entity_graph, build_schema_graph, generate, NodeRef, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let synth = generate(&SynthConfig::default())?;
    let db = &synth.db;
    let started = Instant::now();
    let schema = build_schema_graph(db);
    let graph = build_entity_graph(db, &schema);
    println!(
        "{} nodes, {} edges in {:.1?}",
        graph.num_nodes(),
        graph.num_edges(),
        started.elapsed()
    );

    for e in schema.edge_types() {
        let hist = graph.degree_histogram(e.id)?;
        let max = hist.keys().next_back().copied().unwrap_or(0);
        println!("{:<40} max in-degree {max}", schema.edge_label(e.id));
    }

    let customers = schema.table_id("customers").expect("synthetic schema");
    let edge = schema
        .edge_by_label("transactions-customer_id->customers")
        .expect("synthetic schema");
    let v = NodeRef::new(customers, 0);
    let cutoff = db.max_time().unwrap_or_default();
    let nb = graph.neighbors_before(v, edge, cutoff)?;
    println!("customer {} has {} purchases; latest five:", graph.key(v), nb.len());
    for t in nb.times.iter().rev().take(5) {
        println!("  {}", format_timestamp(*t));
    }
    Ok(())
}
