//! Prints the schema graph of the synthetic shop in Graphviz format.
//! Every foreign key shows up twice, once per direction.
//!
//! ```text
//! cargo run --example schema_dot | dot -Tsvg > schema.svg
//! ```

use relgraph::{build_schema_graph, generate, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let synth = generate(&SynthConfig {
        n_customers: 10,
        n_products: 5,
        n_transactions: 50,
        ..Default::default()
    })?;
    let schema = build_schema_graph(&synth.db);
    for e in schema.edge_types() {
        eprintln!("{:>2} {}", e.id, schema.edge_label(e.id));
    }
    print!("{}", schema.to_dot());
    Ok(())
}
