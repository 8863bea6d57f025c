//! Generates the synthetic shop, writes it as CSV plus a manifest, reloads
//! it and prints the integrity report.
//!
//! ```text
//! cargo run --example synth_and_validate -- [out_dir]
//! ```

use relgraph::store::{load_database, validate};
use relgraph::{generate, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/synth_shop".into());
    let synth = generate(&SynthConfig::default())?;
    let manifest = synth.write(out.as_ref())?;
    for t in &manifest.tables {
        println!("{:<13} -> {}/{}", t.name, out, t.file);
    }

    let dir = std::path::Path::new(&out);
    let db = load_database(&dir.join("manifest.json"), dir)?;
    let report = validate(&db);
    println!("violations: {}", report.violation_count());
    for (table, rates) in &report.null_rates {
        for (column, rate) in rates {
            println!("  null rate {table}.{column} = {rate:.3}");
        }
    }
    Ok(())
}
