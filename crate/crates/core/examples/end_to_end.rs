//! Drives the command-line pipeline from code: synthetic data, graph,
//! training tables, model, predictions and reports, all under one
//! output directory.
//!
//! ```text
//! cargo run --release --example end_to_end -- [out_dir]
//! ```

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/e2e".into());
    let root = env!("CARGO_MANIFEST_DIR");
    let code = relgraph::cli::run([
        "relgraph".to_string(),
        "e2e".into(),
        "--synth-config".into(),
        format!("{root}/../../configs/synth_large.json"),
        "--task".into(),
        format!("{root}/../../configs/churn.json"),
        "--out".into(),
        out.clone(),
    ]);
    if code == 0 {
        println!("outputs in {out}");
    }
    std::process::exit(code);
}
