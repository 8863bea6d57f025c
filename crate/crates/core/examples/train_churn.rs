//! Trains the two-layer model on synthetic churn and reports validation AP
//! next to the label prevalence.
//!
//! ```text
//! cargo run --release --example train_churn -- [signal_strength] [seed]
//! ```

use std::time::Instant;

use relgraph::gnn::{fit_model, predict};
use relgraph::metrics::evaluate;
use relgraph::synth::churn_task;
use relgraph::{build_entity_graph, build_schema_graph, generate, generate_training_table, ModelConfig, SplitConfig, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let signal: f64 = args.first().map_or(Ok(1.0), |s| s.parse())?;
    let seed: u64 = args.get(1).map_or(Ok(0), |s| s.parse())?;
    let started = Instant::now();

    let synth = generate(&SynthConfig {
        n_customers: 3000,
        n_products: 600,
        n_transactions: 60_000,
        signal_strength: signal,
        seed,
        ..Default::default()
    })?;
    let db = &synth.db;
    let graph = build_entity_graph(db, &build_schema_graph(db));

    let task = churn_task(30);
    let split = SplitConfig::latest(db.max_time().unwrap_or_default(), task.window, 3);
    let tables = generate_training_table(db, &task, &split)?;
    println!(
        "train {} / val {} / test {} examples",
        tables.train.len(),
        tables.val.len(),
        tables.test.len()
    );

    let mut cfg = ModelConfig::default();
    cfg.optimizer.seed = seed;
    cfg.sampler.seed = seed;
    let (outcome, encoders) = fit_model(db, &graph, &task, &tables.train, split.t_val, &cfg)?;
    let features = encoders.raw_matrix(db)?;
    let preds = predict(&outcome.model, &cfg, &graph, &features, &tables.val)?;
    let report = evaluate(&task, &tables.val, &preds)?;

    let labels = tables.val.labels();
    let prevalence = labels.iter().sum::<f64>() / labels.len() as f64;
    let first = outcome.losses.first().copied().unwrap_or_default();
    let last = outcome.losses.last().copied().unwrap_or_default();
    println!("loss {first:.4} -> {last:.4}");
    println!("val AP {:.4}, prevalence {prevalence:.4} ({:.1?})", report.value, started.elapsed());
    Ok(())
}
