//! Builds churn and lifetime-value training tables with rolling training
//! timestamps and writes them as CSV.

use relgraph::synth::{churn_task, ltv_task};
use relgraph::task::write_table;
use relgraph::time::format_timestamp;
use relgraph::{generate, generate_training_table, SplitConfig, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let synth = generate(&SynthConfig::default())?;
    let db = &synth.db;
    let out = std::path::Path::new("target/tables");
    std::fs::create_dir_all(out)?;

    for task in [churn_task(30), ltv_task(30)] {
        let split = SplitConfig::latest(db.max_time().unwrap_or_default(), task.window, 4);
        println!(
            "{}: val at {}, test at {}",
            task.name,
            format_timestamp(split.t_val),
            format_timestamp(split.t_test)
        );
        let tables = generate_training_table(db, &task, &split)?;
        for t in [&tables.train, &tables.val, &tables.test] {
            let labels = t.labels();
            let mean = labels.iter().sum::<f64>() / labels.len().max(1) as f64;
            println!("  {:<5} {:>5} rows, mean label {mean:.3}", t.split.name(), t.len());
            write_table(t, &out.join(format!("{}_{}.csv", task.name, t.split.name())))?;
        }
        for w in &tables.warnings {
            println!("  warning: {w}");
        }
    }
    Ok(())
}
