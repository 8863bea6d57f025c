//! Fits column encoders on data up to a cutoff and prints the raw feature
//! vector of one row per table.

use relgraph::encoder::ColumnEncoder;
use relgraph::{fit_encoders, generate, EncoderOptions, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let synth = generate(&SynthConfig::default())?;
    let db = &synth.db;
    let cutoff = db.max_time().unwrap_or_default();
    let encoders = fit_encoders(db, cutoff, &EncoderOptions::default())?;

    for table in db.tables() {
        let enc = encoders.table(table.name())?;
        println!("{} (raw width {}):", table.name(), enc.raw_dim());
        for col in &enc.columns {
            let kind = match col {
                ColumnEncoder::Numerical { mean, std, .. } => format!("numerical mean {mean:.2} std {std:.2}"),
                ColumnEncoder::Categorical { vocab, .. } => format!("categorical, {} values", vocab.len()),
                ColumnEncoder::Text { dim, .. } => format!("hashed text, {dim} buckets"),
            };
            println!("  {:<12} {kind}", col.name());
        }
        let row = &table.rows()[0];
        let raw = encoders.raw_features(table.name(), row)?;
        let shown: Vec<String> = raw.iter().take(8).map(|v| format!("{v:.3}")).collect();
        println!("  row {}: [{} ...]", row.key, shown.join(", "));
    }
    Ok(())
}
