//! Scores a small prediction set with both metrics and round-trips it
//! through the prediction file format.

use relgraph::metrics::{read_predictions, write_predictions, Prediction};
use relgraph::{average_precision, mae};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scores = [0.9, 0.8, 0.7, 0.6];
    let labels = [1.0, 0.0, 1.0, 0.0];
    // ranks 1 and 3 are hits: (1/1 + 2/3) / 2
    println!("AP  = {:.6}", average_precision(&scores, &labels)?);
    println!("MAE = {:.6}", mae(&[1.0, 2.0, 4.0], &[1.5, 2.0, 3.0])?);

    let preds: Vec<Prediction> = scores
        .iter()
        .enumerate()
        .map(|(i, &s)| Prediction::node(i as i64 + 1, 1_700_000_000, s))
        .collect();
    let path = std::env::temp_dir().join("relgraph_predictions.csv");
    write_predictions(&preds, &path)?;
    let back = read_predictions(&path)?;
    assert_eq!(back, preds);
    println!("{}", std::fs::read_to_string(&path)?);
    Ok(())
}
