//! Evaluation metrics and prediction files.
//!
//! Average precision ranks by descending score with a stable sort, so tied
//! scores keep their input order.

use std::collections::HashMap;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::task::{Metric, TaskSpec, TrainingTable};
use crate::time::Timestamp;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {0} predictions vs {1} targets")]
    LengthMismatch(usize, usize),
    #[error("no examples")]
    Empty,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("labels must be 0 or 1, got {0}")]
    NotBinary(f64),
    #[error("average precision needs at least one positive label")]
    NoPositives,
    #[error("prediction rows do not align with the truth table: {0}")]
    Misaligned(String),
    #[error("prediction file {path}: {message}")]
    File { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub task: String,
    pub metric: String,
    pub value: f64,
    pub n: usize,
}

impl EvalReport {
    /// Single-line JSON `{"task","metric","value","n"}`.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

fn check_inputs(preds: &[f64], targets: &[f64]) -> Result<(), MetricError> {
    if preds.len() != targets.len() {
        return Err(MetricError::LengthMismatch(preds.len(), targets.len()));
    }
    if preds.is_empty() {
        return Err(MetricError::Empty);
    }
    if let Some(i) = preds.iter().chain(targets).position(|x| !x.is_finite()) {
        return Err(MetricError::NonFinite(i % preds.len()));
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(preds: &[f64], targets: &[f64]) -> Result<f64, MetricError> {
    check_inputs(preds, targets)?;
    let total: f64 = preds.iter().zip(targets).map(|(p, y)| (p - y).abs()).sum();
    Ok(total / preds.len() as f64)
}

/// Average precision: mean of precision@k over the ranks k of the positives.
pub fn average_precision(scores: &[f64], labels: &[f64]) -> Result<f64, MetricError> {
    check_inputs(scores, labels)?;
    if let Some(&bad) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(MetricError::NotBinary(bad));
    }
    let positives = labels.iter().filter(|&&y| y == 1.0).count();
    if positives == 0 {
        return Err(MetricError::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] == 1.0 {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

/// One row of a prediction file.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub entity: i64,
    /// Second endpoint for link-level tables.
    pub target: Option<i64>,
    pub time: Timestamp,
    pub value: f64,
}

impl Prediction {
    pub fn node(entity: i64, time: Timestamp, value: f64) -> Self {
        Prediction {
            entity,
            target: None,
            time,
            value,
        }
    }
}

/// Writes `EntityID,Time,Prediction`, or
/// `SourceEntityID,TargetEntityID,Time,Prediction` when any row has a target.
pub fn write_predictions(preds: &[Prediction], path: &Path) -> Result<(), MetricError> {
    let err = |message: String| MetricError::File {
        path: path.display().to_string(),
        message,
    };
    let link = preds.iter().any(|p| p.target.is_some());
    let mut w = csv::Writer::from_path(path).map_err(|e| err(e.to_string()))?;
    if link {
        w.write_record(["SourceEntityID", "TargetEntityID", "Time", "Prediction"])
    } else {
        w.write_record(["EntityID", "Time", "Prediction"])
    }
    .map_err(|e| err(e.to_string()))?;
    for p in preds {
        let mut rec = vec![p.entity.to_string()];
        if link {
            rec.push(p.target.map_or(String::new(), |t| t.to_string()));
        }
        rec.push(p.time.to_string());
        rec.push(p.value.to_string());
        w.write_record(&rec).map_err(|e| err(e.to_string()))?;
    }
    w.flush().map_err(|e| err(e.to_string()))
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>, MetricError> {
    let err = |message: String| MetricError::File {
        path: path.display().to_string(),
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    let header: Vec<String> = r.headers().map_err(|e| err(e.to_string()))?.iter().map(str::to_string).collect();
    let link = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["EntityID", "Time", "Prediction"] => false,
        ["SourceEntityID", "TargetEntityID", "Time", "Prediction"] => true,
        _ => return Err(err(format!("unexpected header {header:?}"))),
    };
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(|e| err(e.to_string()))?;
            let bad = |what: &str| err(format!("line {}: bad {what}", i + 2));
            let cell = |j: usize| rec.get(j).unwrap_or("");
            let off = link as usize;
            Ok(Prediction {
                entity: cell(0).parse().map_err(|_| bad("entity id"))?,
                target: if link {
                    Some(cell(1).parse().map_err(|_| bad("TargetEntityID"))?)
                } else {
                    None
                },
                time: cell(1 + off).parse().map_err(|_| bad("Time"))?,
                value: cell(2 + off).parse().map_err(|_| bad("Prediction"))?,
            })
        })
        .collect()
}

type RowKey = (i64, Option<i64>, Timestamp);

/// Aligns predictions to the truth table on `(EntityID, Time)` (plus the
/// target id for link tables). Missing, extra and duplicated rows are
/// errors.
pub fn align(truth: &TrainingTable, preds: &[Prediction]) -> Result<Vec<f64>, MetricError> {
    let mut by_key: HashMap<RowKey, f64> = HashMap::with_capacity(preds.len());
    let mut duplicated = Vec::new();
    for p in preds {
        if by_key.insert((p.entity, p.target, p.time), p.value).is_some() {
            duplicated.push((p.entity, p.target, p.time));
        }
    }
    let mut missing = Vec::new();
    let mut aligned = Vec::with_capacity(truth.len());
    for e in &truth.examples {
        match by_key.remove(&(e.entity, e.target, e.time)) {
            Some(v) => aligned.push(v),
            None => missing.push((e.entity, e.target, e.time)),
        }
    }
    let mut extra: Vec<_> = by_key.into_keys().collect();
    extra.sort_unstable();
    if missing.is_empty() && extra.is_empty() && duplicated.is_empty() {
        return Ok(aligned);
    }
    let show = |v: &[RowKey]| {
        let head: Vec<String> = v
            .iter()
            .take(10)
            .map(|(k, d, t)| match d {
                Some(d) => format!("({k},{d},{t})"),
                None => format!("({k},{t})"),
            })
            .collect();
        format!("{}{}", head.join(" "), if v.len() > 10 { " ..." } else { "" })
    };
    let mut parts = Vec::new();
    if !missing.is_empty() {
        parts.push(format!("{} missing: {}", missing.len(), show(&missing)));
    }
    if !extra.is_empty() {
        parts.push(format!("{} extra: {}", extra.len(), show(&extra)));
    }
    if !duplicated.is_empty() {
        parts.push(format!("{} duplicated: {}", duplicated.len(), show(&duplicated)));
    }
    Err(MetricError::Misaligned(parts.join("; ")))
}

/// Scores predictions against a truth table with the task's metric.
pub fn evaluate(task: &TaskSpec, truth: &TrainingTable, preds: &[Prediction]) -> Result<EvalReport, MetricError> {
    let scores = align(truth, preds)?;
    let labels = truth.labels();
    let value = match task.metric {
        Metric::Mae => mae(&scores, &labels)?,
        Metric::Ap => average_precision(&scores, &labels)?,
    };
    Ok(EvalReport {
        task: task.name.clone(),
        metric: task.metric.name().to_string(),
        value,
        n: labels.len(),
    })
}

pub fn evaluate_file(task: &TaskSpec, truth: &TrainingTable, pred_file: &Path) -> Result<EvalReport, MetricError> {
    evaluate(task, truth, &read_predictions(pred_file)?)
}
