use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TaskError;
use crate::time::{deserialize_time, Timestamp, SECONDS_PER_DAY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    BinaryClassification,
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "mae", alias = "MAE")]
    Mae,
    #[serde(rename = "ap", alias = "AP")]
    Ap,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Mae => "mae",
            Metric::Ap => "ap",
        }
    }
}

/// How a label is aggregated from the fact rows linked to an entity over
/// the window `(t, t + δ]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelRule {
    CountEvents { fact_table: String, fk: String },
    SumAttribute { fact_table: String, attribute: String, fk: String },
    ExistsEvent { fact_table: String, fk: String },
    /// 1 when the entity has no event in the window (churn).
    NegatedExists { fact_table: String, fk: String },
}

impl LabelRule {
    pub fn fact_table(&self) -> &str {
        match self {
            LabelRule::CountEvents { fact_table, .. }
            | LabelRule::SumAttribute { fact_table, .. }
            | LabelRule::ExistsEvent { fact_table, .. }
            | LabelRule::NegatedExists { fact_table, .. } => fact_table,
        }
    }

    pub fn fk(&self) -> &str {
        match self {
            LabelRule::CountEvents { fk, .. }
            | LabelRule::SumAttribute { fk, .. }
            | LabelRule::ExistsEvent { fk, .. }
            | LabelRule::NegatedExists { fk, .. } => fk,
        }
    }

    pub fn is_binary(&self) -> bool {
        matches!(self, LabelRule::ExistsEvent { .. } | LabelRule::NegatedExists { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntityFilter {
    None,
    /// Keep entities with at least one linked fact row in `[t - lookback, t]`.
    ActiveWithin { lookback: Timestamp },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSpec {
    pub name: String,
    pub entity_table: String,
    pub kind: TaskKind,
    /// Label window δ in seconds.
    pub window: Timestamp,
    pub label: LabelRule,
    pub filter: EntityFilter,
    pub metric: Metric,
}

impl TaskSpec {
    pub fn check(&self) -> Result<(), TaskError> {
        if self.window <= 0 {
            return Err(TaskError::Spec(format!("window must be positive, got {}", self.window)));
        }
        let consistent = matches!(
            (self.kind, self.metric),
            (TaskKind::BinaryClassification, Metric::Ap) | (TaskKind::Regression, Metric::Mae)
        );
        if !consistent {
            return Err(TaskError::Spec("AP pairs with binary classification, MAE with regression".into()));
        }
        if self.label.is_binary() != (self.kind == TaskKind::BinaryClassification) {
            return Err(TaskError::Spec(format!(
                "label rule does not produce {:?} labels",
                self.kind
            )));
        }
        if let EntityFilter::ActiveWithin { lookback } = self.filter {
            if lookback < 0 {
                return Err(TaskError::Spec("lookback must be non-negative".into()));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<TaskSpec, TaskError> {
        let raw: RawTaskSpec = serde_json::from_str(text).map_err(|e| TaskError::Spec(e.to_string()))?;
        let spec = raw.into_spec()?;
        spec.check()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<TaskSpec, TaskError> {
        let text = fs::read_to_string(path).map_err(|e| TaskError::Io(path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let (rule, fact_table, attribute, fk) = match &self.label {
            LabelRule::CountEvents { fact_table, fk } => ("count_events", fact_table, None, fk),
            LabelRule::SumAttribute { fact_table, attribute, fk } => {
                ("sum_attribute", fact_table, Some(attribute.clone()), fk)
            }
            LabelRule::ExistsEvent { fact_table, fk } => ("exists_event", fact_table, None, fk),
            LabelRule::NegatedExists { fact_table, fk } => ("negated_exists", fact_table, None, fk),
        };
        let filter = match self.filter {
            EntityFilter::None => RawFilter {
                rule: "none".into(),
                lookback_days: None,
            },
            EntityFilter::ActiveWithin { lookback } => RawFilter {
                rule: "active_within".into(),
                lookback_days: Some(lookback as f64 / SECONDS_PER_DAY as f64),
            },
        };
        let raw = RawTaskSpec {
            name: self.name.clone(),
            entity_table: self.entity_table.clone(),
            kind: self.kind,
            window_days: self.window as f64 / SECONDS_PER_DAY as f64,
            label: RawLabel {
                rule: rule.into(),
                fact_table: fact_table.clone(),
                attribute,
                fk: fk.clone(),
            },
            filter: Some(filter),
            metric: self.metric,
        };
        serde_json::to_string_pretty(&raw).expect("task spec serializes")
    }
}

#[derive(Serialize, Deserialize)]
struct RawTaskSpec {
    name: String,
    entity_table: String,
    kind: TaskKind,
    window_days: f64,
    label: RawLabel,
    #[serde(default)]
    filter: Option<RawFilter>,
    metric: Metric,
}

#[derive(Serialize, Deserialize)]
struct RawLabel {
    rule: String,
    fact_table: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    attribute: Option<String>,
    fk: String,
}

#[derive(Serialize, Deserialize)]
struct RawFilter {
    rule: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lookback_days: Option<f64>,
}

fn days(d: f64) -> Timestamp {
    (d * SECONDS_PER_DAY as f64).round() as Timestamp
}

impl RawTaskSpec {
    fn into_spec(self) -> Result<TaskSpec, TaskError> {
        let RawLabel {
            rule,
            fact_table,
            attribute,
            fk,
        } = self.label;
        let label = match rule.to_ascii_lowercase().as_str() {
            "count_events" => LabelRule::CountEvents { fact_table, fk },
            "sum_attribute" => LabelRule::SumAttribute {
                fact_table,
                attribute: attribute
                    .ok_or_else(|| TaskError::Spec("sum_attribute needs an attribute".into()))?,
                fk,
            },
            "exists_event" => LabelRule::ExistsEvent { fact_table, fk },
            "negated_exists" => LabelRule::NegatedExists { fact_table, fk },
            other => return Err(TaskError::Spec(format!("unknown label rule '{other}'"))),
        };
        let filter = match self.filter {
            None => EntityFilter::None,
            Some(f) => match f.rule.to_ascii_lowercase().as_str() {
                "none" => EntityFilter::None,
                "active_within" => EntityFilter::ActiveWithin {
                    lookback: days(
                        f.lookback_days
                            .ok_or_else(|| TaskError::Spec("active_within needs lookback_days".into()))?,
                    ),
                },
                other => return Err(TaskError::Spec(format!("unknown filter rule '{other}'"))),
            },
        };
        Ok(TaskSpec {
            name: self.name,
            entity_table: self.entity_table,
            kind: self.kind,
            window: days(self.window_days),
            label,
            filter,
            metric: self.metric,
        })
    }
}

/// Validation and test cut-offs plus the number of historical training
/// timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitConfig {
    #[serde(deserialize_with = "deserialize_time")]
    pub t_val: Timestamp,
    #[serde(deserialize_with = "deserialize_time")]
    pub t_test: Timestamp,
    pub train_strides: usize,
    /// Spacing between training timestamps; defaults to the task window.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<Timestamp>,
}

impl SplitConfig {
    pub fn new(t_val: Timestamp, t_test: Timestamp, train_strides: usize) -> Self {
        SplitConfig {
            t_val,
            t_test,
            train_strides,
            stride: None,
        }
    }

    pub fn load(path: &Path) -> Result<SplitConfig, TaskError> {
        let text = fs::read_to_string(path).map_err(|e| TaskError::Io(path.display().to_string(), e))?;
        serde_json::from_str(&text).map_err(|e| TaskError::Spec(format!("split config: {e}")))
    }

    /// Default placement for a database ending at `max_time`: test window
    /// ends at the last timestamp, validation window right before it.
    pub fn latest(max_time: Timestamp, window: Timestamp, train_strides: usize) -> Self {
        let t_test = max_time - window;
        SplitConfig::new(t_test - window, t_test, train_strides)
    }
}
