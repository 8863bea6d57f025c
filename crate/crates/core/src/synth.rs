//! Seeded e-commerce database with a plantable churn signal.
//!
//! Three tables: `customers` (name, region), `products` (description,
//! price, size) and `transactions` (customer, product, price, time).
//!
//! Each customer `c` has a latent activity shape that starts at `s_c`,
//! decays as `A_c exp(-(t - s_c)/τ_c)` and stops for good once it has fallen
//! to `floor_ratio · A_c`. The transaction intensity is
//!
//! ```text
//! r_c(t) = s · shape_c(t) + (1 - s) · 1/H
//! ```
//!
//! with `s` the signal strength and `H` the horizon, so both components
//! carry unit mass per customer. At `s = 0` every customer follows the same
//! homogeneous process and the future is independent of the past. At
//! `s = 1` a customer past its stopping point never buys again, and one in
//! the middle of its life buys many times per window.
//!
//! Exactly `n_transactions` events are drawn as independent draws from the
//! normalized intensity: a customer proportional to its mass, then a
//! component, then a time by inverse CDF. Transaction keys follow time
//! order. [`Synthetic::expected_events`] replays the latent intensity and
//! serves as the oracle.

use std::path::Path;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::stream_rng;
use crate::store::{write_database, ColumnKind, ColumnSpec, Database, Manifest, Row, StoreError, Table, Value};
use crate::task::{EntityFilter, LabelRule, Metric, TaskKind, TaskSpec};
use crate::time::{deserialize_time, Timestamp, SECONDS_PER_DAY, SENTINEL_STATIC};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("synth config: {0}")]
    Config(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_customers: usize,
    pub n_products: usize,
    pub n_transactions: usize,
    #[serde(deserialize_with = "deserialize_time")]
    pub t_start: Timestamp,
    #[serde(deserialize_with = "deserialize_time")]
    pub t_end: Timestamp,
    pub signal_strength: f64,
    pub seed: u64,
    /// Decay constants are log-uniform in `[decay_min, decay_max] · H`.
    pub decay_min: f64,
    pub decay_max: f64,
    /// Activity stops once the shape falls to this fraction of its peak.
    pub floor_ratio: f64,
    /// Customers start uniformly in `[t_start - start_spread · H, t_end]`.
    pub start_spread: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_customers: 1000,
            n_products: 200,
            n_transactions: 20_000,
            t_start: 1_704_067_200, // 2024-01-01
            t_end: 1_735_689_600,   // 2025-01-01
            signal_strength: 1.0,
            seed: 0,
            decay_min: 0.08,
            decay_max: 0.3,
            floor_ratio: 0.3,
            start_spread: 0.2,
        }
    }
}

impl SynthConfig {
    pub fn check(&self) -> Result<(), SynthError> {
        let err = |m: &str| Err(SynthError::Config(m.to_string()));
        if self.n_customers == 0 || self.n_products == 0 || self.n_transactions == 0 {
            return err("counts must be positive");
        }
        if self.t_start >= self.t_end {
            return err("t_start must precede t_end");
        }
        if !(0.0..=1.0).contains(&self.signal_strength) {
            return err("signal_strength must lie in [0, 1]");
        }
        if !(self.decay_min > 0.0 && self.decay_min <= self.decay_max && self.decay_max.is_finite()) {
            return err("need 0 < decay_min <= decay_max");
        }
        if !(self.floor_ratio > 0.0 && self.floor_ratio < 1.0) {
            return err("floor_ratio must lie in (0, 1)");
        }
        if !(self.start_spread >= 0.0 && self.start_spread.is_finite()) {
            return err("start_spread must be non-negative");
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<SynthConfig, SynthError> {
        let cfg: SynthConfig = serde_json::from_str(text).map_err(|e| SynthError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<SynthConfig, SynthError> {
        let text = std::fs::read_to_string(path).map_err(|e| SynthError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn horizon(&self) -> f64 {
        (self.t_end - self.t_start) as f64
    }
}

/// Latent activity of one customer.
#[derive(Debug, Clone, PartialEq)]
pub struct Latent {
    pub start: f64,
    pub decay: f64,
    /// Time at which activity stops.
    pub stop: f64,
    pub peak: f64,
}

impl Latent {
    /// Shape mass over `[a, b]`.
    fn mass(&self, a: f64, b: f64) -> f64 {
        let (a, b) = (a.max(self.start), b.min(self.stop));
        if b <= a {
            return 0.0;
        }
        let e = |x: f64| (-(x - self.start) / self.decay).exp();
        self.peak * self.decay * (e(a) - e(b))
    }

    /// Draws a time in `[a, b]` from the shape density.
    fn draw(&self, a: f64, b: f64, u: f64) -> f64 {
        let (a, b) = (a.max(self.start), b.min(self.stop));
        let lo = (-(a - self.start) / self.decay).exp();
        let hi = (-(b - self.start) / self.decay).exp();
        (self.start - self.decay * (lo - u * (lo - hi)).ln()).clamp(a, b)
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub config: SynthConfig,
    pub db: Database,
    /// Indexed by customer key minus one.
    pub latent: Vec<Latent>,
    /// Events per unit of intensity mass.
    scale: f64,
}

const REGIONS: [&str; 5] = ["north", "south", "east", "west", "central"];
const SIZES: [&str; 4] = ["S", "M", "L", "XL"];
const SYLLABLES: [&str; 12] = ["ka", "lo", "mi", "ren", "sa", "to", "vel", "an", "dor", "is", "ul", "be"];
const WORDS: [&str; 32] = [
    "cotton", "steel", "wooden", "compact", "deluxe", "classic", "portable", "organic", "shirt", "lamp", "kettle",
    "chair", "backpack", "blender", "notebook", "jacket", "speaker", "mug", "blanket", "charger", "rugged", "slim",
    "bright", "quiet", "vintage", "modern", "set", "pack", "kit", "pro", "mini", "max",
];

fn words(rng: &mut impl Rng, pool: &[&str], n: usize, sep: &str) -> String {
    (0..n).map(|_| *pool.choose(rng).expect("non-empty pool")).collect::<Vec<_>>().join(sep)
}

/// Generates the database and its latent state.
pub fn generate(cfg: &SynthConfig) -> Result<Synthetic, SynthError> {
    cfg.check()?;
    let h = cfg.horizon();
    let (t0, t1) = (cfg.t_start as f64, cfg.t_end as f64);
    let s = cfg.signal_strength;

    let mut rng = stream_rng(cfg.seed, 0);
    let customers: Vec<Row> = (1..=cfg.n_customers as i64)
        .map(|k| {
            let n = rng.gen_range(2..=4);
            let name = words(&mut rng, &SYLLABLES, n, "");
            let region = REGIONS.choose(&mut rng).expect("regions");
            Row::new(k, vec![], vec![Value::Text(name), Value::Cat(region.to_string())], SENTINEL_STATIC)
        })
        .collect();

    let mut rng = stream_rng(cfg.seed, 1);
    let prices: Vec<f64> = (0..cfg.n_products)
        .map(|_| ((rng.gen_range(2f64.ln()..200f64.ln())).exp() * 100.0).round() / 100.0)
        .collect();
    let products: Vec<Row> = prices
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let n = rng.gen_range(3..=6);
            let description = words(&mut rng, &WORDS, n, " ");
            let size = SIZES.choose(&mut rng).expect("sizes");
            Row::new(
                i as i64 + 1,
                vec![],
                vec![Value::Text(description), Value::Num(p), Value::Cat(size.to_string())],
                SENTINEL_STATIC,
            )
        })
        .collect();

    let mut rng = stream_rng(cfg.seed, 2);
    let (lmin, lmax) = ((cfg.decay_min * h).ln(), (cfg.decay_max * h).ln());
    let latent: Vec<Latent> = (0..cfg.n_customers)
        .map(|_| {
            let start = rng.gen_range(t0 - cfg.start_spread * h..t1);
            let decay = if lmax > lmin { rng.gen_range(lmin..lmax).exp() } else { lmin.exp() };
            Latent {
                start,
                decay,
                stop: start + decay * (1.0 / cfg.floor_ratio).ln(),
                peak: 1.0 / (decay * (1.0 - cfg.floor_ratio)),
            }
        })
        .collect();
    let shape_mass: Vec<f64> = latent.iter().map(|l| l.mass(t0, t1)).collect();
    let mass: Vec<f64> = shape_mass.iter().map(|m| s * m + (1.0 - s)).collect();
    let total: f64 = mass.iter().sum();
    if total <= 0.0 {
        return Err(SynthError::Config("no customer is active inside the horizon".into()));
    }

    let mut rng = stream_rng(cfg.seed, 3);
    let pick = WeightedIndex::new(&mass).map_err(|e| SynthError::Config(e.to_string()))?;
    let mut events: Vec<(Timestamp, i64, usize)> = (0..cfg.n_transactions)
        .map(|_| {
            let c = pick.sample(&mut rng);
            let from_shape = rng.gen::<f64>() * mass[c] < s * shape_mass[c];
            let u = rng.gen::<f64>();
            let t = if from_shape {
                latent[c].draw(t0, t1, u)
            } else {
                t0 + u * h
            };
            let product = rng.gen_range(0..cfg.n_products);
            ((t.floor() as Timestamp).clamp(cfg.t_start, cfg.t_end), c as i64 + 1, product)
        })
        .collect();
    events.sort_unstable();
    let transactions: Vec<Row> = events
        .iter()
        .enumerate()
        .map(|(i, &(t, c, p))| {
            Row::new(i as i64 + 1, vec![Some(c), Some(p as i64 + 1)], vec![Value::Num(prices[p])], t)
        })
        .collect();

    let db = Database::new(vec![
        Table::new(
            "customers",
            vec![
                ColumnSpec::primary_key("customer_id"),
                ColumnSpec::new("name", ColumnKind::Text),
                ColumnSpec::new("region", ColumnKind::Categorical),
            ],
            customers,
        )?,
        Table::new(
            "products",
            vec![
                ColumnSpec::primary_key("product_id"),
                ColumnSpec::new("description", ColumnKind::Text),
                ColumnSpec::new("price", ColumnKind::Numerical),
                ColumnSpec::new("size", ColumnKind::Categorical),
            ],
            products,
        )?,
        Table::new(
            "transactions",
            vec![
                ColumnSpec::primary_key("transaction_id"),
                ColumnSpec::foreign_key("customer_id", "customers"),
                ColumnSpec::foreign_key("product_id", "products"),
                ColumnSpec::new("price", ColumnKind::Numerical),
                ColumnSpec::new("timestamp", ColumnKind::Timestamp),
            ],
            transactions,
        )?,
    ])?;
    Ok(Synthetic {
        config: cfg.clone(),
        db,
        latent,
        scale: cfg.n_transactions as f64 / total,
    })
}

impl Synthetic {
    /// Expected number of transactions of `customer` in `(from, to]` under
    /// the latent intensity.
    pub fn expected_events(&self, customer: i64, from: Timestamp, to: Timestamp) -> f64 {
        let cfg = &self.config;
        let (t0, t1) = (cfg.t_start as f64, cfg.t_end as f64);
        let (a, b) = ((from as f64).max(t0), (to as f64).min(t1));
        if b <= a {
            return 0.0;
        }
        let s = cfg.signal_strength;
        let l = &self.latent[(customer - 1) as usize];
        self.scale * (s * l.mass(a, b) + (1.0 - s) * (b - a) / cfg.horizon())
    }

    /// Oracle churn score: the probability of no transaction in `(t, t + window]`.
    pub fn churn_probability(&self, customer: i64, t: Timestamp, window: Timestamp) -> f64 {
        (-self.expected_events(customer, t, t + window)).exp()
    }

    pub fn write(&self, dir: &Path) -> Result<Manifest, SynthError> {
        Ok(write_database(&self.db, dir)?)
    }
}

/// Churn over the synthetic schema: label 1 when an active customer (one
/// with a transaction in the last `window_days`) makes no transaction in
/// the next `window_days`.
pub fn churn_task(window_days: i64) -> TaskSpec {
    TaskSpec {
        name: "customer-churn".into(),
        entity_table: "customers".into(),
        kind: TaskKind::BinaryClassification,
        window: window_days * SECONDS_PER_DAY,
        label: LabelRule::NegatedExists {
            fact_table: "transactions".into(),
            fk: "customer_id".into(),
        },
        filter: EntityFilter::ActiveWithin {
            lookback: window_days * SECONDS_PER_DAY,
        },
        metric: Metric::Ap,
    }
}

/// Total spend per customer over the next `window_days`.
pub fn ltv_task(window_days: i64) -> TaskSpec {
    TaskSpec {
        name: "customer-ltv".into(),
        entity_table: "customers".into(),
        kind: TaskKind::Regression,
        window: window_days * SECONDS_PER_DAY,
        label: LabelRule::SumAttribute {
            fact_table: "transactions".into(),
            attribute: "price".into(),
            fk: "customer_id".into(),
        },
        filter: EntityFilter::ActiveWithin {
            lookback: window_days * SECONDS_PER_DAY,
        },
        metric: Metric::Mae,
    }
}
