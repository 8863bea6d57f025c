//! Time-consistent computation graphs.
//!
//! Starting from a seed node at seed time `t`, each hop expands every node
//! discovered in the previous hop: for each incoming edge type it selects at
//! most `m_i` neighbors among those with `τ ≤ t`. Because neighbor lists are
//! sorted by time, that candidate set is a contiguous prefix. A node reached
//! more than once is stored once, at the hop where it was first reached, and
//! is expanded only from there; edges from later hops still accumulate.
//!
//! Selection strategies over the prefix:
//! - uniform: `m` distinct positions drawn uniformly;
//! - ordered: the `m` latest positions (ties follow the stored
//!   `(τ, local id)` order);
//! - biased: `m` positions drawn without replacement with probability
//!   proportional to `2^(-(t - τ)/half_life)`.
//!
//! When the prefix holds at most `m` neighbors every strategy takes all of
//! them without touching the random stream.

use std::collections::HashMap;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{EntityGraph, NodeRef};
use crate::rng::{stream_rng, StreamRng};
use crate::time::{is_static, Timestamp};

#[derive(Debug, Error, PartialEq)]
pub enum SamplerError {
    #[error("sampler config: {0}")]
    Config(String),
    #[error("no neighbor times to weight")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    Uniform,
    Ordered,
    /// Half-life in seconds.
    Biased { half_life: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Per-hop fanouts `(m_1, ..., m_L)`; the number of hops is their count.
    pub fanouts: Vec<usize>,
    pub strategy: Strategy,
    #[serde(default)]
    pub seed: u64,
}

impl SamplerConfig {
    pub fn new(fanouts: Vec<usize>, strategy: Strategy, seed: u64) -> Self {
        SamplerConfig {
            fanouts,
            strategy,
            seed,
        }
    }

    pub fn hops(&self) -> usize {
        self.fanouts.len()
    }

    pub fn check(&self) -> Result<(), SamplerError> {
        if self.fanouts.is_empty() {
            return Err(SamplerError::Config("at least one hop required".into()));
        }
        if self.fanouts.contains(&0) {
            return Err(SamplerError::Config("fanouts must be at least 1".into()));
        }
        if let Strategy::Biased { half_life } = self.strategy {
            if !(half_life.is_finite() && half_life > 0.0) {
                return Err(SamplerError::Config("half_life must be positive".into()));
            }
        }
        Ok(())
    }

    /// Upper bound on `|V_comp|`: `1 + Σ_i Π_{j≤i} m_j · |edge types|`.
    pub fn node_bound(&self, edge_types: usize) -> usize {
        let mut total = 1usize;
        let mut width = 1usize;
        for &m in &self.fanouts {
            width = width.saturating_mul(m.saturating_mul(edge_types));
            total = total.saturating_add(width);
        }
        total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CgNode {
    pub node: NodeRef,
    /// Hop at which the node was first reached; the seed has depth 0.
    pub depth: u32,
}

/// A directed message edge `src → dst`, both indices into `nodes`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CgEdge {
    pub src: u32,
    pub dst: u32,
    pub edge_type: u32,
}

/// Bounded subgraph around a seed. `nodes[0]` is the seed and nodes are in
/// non-decreasing depth order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ComputationGraph {
    pub seed_time: Timestamp,
    pub hops: u32,
    pub nodes: Vec<CgNode>,
    pub edges: Vec<CgEdge>,
}

impl ComputationGraph {
    pub fn seed(&self) -> NodeRef {
        self.nodes[0].node
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of nodes with depth at most `d`.
    pub fn count_within(&self, d: u32) -> usize {
        self.nodes.partition_point(|n| n.depth <= d)
    }

    /// One JSON record: nodes carry table name, local id, key, time and hop;
    /// edges carry the relation label.
    pub fn to_json(&self, g: &EntityGraph) -> serde_json::Value {
        let schema = g.schema();
        let nodes: Vec<_> = self
            .nodes
            .iter()
            .map(|n| {
                let t = g.time(n.node);
                serde_json::json!({
                    "table": schema.table_name(n.node.table as usize),
                    "local_id": n.node.local,
                    "key": g.key(n.node),
                    "time": if is_static(t) { serde_json::Value::Null } else { t.into() },
                    "hop": n.depth,
                })
            })
            .collect();
        let edges: Vec<_> = self
            .edges
            .iter()
            .map(|e| {
                serde_json::json!({
                    "src": e.src,
                    "dst": e.dst,
                    "type": schema.edge_label(e.edge_type as usize),
                })
            })
            .collect();
        serde_json::json!({ "seed_time": self.seed_time, "nodes": nodes, "edges": edges })
    }
}

/// Normalized selection weights `∝ 2^(-(t - τ)/half_life)`. Static
/// neighbors are treated as the oldest finite neighbor (or, if there is
/// none, all weights are equal).
pub fn biased_weights(times: &[Timestamp], t: Timestamp, half_life: f64) -> Result<Vec<f64>, SamplerError> {
    if times.is_empty() {
        return Err(SamplerError::Empty);
    }
    let oldest = times.iter().copied().filter(|&x| !is_static(x)).min();
    let ages: Vec<f64> = times
        .iter()
        .map(|&x| match (is_static(x), oldest) {
            (false, _) => (t - x) as f64,
            (true, Some(o)) => (t - o) as f64,
            (true, None) => 0.0,
        })
        .collect();
    let youngest = ages.iter().copied().fold(f64::INFINITY, f64::min);
    // shifting by the youngest age avoids underflow and cancels in the normalization
    let mut w: Vec<f64> = ages.iter().map(|a| (-(a - youngest) / half_life).exp2()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    Ok(w)
}

/// Positions (ascending) chosen from a prefix of `times.len()` candidates.
fn select(times: &[Timestamp], t: Timestamp, m: usize, strategy: Strategy, rng: &mut StreamRng) -> Vec<usize> {
    let k = times.len();
    if k <= m {
        return (0..k).collect();
    }
    match strategy {
        Strategy::Ordered => (k - m..k).collect(),
        Strategy::Uniform => {
            let mut picked = index::sample(rng, k, m).into_vec();
            picked.sort_unstable();
            picked
        }
        Strategy::Biased { half_life } => {
            let w = biased_weights(times, t, half_life).expect("non-empty prefix");
            // Efraimidis–Spirakis: keep the m largest ln(u)/w
            let mut keys: Vec<(f64, usize)> = w
                .iter()
                .enumerate()
                .map(|(j, &wj)| {
                    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                    (if wj > 0.0 { u.ln() / wj } else { f64::NEG_INFINITY }, j)
                })
                .collect();
            keys.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut picked: Vec<usize> = keys[..m].iter().map(|&(_, j)| j).collect();
            picked.sort_unstable();
            picked
        }
    }
}

/// Samples one computation graph using stream 0 of `cfg.seed`.
pub fn sample(g: &EntityGraph, seed: NodeRef, t: Timestamp, cfg: &SamplerConfig) -> ComputationGraph {
    sample_with_rng(g, seed, t, cfg, &mut stream_rng(cfg.seed, 0))
}

pub fn sample_with_rng(
    g: &EntityGraph,
    seed: NodeRef,
    t: Timestamp,
    cfg: &SamplerConfig,
    rng: &mut StreamRng,
) -> ComputationGraph {
    let schema = g.schema();
    let mut nodes = vec![CgNode { node: seed, depth: 0 }];
    let mut edges = Vec::new();
    let mut seen: HashMap<NodeRef, u32> = HashMap::from([(seed, 0)]);
    let mut frontier = 0..1usize;
    for (hop, &m) in cfg.fanouts.iter().enumerate() {
        let start = nodes.len();
        for vi in frontier.clone() {
            let v = nodes[vi].node;
            for et in schema.incoming(v.table as usize) {
                let nb = g.neighbors_before(v, et.id, t).expect("edge type ends at v's table");
                for j in select(nb.times, t, m, cfg.strategy, rng) {
                    let w = NodeRef::new(et.src, nb.ids[j]);
                    let wi = *seen.entry(w).or_insert_with(|| {
                        nodes.push(CgNode {
                            node: w,
                            depth: hop as u32 + 1,
                        });
                        nodes.len() as u32 - 1
                    });
                    edges.push(CgEdge {
                        src: wi,
                        dst: vi as u32,
                        edge_type: et.id as u32,
                    });
                }
            }
        }
        frontier = start..nodes.len();
    }
    ComputationGraph {
        seed_time: t,
        hops: cfg.hops() as u32,
        nodes,
        edges,
    }
}

/// Samples a batch; element `i` draws from stream `i` of `cfg.seed`, so
/// the output equals a sequential loop over the examples.
pub fn sample_batch(g: &EntityGraph, examples: &[(NodeRef, Timestamp)], cfg: &SamplerConfig) -> Vec<ComputationGraph> {
    examples
        .par_iter()
        .enumerate()
        .map(|(i, &(v, t))| sample_with_rng(g, v, t, cfg, &mut stream_rng(cfg.seed, i as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_entity_graph;
    use crate::schema::build_schema_graph;
    use crate::store::{ColumnKind, ColumnSpec, Database, Row, Table};
    use crate::time::SENTINEL_STATIC;

    /// One user with events at the given times.
    fn star(times: &[Timestamp]) -> EntityGraph {
        let users = Table::new(
            "users",
            vec![ColumnSpec::primary_key("id")],
            vec![Row::new(1, vec![], vec![], SENTINEL_STATIC)],
        )
        .unwrap();
        let events = Table::new(
            "events",
            vec![
                ColumnSpec::primary_key("id"),
                ColumnSpec::foreign_key("user_id", "users"),
                ColumnSpec::new("ts", ColumnKind::Timestamp),
            ],
            times
                .iter()
                .enumerate()
                .map(|(i, &t)| Row::new(i as i64, vec![Some(1)], vec![], t))
                .collect(),
        )
        .unwrap();
        let db = Database::new(vec![events, users]).unwrap();
        build_entity_graph(&db, &build_schema_graph(&db))
    }

    fn user(g: &EntityGraph) -> NodeRef {
        NodeRef::new(g.schema().table_id("users").unwrap(), 0)
    }

    fn hop1_times(g: &EntityGraph, cg: &ComputationGraph) -> Vec<Timestamp> {
        let mut t: Vec<_> = cg.nodes.iter().filter(|n| n.depth == 1).map(|n| g.time(n.node)).collect();
        t.sort_unstable();
        t
    }

    #[test]
    fn isolated_seed_is_a_singleton() {
        let g = star(&[50, 60]);
        let cg = sample(&g, user(&g), 10, &SamplerConfig::new(vec![3, 3], Strategy::Uniform, 1));
        assert_eq!(cg.nodes.len(), 1);
        assert!(cg.edges.is_empty());
    }

    #[test]
    fn ordered_takes_latest_valid() {
        let g = star(&[1, 3, 5]);
        let cg = sample(&g, user(&g), 4, &SamplerConfig::new(vec![2], Strategy::Ordered, 0));
        assert_eq!(hop1_times(&g, &cg), vec![1, 3]);
        let g = star(&[1, 2, 3, 5]);
        let cg = sample(&g, user(&g), 4, &SamplerConfig::new(vec![2], Strategy::Ordered, 0));
        assert_eq!(hop1_times(&g, &cg), vec![2, 3]);
    }

    #[test]
    fn strategies_agree_when_prefix_fits() {
        let g = star(&[1, 2, 3, 9]);
        let sets: Vec<_> = [Strategy::Uniform, Strategy::Ordered, Strategy::Biased { half_life: 2.0 }]
            .into_iter()
            .map(|s| sample(&g, user(&g), 5, &SamplerConfig::new(vec![3, 2], s, 9)))
            .collect();
        assert_eq!(sets[0], sets[1]);
        assert_eq!(sets[1], sets[2]);
    }

    #[test]
    fn temporal_consistency_and_fanout() {
        let times: Vec<Timestamp> = (0..40).map(|i| (i * 7919) % 100).collect();
        let g = star(&times);
        for s in [Strategy::Uniform, Strategy::Ordered, Strategy::Biased { half_life: 10.0 }] {
            let cfg = SamplerConfig::new(vec![5, 3], s, 4);
            let cg = sample(&g, user(&g), 50, &cfg);
            assert!(cg.nodes.iter().all(|n| g.time(n.node) <= 50));
            assert_eq!(cg.nodes.iter().filter(|n| n.depth == 1).count(), 5);
            assert!(cg.len() <= cfg.node_bound(g.schema().edge_types().len()));
        }
    }

    #[test]
    fn batch_matches_loop() {
        let times: Vec<Timestamp> = (0..30).collect();
        let g = star(&times);
        let cfg = SamplerConfig::new(vec![4, 2], Strategy::Uniform, 77);
        let ex: Vec<_> = (0..6).map(|i| (user(&g), 10 + i * 3)).collect();
        let batch = sample_batch(&g, &ex, &cfg);
        for (i, &(v, t)) in ex.iter().enumerate() {
            assert_eq!(batch[i], sample_with_rng(&g, v, t, &cfg, &mut stream_rng(77, i as u64)));
        }
        assert_eq!(batch, sample_batch(&g, &ex, &cfg));
        assert_eq!(sample_batch(&g, &ex[..1], &cfg)[0], sample(&g, ex[0].0, ex[0].1, &cfg));
    }

    #[test]
    fn weights_examples() {
        let w = biased_weights(&[90, 100], 100, 10.0).unwrap();
        assert!((w[0] - 1.0 / 3.0).abs() < 1e-15 && (w[1] - 2.0 / 3.0).abs() < 1e-15);
        let w = biased_weights(&[5, 5, 5, 5], 9, 3.0).unwrap();
        assert!(w.iter().all(|&x| (x - 0.25).abs() < 1e-15));
        assert_eq!(biased_weights(&[], 0, 1.0), Err(SamplerError::Empty));
        // static neighbor ages like the oldest finite one
        let w = biased_weights(&[SENTINEL_STATIC, 0, 10], 10, 10.0).unwrap();
        assert!((w[0] - w[1]).abs() < 1e-15);
        assert!((w[2] - 2.0 * w[1]).abs() < 1e-15);
        let w = biased_weights(&[SENTINEL_STATIC, SENTINEL_STATIC], 10, 1.0).unwrap();
        assert_eq!(w, vec![0.5, 0.5]);
        // huge ages do not underflow to NaN
        let w = biased_weights(&[0, 1_000_000_000], 1_000_000_000, 1.0).unwrap();
        assert!(w.iter().all(|x| x.is_finite()) && (w[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn config_checks() {
        assert!(SamplerConfig::new(vec![], Strategy::Uniform, 0).check().is_err());
        assert!(SamplerConfig::new(vec![2, 0], Strategy::Uniform, 0).check().is_err());
        assert!(SamplerConfig::new(vec![2], Strategy::Biased { half_life: 0.0 }, 0).check().is_err());
        assert!(SamplerConfig::new(vec![2], Strategy::Ordered, 0).check().is_ok());
        assert_eq!(SamplerConfig::new(vec![10, 10], Strategy::Ordered, 0).node_bound(4), 1 + 40 + 1600);
    }

    #[test]
    fn json_record_lists_nodes_and_edges() {
        let g = star(&[1, 2]);
        let cg = sample(&g, user(&g), 5, &SamplerConfig::new(vec![2], Strategy::Ordered, 0));
        let j = cg.to_json(&g);
        assert_eq!(j["nodes"].as_array().unwrap().len(), 3);
        assert_eq!(j["nodes"][0]["time"], serde_json::Value::Null);
        assert_eq!(j["edges"][0]["type"], "events-user_id->users");
    }
}
