//! The relational entity graph.
//!
//! One node per row; node type is the row's table. Every non-null foreign
//! key cell yields a forward edge (fact row → referenced row) and an
//! inverse edge. Adjacency is stored per edge type in compressed form,
//! indexed by destination node, with each neighbor list sorted by
//! `(τ, local id)` so that the `τ ≤ t` neighbors form a prefix found by
//! binary search.

mod snapshot;

pub use snapshot::{read_snapshot, write_snapshot};

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{Direction, SchemaGraph};
use crate::store::Database;
use crate::time::Timestamp;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("edge type {edge_type} ends at table {expected}, but node belongs to table {got}")]
    WrongDestination {
        edge_type: usize,
        expected: usize,
        got: usize,
    },
    #[error("unknown edge type {0}")]
    UnknownEdgeType(usize),
    #[error("snapshot: {0}")]
    Snapshot(#[from] std::io::Error),
}

/// A node: table type id plus dense row id within the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeRef {
    pub table: u32,
    pub local: u32,
}

impl NodeRef {
    pub fn new(table: usize, local: u32) -> Self {
        NodeRef {
            table: table as u32,
            local,
        }
    }
}

/// Compressed adjacency of one edge type, indexed by destination node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    pub(crate) offsets: Vec<usize>,
    pub(crate) neighbors: Vec<u32>,
    pub(crate) times: Vec<Timestamp>,
}

impl Adjacency {
    fn range(&self, dst: u32) -> std::ops::Range<usize> {
        self.offsets[dst as usize]..self.offsets[dst as usize + 1]
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len()
    }
}

/// Neighbors of one node under one edge type: source local ids and their
/// times, aligned and sorted by `(time, id)`.
#[derive(Debug, Clone, Copy)]
pub struct Neighbors<'a> {
    pub ids: &'a [u32],
    pub times: &'a [Timestamp],
}

impl<'a> Neighbors<'a> {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityGraph {
    schema: SchemaGraph,
    keys: Vec<Vec<i64>>,
    node_times: Vec<Vec<Timestamp>>,
    adjacency: Vec<Adjacency>,
}

/// Materializes the entity graph. Null and dangling foreign keys emit no
/// edges.
pub fn build_entity_graph(db: &Database, schema: &SchemaGraph) -> EntityGraph {
    let tables: Vec<_> = schema
        .tables()
        .iter()
        .map(|n| db.table(n).expect("schema built from this database"))
        .collect();
    let keys: Vec<Vec<i64>> = tables.iter().map(|t| t.rows().iter().map(|r| r.key).collect()).collect();
    let node_times: Vec<Vec<Timestamp>> =
        tables.iter().map(|t| t.rows().iter().map(|r| r.time).collect()).collect();

    let adjacency = schema
        .edge_types()
        .par_iter()
        .map(|e| {
            // the fkey table and the pkey table of the inducing link
            let (fact, target) = match e.direction {
                Direction::Forward => (e.src, e.dst),
                Direction::Inverse => (e.dst, e.src),
            };
            let fact_table = tables[fact];
            let target_table = tables[target];
            let slot = fact_table.fk_slot(&e.column).expect("edge column is a foreign key");
            let pairs = fact_table.rows().iter().enumerate().filter_map(|(i, r)| {
                let p = target_table.lookup(r.fkeys[slot]?)?;
                Some(match e.direction {
                    // (src = fact row, dst = referenced row)
                    Direction::Forward => (p, i as u32),
                    Direction::Inverse => (i as u32, p),
                })
            });
            compress(tables[e.dst].len(), pairs, &node_times[e.src])
        })
        .collect();

    EntityGraph {
        schema: schema.clone(),
        keys,
        node_times,
        adjacency,
    }
}

/// Builds offsets + neighbor arrays from `(dst, src)` pairs, sorting each
/// list by `(time, src)`.
fn compress(
    n_dst: usize,
    pairs: impl Iterator<Item = (u32, u32)> + Clone,
    src_times: &[Timestamp],
) -> Adjacency {
    let mut offsets = vec![0usize; n_dst + 1];
    for (d, _) in pairs.clone() {
        offsets[d as usize + 1] += 1;
    }
    for i in 0..n_dst {
        offsets[i + 1] += offsets[i];
    }
    let mut cursor = offsets.clone();
    let mut neighbors = vec![0u32; offsets[n_dst]];
    for (d, s) in pairs {
        neighbors[cursor[d as usize]] = s;
        cursor[d as usize] += 1;
    }
    for d in 0..n_dst {
        neighbors[offsets[d]..offsets[d + 1]].sort_unstable_by_key(|&s| (src_times[s as usize], s));
    }
    let times = neighbors.iter().map(|&s| src_times[s as usize]).collect();
    Adjacency {
        offsets,
        neighbors,
        times,
    }
}

impl EntityGraph {
    pub(crate) fn from_parts(
        schema: SchemaGraph,
        keys: Vec<Vec<i64>>,
        node_times: Vec<Vec<Timestamp>>,
        adjacency: Vec<Adjacency>,
    ) -> Self {
        EntityGraph {
            schema,
            keys,
            node_times,
            adjacency,
        }
    }

    pub fn schema(&self) -> &SchemaGraph {
        &self.schema
    }

    pub fn num_nodes(&self) -> usize {
        self.keys.iter().map(Vec::len).sum()
    }

    pub fn table_len(&self, table: usize) -> usize {
        self.keys[table].len()
    }

    /// Total directed edges over all edge types.
    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(Adjacency::edge_count).sum()
    }

    pub fn adjacency(&self, edge_type: usize) -> &Adjacency {
        &self.adjacency[edge_type]
    }

    /// τ(v).
    pub fn time(&self, v: NodeRef) -> Timestamp {
        self.node_times[v.table as usize][v.local as usize]
    }

    pub fn node_times(&self, table: usize) -> &[Timestamp] {
        &self.node_times[table]
    }

    /// Original primary key of a node.
    pub fn key(&self, v: NodeRef) -> i64 {
        self.keys[v.table as usize][v.local as usize]
    }

    pub fn keys(&self, table: usize) -> &[i64] {
        &self.keys[table]
    }

    /// Builds a primary-key → local id map for one table.
    pub fn key_index(&self, table: usize) -> std::collections::HashMap<i64, u32> {
        self.keys[table]
            .iter()
            .enumerate()
            .map(|(i, &k)| (k, i as u32))
            .rev()
            .collect()
    }

    fn check(&self, v: NodeRef, edge_type: usize) -> Result<&Adjacency, GraphError> {
        let e = self
            .schema
            .edge_types()
            .get(edge_type)
            .ok_or(GraphError::UnknownEdgeType(edge_type))?;
        if e.dst != v.table as usize {
            return Err(GraphError::WrongDestination {
                edge_type,
                expected: e.dst,
                got: v.table as usize,
            });
        }
        Ok(&self.adjacency[edge_type])
    }

    /// All in-neighbors of `v` under `edge_type`.
    pub fn neighbors(&self, v: NodeRef, edge_type: usize) -> Result<Neighbors<'_>, GraphError> {
        let adj = self.check(v, edge_type)?;
        let r = adj.range(v.local);
        Ok(Neighbors {
            ids: &adj.neighbors[r.clone()],
            times: &adj.times[r],
        })
    }

    /// In-neighbors `w` of `v` under `edge_type` with `τ(w) ≤ t`, in
    /// ascending time order. Static neighbors always qualify.
    pub fn neighbors_before(&self, v: NodeRef, edge_type: usize, t: Timestamp) -> Result<Neighbors<'_>, GraphError> {
        let all = self.neighbors(v, edge_type)?;
        let cut = all.times.partition_point(|&x| x <= t);
        Ok(Neighbors {
            ids: &all.ids[..cut],
            times: &all.times[..cut],
        })
    }

    /// In-degree histogram `{degree: node count}` over destinations of
    /// `edge_type`.
    pub fn degree_histogram(&self, edge_type: usize) -> Result<BTreeMap<usize, usize>, GraphError> {
        let adj = self
            .adjacency
            .get(edge_type)
            .ok_or(GraphError::UnknownEdgeType(edge_type))?;
        let mut hist = BTreeMap::new();
        for w in adj.offsets.windows(2) {
            *hist.entry(w[1] - w[0]).or_insert(0) += 1;
        }
        Ok(hist)
    }

    /// Largest in-degree over all nodes and edge types.
    pub fn max_degree(&self) -> usize {
        self.adjacency
            .iter()
            .flat_map(|a| a.offsets.windows(2).map(|w| w[1] - w[0]))
            .max()
            .unwrap_or(0)
    }
}
