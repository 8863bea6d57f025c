//! Table-level schema graph: one edge type per foreign-key column and one
//! inverse per forward type.

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::Serialize;

use crate::store::{Database, Link};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Direction {
    /// From the foreign-key table to the primary-key table.
    Forward,
    /// From the primary-key table back to the foreign-key table.
    Inverse,
}

/// One relation `R = (src, dst)`. Messages flow from `src` rows to `dst`
/// rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EdgeType {
    pub id: usize,
    pub src: usize,
    pub dst: usize,
    /// Foreign-key column (on the fkey table) that induced the link.
    pub column: String,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SchemaGraph {
    tables: Vec<String>,
    temporal: Vec<bool>,
    edge_types: Vec<EdgeType>,
    inverse: Vec<usize>,
}

pub fn build_schema_graph(db: &Database) -> SchemaGraph {
    let tables = db.table_names();
    let temporal = db.tables().map(|t| t.is_temporal()).collect();
    SchemaGraph::from_links(tables, temporal, &db.links())
}

impl SchemaGraph {
    /// Builds the graph from table names (any order; they are sorted) and
    /// links. Edge types are ordered by `(src, column, dst, direction)` on
    /// table names.
    pub fn from_links(tables: Vec<String>, temporal: Vec<bool>, links: &[Link]) -> SchemaGraph {
        let mut named: Vec<(String, bool)> = tables.into_iter().zip(temporal).collect();
        named.sort();
        let (tables, temporal): (Vec<String>, Vec<bool>) = named.into_iter().unzip();
        let id = |name: &str| {
            tables
                .binary_search_by(|t| t.as_str().cmp(name))
                .unwrap_or_else(|_| panic!("link names unknown table '{name}'"))
        };

        // (sort key, src, dst)
        type Keyed = ((String, String, String, Direction), usize, usize);
        let mut keyed: Vec<Keyed> = Vec::new();
        for l in links {
            let f = id(&l.fkey_table);
            let p = id(&l.pkey_table);
            keyed.push((
                (l.fkey_table.clone(), l.column.clone(), l.pkey_table.clone(), Direction::Forward),
                f,
                p,
            ));
            keyed.push((
                (l.pkey_table.clone(), l.column.clone(), l.fkey_table.clone(), Direction::Inverse),
                p,
                f,
            ));
        }
        keyed.sort();
        keyed.dedup_by(|a, b| a.0 == b.0);

        let edge_types: Vec<EdgeType> = keyed
            .into_iter()
            .enumerate()
            .map(|(i, ((_, column, _, direction), src, dst))| EdgeType {
                id: i,
                src,
                dst,
                column,
                direction,
            })
            .collect();
        let inverse = edge_types
            .iter()
            .map(|e| {
                edge_types
                    .iter()
                    .position(|o| {
                        o.src == e.dst && o.dst == e.src && o.column == e.column && o.direction != e.direction
                    })
                    .expect("every edge type has an inverse")
            })
            .collect();
        SchemaGraph {
            tables,
            temporal,
            edge_types,
            inverse,
        }
    }

    pub fn tables(&self) -> &[String] {
        &self.tables
    }

    pub fn table_id(&self, name: &str) -> Option<usize> {
        self.tables.iter().position(|t| t == name)
    }

    pub fn table_name(&self, id: usize) -> &str {
        &self.tables[id]
    }

    pub fn is_temporal(&self, table: usize) -> bool {
        self.temporal[table]
    }

    pub fn edge_types(&self) -> &[EdgeType] {
        &self.edge_types
    }

    pub fn edge_type(&self, id: usize) -> &EdgeType {
        &self.edge_types[id]
    }

    pub fn inverse_of(&self, id: usize) -> usize {
        self.inverse[id]
    }

    /// Edge types whose destination is `table`, in id order.
    pub fn incoming(&self, table: usize) -> impl Iterator<Item = &EdgeType> + '_ {
        self.edge_types.iter().filter(move |e| e.dst == table)
    }

    /// Human-readable relation name, e.g. `transactions-customer_id->customers`.
    pub fn edge_label(&self, id: usize) -> String {
        let e = &self.edge_types[id];
        match e.direction {
            Direction::Forward => format!("{}-{}->{}", self.tables[e.src], e.column, self.tables[e.dst]),
            Direction::Inverse => format!("{}<-{}-{}", self.tables[e.dst], e.column, self.tables[e.src]),
        }
    }

    /// Looks up an edge type by its [`edge_label`](Self::edge_label).
    pub fn edge_by_label(&self, label: &str) -> Option<usize> {
        (0..self.edge_types.len()).find(|&i| self.edge_label(i) == label)
    }

    /// Forward links recovered from the edge types.
    pub fn links(&self) -> Vec<Link> {
        self.edge_types
            .iter()
            .filter(|e| e.direction == Direction::Forward)
            .map(|e| Link {
                fkey_table: self.tables[e.src].clone(),
                column: e.column.clone(),
                pkey_table: self.tables[e.dst].clone(),
            })
            .collect()
    }

    /// Whether undirected reachability spans every table.
    pub fn is_connected(&self) -> bool {
        let n = self.tables.len();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(t) = queue.pop_front() {
            for e in &self.edge_types {
                for (a, b) in [(e.src, e.dst), (e.dst, e.src)] {
                    if a == t && !seen[b] {
                        seen[b] = true;
                        queue.push_back(b);
                    }
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph schema {\n");
        for t in &self.tables {
            let _ = writeln!(out, "  \"{t}\";");
        }
        for e in &self.edge_types {
            let style = match e.direction {
                Direction::Forward => "solid",
                Direction::Inverse => "dashed",
            };
            let _ = writeln!(
                out,
                "  \"{}\" -> \"{}\" [label=\"{}\", style={style}];",
                self.tables[e.src], self.tables[e.dst], e.column
            );
        }
        out.push_str("}\n");
        out
    }
}
