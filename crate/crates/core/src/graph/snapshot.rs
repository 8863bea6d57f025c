//! Versioned binary graph snapshot.
//!
//! Layout (all integers little-endian, 64-bit):
//!
//! ```text
//! magic "RELGRAPH", version
//! n_tables
//!   per table: name, temporal flag, n_rows, keys[n_rows], times[n_rows]
//! n_edge_types
//!   per type: src, dst, direction (0 forward / 1 inverse), column,
//!             n_offsets, offsets[..], n_neighbors, neighbors[..]
//! ```
//!
//! Strings are a length word followed by UTF-8 bytes. Neighbor times are
//! not stored; they are recomputed from the node times on load.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Adjacency, EntityGraph, GraphError};
use crate::binio::*;
use crate::schema::SchemaGraph;
use crate::store::Link;

const MAGIC: &[u8; 8] = b"RELGRAPH";
const VERSION: u64 = 1;

pub fn write_snapshot(g: &EntityGraph, path: &Path) -> Result<(), GraphError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_graph(g, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<EntityGraph, GraphError> {
    let mut r = BufReader::new(File::open(path)?);
    Ok(read_graph(&mut r)?)
}

pub(crate) fn write_graph<W: Write>(g: &EntityGraph, w: &mut W) -> io::Result<()> {
    write_header(w, MAGIC, VERSION)?;
    let schema = g.schema();
    write_u64(w, schema.tables().len() as u64)?;
    for (t, name) in schema.tables().iter().enumerate() {
        write_str(w, name)?;
        write_u64(w, schema.is_temporal(t) as u64)?;
        write_u64(w, g.keys[t].len() as u64)?;
        g.keys[t].iter().try_for_each(|&k| write_i64(w, k))?;
        g.node_times[t].iter().try_for_each(|&x| write_i64(w, x))?;
    }
    write_u64(w, schema.edge_types().len() as u64)?;
    for (e, adj) in schema.edge_types().iter().zip(&g.adjacency) {
        write_u64(w, e.src as u64)?;
        write_u64(w, e.dst as u64)?;
        write_u64(w, matches!(e.direction, crate::schema::Direction::Inverse) as u64)?;
        write_str(w, &e.column)?;
        write_u64(w, adj.offsets.len() as u64)?;
        adj.offsets.iter().try_for_each(|&o| write_u64(w, o as u64))?;
        write_u64(w, adj.neighbors.len() as u64)?;
        adj.neighbors.iter().try_for_each(|&n| write_u64(w, n as u64))?;
    }
    Ok(())
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

pub(crate) fn read_graph<R: Read>(r: &mut R) -> io::Result<EntityGraph> {
    const LIMIT: u64 = 1 << 34;
    expect_header(r, MAGIC, VERSION)?;
    let n_tables = read_len(r, 1 << 20)?;
    let mut names = Vec::with_capacity(n_tables);
    let mut temporal = Vec::with_capacity(n_tables);
    let mut keys = Vec::with_capacity(n_tables);
    let mut times = Vec::with_capacity(n_tables);
    for _ in 0..n_tables {
        names.push(read_str(r)?);
        temporal.push(read_u64(r)? != 0);
        let n = read_len(r, LIMIT)?;
        keys.push((0..n).map(|_| read_i64(r)).collect::<io::Result<Vec<_>>>()?);
        times.push((0..n).map(|_| read_i64(r)).collect::<io::Result<Vec<_>>>()?);
    }
    if names.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("table names not in sorted order"));
    }

    let n_types = read_len(r, 1 << 20)?;
    let mut links = Vec::new();
    let mut raw = Vec::with_capacity(n_types);
    for _ in 0..n_types {
        let src = read_len(r, n_tables as u64)?;
        let dst = read_len(r, n_tables as u64)?;
        let inverse = read_u64(r)? != 0;
        let column = read_str(r)?;
        let n_off = read_len(r, LIMIT)?;
        let offsets = (0..n_off)
            .map(|_| read_u64(r).map(|x| x as usize))
            .collect::<io::Result<Vec<_>>>()?;
        let n_nb = read_len(r, LIMIT)?;
        let neighbors = (0..n_nb)
            .map(|_| read_u64(r).map(|x| x as u32))
            .collect::<io::Result<Vec<_>>>()?;
        if src >= n_tables || dst >= n_tables {
            return Err(invalid("edge type endpoint out of range"));
        }
        if offsets.len() != keys[dst].len() + 1
            || offsets.last() != Some(&neighbors.len())
            || offsets.windows(2).any(|w| w[0] > w[1])
            || neighbors.iter().any(|&n| n as usize >= keys[src].len())
        {
            return Err(invalid(format!("corrupt adjacency for edge '{column}'")));
        }
        if !inverse {
            links.push(Link {
                fkey_table: names[src].clone(),
                column: column.clone(),
                pkey_table: names[dst].clone(),
            });
        }
        raw.push((src, dst, inverse, column, offsets, neighbors));
    }

    let schema = SchemaGraph::from_links(names, temporal, &links);
    if schema.edge_types().len() != raw.len() {
        return Err(invalid("edge types do not match their forward links"));
    }
    let mut adjacency = Vec::with_capacity(raw.len());
    for (e, (src, dst, inverse, column, offsets, neighbors)) in schema.edge_types().iter().zip(raw) {
        let same = e.src == src
            && e.dst == dst
            && e.column == column
            && matches!(e.direction, crate::schema::Direction::Inverse) == inverse;
        if !same {
            return Err(invalid("edge types out of canonical order"));
        }
        let ts = neighbors.iter().map(|&s| times[src][s as usize]).collect();
        adjacency.push(Adjacency {
            offsets,
            neighbors,
            times: ts,
        });
    }
    Ok(EntityGraph::from_parts(schema, keys, times, adjacency))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_entity_graph;
    use crate::schema::build_schema_graph;
    use crate::store::fixtures::shop;

    #[test]
    fn snapshot_round_trips() {
        let db = shop();
        let g = build_entity_graph(&db, &build_schema_graph(&db));
        let mut buf = Vec::new();
        write_graph(&g, &mut buf).unwrap();
        assert_eq!(&buf[..8], b"RELGRAPH");
        let back = read_graph(&mut buf.as_slice()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn truncated_snapshot_fails() {
        let db = shop();
        let g = build_entity_graph(&db, &build_schema_graph(&db));
        let mut buf = Vec::new();
        write_graph(&g, &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_graph(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn bad_magic_fails() {
        let buf = b"NOTAGRAPH.......".to_vec();
        assert!(read_graph(&mut buf.as_slice()).is_err());
    }
}
