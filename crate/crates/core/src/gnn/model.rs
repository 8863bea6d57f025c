use std::collections::BTreeMap;
use std::ops::Range;

use super::{Aggregator, GnnError, HeadKind, ModelConfig};
use crate::encoder::{uniform_init, EncoderState, RawFeatures};
use crate::graph::EntityGraph;
use crate::sampler::ComputationGraph;
use crate::schema::SchemaGraph;
use crate::time::{is_static, SECONDS_PER_DAY};

/// A row-major matrix (or a column vector when `cols == 1`) inside the flat
/// parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Everything that fixes the parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelShape {
    pub tables: Vec<String>,
    pub temporal: Vec<bool>,
    /// `(src table, dst table)` per edge type.
    pub edges: Vec<(usize, usize)>,
    pub edge_labels: Vec<String>,
    pub raw_dims: Vec<usize>,
    pub embed_dims: Vec<usize>,
    pub hidden_dims: Vec<usize>,
    pub layers: usize,
    pub aggregator: Aggregator,
    pub head: HeadKind,
    pub entity: usize,
    pub target: Option<usize>,
}

impl ModelShape {
    pub fn new(
        schema: &SchemaGraph,
        encoders: &EncoderState,
        cfg: &ModelConfig,
        head: HeadKind,
        entity_table: &str,
    ) -> Result<ModelShape, GnnError> {
        cfg.check()?;
        let tables = schema.tables().to_vec();
        let enc_names: Vec<&str> = encoders.tables.iter().map(|t| t.table.as_str()).collect();
        if enc_names != tables.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(GnnError::Dimension(format!(
                "encoder tables {enc_names:?} do not match graph tables {tables:?}"
            )));
        }
        let table_id = |name: &str| {
            schema
                .table_id(name)
                .ok_or_else(|| GnnError::Config(format!("unknown table '{name}'")))
        };
        let entity = table_id(entity_table)?;
        let target = match head {
            HeadKind::LinkScore => Some(table_id(
                cfg.target_table
                    .as_deref()
                    .ok_or_else(|| GnnError::Config("link_score head needs target_table".into()))?,
            )?),
            _ => None,
        };
        Ok(ModelShape {
            temporal: (0..tables.len()).map(|t| schema.is_temporal(t)).collect(),
            edges: schema.edge_types().iter().map(|e| (e.src, e.dst)).collect(),
            edge_labels: (0..schema.edge_types().len()).map(|i| schema.edge_label(i)).collect(),
            raw_dims: encoders.tables.iter().map(|t| t.raw_dim()).collect(),
            embed_dims: encoders.tables.iter().map(|t| t.embed_dim).collect(),
            hidden_dims: tables
                .iter()
                .map(|t| cfg.hidden_dims.get(t).copied().unwrap_or(cfg.hidden_dim))
                .collect(),
            tables,
            layers: cfg.layers,
            aggregator: cfg.aggregator,
            head,
            entity,
            target,
        })
    }

    /// Embedding size of `table` entering layer `layer` (0 = initial).
    pub fn dim(&self, layer: usize, table: usize) -> usize {
        if layer == 0 {
            self.embed_dims[table]
        } else {
            self.hidden_dims[table]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    fusion: Vec<Block>,
    time: Vec<Option<Block>>,
    self_w: Vec<Vec<Block>>,
    self_b: Vec<Vec<Block>>,
    rel_w: Vec<Vec<Block>>,
    rel_b: Vec<Vec<Block>>,
    head_w: Block,
    head_b: Option<Block>,
    names: Vec<(String, Block)>,
    total: usize,
}

impl Layout {
    fn new(s: &ModelShape) -> Layout {
        let mut names = Vec::new();
        let mut at = 0;
        let mut block = |name: String, rows: usize, cols: usize| {
            let b = Block { offset: at, rows, cols };
            at += b.len();
            names.push((name, b));
            b
        };
        let n = s.tables.len();
        let fusion = (0..n)
            .map(|t| block(format!("fusion/{}", s.tables[t]), s.embed_dims[t], s.raw_dims[t]))
            .collect();
        let time = (0..n)
            .map(|t| s.temporal[t].then(|| block(format!("time/{}", s.tables[t]), s.embed_dims[t], 1)))
            .collect();
        let (mut self_w, mut self_b, mut rel_w, mut rel_b) = (vec![], vec![], vec![], vec![]);
        for l in 0..s.layers {
            self_w.push(
                (0..n)
                    .map(|t| block(format!("layer{l}/self_w/{}", s.tables[t]), s.dim(l + 1, t), s.dim(l, t)))
                    .collect(),
            );
            self_b.push(
                (0..n)
                    .map(|t| block(format!("layer{l}/self_b/{}", s.tables[t]), s.dim(l + 1, t), 1))
                    .collect(),
            );
            rel_w.push(
                s.edges
                    .iter()
                    .zip(&s.edge_labels)
                    .map(|(&(src, dst), label)| block(format!("layer{l}/rel_w/{label}"), s.dim(l + 1, dst), s.dim(l, src)))
                    .collect(),
            );
            rel_b.push(
                s.edges
                    .iter()
                    .zip(&s.edge_labels)
                    .map(|(&(_, dst), label)| block(format!("layer{l}/rel_b/{label}"), s.dim(l + 1, dst), 1))
                    .collect(),
            );
        }
        let d = s.dim(s.layers, s.entity);
        let (head_w, head_b) = match s.target {
            Some(t) => (block("head/w".into(), d, s.dim(s.layers, t)), None),
            None => (block("head/w".into(), 1, d), Some(block("head/b".into(), 1, 1))),
        };
        Layout {
            fusion,
            time,
            self_w,
            self_b,
            rel_w,
            rel_b,
            head_w,
            head_b,
            names,
            total: at,
        }
    }
}

/// The flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub values: Vec<f64>,
}

/// Features of one computation-graph node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeInput {
    pub table: usize,
    pub raw: Vec<f64>,
    /// `ln(1 + age in days)` for rows of temporal tables.
    pub age: Option<f64>,
}

/// Collects raw features and ages for every node of `cg`.
pub fn gather_inputs(g: &EntityGraph, feats: &RawFeatures, cg: &ComputationGraph) -> Vec<NodeInput> {
    cg.nodes
        .iter()
        .map(|n| {
            let table = n.node.table as usize;
            let tau = g.time(n.node);
            NodeInput {
                table,
                raw: feats.row(table, n.node.local).to_vec(),
                age: (g.schema().is_temporal(table) && !is_static(tau))
                    .then(|| ((cg.seed_time - tau).max(0) as f64 / SECONDS_PER_DAY as f64).ln_1p()),
            }
        })
        .collect()
}

/// Incoming messages of one type, sources sorted by node index.
#[derive(Debug, Clone, PartialEq)]
struct Group {
    edge_type: usize,
    srcs: Vec<usize>,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    inputs: Vec<NodeInput>,
    depth: Vec<usize>,
    groups: Vec<Vec<Group>>,
    /// `h[l][v]`, empty where `v` holds no state at layer `l`.
    h: Vec<Vec<Vec<f64>>>,
    /// Pre-activations of layer `l`'s output.
    z: Vec<Vec<Vec<f64>>>,
    agg: Vec<Vec<Vec<Vec<f64>>>>,
    /// Max aggregator only: winning source per output coordinate.
    argmax: Vec<Vec<Vec<Vec<usize>>>>,
}

impl ForwardTrace {
    /// Final embedding of the seed.
    pub fn output(&self) -> &[f64] {
        &self.h[self.h.len() - 1][0]
    }

    /// Embedding of node `v` entering layer `layer`; empty when inactive.
    pub fn embedding(&self, layer: usize, v: usize) -> &[f64] {
        &self.h[layer][v]
    }
}

// out += W x
fn matvec_add(w: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols.max(1))) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

// out += Wᵀ y
fn matvec_t_add(w: &[f64], cols: usize, y: &[f64], out: &mut [f64]) {
    for (yi, row) in y.iter().zip(w.chunks_exact(cols.max(1))) {
        if *yi != 0.0 {
            out.iter_mut().zip(row).for_each(|(o, a)| *o += yi * a);
        }
    }
}

// G += y xᵀ
fn outer_add(g: &mut [f64], y: &[f64], x: &[f64]) {
    let cols = x.len();
    for (yi, row) in y.iter().zip(g.chunks_exact_mut(cols.max(1))) {
        if *yi != 0.0 {
            row.iter_mut().zip(x).for_each(|(o, a)| *o += yi * a);
        }
    }
}

fn add_into(out: &mut [f64], x: &[f64]) {
    out.iter_mut().zip(x).for_each(|(o, a)| *o += a);
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeteroGnn {
    shape: ModelShape,
    layout: Layout,
    pub params: ModelParams,
}

impl HeteroGnn {
    /// Seeded initialization: weights uniform in `±sqrt(6/(fan_in+fan_out))`,
    /// biases zero, fusion matrices copied from the encoders.
    pub fn new(shape: ModelShape, encoders: &EncoderState, seed: u64) -> Result<HeteroGnn, GnnError> {
        let layout = Layout::new(&shape);
        let mut values = vec![0.0; layout.total];
        for (i, (name, b)) in layout.names.iter().enumerate() {
            let dst = &mut values[b.range()];
            if let Some(t) = name.strip_prefix("fusion/") {
                let enc = encoders.table(t)?;
                if enc.fusion.len() != dst.len() {
                    return Err(GnnError::Dimension(format!("fusion matrix of '{t}'")));
                }
                dst.copy_from_slice(&enc.fusion);
            } else if !(name.contains("_b/") || name == "head/b") {
                dst.copy_from_slice(&uniform_init(seed, i as u64, b.rows, b.cols));
            }
        }
        Ok(HeteroGnn {
            shape,
            layout,
            params: ModelParams { values },
        })
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn num_params(&self) -> usize {
        self.layout.total
    }

    /// Named parameter blocks in storage order, e.g. `layer0/self_w/users`,
    /// `layer1/rel_w/<edge label>`, `head/w`.
    pub fn blocks(&self) -> &[(String, Block)] {
        &self.layout.names
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        let b = self.layout.names.iter().find(|(n, _)| n == name)?.1;
        Some(&self.params.values[b.range()])
    }

    pub fn block_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let b = self.layout.names.iter().find(|(n, _)| n == name)?.1;
        Some(&mut self.params.values[b.range()])
    }

    fn p(&self, b: Block) -> &[f64] {
        &self.params.values[b.range()]
    }

    fn check_graph(&self, cg: &ComputationGraph, inputs: &[NodeInput]) -> Result<(), GnnError> {
        let s = &self.shape;
        let bad = |m: String| Err(GnnError::Graph(m));
        if cg.hops as usize != s.layers {
            return bad(format!("graph has {} hops, model has {} layers", cg.hops, s.layers));
        }
        if cg.nodes.is_empty() {
            return bad("empty computation graph".into());
        }
        if inputs.len() != cg.nodes.len() {
            return Err(GnnError::Dimension(format!("{} inputs for {} nodes", inputs.len(), cg.nodes.len())));
        }
        for (n, x) in cg.nodes.iter().zip(inputs) {
            if n.node.table as usize != x.table || x.table >= s.tables.len() {
                return Err(GnnError::Dimension(format!("input table {} for node of table {}", x.table, n.node.table)));
            }
            if x.raw.len() != s.raw_dims[x.table] {
                return Err(GnnError::Dimension(format!(
                    "raw features of '{}' have {} entries, expected {}",
                    s.tables[x.table],
                    x.raw.len(),
                    s.raw_dims[x.table]
                )));
            }
            if x.raw.iter().any(|v| !v.is_finite()) || x.age.is_some_and(|a| !a.is_finite()) {
                return Err(GnnError::NonFinite(format!("input of table '{}'", s.tables[x.table])));
            }
            if n.depth as usize > s.layers {
                return bad(format!("node depth {} exceeds {} layers", n.depth, s.layers));
            }
        }
        for e in &cg.edges {
            let (src, dst, et) = (e.src as usize, e.dst as usize, e.edge_type as usize);
            if src >= cg.nodes.len() || dst >= cg.nodes.len() || et >= s.edges.len() {
                return bad(format!("edge {src}->{dst} of type {et} out of range"));
            }
            if s.edges[et] != (inputs[src].table, inputs[dst].table) {
                return bad(format!("edge {src}->{dst} does not match edge type {}", s.edge_labels[et]));
            }
            let (ds, dd) = (cg.nodes[src].depth as usize, cg.nodes[dst].depth as usize);
            if dd >= s.layers || ds > dd + 1 {
                return bad(format!("edge {src}->{dst} spans depths {ds}->{dd}"));
            }
        }
        Ok(())
    }

    /// Runs all layers on one computation graph.
    pub fn forward(&self, cg: &ComputationGraph, inputs: Vec<NodeInput>) -> Result<ForwardTrace, GnnError> {
        self.check_graph(cg, &inputs)?;
        let s = &self.shape;
        let ly = &self.layout;
        let n = cg.nodes.len();
        let big_l = s.layers;
        let depth: Vec<usize> = cg.nodes.iter().map(|c| c.depth as usize).collect();

        let mut grouped: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for e in &cg.edges {
            grouped.entry((e.dst as usize, e.edge_type as usize)).or_default().push(e.src as usize);
        }
        let mut groups: Vec<Vec<Group>> = vec![Vec::new(); n];
        for ((dst, edge_type), mut srcs) in grouped {
            srcs.sort_unstable();
            groups[dst].push(Group { edge_type, srcs });
        }

        let mut h = vec![vec![Vec::new(); n]; big_l + 1];
        for (v, x) in inputs.iter().enumerate() {
            let t = x.table;
            let mut h0 = vec![0.0; s.embed_dims[t]];
            matvec_add(self.p(ly.fusion[t]), s.raw_dims[t], &x.raw, &mut h0);
            if let (Some(b), Some(age)) = (ly.time[t], x.age) {
                h0.iter_mut().zip(self.p(b)).for_each(|(o, a)| *o += a * age);
            }
            h[0][v] = h0;
        }
        let mut z = vec![vec![Vec::new(); n]; big_l];
        let mut agg = vec![vec![Vec::new(); n]; big_l];
        let mut argmax = vec![vec![Vec::new(); n]; big_l];
        for l in 0..big_l {
            for v in 0..n {
                if depth[v] + l >= big_l {
                    continue;
                }
                let t = inputs[v].table;
                let mut zv = self.p(ly.self_b[l][t]).to_vec();
                matvec_add(self.p(ly.self_w[l][t]), s.dim(l, t), &h[l][v], &mut zv);
                let mut aggs = Vec::with_capacity(groups[v].len());
                let mut args = Vec::new();
                for g in &groups[v] {
                    let src_t = s.edges[g.edge_type].0;
                    let d = s.dim(l, src_t);
                    let mut a = vec![0.0; d];
                    match s.aggregator {
                        Aggregator::Sum | Aggregator::Mean => {
                            for &w in &g.srcs {
                                add_into(&mut a, &h[l][w]);
                            }
                            if s.aggregator == Aggregator::Mean {
                                let k = g.srcs.len() as f64;
                                a.iter_mut().for_each(|x| *x /= k);
                            }
                        }
                        Aggregator::Max => {
                            let mut win = vec![g.srcs[0]; d];
                            a.copy_from_slice(&h[l][g.srcs[0]]);
                            for &w in &g.srcs[1..] {
                                for j in 0..d {
                                    if h[l][w][j] > a[j] {
                                        a[j] = h[l][w][j];
                                        win[j] = w;
                                    }
                                }
                            }
                            args.push(win);
                        }
                    }
                    add_into(&mut zv, self.p(ly.rel_b[l][g.edge_type]));
                    matvec_add(self.p(ly.rel_w[l][g.edge_type]), d, &a, &mut zv);
                    aggs.push(a);
                }
                h[l + 1][v] = zv.iter().map(|x| x.max(0.0)).collect();
                z[l][v] = zv;
                agg[l][v] = aggs;
                argmax[l][v] = args;
            }
        }
        Ok(ForwardTrace {
            inputs,
            depth,
            groups,
            h,
            z,
            agg,
            argmax,
        })
    }

    /// Accumulates parameter gradients given the gradient of the seed's
    /// final embedding.
    pub fn backward(&self, trace: &ForwardTrace, d_out: &[f64], grads: &mut [f64]) -> Result<(), GnnError> {
        let s = &self.shape;
        let ly = &self.layout;
        let big_l = s.layers;
        if grads.len() != ly.total {
            return Err(GnnError::Dimension(format!("{} gradient slots for {} parameters", grads.len(), ly.total)));
        }
        if d_out.len() != trace.output().len() {
            return Err(GnnError::Dimension(format!(
                "output gradient has {} entries, embedding has {}",
                d_out.len(),
                trace.output().len()
            )));
        }
        let n = trace.inputs.len();
        let mut d_next: Vec<Vec<f64>> = vec![Vec::new(); n];
        d_next[0] = d_out.to_vec();
        for l in (0..big_l).rev() {
            let mut d_cur: Vec<Vec<f64>> = (0..n)
                .map(|v| {
                    if trace.depth[v] + l <= big_l {
                        vec![0.0; s.dim(l, trace.inputs[v].table)]
                    } else {
                        Vec::new()
                    }
                })
                .collect();
            for v in 0..n {
                if trace.depth[v] + l >= big_l || d_next[v].is_empty() {
                    continue;
                }
                let t = trace.inputs[v].table;
                let dz: Vec<f64> = d_next[v]
                    .iter()
                    .zip(&trace.z[l][v])
                    .map(|(g, zv)| if *zv > 0.0 { *g } else { 0.0 })
                    .collect();
                if dz.iter().all(|&x| x == 0.0) {
                    continue;
                }
                let hv = &trace.h[l][v];
                outer_add(&mut grads[ly.self_w[l][t].range()], &dz, hv);
                add_into(&mut grads[ly.self_b[l][t].range()], &dz);
                matvec_t_add(self.p(ly.self_w[l][t]), hv.len(), &dz, &mut d_cur[v]);
                for (gi, g) in trace.groups[v].iter().enumerate() {
                    let a = &trace.agg[l][v][gi];
                    outer_add(&mut grads[ly.rel_w[l][g.edge_type].range()], &dz, a);
                    add_into(&mut grads[ly.rel_b[l][g.edge_type].range()], &dz);
                    let mut da = vec![0.0; a.len()];
                    matvec_t_add(self.p(ly.rel_w[l][g.edge_type]), a.len(), &dz, &mut da);
                    match s.aggregator {
                        Aggregator::Sum => g.srcs.iter().for_each(|&w| add_into(&mut d_cur[w], &da)),
                        Aggregator::Mean => {
                            let k = g.srcs.len() as f64;
                            da.iter_mut().for_each(|x| *x /= k);
                            g.srcs.iter().for_each(|&w| add_into(&mut d_cur[w], &da));
                        }
                        Aggregator::Max => {
                            for (j, &w) in trace.argmax[l][v][gi].iter().enumerate() {
                                d_cur[w][j] += da[j];
                            }
                        }
                    }
                }
            }
            d_next = d_cur;
        }
        for (x, dh) in trace.inputs.iter().zip(&d_next) {
            if dh.is_empty() {
                continue;
            }
            outer_add(&mut grads[ly.fusion[x.table].range()], dh, &x.raw);
            if let (Some(b), Some(age)) = (ly.time[x.table], x.age) {
                grads[b.range()].iter_mut().zip(dh).for_each(|(g, d)| *g += d * age);
            }
        }
        Ok(())
    }

    /// `w · h + b`; a logit for binary heads.
    pub fn node_head(&self, h: &[f64]) -> Result<f64, GnnError> {
        let b = self.layout.head_b.ok_or_else(|| GnnError::Config("model has a link head".into()))?;
        if h.len() != self.layout.head_w.cols {
            return Err(GnnError::Dimension(format!("head expects {} entries, got {}", self.layout.head_w.cols, h.len())));
        }
        let w = self.p(self.layout.head_w);
        Ok(w.iter().zip(h).map(|(a, x)| a * x).sum::<f64>() + self.p(b)[0])
    }

    /// `h1ᵀ W h2`.
    pub fn link_head(&self, h1: &[f64], h2: &[f64]) -> Result<f64, GnnError> {
        let w = self.layout.head_w;
        if self.layout.head_b.is_some() {
            return Err(GnnError::Config("model has a node head".into()));
        }
        if h1.len() != w.rows || h2.len() != w.cols {
            return Err(GnnError::Dimension(format!(
                "link head is {}x{}, embeddings have {} and {} entries",
                w.rows,
                w.cols,
                h1.len(),
                h2.len()
            )));
        }
        let mut wh2 = vec![0.0; w.rows];
        matvec_add(self.p(w), w.cols, h2, &mut wh2);
        Ok(h1.iter().zip(&wh2).map(|(a, b)| a * b).sum())
    }

    /// Forward for one example: one graph for node heads, two (source and
    /// target) for the link head. Returns the raw head output.
    pub fn score(&self, parts: Vec<(&ComputationGraph, Vec<NodeInput>)>) -> Result<(f64, Vec<ForwardTrace>), GnnError> {
        let want = if self.shape.target.is_some() { 2 } else { 1 };
        if parts.len() != want {
            return Err(GnnError::Graph(format!("head needs {want} computation graphs, got {}", parts.len())));
        }
        let traces = parts
            .into_iter()
            .map(|(cg, x)| self.forward(cg, x))
            .collect::<Result<Vec<_>, _>>()?;
        for (tr, want_t) in traces.iter().zip([Some(self.shape.entity), self.shape.target]) {
            if Some(tr.inputs[0].table) != want_t {
                return Err(GnnError::Graph("seed node is not of the head's table".into()));
            }
        }
        let y = match traces.as_slice() {
            [a] => self.node_head(a.output())?,
            [a, b] => self.link_head(a.output(), b.output())?,
            _ => unreachable!(),
        };
        Ok((y, traces))
    }

    /// Gradient of `dy · score` accumulated into `grads`.
    pub fn score_backward(&self, traces: &[ForwardTrace], dy: f64, grads: &mut [f64]) -> Result<(), GnnError> {
        let ly = &self.layout;
        if grads.len() != ly.total {
            return Err(GnnError::Dimension(format!("{} gradient slots for {} parameters", grads.len(), ly.total)));
        }
        if dy == 0.0 {
            return Ok(());
        }
        match traces {
            [a] => {
                let h = a.output();
                let b = ly.head_b.ok_or_else(|| GnnError::Config("model has a link head".into()))?;
                grads[ly.head_w.range()].iter_mut().zip(h).for_each(|(g, x)| *g += dy * x);
                grads[b.offset] += dy;
                let dh: Vec<f64> = self.p(ly.head_w).iter().map(|w| dy * w).collect();
                self.backward(a, &dh, grads)
            }
            [a, b] => {
                let (h1, h2) = (a.output(), b.output());
                let w = ly.head_w;
                let scaled: Vec<f64> = h1.iter().map(|x| dy * x).collect();
                outer_add(&mut grads[w.range()], &scaled, h2);
                let mut dh1 = vec![0.0; w.rows];
                matvec_add(self.p(w), w.cols, h2, &mut dh1);
                dh1.iter_mut().for_each(|x| *x *= dy);
                let mut dh2 = vec![0.0; w.cols];
                matvec_t_add(self.p(w), w.cols, &scaled, &mut dh2);
                self.backward(a, &dh1, grads)?;
                self.backward(b, &dh2, grads)
            }
            _ => Err(GnnError::Graph(format!("expected 1 or 2 traces, got {}", traces.len()))),
        }
    }

    /// Sets the node head's bias.
    pub fn set_head_bias(&mut self, value: f64) {
        if let Some(b) = self.layout.head_b {
            self.params.values[b.offset] = value;
        }
    }
}
