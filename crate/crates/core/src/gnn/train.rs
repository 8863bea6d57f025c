use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::loss::{loss, sigmoid};
use super::model::{gather_inputs, HeteroGnn, ModelShape};
use super::{GnnError, HeadKind, ModelConfig, OptimizerConfig};
use crate::binio::*;
use crate::encoder::{fit_encoders, EncoderState, RawFeatures};
use crate::graph::{EntityGraph, NodeRef};
use crate::metrics::{write_predictions, Prediction};
use crate::rng::{mix_seed, stream_rng};
use crate::sampler::{sample_batch, ComputationGraph, SamplerConfig};
use crate::store::Database;
use crate::task::{TaskSpec, TrainingTable};
use crate::time::Timestamp;

const MAGIC: &[u8; 8] = b"RELPARAM";
const VERSION: u64 = 1;
/// Examples per gradient chunk; chunk sums are added in chunk order so the
/// result does not depend on the thread count.
const CHUNK: usize = 8;

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    cfg: OptimizerConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, cfg: &OptimizerConfig) -> Self {
        Adam {
            cfg: cfg.clone(),
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c = &self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * grads[i];
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: HeteroGnn,
    /// Mean batch loss per step.
    pub losses: Vec<f64>,
}

/// Seed nodes of every example: `[entity]` or `[entity, target]`.
fn resolve(graph: &EntityGraph, model: &HeteroGnn, table: &TrainingTable) -> Result<Vec<(Vec<NodeRef>, Timestamp)>, GnnError> {
    let shape = model.shape();
    let lookup = |t: usize| graph.key_index(t);
    let ent_index = lookup(shape.entity);
    let tgt_index = shape.target.map(lookup);
    let find = |t: usize, idx: &std::collections::HashMap<i64, u32>, key: i64| {
        idx.get(&key).map(|&l| NodeRef::new(t, l)).ok_or_else(|| GnnError::UnknownEntity {
            table: shape.tables[t].clone(),
            key,
        })
    };
    table
        .examples
        .iter()
        .map(|e| {
            let mut seeds = vec![find(shape.entity, &ent_index, e.entity)?];
            match (shape.target, &tgt_index, e.target) {
                (Some(t), Some(idx), Some(k)) => seeds.push(find(t, idx, k)?),
                (None, None, None) => {}
                _ => {
                    return Err(GnnError::Config(format!(
                        "head '{}' does not match a {} table",
                        shape.head.name(),
                        if e.target.is_some() { "link-level" } else { "node-level" }
                    )))
                }
            }
            Ok((seeds, e.time))
        })
        .collect()
}

/// Samples all graphs of a batch; example `i`'s `j`-th seed uses stream
/// `i * seeds + j`.
fn sample_examples(
    graph: &EntityGraph,
    examples: &[&(Vec<NodeRef>, Timestamp)],
    sampler: &SamplerConfig,
) -> Vec<Vec<ComputationGraph>> {
    let flat: Vec<(NodeRef, Timestamp)> = examples
        .iter()
        .flat_map(|(seeds, t)| seeds.iter().map(move |&s| (s, *t)))
        .collect();
    let mut cgs = sample_batch(graph, &flat, sampler).into_iter();
    examples
        .iter()
        .map(|(seeds, _)| cgs.by_ref().take(seeds.len()).collect())
        .collect()
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Mini-batch training: sample → encode → forward → loss → backward → Adam.
///
/// Batches walk a per-epoch seeded permutation of the examples; step `s`
/// samples with seed `mix(sampler.seed, s)`. The node head's bias starts at
/// the train-label median (regression) or the prevalence logit (binary).
pub fn train(
    graph: &EntityGraph,
    encoders: &EncoderState,
    features: &RawFeatures,
    table: &TrainingTable,
    cfg: &ModelConfig,
    head: HeadKind,
) -> Result<TrainOutcome, GnnError> {
    let shape = ModelShape::new(graph.schema(), encoders, cfg, head, &table.entity_table)?;
    let mut model = HeteroGnn::new(shape, encoders, cfg.optimizer.seed)?;
    if table.is_empty() {
        return Err(GnnError::Config("training table is empty".into()));
    }
    let examples = resolve(graph, &model, table)?;
    let labels = table.labels();
    if let Some(y) = labels.iter().find(|y| !y.is_finite()) {
        return Err(GnnError::NonFinite(format!("training label {y}")));
    }
    match head {
        HeadKind::NodeRegression => model.set_head_bias(median(&labels)),
        HeadKind::NodeBinary => {
            let p = (labels.iter().sum::<f64>() / labels.len() as f64).clamp(1e-3, 1.0 - 1e-3);
            model.set_head_bias((p / (1.0 - p)).ln());
        }
        HeadKind::LinkScore => {}
    }

    let opt = &cfg.optimizer;
    let loss_kind = head.loss();
    let mut adam = Adam::new(model.num_params(), opt);
    let mut losses = Vec::with_capacity(opt.steps);
    let n = examples.len();
    let batch = opt.batch_size.min(n);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = n;
    let mut epoch = 0u64;
    for step in 0..opt.steps {
        let mut picked = Vec::with_capacity(batch);
        while picked.len() < batch {
            if cursor == n {
                order = (0..n).collect();
                order.shuffle(&mut stream_rng(mix_seed(opt.seed, epoch), 0));
                epoch += 1;
                cursor = 0;
            }
            picked.push(order[cursor]);
            cursor += 1;
        }
        let sampler = SamplerConfig {
            seed: mix_seed(cfg.sampler.seed, step as u64),
            ..cfg.sampler.clone()
        };
        let batch_examples: Vec<_> = picked.iter().map(|&i| &examples[i]).collect();
        let graphs = sample_examples(graph, &batch_examples, &sampler);
        let items: Vec<(usize, &Vec<ComputationGraph>)> = picked.iter().copied().zip(&graphs).collect();
        let chunks = items
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut g = vec![0.0; model.num_params()];
                let mut total = 0.0;
                for &(i, cgs) in chunk {
                    let parts = cgs.iter().map(|cg| (cg, gather_inputs(graph, features, cg))).collect();
                    let (y_hat, traces) = model.score(parts)?;
                    let (l, dl) = loss(loss_kind, y_hat, labels[i])?;
                    total += l;
                    model.score_backward(&traces, dl, &mut g)?;
                }
                Ok((total, g))
            })
            .collect::<Result<Vec<_>, GnnError>>()?;
        let mut grads = vec![0.0; model.num_params()];
        let mut total = 0.0;
        for (l, g) in chunks {
            total += l;
            grads.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        let scale = 1.0 / batch as f64;
        grads.iter_mut().for_each(|g| *g *= scale);
        let mean_loss = total * scale;
        if !mean_loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(GnnError::Diverged { step, loss: mean_loss });
        }
        losses.push(mean_loss);
        log::debug!("step {step} loss {mean_loss:.6}");
        adam.step(&mut model.params.values, &grads);
    }
    Ok(TrainOutcome { model, losses })
}

/// Fits encoders on rows up to `cutoff`, then trains.
pub fn fit_model(
    db: &Database,
    graph: &EntityGraph,
    task: &TaskSpec,
    table: &TrainingTable,
    cutoff: Timestamp,
    cfg: &ModelConfig,
) -> Result<(TrainOutcome, EncoderState), GnnError> {
    cfg.check()?;
    let encoders = fit_encoders(db, cutoff, &cfg.encoder_options())?;
    let features = encoders.raw_matrix(db)?;
    let head = cfg.head_for(task, table.is_link_level());
    let outcome = train(graph, &encoders, &features, table, cfg, head)?;
    Ok((outcome, encoders))
}

/// One prediction per example, in table order: probabilities for binary and
/// link heads, raw values for regression. Example `i` samples from stream
/// `i` (times seeds per example) of the configured sampler seed.
pub fn predict(
    model: &HeteroGnn,
    cfg: &ModelConfig,
    graph: &EntityGraph,
    features: &RawFeatures,
    table: &TrainingTable,
) -> Result<Vec<Prediction>, GnnError> {
    let examples = resolve(graph, model, table)?;
    let refs: Vec<_> = examples.iter().collect();
    let graphs = sample_examples(graph, &refs, &cfg.sampler);
    let head = model.shape().head;
    graphs
        .par_iter()
        .zip(&table.examples)
        .map(|(cgs, e)| {
            let parts = cgs.iter().map(|cg| (cg, gather_inputs(graph, features, cg))).collect();
            let (y, _) = model.score(parts)?;
            Ok(Prediction {
                entity: e.entity,
                target: e.target,
                time: e.time,
                value: if head == HeadKind::NodeRegression { y } else { sigmoid(y) },
            })
        })
        .collect()
}

pub fn predict_to_file(
    model: &HeteroGnn,
    cfg: &ModelConfig,
    graph: &EntityGraph,
    features: &RawFeatures,
    table: &TrainingTable,
    path: &Path,
) -> Result<Vec<Prediction>, GnnError> {
    let preds = predict(model, cfg, graph, features, table)?;
    write_predictions(&preds, path).map_err(|e| GnnError::Checkpoint(e.to_string()))?;
    Ok(preds)
}

/// Writes config, entity table, encoders and parameters to one file.
pub fn save_checkpoint(path: &Path, model: &HeteroGnn, cfg: &ModelConfig, encoders: &EncoderState) -> Result<(), GnnError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, MAGIC, VERSION)?;
    let shape = model.shape();
    let cfg = ModelConfig {
        head: Some(shape.head),
        ..cfg.clone()
    };
    write_str(&mut w, &serde_json::to_string(&cfg).expect("config serializes"))?;
    write_str(&mut w, &shape.tables[shape.entity])?;
    encoders.write_to(&mut w)?;
    write_f64_slice(&mut w, &model.params.values)?;
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint against the graph it will run on.
pub fn load_checkpoint(path: &Path, graph: &EntityGraph) -> Result<(HeteroGnn, ModelConfig, EncoderState), GnnError> {
    let mut r = BufReader::new(File::open(path)?);
    read_checkpoint(&mut r, graph)
}

fn read_checkpoint<R: Read>(r: &mut R, graph: &EntityGraph) -> Result<(HeteroGnn, ModelConfig, EncoderState), GnnError> {
    expect_header(r, MAGIC, VERSION)?;
    let cfg = ModelConfig::from_json(&read_str(r)?)?;
    let entity = read_str(r)?;
    let encoders = EncoderState::read_from(r)?;
    let values = read_f64_vec(r)?;
    let head = cfg.head.ok_or_else(|| GnnError::Checkpoint("missing head kind".into()))?;
    let shape = ModelShape::new(graph.schema(), &encoders, &cfg, head, &entity)?;
    let mut model = HeteroGnn::new(shape, &encoders, 0)?;
    if values.len() != model.num_params() {
        return Err(GnnError::Checkpoint(format!(
            "{} stored parameters, model expects {}",
            values.len(),
            model.num_params()
        )));
    }
    model.params.values = values;
    Ok((model, cfg, encoders))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::Aggregator;
    use crate::graph::build_entity_graph;
    use crate::sampler::Strategy;
    use crate::schema::build_schema_graph;
    use crate::store::fixtures::shop;
    use crate::task::{Split, TrainingExample};

    fn setup() -> (Database, EntityGraph) {
        let db = shop();
        let g = build_entity_graph(&db, &build_schema_graph(&db));
        (db, g)
    }

    fn small_cfg(steps: usize, lr: f64) -> ModelConfig {
        ModelConfig {
            layers: 2,
            hidden_dim: 4,
            embed_dim: 4,
            text_dim: 4,
            aggregator: Aggregator::Mean,
            sampler: SamplerConfig::new(vec![4, 4], Strategy::Uniform, 3),
            optimizer: OptimizerConfig {
                learning_rate: lr,
                steps,
                batch_size: 2,
                seed: 11,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    fn churn_table(examples: Vec<TrainingExample>) -> TrainingTable {
        TrainingTable {
            task: "churn".into(),
            entity_table: "customers".into(),
            split: Split::Train,
            examples,
        }
    }

    fn run(db: &Database, g: &EntityGraph, table: &TrainingTable, cfg: &ModelConfig) -> Result<(TrainOutcome, EncoderState), GnnError> {
        let enc = fit_encoders(db, 25, &cfg.encoder_options())?;
        let feats = enc.raw_matrix(db)?;
        let out = train(g, &enc, &feats, table, cfg, HeadKind::NodeBinary)?;
        Ok((out, enc))
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let (db, g) = setup();
        let table = churn_table(vec![TrainingExample::node(1, 25, 1.0), TrainingExample::node(2, 25, 0.0)]);
        let cfg = small_cfg(0, 0.0);
        let (before, _) = run(&db, &g, &table, &cfg).unwrap();
        let (after, _) = run(&db, &g, &table, &small_cfg(7, 0.0)).unwrap();
        assert_eq!(before.model.params, after.model.params);
        assert_eq!(after.losses.len(), 7);
    }

    #[test]
    fn single_example_overfits() {
        let (db, g) = setup();
        let table = churn_table(vec![TrainingExample::node(1, 25, 1.0)]);
        let mut cfg = small_cfg(200, 0.05);
        cfg.optimizer.batch_size = 1;
        let (out, _) = run(&db, &g, &table, &cfg).unwrap();
        assert!(*out.losses.last().unwrap() < 1e-2, "{:?}", &out.losses[190..]);
    }

    #[test]
    fn training_is_deterministic() {
        let (db, g) = setup();
        let table = churn_table(vec![
            TrainingExample::node(1, 25, 1.0),
            TrainingExample::node(2, 25, 0.0),
            TrainingExample::node(1, 15, 0.0),
        ]);
        let cfg = small_cfg(20, 0.01);
        let a = run(&db, &g, &table, &cfg).unwrap().0;
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run(&db, &g, &table, &cfg).unwrap().0);
        assert_eq!(a.model.params, b.model.params);
        assert_eq!(a.losses, b.losses);
    }

    #[test]
    fn unknown_entity_and_empty_table() {
        let (db, g) = setup();
        let cfg = small_cfg(1, 0.01);
        let bad = churn_table(vec![TrainingExample::node(99, 25, 1.0)]);
        assert!(matches!(run(&db, &g, &bad, &cfg), Err(GnnError::UnknownEntity { key: 99, .. })));
        assert!(matches!(run(&db, &g, &churn_table(vec![]), &cfg), Err(GnnError::Config(_))));
    }

    #[test]
    fn predict_and_checkpoint() {
        let (db, g) = setup();
        let table = churn_table(vec![TrainingExample::node(2, 25, 0.0), TrainingExample::node(1, 25, 1.0)]);
        let cfg = small_cfg(5, 0.01);
        let (out, enc) = run(&db, &g, &table, &cfg).unwrap();
        let feats = enc.raw_matrix(&db).unwrap();
        let preds = predict(&out.model, &cfg, &g, &feats, &table).unwrap();
        let keys: Vec<i64> = preds.iter().map(|p| p.entity).collect();
        assert_eq!(keys, [2, 1]);
        assert!(preds.iter().all(|p| p.value > 0.0 && p.value < 1.0));
        assert!(predict(&out.model, &cfg, &g, &feats, &churn_table(vec![])).unwrap().is_empty());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_checkpoint(&path, &out.model, &cfg, &enc).unwrap();
        let (m2, cfg2, enc2) = load_checkpoint(&path, &g).unwrap();
        assert_eq!(m2.params, out.model.params);
        assert_eq!(enc2, enc);
        assert_eq!(predict(&m2, &cfg2, &g, &feats, &table).unwrap(), preds);

        let csv = dir.path().join("p.csv");
        predict_to_file(&m2, &cfg2, &g, &feats, &churn_table(vec![]), &csv).unwrap();
        assert_eq!(std::fs::read_to_string(&csv).unwrap(), "EntityID,Time,Prediction\n");
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let cfg = OptimizerConfig {
            learning_rate: 0.1,
            ..Default::default()
        };
        let mut adam = Adam::new(2, &cfg);
        let mut p = vec![1.0, 1.0];
        adam.step(&mut p, &[2.0, -0.5]);
        assert!((p[0] - 0.9).abs() < 1e-8 && (p[1] - 1.1).abs() < 1e-8);
    }

    #[test]
    fn median_of_labels() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
