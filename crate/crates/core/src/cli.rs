//! The `relgraph` command line.
//!
//! Every subcommand writes its outputs plus a `run_manifest.json` (SHA-256
//! of every input file, seed, crate version) into `--out`. Flags override
//! the matching keys of the config files they accompany.
//!
//! Exit codes: 0 success, 1 validation or runtime failure, 2 usage error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::encoder::EncoderState;
use crate::gnn::{self, Aggregator, ModelConfig};
use crate::graph::{read_snapshot, write_snapshot, EntityGraph, NodeRef};
use crate::metrics::{evaluate, read_predictions, write_predictions, EvalReport, Prediction};
use crate::sampler::{sample_batch, SamplerConfig, Strategy};
use crate::schema::build_schema_graph;
use crate::store::{load_database, load_database_unchecked, read_manifest, validate, write_database, Database};
use crate::synth::{generate, SynthConfig};
use crate::task::{generate_training_table, read_table, write_table, Split, SplitConfig, TaskSpec, TaskTables, TrainingTable};
use crate::time::{parse_timestamp, SECONDS_PER_DAY};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "relgraph", version, about = "Relational databases as temporal heterogeneous graphs")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "REL_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic e-commerce database.
    Synth(SynthArgs),
    /// Check referential integrity and report null rates.
    Validate(ValidateArgs),
    /// Build the entity graph and write a binary snapshot.
    BuildGraph(BuildGraphArgs),
    /// Build train/val/test tables for a task.
    MakeTask(MakeTaskArgs),
    /// Sample computation graphs and write them as JSON lines.
    Sample(SampleArgs),
    /// Fit encoders and train the model.
    Train(TrainArgs),
    /// Predict a training table with a checkpoint.
    Predict(PredictArgs),
    /// Score a prediction file against a truth table.
    Evaluate(EvaluateArgs),
    /// Run synth, validate, build-graph, make-task, train, predict and evaluate.
    E2e(E2eArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Database manifest (JSON).
    #[arg(long)]
    manifest: PathBuf,
    /// Directory holding the table files; defaults to the manifest's directory.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Report directory; defaults to the data directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
struct SynthOverrides {
    #[arg(long)]
    n_customers: Option<usize>,
    #[arg(long)]
    n_products: Option<usize>,
    #[arg(long)]
    n_transactions: Option<usize>,
    #[arg(long)]
    signal_strength: Option<f64>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Generator config (JSON); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: SynthOverrides,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BuildGraphArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SplitArgs {
    /// Split config (JSON); defaults to the latest windows of the data.
    #[arg(long)]
    split: Option<PathBuf>,
    /// Number of historical training timestamps.
    #[arg(long)]
    strides: Option<usize>,
}

#[derive(Debug, Args)]
struct MakeTaskArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Task spec (JSON).
    #[arg(long)]
    task: PathBuf,
    #[command(flatten)]
    split: SplitArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrategyArg {
    Uniform,
    Ordered,
    Biased,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AggregatorArg {
    Mean,
    Sum,
    Max,
}

#[derive(Debug, Args, Default)]
struct SamplerOverrides {
    /// Per-hop fanouts, e.g. `10,10`.
    #[arg(long, value_delimiter = ',')]
    fanouts: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// Half-life of the biased strategy, in days.
    #[arg(long, default_value_t = 30.0)]
    half_life_days: f64,
}

impl SamplerOverrides {
    fn apply(&self, cfg: &mut SamplerConfig) {
        if let Some(f) = &self.fanouts {
            cfg.fanouts = f.clone();
        }
        if let Some(s) = self.strategy {
            cfg.strategy = match s {
                StrategyArg::Uniform => Strategy::Uniform,
                StrategyArg::Ordered => Strategy::Ordered,
                StrategyArg::Biased => Strategy::Biased {
                    half_life: self.half_life_days * SECONDS_PER_DAY as f64,
                },
            };
        }
    }
}

#[derive(Debug, Args)]
struct SampleArgs {
    /// Graph snapshot written by `build-graph`.
    #[arg(long)]
    graph: PathBuf,
    /// Seed table.
    #[arg(long)]
    table: String,
    /// Primary keys of the seed rows, e.g. `3,17`.
    #[arg(long, required = true, value_delimiter = ',')]
    key: Vec<i64>,
    /// Seed time (epoch seconds or ISO 8601).
    #[arg(long)]
    time: String,
    /// Sampler config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: SamplerOverrides,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Default)]
struct ModelOverrides {
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long, value_enum)]
    aggregator: Option<AggregatorArg>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[command(flatten)]
    sampler: SamplerOverrides,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    task: PathBuf,
    #[command(flatten)]
    split: SplitArgs,
    /// Model config (JSON); defaults apply when omitted.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Training table CSV; generated from the data when omitted.
    #[arg(long)]
    train_table: Option<PathBuf>,
    #[command(flatten)]
    overrides: ModelOverrides,
    /// Seeds both the sampler and the optimizer.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    task: PathBuf,
    /// Checkpoint written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Table to predict (CSV).
    #[arg(long)]
    table: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    task: PathBuf,
    /// Truth table (CSV).
    #[arg(long)]
    truth: PathBuf,
    /// Prediction file (CSV).
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct E2eArgs {
    #[arg(long)]
    synth_config: PathBuf,
    #[arg(long)]
    task: PathBuf,
    #[command(flatten)]
    split: SplitArgs,
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    synth: SynthOverrides,
    #[command(flatten)]
    overrides: ModelOverrides,
    /// Seeds the generator, the sampler and the optimizer.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Validation(String),
    Failed(String),
}

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Failed(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Serialize)]
struct RunManifest {
    command: String,
    version: &'static str,
    args: Vec<String>,
    seed: Option<u64>,
    threads: Option<usize>,
    /// Input path to SHA-256 hex digest.
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
}

struct Run {
    manifest: RunManifest,
    out: PathBuf,
}

impl Run {
    fn new(command: &str, args: &[String], threads: Option<usize>, out: &Path) -> CliResult<Run> {
        fs::create_dir_all(out).map_err(|e| CliError::Failed(format!("{}: {e}", out.display())))?;
        Ok(Run {
            manifest: RunManifest {
                command: command.to_string(),
                version: env!("CARGO_PKG_VERSION"),
                args: args.to_vec(),
                seed: None,
                threads,
                inputs: BTreeMap::new(),
                outputs: Vec::new(),
            },
            out: out.to_path_buf(),
        })
    }

    fn input(&mut self, path: &Path) -> CliResult<()> {
        let bytes = fs::read(path).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))?;
        self.manifest
            .inputs
            .insert(path.display().to_string(), hex::encode(Sha256::digest(&bytes)));
        Ok(())
    }

    fn data_input(&mut self, manifest: &Path, data: &Path) -> CliResult<()> {
        self.input(manifest)?;
        for t in read_manifest(manifest)?.tables {
            self.input(&data.join(t.file))?;
        }
        Ok(())
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.manifest.outputs.push(name.to_string());
        self.out.join(name)
    }

    fn finish(self) -> CliResult<()> {
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        write_file(&self.out.join("run_manifest.json"), &text)
    }
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))
}

fn require(path: &Path) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{} does not exist", path.display())))
    }
}

fn data_dir(d: &DataArgs) -> PathBuf {
    d.data
        .clone()
        .unwrap_or_else(|| d.manifest.parent().map(Path::to_path_buf).unwrap_or_default())
}

fn load_data(d: &DataArgs, run: &mut Run) -> CliResult<Database> {
    require(&d.manifest)?;
    let dir = data_dir(d);
    run.data_input(&d.manifest, &dir)?;
    load_database(&d.manifest, &dir).map_err(|e| CliError::Validation(e.to_string()))
}

fn load_task(path: &Path, run: &mut Run) -> CliResult<TaskSpec> {
    require(path)?;
    run.input(path)?;
    TaskSpec::load(path).map_err(|e| CliError::Usage(e.to_string()))
}

fn synth_config(path: Option<&Path>, o: &SynthOverrides, seed: Option<u64>, run: &mut Run) -> CliResult<SynthConfig> {
    let mut cfg = match path {
        Some(p) => {
            require(p)?;
            run.input(p)?;
            SynthConfig::load(p).map_err(|e| CliError::Usage(e.to_string()))?
        }
        None => SynthConfig::default(),
    };
    if let Some(v) = o.n_customers {
        cfg.n_customers = v;
    }
    if let Some(v) = o.n_products {
        cfg.n_products = v;
    }
    if let Some(v) = o.n_transactions {
        cfg.n_transactions = v;
    }
    if let Some(v) = o.signal_strength {
        cfg.signal_strength = v;
    }
    if let Some(v) = seed {
        cfg.seed = v;
    }
    cfg.check().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn model_config(path: Option<&Path>, o: &ModelOverrides, seed: Option<u64>, run: &mut Run) -> CliResult<ModelConfig> {
    let mut cfg = match path {
        Some(p) => {
            require(p)?;
            run.input(p)?;
            ModelConfig::load(p).map_err(|e| CliError::Usage(e.to_string()))?
        }
        None => ModelConfig::default(),
    };
    o.sampler.apply(&mut cfg.sampler);
    if let Some(v) = o.layers {
        cfg.layers = v;
    }
    if let Some(v) = o.hidden_dim {
        cfg.hidden_dim = v;
    }
    if let Some(a) = o.aggregator {
        cfg.aggregator = match a {
            AggregatorArg::Mean => Aggregator::Mean,
            AggregatorArg::Sum => Aggregator::Sum,
            AggregatorArg::Max => Aggregator::Max,
        };
    }
    if let Some(v) = o.steps {
        cfg.optimizer.steps = v;
    }
    if let Some(v) = o.learning_rate {
        cfg.optimizer.learning_rate = v;
    }
    if let Some(v) = o.batch_size {
        cfg.optimizer.batch_size = v;
    }
    if let Some(v) = seed {
        cfg.optimizer.seed = v;
        cfg.sampler.seed = v;
    }
    cfg.check().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn split_config(a: &SplitArgs, db: &Database, task: &TaskSpec, run: &mut Run) -> CliResult<SplitConfig> {
    let mut split = match &a.split {
        Some(p) => {
            require(p)?;
            run.input(p)?;
            SplitConfig::load(p).map_err(|e| CliError::Usage(e.to_string()))?
        }
        None => {
            let max = db
                .max_time()
                .ok_or_else(|| CliError::Failed("database has no timestamps; pass --split".into()))?;
            SplitConfig::latest(max, task.window, 3)
        }
    };
    if let Some(k) = a.strides {
        split.train_strides = k;
    }
    Ok(split)
}

fn write_tables(tables: &TaskTables, split: &SplitConfig, run: &mut Run) -> CliResult<()> {
    for t in [&tables.train, &tables.val, &tables.test] {
        write_table(t, &run.path(&format!("{}.csv", t.split.name())))?;
    }
    let text = serde_json::to_string_pretty(split).expect("split serializes");
    write_file(&run.path("split.json"), &text)?;
    for w in &tables.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn report_line(report: &EvalReport, split: Split) -> String {
    let mut v = serde_json::to_value(report).expect("report serializes");
    v["split"] = split.name().into();
    v.to_string()
}

fn cmd_synth(a: &SynthArgs, run: &mut Run) -> CliResult<()> {
    let cfg = synth_config(a.config.as_deref(), &a.overrides, a.seed, run)?;
    run.manifest.seed = Some(cfg.seed);
    let syn = generate(&cfg)?;
    let manifest = syn.write(&run.out)?;
    run.manifest.outputs.push("manifest.json".into());
    run.manifest.outputs.extend(manifest.tables.iter().map(|t| t.file.clone()));
    let counts: BTreeMap<_, _> = syn.db.tables().map(|t| (t.name().to_string(), t.len())).collect();
    println!("{}", serde_json::to_string(&counts).expect("counts serialize"));
    Ok(())
}

fn cmd_validate(a: &ValidateArgs, run: &mut Run) -> CliResult<()> {
    let a = &a.data;
    require(&a.manifest)?;
    let dir = data_dir(a);
    run.data_input(&a.manifest, &dir)?;
    let db = load_database_unchecked(&a.manifest, &dir).map_err(|e| CliError::Validation(e.to_string()))?;
    let report = validate(&db);
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&run.path("validation.json"), &text)?;
    println!("{text}");
    if report.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("{} integrity violations", report.violation_count())))
    }
}

#[derive(Serialize)]
struct GraphStats {
    nodes: BTreeMap<String, usize>,
    edges: BTreeMap<String, usize>,
    max_degree: usize,
}

fn graph_stats(g: &EntityGraph) -> GraphStats {
    let s = g.schema();
    GraphStats {
        nodes: (0..s.tables().len()).map(|t| (s.table_name(t).to_string(), g.table_len(t))).collect(),
        edges: (0..s.edge_types().len())
            .map(|e| (s.edge_label(e), g.adjacency(e).edge_count()))
            .collect(),
        max_degree: g.max_degree(),
    }
}

fn cmd_build_graph(a: &BuildGraphArgs, run: &mut Run) -> CliResult<EntityGraph> {
    let db = load_data(&a.data, run)?;
    build_graph(&db, run)
}

fn build_graph(db: &Database, run: &mut Run) -> CliResult<EntityGraph> {
    let schema = build_schema_graph(db);
    if !schema.is_connected() {
        eprintln!("warning: schema graph is not connected");
    }
    let g = crate::graph::build_entity_graph(db, &schema);
    write_snapshot(&g, &run.path("graph.bin"))?;
    write_file(&run.path("schema.dot"), &schema.to_dot())?;
    let stats = serde_json::to_string_pretty(&graph_stats(&g)).expect("stats serialize");
    write_file(&run.path("graph_stats.json"), &stats)?;
    println!("{}", serde_json::to_string(&graph_stats(&g)).expect("stats serialize"));
    Ok(g)
}

fn cmd_make_task(a: &MakeTaskArgs, run: &mut Run) -> CliResult<()> {
    let db = load_data(&a.data, run)?;
    let task = load_task(&a.task, run)?;
    let split = split_config(&a.split, &db, &task, run)?;
    let tables = generate_training_table(&db, &task, &split)?;
    write_tables(&tables, &split, run)?;
    println!(
        "{{\"train\":{},\"val\":{},\"test\":{}}}",
        tables.train.len(),
        tables.val.len(),
        tables.test.len()
    );
    Ok(())
}

fn cmd_sample(a: &SampleArgs, run: &mut Run) -> CliResult<()> {
    require(&a.graph)?;
    run.input(&a.graph)?;
    let g = read_snapshot(&a.graph)?;
    let mut cfg = match &a.config {
        Some(p) => {
            require(p)?;
            run.input(p)?;
            let text = fs::read_to_string(p).map_err(|e| CliError::Failed(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("sampler config: {e}")))?
        }
        None => ModelConfig::default().sampler,
    };
    a.overrides.apply(&mut cfg);
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.check().map_err(|e| CliError::Usage(e.to_string()))?;
    run.manifest.seed = Some(cfg.seed);
    let table = g
        .schema()
        .table_id(&a.table)
        .ok_or_else(|| CliError::Usage(format!("unknown table '{}'", a.table)))?;
    let t = parse_timestamp(&a.time).ok_or_else(|| CliError::Usage(format!("bad time '{}'", a.time)))?;
    let index = g.key_index(table);
    let seeds = a
        .key
        .iter()
        .map(|k| match index.get(k) {
            Some(&local) => Ok((NodeRef::new(table, local), t)),
            None => Err(CliError::Usage(format!("no row {k} in '{}'", a.table))),
        })
        .collect::<CliResult<Vec<_>>>()?;
    // seed i draws from stream i, as in training batches
    let graphs = sample_batch(&g, &seeds, &cfg);
    let mut text = String::new();
    for cg in &graphs {
        text.push_str(&cg.to_json(&g).to_string());
        text.push('\n');
    }
    write_file(&run.path("computation_graphs.jsonl"), &text)?;
    let nodes: usize = graphs.iter().map(|cg| cg.nodes.len()).sum();
    let edges: usize = graphs.iter().map(|cg| cg.edges.len()).sum();
    println!("{{\"graphs\":{},\"nodes\":{nodes},\"edges\":{edges}}}", graphs.len());
    Ok(())
}

struct Trained {
    model: gnn::HeteroGnn,
    config: ModelConfig,
    encoders: EncoderState,
}

fn train_and_save(
    db: &Database,
    graph: &EntityGraph,
    task: &TaskSpec,
    train: &TrainingTable,
    cutoff: crate::time::Timestamp,
    cfg: ModelConfig,
    run: &mut Run,
) -> CliResult<Trained> {
    let (outcome, encoders) = gnn::fit_model(db, graph, task, train, cutoff, &cfg)?;
    gnn::save_checkpoint(&run.path("model.bin"), &outcome.model, &cfg, &encoders)?;
    let mut curve = String::from("step,loss\n");
    for (i, l) in outcome.losses.iter().enumerate() {
        curve.push_str(&format!("{i},{l}\n"));
    }
    write_file(&run.path("loss_curve.csv"), &curve)?;
    write_file(&run.path("model_config.json"), &cfg.to_json())?;
    let path = run.path("encoders.bin");
    encoders.save(&path).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))?;
    Ok(Trained {
        model: outcome.model,
        config: cfg,
        encoders,
    })
}

fn cmd_train(a: &TrainArgs, run: &mut Run) -> CliResult<()> {
    let db = load_data(&a.data, run)?;
    let task = load_task(&a.task, run)?;
    let split = split_config(&a.split, &db, &task, run)?;
    let cfg = model_config(a.model.as_deref(), &a.overrides, a.seed, run)?;
    run.manifest.seed = Some(cfg.optimizer.seed);
    let train = match &a.train_table {
        Some(p) => {
            require(p)?;
            run.input(p)?;
            read_table(p, &task, Split::Train)?
        }
        None => generate_training_table(&db, &task, &split)?.train,
    };
    let graph = crate::graph::build_entity_graph(&db, &build_schema_graph(&db));
    let trained = train_and_save(&db, &graph, &task, &train, split.t_val, cfg, run)?;
    println!(
        "{{\"examples\":{},\"parameters\":{}}}",
        train.len(),
        trained.model.num_params()
    );
    Ok(())
}

fn cmd_predict(a: &PredictArgs, run: &mut Run) -> CliResult<()> {
    let db = load_data(&a.data, run)?;
    let task = load_task(&a.task, run)?;
    require(&a.checkpoint)?;
    require(&a.table)?;
    run.input(&a.checkpoint)?;
    run.input(&a.table)?;
    let graph = crate::graph::build_entity_graph(&db, &build_schema_graph(&db));
    let (model, cfg, encoders) = gnn::load_checkpoint(&a.checkpoint, &graph)?;
    run.manifest.seed = Some(cfg.sampler.seed);
    let table = read_table(&a.table, &task, Split::Val)?;
    let features = encoders.raw_matrix(&db)?;
    let preds = gnn::predict(&model, &cfg, &graph, &features, &table)?;
    write_predictions(&preds, &run.path("predictions.csv"))?;
    println!("{{\"predictions\":{}}}", preds.len());
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs, run: &mut Run) -> CliResult<()> {
    let task = load_task(&a.task, run)?;
    require(&a.truth)?;
    require(&a.predictions)?;
    run.input(&a.truth)?;
    run.input(&a.predictions)?;
    let truth = read_table(&a.truth, &task, Split::Val)?;
    let preds: Vec<Prediction> = read_predictions(&a.predictions)?;
    let report = evaluate(&task, &truth, &preds)?;
    let line = report.to_json_line();
    write_file(&run.path("report.json"), &format!("{line}\n"))?;
    println!("{line}");
    Ok(())
}

fn cmd_e2e(a: &E2eArgs, run: &mut Run) -> CliResult<()> {
    let synth_cfg = synth_config(Some(&a.synth_config), &a.synth, a.seed, run)?;
    let task = load_task(&a.task, run)?;
    let cfg = model_config(a.model.as_deref(), &a.overrides, a.seed, run)?;
    run.manifest.seed = Some(synth_cfg.seed);

    let syn = generate(&synth_cfg)?;
    let data_dir = run.path("data");
    write_database(&syn.db, &data_dir)?;
    let db = load_database(&data_dir.join("manifest.json"), &data_dir).map_err(|e| CliError::Validation(e.to_string()))?;
    let report = validate(&db);
    if !report.is_empty() {
        return Err(CliError::Validation(format!("{} integrity violations", report.violation_count())));
    }
    let graph = build_graph(&db, run)?;
    let split = split_config(&a.split, &db, &task, run)?;
    let tables = generate_training_table(&db, &task, &split)?;
    write_tables(&tables, &split, run)?;
    let trained = train_and_save(&db, &graph, &task, &tables.train, split.t_val, cfg, run)?;
    let features = trained.encoders.raw_matrix(&db)?;
    for table in [&tables.val, &tables.test] {
        let name = table.split.name();
        let preds = gnn::predict(&trained.model, &trained.config, &graph, &features, table)?;
        write_predictions(&preds, &run.path(&format!("predictions_{name}.csv")))?;
        match evaluate(&task, table, &preds) {
            Ok(report) => {
                let line = report_line(&report, table.split);
                write_file(&run.path(&format!("report_{name}.json")), &format!("{line}\n"))?;
                println!("{line}");
            }
            Err(e) => eprintln!("warning: {name} split not scored: {e}"),
        }
    }
    Ok(())
}

fn dispatch(cli: &Cli, args: &[String]) -> CliResult<()> {
    let (name, out) = match &cli.command {
        Command::Synth(a) => ("synth", a.out.clone()),
        Command::Validate(a) => ("validate", a.out.clone().unwrap_or_else(|| data_dir(&a.data))),
        Command::BuildGraph(a) => ("build-graph", a.out.clone()),
        Command::MakeTask(a) => ("make-task", a.out.clone()),
        Command::Sample(a) => ("sample", a.out.clone()),
        Command::Train(a) => ("train", a.out.clone()),
        Command::Predict(a) => ("predict", a.out.clone()),
        Command::Evaluate(a) => ("evaluate", a.out.clone()),
        Command::E2e(a) => ("e2e", a.out.clone()),
    };
    let mut run = Run::new(name, args, cli.threads, &out)?;
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a, &mut run),
        Command::Validate(a) => cmd_validate(a, &mut run),
        Command::BuildGraph(a) => cmd_build_graph(a, &mut run).map(|_| ()),
        Command::MakeTask(a) => cmd_make_task(a, &mut run),
        Command::Sample(a) => cmd_sample(a, &mut run),
        Command::Train(a) => cmd_train(a, &mut run),
        Command::Predict(a) => cmd_predict(a, &mut run),
        Command::Evaluate(a) => cmd_evaluate(a, &mut run),
        Command::E2e(a) => cmd_e2e(a, &mut run),
    };
    match result {
        Ok(()) => run.finish(),
        // validation failures still leave a manifest behind
        Err(CliError::Validation(m)) => {
            run.finish()?;
            Err(CliError::Validation(m))
        }
        Err(e) => Err(e),
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let shown: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return EXIT_USAGE;
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FAILURE;
        }
    };
    let result = pool.install(|| dispatch(&cli, &shown));
    let _ = std::io::stdout().flush();
    match result {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(CliError::Validation(m)) => {
            eprintln!("validation failed: {m}");
            EXIT_FAILURE
        }
        Err(CliError::Failed(m)) => {
            eprintln!("error: {m}");
            EXIT_FAILURE
        }
    }
}
