//! Relational databases as temporal heterogeneous graphs.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! 1. [`store`] loads a multi-table database from CSV files and a JSON
//!    manifest, and checks referential integrity.
//! 2. [`schema`] derives the table-level graph with inverse links.
//! 3. [`graph`] materializes one node per row and one edge pair per
//!    non-null foreign key, with time-sorted adjacency.
//! 4. [`task`] builds training tables from historical data with
//!    leakage-free time splits.
//! 5. [`sampler`] draws bounded, time-consistent computation graphs.
//! 6. [`encoder`] turns row attributes into initial node embeddings.
//! 7. [`gnn`] runs heterogeneous message passing, with hand-written
//!    reverse mode and Adam.
//! 8. [`metrics`] scores predictions with MAE or average precision.
//!
//! [`synth`] generates an e-commerce database with a plantable churn
//! signal, and [`cli`] wires everything into the `relgraph` binary.

pub mod binio;
pub mod cli;
pub mod encoder;
pub mod gnn;
pub mod graph;
pub mod metrics;
pub mod rng;
pub mod sampler;
pub mod schema;
pub mod store;
pub mod synth;
pub mod task;
pub mod time;



pub use encoder::{fit_encoders, EncoderOptions, EncoderState};
pub use gnn::{HeteroGnn, ModelConfig, ModelParams};
pub use graph::{build_entity_graph, EntityGraph, NodeRef};
pub use metrics::{average_precision, mae, EvalReport};
pub use sampler::{sample, sample_batch, ComputationGraph, SamplerConfig, Strategy};
pub use schema::{build_schema_graph, SchemaGraph};
pub use store::{load_database, validate, Database, Table};
pub use synth::{generate, SynthConfig};
pub use task::{generate_training_table, SplitConfig, TaskSpec, TrainingTable};
pub use time::{Timestamp, SENTINEL_STATIC};
