//! Identification of self-admitted technical debt in source code comments.

pub mod active;
pub mod classifiers;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod matrix;
pub mod patterns;
pub mod pipeline;
pub mod session;
pub mod synthetic;
pub mod unsupervised;

pub use active::{Policy, PolicyConfig, SessionState, SessionTrace, StopReason};
pub use classifiers::{ClassifierSpec, FittedModel};
pub use corpus::{load_corpus, read_corpus, CommentRecord, Corpus, LabelMode, Vocabulary};
pub use error::{Error, Result};
pub use evaluation::{ConfusionCounts, FarMode, Metrics, RankTable};
pub use experiment::{run_lopo, ExperimentConfig, ExperimentResult};
pub use matrix::{FeatureMatrix, RowId};
pub use pipeline::{run_cell, CellReport, Dataset, FilterKind, RunOptions, Treatment};
pub use session::{CreateRequest, ExportFormat, Label, SessionStore};
