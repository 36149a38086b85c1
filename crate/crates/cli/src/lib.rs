//! Command-line front end: ingestion, one-shot labelers, simulations,
//! experiments and the session service.

pub mod server;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use debtfree_core::active::{Policy, PolicyConfig};
use debtfree_core::corpus::{load_corpus, Corpus, LabelMode, DEFAULT_MAX_FEATURES};
use debtfree_core::evaluation::FarMode;
use debtfree_core::experiment::{run_lopo, ExperimentConfig};
use debtfree_core::patterns::easy_fit;
use debtfree_core::pipeline::{run_cell, Dataset, FilterKind, RunOptions, Treatment};
use debtfree_core::session::SessionStore;
use debtfree_core::synthetic::{generate, SyntheticSpec};
use debtfree_core::{Error, StopReason};

pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "debtfree",
    version,
    about = "Find self-admitted technical debt in code comments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a corpus and print per-project comment and SATD counts.
    Ingest {
        #[arg(long)]
        csv: PathBuf,
        /// Ignore the classification column.
        #[arg(long)]
        unlabeled: bool,
    },
    /// Label a target project with the unsupervised CLA labeler.
    Cla(OneShot),
    /// Label a target project with keyword patterns learned from the other projects.
    Easy(OneShot),
    /// Run one active-learning session with the ground truth answering queries.
    Simulate(Simulate),
    /// Run a leave-one-project-out experiment from a JSON config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
    },
    /// Serve labeling sessions over HTTP.
    Serve(Serve),
    /// Write a synthetic labeled corpus.
    Synth(Synth),
}

#[derive(Debug, Args)]
pub struct OneShot {
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long)]
    pub target: String,
    #[arg(long, value_enum, default_value_t = FarArg::Standard)]
    pub far: FarArg,
    /// Write the per-comment predictions as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolicyArg {
    Emblem,
    Hard,
    Falcon,
}

impl From<PolicyArg> for Policy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Emblem => Policy::Emblem,
            PolicyArg::Hard => Policy::Hard,
            PolicyArg::Falcon => Policy::Falcon,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PseudoArg {
    Cla,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FilterArg {
    Cla,
    Easy,
}

impl From<FilterArg> for FilterKind {
    fn from(f: FilterArg) -> Self {
        match f {
            FilterArg::Cla => FilterKind::Cla,
            FilterArg::Easy => FilterKind::Easy,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FarArg {
    /// fp / (fp + tn)
    Standard,
    /// fp / (tp + tn)
    Literal,
}

impl From<FarArg> for FarMode {
    fn from(f: FarArg) -> Self {
        match f {
            FarArg::Standard => FarMode::Standard,
            FarArg::Literal => FarMode::Literal,
        }
    }
}

#[derive(Debug, Args)]
pub struct Simulate {
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long)]
    pub target: String,
    #[arg(long, value_enum)]
    pub policy: PolicyArg,
    /// Pseudo-label the training projects instead of using their labels.
    #[arg(long, value_enum)]
    pub pseudo_label: Option<PseudoArg>,
    /// Auto-label the target's obvious SATD before reviewing.
    #[arg(long, value_enum)]
    pub filter: Option<FilterArg>,
    #[arg(long, default_value_t = 0.9)]
    pub target_recall: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub retrain_every: usize,
    #[arg(long, default_value_t = 100)]
    pub n_trees: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_FEATURES)]
    pub max_features: usize,
    #[arg(long, value_enum, default_value_t = FarArg::Standard)]
    pub far: FarArg,
}

#[derive(Debug, Args)]
pub struct Serve {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Session logs live here; sessions found on startup are replayed.
    #[arg(long, default_value = "sessions")]
    pub state_dir: PathBuf,
    /// Built review UI to serve under `/`.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
    #[arg(long)]
    pub unlabeled: bool,
    #[arg(long, default_value_t = DEFAULT_MAX_FEATURES)]
    pub max_features: usize,
}

#[derive(Debug, Args)]
pub struct Synth {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub projects: usize,
    #[arg(long, default_value_t = 500)]
    pub comments: usize,
    #[arg(long, default_value_t = 25)]
    pub satd: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Exit code for an error chain: 1 when the input was invalid, 2 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let validation = err.chain().any(|e| {
        matches!(
            e.downcast_ref::<Error>(),
            Some(
                Error::Config(_)
                    | Error::Csv(_)
                    | Error::MissingColumn(_)
                    | Error::BadRow { .. }
                    | Error::EmptyCorpus
                    | Error::EmptyVocabulary
                    | Error::UnknownProject { .. }
                    | Error::Json(_)
                    | Error::Io { .. }
            )
        )
    });
    if validation {
        EXIT_VALIDATION
    } else {
        EXIT_RUNTIME
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Ingest { csv, unlabeled } => ingest(&csv, unlabeled),
        Command::Cla(a) => one_shot(a, Treatment::Cla),
        Command::Easy(a) => one_shot(a, Treatment::Easy),
        Command::Simulate(a) => simulate(a),
        Command::Experiment { config } => experiment(&config),
        Command::Serve(a) => serve(a),
        Command::Synth(a) => synth(a),
    }
}

fn load(csv: &Path, unlabeled: bool) -> anyhow::Result<Corpus> {
    let mode = if unlabeled {
        LabelMode::Unlabeled
    } else {
        LabelMode::Labeled
    };
    Ok(load_corpus(csv, mode)?)
}

fn ingest(csv: &Path, unlabeled: bool) -> anyhow::Result<()> {
    let corpus = load(csv, unlabeled)?;
    println!(
        "{:<24} {:>9} {:>7} {:>8}",
        "project", "comments", "satd", "satd %"
    );
    let (mut total, mut total_satd) = (0usize, Some(0usize));
    for s in corpus.summary() {
        let (satd, ratio) = match s.satd {
            Some(n) => (
                n.to_string(),
                format!("{:.2}", 100.0 * n as f64 / s.comments as f64),
            ),
            None => ("-".into(), "-".into()),
        };
        println!(
            "{:<24} {:>9} {:>7} {:>8}",
            s.project, s.comments, satd, ratio
        );
        total += s.comments;
        total_satd = total_satd.zip(s.satd).map(|(a, b)| a + b);
    }
    match total_satd {
        Some(n) => println!(
            "{:<24} {:>9} {:>7} {:>8.2}",
            "SUM",
            total,
            n,
            100.0 * n as f64 / total as f64
        ),
        None => println!("{:<24} {:>9} {:>7} {:>8}", "SUM", total, "-", "-"),
    }
    if corpus.ignored_labels() {
        println!("note: classification column present but ignored (--unlabeled)");
    }
    if corpus.skipped_blank() > 0 {
        println!("note: skipped {} blank comments", corpus.skipped_blank());
    }
    Ok(())
}

fn one_shot(a: OneShot, treatment: Treatment) -> anyhow::Result<()> {
    let corpus = load(&a.csv, false)?;
    let ds = Dataset::new(corpus, DEFAULT_MAX_FEATURES)?;
    if treatment == Treatment::Easy {
        let (_, train_rows) = ds.split(&a.target)?;
        let labels = ds
            .corpus
            .subset(&train_rows)
            .truth()
            .ok_or_else(|| Error::Config("Easy needs labeled training projects".into()))?;
        for p in easy_fit(&ds.corpus.subset(&train_rows), &labels)? {
            println!(
                "pattern {:<16} precision {:.3} ({} of {})",
                p.token, p.precision, p.true_positives, p.support
            );
        }
    }
    let opts = RunOptions {
        far_mode: a.far.into(),
        ..RunOptions::default()
    };
    let cell = run_cell(&ds, &treatment.name(), treatment, &a.target, 0, &opts)?;
    print_report(&cell.report)?;
    if let Some(out) = a.out {
        let (test_rows, _) = ds.split(&a.target)?;
        let mut w = csv::Writer::from_path(&out)
            .with_context(|| format!("cannot create {}", out.display()))?;
        w.write_record(["comment_id", "predicted"])?;
        for (i, &p) in cell.predicted.iter().enumerate() {
            let id = ds.corpus.records()[test_rows[i]].comment_id;
            w.write_record([id.to_string(), debtfree_core::active::label_name(p).into()])?;
        }
        w.flush()?;
    }
    Ok(())
}

fn print_report(r: &debtfree_core::CellReport) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(r)?);
    Ok(())
}

fn simulate(a: Simulate) -> anyhow::Result<()> {
    let corpus = load(&a.csv, false)?;
    if !corpus.is_labeled() {
        return Err(Error::Config("simulation needs a labeled corpus".into()).into());
    }
    let ds = Dataset::new(corpus, a.max_features)?;
    let treatment = Treatment::Active {
        pseudo_label: a.pseudo_label.is_some(),
        filter: a.filter.map(Into::into),
        policy: a.policy.into(),
    };
    let opts = RunOptions {
        policy: PolicyConfig {
            target_recall: a.target_recall,
            retrain_every: a.retrain_every,
            n_trees: a.n_trees,
            ..PolicyConfig::default()
        },
        far_mode: a.far.into(),
    };
    let cell = run_cell(&ds, &treatment.name(), treatment, &a.target, a.seed, &opts)?;
    std::fs::create_dir_all(&a.out)
        .with_context(|| format!("cannot create {}", a.out.display()))?;
    let report_path = a.out.join("report.json");
    std::fs::write(&report_path, serde_json::to_vec_pretty(&cell.report)?)
        .with_context(|| format!("cannot write {}", report_path.display()))?;
    let trace_path = a.out.join("trace.csv");
    let f = std::fs::File::create(&trace_path)
        .with_context(|| format!("cannot write {}", trace_path.display()))?;
    match &cell.trace {
        Some(t) => t.write_csv(f)?,
        None => debtfree_core::SessionTrace {
            entries: Vec::new(),
            stop_reason: Some(StopReason::PoolExhausted),
            pool_size: 0,
            final_estimate: 0.0,
            separated: false,
            estimator_converged: true,
        }
        .write_csv(f)?,
    }
    let r = &cell.report;
    println!(
        "{} on {}: cost {:.1}% ({} of {} reviewed, {} auto-labeled), recall {:.1}%, stop {}",
        r.treatment,
        r.project,
        100.0 * r.cost,
        r.reviewed,
        r.comments,
        r.auto_labeled,
        100.0 * r.metrics.recall,
        r.stop_reason.map_or("none", |s| s.name())
    );
    Ok(())
}

fn experiment(config_path: &Path) -> anyhow::Result<()> {
    let config = ExperimentConfig::load(config_path)?;
    let corpus = load(&config.corpus, false)?;
    let ds = Dataset::new(corpus, config.max_features)?;
    let result = run_lopo(&ds, &config)?;
    let dir = config.output_dir.join(&config.name);
    result.write(&dir)?;
    print!("{}", result.to_markdown());
    if result.failed() > 0 {
        log::warn!("{} of {} cells failed", result.failed(), result.cells.len());
        eprintln!(
            "warning: {} of {} cells failed",
            result.failed(),
            result.cells.len()
        );
    }
    println!("results written to {}", dir.display());
    Ok(())
}

fn serve(a: Serve) -> anyhow::Result<()> {
    let corpus = load(&a.corpus, a.unlabeled)?;
    let name = a
        .corpus
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "default".into());
    let ds = Dataset::new(corpus, a.max_features)?;
    let store = SessionStore::open(&a.state_dir, &name, ds)?;
    let addr = format!("{}:{}", a.host, a.port);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(server::serve(Arc::new(store), &addr, a.ui_dir))
}

fn synth(a: Synth) -> anyhow::Result<()> {
    if a.projects == 0 || a.comments == 0 {
        return Err(Error::Config("need at least one project and one comment".into()).into());
    }
    let corpus = generate(&SyntheticSpec::uniform(
        a.projects, a.comments, a.satd, a.seed,
    ));
    let f = std::fs::File::create(&a.out)
        .with_context(|| format!("cannot create {}", a.out.display()))?;
    corpus.write_csv(f, "DESIGN")?;
    println!("wrote {} comments to {}", corpus.len(), a.out.display());
    Ok(())
}
