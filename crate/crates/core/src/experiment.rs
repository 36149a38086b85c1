//! Leave-one-project-out experiments: every treatment on every target
//! project and seed, followed by per-metric rank tables.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::active::PolicyConfig;
use crate::error::{Error, Result};
use crate::evaluation::{cohen_groups, median, FarMode, MetricBlock, RankTable};
use crate::pipeline::{run_cell, CellOutcome, CellReport, Dataset, RunOptions, Treatment};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Corpus CSV; relative paths resolve against the config file.
    pub corpus: PathBuf,
    pub treatments: Vec<String>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_target_recall")]
    pub target_recall: f64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_max_features")]
    pub max_features: usize,
    #[serde(default = "default_retrain_every")]
    pub retrain_every: usize,
    #[serde(default = "default_n_trees")]
    pub n_trees: usize,
    /// Target projects; every project when absent.
    #[serde(default)]
    pub projects: Option<Vec<String>>,
    #[serde(default)]
    pub far_mode: FarMode,
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}
fn default_target_recall() -> f64 {
    0.9
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_max_features() -> usize {
    crate::corpus::DEFAULT_MAX_FEATURES
}
fn default_retrain_every() -> usize {
    1
}
fn default_n_trees() -> usize {
    crate::classifiers::DEFAULT_N_TREES
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = Self::from_json(&s)?;
        if c.corpus.is_relative() {
            if let Some(dir) = path.parent() {
                c.corpus = dir.join(&c.corpus);
            }
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.treatments.is_empty() {
            return Err(Error::Config("at least one treatment is required".into()));
        }
        let parsed = self.parsed_treatments()?;
        if self.seeds.is_empty() && parsed.iter().any(Treatment::is_stochastic) {
            return Err(Error::Config(
                "stochastic treatments need at least one seed".into(),
            ));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::Config(
                "experiment name must be a plain directory name".into(),
            ));
        }
        self.run_options().policy.validate()
    }

    pub fn parsed_treatments(&self) -> Result<Vec<Treatment>> {
        self.treatments
            .iter()
            .map(|t| Treatment::parse(t))
            .collect()
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            policy: PolicyConfig {
                target_recall: self.target_recall,
                retrain_every: self.retrain_every,
                n_trees: self.n_trees,
                ..PolicyConfig::default()
            },
            far_mode: self.far_mode,
        }
    }
}

/// One executed (treatment, project, seed) cell.
#[derive(Debug, Clone)]
pub struct Cell {
    pub treatment: String,
    pub project: String,
    pub seed: Option<u64>,
    pub outcome: std::result::Result<CellOutcome, String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub treatments: Vec<String>,
    pub projects: Vec<String>,
    pub cells: Vec<Cell>,
    pub tables: Vec<RankTable>,
}

/// Metrics tabulated after a run, with their preferred direction.
pub const TABLE_METRICS: &[(&str, bool)] = &[
    ("recall", true),
    ("precision", true),
    ("f1", true),
    ("g1", true),
    ("far", false),
    ("apfd", true),
    ("cost", false),
];

fn metric(r: &CellReport, name: &str) -> Option<f64> {
    match name {
        "recall" => Some(r.metrics.recall),
        "precision" => Some(r.metrics.precision),
        "f1" => Some(r.metrics.f1),
        "g1" => Some(r.metrics.g1),
        "far" => Some(r.metrics.far),
        "apfd" => r.apfd,
        "cost" => Some(r.cost),
        _ => None,
    }
}

/// Runs every cell. A failing cell is recorded and the run continues.
pub fn run_lopo(ds: &Dataset, config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    if ds.corpus.projects().len() < 2 {
        return Err(Error::Config(
            "leave-one-project-out needs at least two projects".into(),
        ));
    }
    let projects: Vec<String> = match &config.projects {
        Some(p) => {
            for name in p {
                ds.corpus.require_project(name)?;
            }
            p.clone()
        }
        None => ds.corpus.projects().iter().cloned().collect(),
    };
    let treatments = config.parsed_treatments()?;
    let opts = config.run_options();
    let mut cells = Vec::new();
    for (name, &treatment) in config.treatments.iter().zip(&treatments) {
        let seeds: Vec<Option<u64>> = if treatment.is_stochastic() {
            config.seeds.iter().copied().map(Some).collect()
        } else {
            vec![None]
        };
        for project in &projects {
            for &seed in &seeds {
                log::info!("cell {name} / {project} / seed {seed:?}");
                let outcome = run_cell(ds, name, treatment, project, seed.unwrap_or(0), &opts)
                    .map_err(|e| {
                        log::warn!("cell {name} / {project} / seed {seed:?} failed: {e}");
                        e.to_string()
                    });
                cells.push(Cell {
                    treatment: name.clone(),
                    project: project.clone(),
                    seed,
                    outcome,
                });
            }
        }
    }
    let tables = if config.treatments.len() >= 2 {
        TABLE_METRICS
            .iter()
            .map(|&(m, higher)| {
                cohen_groups(metric_block(
                    &cells,
                    &config.treatments,
                    &projects,
                    m,
                    higher,
                ))
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok(ExperimentResult {
        treatments: config.treatments.clone(),
        projects,
        cells,
        tables,
    })
}

/// Per (project, treatment) median of `metric` over successful seeds.
pub fn metric_block(
    cells: &[Cell],
    treatments: &[String],
    projects: &[String],
    metric_name: &str,
    higher_is_better: bool,
) -> MetricBlock {
    let mut by_cell: BTreeMap<(&str, &str), Vec<f64>> = BTreeMap::new();
    for c in cells {
        if let Ok(o) = &c.outcome {
            if let Some(v) = metric(&o.report, metric_name) {
                by_cell
                    .entry((c.project.as_str(), c.treatment.as_str()))
                    .or_default()
                    .push(v);
            }
        }
    }
    let values = projects
        .iter()
        .map(|p| {
            treatments
                .iter()
                .map(|t| {
                    by_cell
                        .get(&(p.as_str(), t.as_str()))
                        .and_then(|v| median(v))
                })
                .collect()
        })
        .collect();
    MetricBlock {
        metric: metric_name.to_string(),
        higher_is_better,
        treatments: treatments.to_vec(),
        projects: projects.to_vec(),
        values,
    }
}

fn dir_name(treatment: &str) -> String {
    treatment
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

impl ExperimentResult {
    pub fn failed(&self) -> usize {
        self.cells.iter().filter(|c| c.outcome.is_err()).count()
    }

    /// Writes `{dir}/{treatment}/{project}/seed-{s}/{trace.csv,report.json}`,
    /// `results.csv` and `tables.md`. Deterministic treatments use `seed-0`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for c in &self.cells {
            let cell_dir = dir
                .join(dir_name(&c.treatment))
                .join(&c.project)
                .join(format!("seed-{}", c.seed.unwrap_or(0)));
            std::fs::create_dir_all(&cell_dir).map_err(|e| Error::io(&cell_dir, e))?;
            match &c.outcome {
                Ok(o) => {
                    let path = cell_dir.join("report.json");
                    std::fs::write(&path, serde_json::to_vec_pretty(&o.report)?)
                        .map_err(|e| Error::io(&path, e))?;
                    if let Some(t) = &o.trace {
                        let path = cell_dir.join("trace.csv");
                        let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                        t.write_csv(f)?;
                    }
                }
                Err(msg) => {
                    let path = cell_dir.join("error.txt");
                    std::fs::write(&path, msg).map_err(|e| Error::io(&path, e))?;
                }
            }
        }
        let path = dir.join("results.csv");
        let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        self.write_raw_csv(f)?;
        let path = dir.join("tables.md");
        std::fs::write(&path, self.to_markdown()).map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    pub fn write_raw_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "treatment",
            "project",
            "seed",
            "status",
            "tp",
            "fp",
            "tn",
            "fn",
            "recall",
            "precision",
            "f1",
            "g1",
            "far",
            "apfd",
            "cost",
            "comments",
            "positives",
            "reviewed",
            "auto_labeled",
            "estimate",
            "stop_reason",
            "error",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for c in &self.cells {
            let seed = c.seed.map(|s| s.to_string()).unwrap_or_default();
            match &c.outcome {
                Ok(o) => {
                    let r = &o.report;
                    let m = &r.metrics;
                    w.write_record([
                        c.treatment.clone(),
                        c.project.clone(),
                        seed,
                        "ok".into(),
                        r.counts.tp.to_string(),
                        r.counts.fp.to_string(),
                        r.counts.tn.to_string(),
                        r.counts.fn_.to_string(),
                        m.recall.to_string(),
                        m.precision.to_string(),
                        m.f1.to_string(),
                        m.g1.to_string(),
                        m.far.to_string(),
                        opt(r.apfd),
                        r.cost.to_string(),
                        r.comments.to_string(),
                        r.positives.to_string(),
                        r.reviewed.to_string(),
                        r.auto_labeled.to_string(),
                        opt(r.estimate),
                        r.stop_reason
                            .map(|s| s.name().to_string())
                            .unwrap_or_default(),
                        String::new(),
                    ])?;
                }
                Err(msg) => {
                    let mut row = vec![
                        c.treatment.clone(),
                        c.project.clone(),
                        seed,
                        "failed".into(),
                    ];
                    row.extend(std::iter::repeat_n(String::new(), 17));
                    row.push(msg.clone());
                    w.write_record(row)?;
                }
            }
        }
        w.flush().map_err(|e| Error::Persistence(e.to_string()))?;
        Ok(())
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        if self.tables.is_empty() {
            s.push_str("Rank groups need at least two treatments; see results.csv.\n");
        }
        for t in &self.tables {
            s.push_str(&t.to_markdown());
            s.push('\n');
        }
        s.push_str("Values are percentages (medians over seeds). (1) marks the top rank group, (2) the second.\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate, SyntheticSpec};

    fn config(treatments: &[&str]) -> ExperimentConfig {
        ExperimentConfig {
            name: "t".into(),
            corpus: "unused.csv".into(),
            treatments: treatments.iter().map(|s| s.to_string()).collect(),
            seeds: vec![1, 2],
            target_recall: 0.9,
            output_dir: "out".into(),
            max_features: 4000,
            retrain_every: 10,
            n_trees: 5,
            projects: None,
            far_mode: FarMode::Standard,
        }
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = ExperimentConfig::from_json(
            r#"{"name": "rq1", "corpus": "data.csv", "treatments": ["CLA", "Easy"]}"#,
        )
        .unwrap();
        assert_eq!(c.seeds.len(), 10);
        assert_eq!(c.retrain_every, 1);
        assert!(
            ExperimentConfig::from_json(r#"{"name": "x", "corpus": "d", "treatments": []}"#)
                .is_err()
        );
        assert!(ExperimentConfig::from_json(
            r#"{"name": "x", "corpus": "d", "treatments": ["Hard"], "seeds": []}"#
        )
        .is_err());
        assert!(ExperimentConfig::from_json(
            r#"{"name": "x", "corpus": "d", "treatments": ["CLA"], "seeds": []}"#
        )
        .is_ok());
    }

    #[test]
    fn single_project_corpus_is_rejected() {
        let ds = Dataset::new(generate(&SyntheticSpec::uniform(1, 40, 4, 1)), 4000).unwrap();
        assert!(matches!(
            run_lopo(&ds, &config(&["CLA", "Easy"])),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn failed_cells_are_recorded() {
        // An unlabeled training project makes Easy fail while CLA succeeds.
        let mut corpus = generate(&SyntheticSpec::uniform(2, 60, 6, 2));
        let records = corpus
            .records()
            .iter()
            .cloned()
            .map(|mut r| {
                if r.project == "project-b" {
                    r.truth = None;
                }
                r
            })
            .collect();
        corpus = crate::corpus::Corpus::from_records(records);
        let ds = Dataset::new(corpus, 4000).unwrap();
        let mut c = config(&["CLA", "Easy"]);
        c.projects = Some(vec!["project-a".into()]);
        let r = run_lopo(&ds, &c).unwrap();
        assert_eq!(r.cells.len(), 2);
        assert_eq!(r.failed(), 1);
        assert!(r.to_markdown().contains("failed"));
    }

    #[test]
    fn reproducible_and_written() {
        let ds = Dataset::new(generate(&SyntheticSpec::uniform(3, 80, 8, 4)), 4000).unwrap();
        let c = config(&["CLA", "P+Hard"]);
        let a = run_lopo(&ds, &c).unwrap();
        let b = run_lopo(&ds, &c).unwrap();
        let reports = |r: &ExperimentResult| -> Vec<CellReport> {
            r.cells
                .iter()
                .map(|c| c.outcome.as_ref().unwrap().report.clone())
                .collect()
        };
        assert_eq!(reports(&a), reports(&b));
        assert_eq!(a.cells.len(), 3 + 3 * 2);
        let dir = tempfile::tempdir().unwrap();
        a.write(dir.path()).unwrap();
        assert!(dir
            .path()
            .join("P_Hard/project-b/seed-2/trace.csv")
            .is_file());
        assert!(dir
            .path()
            .join("CLA/project-a/seed-0/report.json")
            .is_file());
        let raw = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
        assert_eq!(raw.lines().count(), 1 + 9);
        assert!(std::fs::read_to_string(dir.path().join("tables.md"))
            .unwrap()
            .contains("### recall"));
    }
}
