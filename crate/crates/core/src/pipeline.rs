//! Treatment assembly for one target project: pseudo-labeling, filtering and
//! the learner, plus evaluation of the outcome against ground truth.
//!
//! Every project other than the target forms the training pool. The
//! vocabulary is built once over the whole corpus.

use serde::{Deserialize, Serialize};

use crate::active::{self, Policy, PolicyConfig, Provenance, SessionTrace, StopReason, TrainPool};
use crate::classifiers::{self, ClassifierSpec};
use crate::corpus::{build_vocabulary, featurize, Corpus, Vocabulary};
use crate::error::{Error, Result};
use crate::evaluation::{apfd, compute_metrics, rank_by_score, ConfusionCounts, FarMode, Metrics};
use crate::matrix::FeatureMatrix;
use crate::patterns::{easy_apply, easy_fit};
use crate::unsupervised::{cla_filter_sweep, cla_label, clafi_select};

/// A corpus with its vocabulary and one feature row per record.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub corpus: Corpus,
    pub vocab: Vocabulary,
    pub features: FeatureMatrix,
}

impl Dataset {
    pub fn new(corpus: Corpus, max_features: usize) -> Result<Self> {
        let vocab = build_vocabulary(&[&corpus], max_features)?;
        let features = featurize(&corpus, &vocab);
        Ok(Dataset {
            corpus,
            vocab,
            features,
        })
    }

    /// Target rows and training rows, both in file order.
    pub fn split(&self, target: &str) -> Result<(Vec<usize>, Vec<usize>)> {
        self.corpus.require_project(target)?;
        let (test, train): (Vec<usize>, Vec<usize>) =
            (0..self.corpus.len()).partition(|&i| self.corpus.records()[i].project == target);
        Ok((test, train))
    }

    fn truth_of(&self, rows: &[usize]) -> Option<Vec<bool>> {
        rows.iter()
            .map(|&i| self.corpus.records()[i].truth)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Cla,
    Easy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Treatment {
    Cla,
    ClaRf,
    ClafiRf,
    Easy,
    EasyCla,
    Active {
        pseudo_label: bool,
        filter: Option<FilterKind>,
        policy: Policy,
    },
}

impl Treatment {
    pub fn parse(name: &str) -> Result<Self> {
        let active = |pseudo_label, filter, policy| Treatment::Active {
            pseudo_label,
            filter,
            policy,
        };
        use FilterKind::*;
        use Policy::*;
        Ok(match name {
            "CLA" => Treatment::Cla,
            "CLA+RF" => Treatment::ClaRf,
            "CLAFI+RF" => Treatment::ClafiRf,
            "Easy" => Treatment::Easy,
            "Easy+CLA" => Treatment::EasyCla,
            "Emblem" => active(false, None, Emblem),
            "P+Hard" => active(true, None, Hard),
            "P+F+Hard" => active(true, Some(Cla), Hard),
            "P+Falcon" | "DebtFree(0)" => active(true, None, Falcon),
            "P+F+Falcon" => active(true, Some(Cla), Falcon),
            "Hard" => active(false, None, Hard),
            "F+Hard" | "DebtFree(100)" => active(false, Some(Cla), Hard),
            "Falcon" => active(false, None, Falcon),
            "F+Falcon" => active(false, Some(Cla), Falcon),
            "Jitterbug" | "E+Hard" => active(false, Some(Easy), Hard),
            "E+Falcon" => active(false, Some(Easy), Falcon),
            other => {
                return Err(Error::Config(format!(
                    "unknown treatment `{other}`; known: {}",
                    KNOWN_TREATMENTS.join(", ")
                )))
            }
        })
    }

    /// Canonical name; `parse(name())` round-trips for every named treatment.
    pub fn name(&self) -> String {
        match *self {
            Treatment::Cla => "CLA".into(),
            Treatment::ClaRf => "CLA+RF".into(),
            Treatment::ClafiRf => "CLAFI+RF".into(),
            Treatment::Easy => "Easy".into(),
            Treatment::EasyCla => "Easy+CLA".into(),
            Treatment::Active {
                pseudo_label: false,
                filter: Some(FilterKind::Easy),
                policy: Policy::Hard,
            } => "Jitterbug".into(),
            Treatment::Active {
                pseudo_label,
                filter,
                policy,
            } => {
                let mut s = String::new();
                if pseudo_label {
                    s.push_str("P+");
                }
                match filter {
                    Some(FilterKind::Cla) => s.push_str("F+"),
                    Some(FilterKind::Easy) => s.push_str("E+"),
                    None => {}
                }
                let p = policy.name();
                s.push_str(&p[..1].to_uppercase());
                s.push_str(&p[1..]);
                s
            }
        }
    }

    /// Whether results depend on the seed.
    pub fn is_stochastic(&self) -> bool {
        !matches!(self, Treatment::Cla | Treatment::Easy | Treatment::EasyCla)
    }

    /// Whether training labels must be ground truth.
    pub fn needs_true_train_labels(&self) -> bool {
        match self {
            Treatment::Easy | Treatment::EasyCla => true,
            Treatment::Active {
                pseudo_label,
                policy,
                ..
            } => !pseudo_label && *policy != Policy::Emblem,
            _ => false,
        }
    }
}

pub const KNOWN_TREATMENTS: &[&str] = &[
    "CLA",
    "CLA+RF",
    "CLAFI+RF",
    "Easy",
    "Easy+CLA",
    "Emblem",
    "P+Hard",
    "P+F+Hard",
    "P+Falcon",
    "P+F+Falcon",
    "Hard",
    "F+Hard",
    "Falcon",
    "F+Falcon",
    "Jitterbug",
    "E+Falcon",
    "DebtFree(0)",
    "DebtFree(100)",
];

/// Settings shared by every cell of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunOptions {
    /// Template for active sessions; `policy` and `seed` are set per cell.
    pub policy: PolicyConfig,
    pub far_mode: FarMode,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            policy: PolicyConfig::default(),
            far_mode: FarMode::Standard,
        }
    }
}

/// An active-learning session ready to start.
#[derive(Debug, Clone)]
pub struct PreparedSession {
    pub target: String,
    /// Corpus rows of the target project, in file order.
    pub test_rows: Vec<usize>,
    /// Positions in `test_rows` that form the review pool.
    pub pool: Vec<usize>,
    /// Positions in `test_rows` auto-labeled SATD by the filter.
    pub auto_labeled: Vec<usize>,
    pub pool_matrix: FeatureMatrix,
    pub train: Option<TrainPool>,
    pub config: PolicyConfig,
    pub notes: Vec<String>,
}

/// Assembles an active session. `config.policy` decides the learner.
pub fn prepare_active(
    ds: &Dataset,
    target: &str,
    pseudo_label: bool,
    filter: Option<FilterKind>,
    config: PolicyConfig,
) -> Result<PreparedSession> {
    config.validate()?;
    let (test_rows, train_rows) = ds.split(target)?;
    let mut notes = Vec::new();
    if config.policy == Policy::Emblem {
        if filter.is_some() || pseudo_label {
            return Err(Error::Config(
                "emblem uses no training data, so it takes neither pseudo-labeling nor a filter"
                    .into(),
            ));
        }
        let pool: Vec<usize> = (0..test_rows.len()).collect();
        return Ok(PreparedSession {
            target: target.to_string(),
            pool_matrix: ds.features.select_rows(&test_rows),
            test_rows,
            pool,
            auto_labeled: Vec::new(),
            train: None,
            config,
            notes,
        });
    }
    if train_rows.is_empty() {
        return Err(Error::Config(
            "no training projects besides the target".into(),
        ));
    }
    let mut train_x = ds.features.select_rows(&train_rows);
    let (mut train_y, provenance) = if pseudo_label {
        (cla_label(&train_x).labels, Provenance::Pseudo)
    } else {
        let y = ds.truth_of(&train_rows).ok_or_else(|| {
            Error::Config("training labels are unavailable; enable pseudo-labeling".into())
        })?;
        (y, Provenance::True)
    };
    let test_x = ds.features.select_rows(&test_rows);
    let mut pool: Vec<usize> = (0..test_rows.len()).collect();
    let mut auto_labeled = Vec::new();
    match filter {
        None => {}
        Some(FilterKind::Cla) => match cla_filter_sweep(&train_x, &train_y, &test_x) {
            Ok(out) => {
                notes.push(format!(
                    "cla filter: percentile {} threshold {} train precision {:.4}",
                    out.chosen_percentile, out.chosen_threshold, out.train_precision
                ));
                auto_labeled = out.auto_satd_test_ids;
                pool = out.retained_test_ids;
                train_y = out.retained_train_ids.iter().map(|&i| train_y[i]).collect();
                train_x = train_x.select_rows(&out.retained_train_ids);
            }
            Err(Error::FilterDegenerate) => {
                log::warn!("cla filter degenerate for {target}; continuing unfiltered");
                notes.push("cla filter degenerate; unfiltered".into());
            }
            Err(e) => return Err(e),
        },
        Some(FilterKind::Easy) => {
            let train_corpus = ds.corpus.subset(&train_rows);
            let patterns = easy_fit(&train_corpus, &train_y)?;
            notes.push(format!(
                "easy patterns: {}",
                patterns
                    .iter()
                    .map(|p| p.token.as_str())
                    .collect::<Vec<_>>()
                    .join(" ")
            ));
            let on_test = easy_apply(&patterns, &ds.corpus.subset(&test_rows));
            let on_train = easy_apply(&patterns, &train_corpus);
            auto_labeled = on_test.matched;
            pool = (0..test_rows.len())
                .filter(|&i| !on_test.predictions[i])
                .collect();
            let keep: Vec<usize> = (0..train_rows.len())
                .filter(|&i| !on_train.predictions[i])
                .collect();
            train_y = keep.iter().map(|&i| train_y[i]).collect();
            train_x = train_x.select_rows(&keep);
        }
    }
    if train_x.rows() == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    Ok(PreparedSession {
        target: target.to_string(),
        pool_matrix: test_x.select_rows(&pool),
        test_rows,
        pool,
        auto_labeled,
        train: Some(TrainPool {
            features: train_x,
            labels: train_y,
            provenance,
        }),
        config,
        notes,
    })
}

impl PreparedSession {
    /// Starts the session. `None` when the filter left nothing to review.
    pub fn start(&self) -> Result<Option<active::SessionState>> {
        if self.pool.is_empty() {
            return Ok(None);
        }
        active::init_session(
            self.config.clone(),
            self.pool_matrix.clone(),
            self.train.clone(),
        )
        .map(Some)
    }

    /// Summary of a finished or ongoing session in target-project positions.
    pub fn outcome(&self, trace: Option<&SessionTrace>) -> ActiveOutcome {
        let n = self.test_rows.len();
        let mut predicted = vec![false; n];
        let mut order = Vec::with_capacity(n);
        for &i in &self.auto_labeled {
            predicted[i] = true;
            order.push(i);
        }
        let mut reviewed = 0;
        if let Some(t) = trace {
            for e in &t.entries {
                let i = self.pool[e.row];
                predicted[i] = e.label;
                order.push(i);
            }
            reviewed = t.entries.len();
        }
        let stop_reason = match trace {
            Some(t) => t.stop_reason,
            None => Some(StopReason::PoolExhausted),
        };
        ActiveOutcome {
            predicted,
            order,
            auto_labeled: self.auto_labeled.len(),
            reviewed,
            estimate: trace.map(|t| t.final_estimate),
            stop_reason,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActiveOutcome {
    /// Per target comment: auto-labeled or reviewed positive.
    pub predicted: Vec<bool>,
    /// Auto-labeled positions, then review order. Unreviewed items are absent.
    pub order: Vec<usize>,
    pub auto_labeled: usize,
    pub reviewed: usize,
    pub estimate: Option<f64>,
    pub stop_reason: Option<StopReason>,
}

/// Prediction and ranking of an automatic treatment over the target project.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoOutcome {
    pub predicted: Vec<bool>,
    /// Full ranking of target positions, most SATD-like first.
    pub order: Vec<usize>,
}

pub fn run_automatic(
    ds: &Dataset,
    target: &str,
    treatment: Treatment,
    seed: u64,
    n_trees: usize,
) -> Result<AutoOutcome> {
    let (test_rows, train_rows) = ds.split(target)?;
    let test_x = ds.features.select_rows(&test_rows);
    let train_truth = || {
        ds.truth_of(&train_rows)
            .ok_or_else(|| Error::Config("Easy needs labeled training projects".into()))
    };
    let forest = |train_x: &FeatureMatrix, y: &[bool], test_x: &FeatureMatrix| {
        let spec = ClassifierSpec::tree_ensemble(n_trees, seed);
        let model = classifiers::fit(&spec, train_x, y, None)?;
        let p = model.predict_prob(test_x)?;
        Ok::<_, Error>(AutoOutcome {
            predicted: p.iter().map(|&v| v > 0.5).collect(),
            order: rank_by_score(&p),
        })
    };
    match treatment {
        Treatment::Cla => {
            let a = cla_label(&test_x);
            let k: Vec<f64> = a.k_counts.iter().map(|&k| f64::from(k)).collect();
            Ok(AutoOutcome {
                predicted: a.labels,
                order: rank_by_score(&k),
            })
        }
        Treatment::ClaRf => {
            let train_x = ds.features.select_rows(&train_rows);
            let y = cla_label(&train_x).labels;
            forest(&train_x, &y, &test_x)
        }
        Treatment::ClafiRf => {
            let train_x = ds.features.select_rows(&train_rows);
            let y = cla_label(&train_x).labels;
            let sel = clafi_select(&train_x, &y)?;
            let cols = &sel.table.selected_features;
            let train_x = train_x.select_rows(&sel.retained).select_cols(cols);
            let y: Vec<bool> = sel.retained.iter().map(|&i| y[i]).collect();
            forest(&train_x, &y, &test_x.select_cols(cols))
        }
        Treatment::Easy | Treatment::EasyCla => {
            let patterns = easy_fit(&ds.corpus.subset(&train_rows), &train_truth()?)?;
            let hits = easy_apply(&patterns, &ds.corpus.subset(&test_rows));
            let mut predicted = hits.predictions.clone();
            let mut order = hits.matched.clone();
            let rest: Vec<usize> = (0..test_rows.len()).filter(|&i| !predicted[i]).collect();
            if treatment == Treatment::EasyCla && !rest.is_empty() {
                let a = cla_label(&test_x.select_rows(&rest));
                for (&i, &l) in rest.iter().zip(&a.labels) {
                    predicted[i] = l;
                }
                let k: Vec<f64> = a.k_counts.iter().map(|&k| f64::from(k)).collect();
                order.extend(rank_by_score(&k).into_iter().map(|j| rest[j]));
            } else {
                order.extend(rest);
            }
            Ok(AutoOutcome { predicted, order })
        }
        Treatment::Active { .. } => Err(Error::Config(
            "active treatments run through prepare_active".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub treatment: String,
    pub project: String,
    pub seed: Option<u64>,
    pub counts: ConfusionCounts,
    #[serde(flatten)]
    pub metrics: Metrics,
    /// `None` when the project has no positives.
    pub apfd: Option<f64>,
    pub cost: f64,
    pub comments: usize,
    pub positives: usize,
    pub reviewed: usize,
    pub auto_labeled: usize,
    pub estimate: Option<f64>,
    pub stop_reason: Option<StopReason>,
    pub retrain_every: Option<usize>,
    pub notes: Vec<String>,
}

/// Everything recorded for one (treatment, project, seed) cell.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub report: CellReport,
    pub predicted: Vec<bool>,
    pub truth: Vec<bool>,
    pub trace: Option<SessionTrace>,
}

/// Scores an ordering and prediction vector against the target's truth.
#[allow(clippy::too_many_arguments)]
pub fn score_cell(
    treatment: &str,
    project: &str,
    seed: Option<u64>,
    predicted: &[bool],
    order: &[usize],
    truth: &[bool],
    reviewed: usize,
    far_mode: FarMode,
) -> Result<CellReport> {
    let counts = ConfusionCounts::from_predictions(predicted, truth)?;
    let positives = truth.iter().filter(|&&t| t).count();
    let in_order: Vec<bool> = order.iter().map(|&i| truth[i]).collect();
    let apfd = match apfd(&in_order, positives, truth.len()) {
        Ok(v) => Some(v),
        Err(Error::UndefinedMetric(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(CellReport {
        treatment: treatment.to_string(),
        project: project.to_string(),
        seed,
        counts,
        metrics: compute_metrics(&counts, far_mode),
        apfd,
        cost: reviewed as f64 / truth.len() as f64,
        comments: truth.len(),
        positives,
        reviewed,
        auto_labeled: 0,
        estimate: None,
        stop_reason: None,
        retrain_every: None,
        notes: Vec::new(),
    })
}

/// Runs one cell end to end with the truth oracle.
pub fn run_cell(
    ds: &Dataset,
    name: &str,
    treatment: Treatment,
    target: &str,
    seed: u64,
    opts: &RunOptions,
) -> Result<CellOutcome> {
    let (test_rows, _) = ds.split(target)?;
    let truth = ds
        .truth_of(&test_rows)
        .ok_or_else(|| Error::Config("simulation needs a labeled target project".into()))?;
    let seed_field = treatment.is_stochastic().then_some(seed);
    match treatment {
        Treatment::Active {
            pseudo_label,
            filter,
            policy,
        } => {
            let config = PolicyConfig {
                policy,
                seed,
                ..opts.policy.clone()
            };
            let prepared = prepare_active(ds, target, pseudo_label, filter, config)?;
            let trace = match prepared.start()? {
                Some(mut state) => {
                    let pool_truth: Vec<bool> = prepared.pool.iter().map(|&i| truth[i]).collect();
                    active::run_to_stop(&mut state, &pool_truth)?;
                    Some(state.session_trace())
                }
                None => None,
            };
            let out = prepared.outcome(trace.as_ref());
            let mut report = score_cell(
                name,
                target,
                seed_field,
                &out.predicted,
                &out.order,
                &truth,
                out.reviewed,
                opts.far_mode,
            )?;
            report.auto_labeled = out.auto_labeled;
            report.estimate = out.estimate;
            report.stop_reason = out.stop_reason;
            report.retrain_every = Some(prepared.config.retrain_every);
            report.notes = prepared.notes.clone();
            Ok(CellOutcome {
                report,
                predicted: out.predicted,
                truth,
                trace,
            })
        }
        _ => {
            let out = run_automatic(ds, target, treatment, seed, opts.policy.n_trees)?;
            let report = score_cell(
                name,
                target,
                seed_field,
                &out.predicted,
                &out.order,
                &truth,
                0,
                opts.far_mode,
            )?;
            Ok(CellOutcome {
                report,
                predicted: out.predicted,
                truth,
                trace: None,
            })
        }
    }
}
