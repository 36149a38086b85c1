//! Pool-based active learning: Emblem, Hard and Falcon.
//!
//! A session owns the test pool (the target project's feature rows) and an
//! optional training pool. Queries are row indices into the test pool.
//!
//! Phases run random → uncertainty → certainty. Uncertainty sampling fits the
//! forest with balanced class weights; certainty sampling first undersamples
//! the negatives the current model finds most positive. After every refit a
//! logistic self-training loop estimates how many positives the pool holds,
//! which drives Falcon's training-data separation and the stopping rule.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifiers::{self, ClassifierSpec, FittedModel, DEFAULT_N_TREES};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Emblem,
    Hard,
    Falcon,
}

impl Policy {
    pub fn name(self) -> &'static str {
        match self {
            Policy::Emblem => "emblem",
            Policy::Hard => "hard",
            Policy::Falcon => "falcon",
        }
    }
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "emblem" => Ok(Policy::Emblem),
            "hard" => Ok(Policy::Hard),
            "falcon" => Ok(Policy::Falcon),
            other => Err(Error::Config(format!("unknown policy `{other}`"))),
        }
    }
}

/// How unreviewed rows contribute to the positive estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorRule {
    /// Count rows with probability above 0.5.
    #[default]
    Threshold,
    /// Sum the probabilities.
    ProbabilitySum,
}

/// Inputs of the estimator's logistic fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorFeatures {
    /// The current forest probability as the single feature.
    #[default]
    ModelScore,
    /// The TF-IDF rows of the test pool.
    Tfidf,
}

/// Sample weighting of the estimator's logistic fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorWeighting {
    /// Class weights `1/|positives|` and `1/|negatives|`, as in the forest fits.
    #[default]
    Balanced,
    Unit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub policy: Policy,
    /// Positives required to leave the random phase.
    pub n1: usize,
    /// Positives required to enter the certainty phase.
    pub n2: usize,
    pub target_recall: f64,
    /// Falcon drops the training pool once `found > separation_fraction * estimate`.
    /// Values of 1 or more never trigger.
    pub separation_fraction: f64,
    pub emblem_bootstrap: usize,
    pub retrain_every: usize,
    pub seed: u64,
    pub n_trees: usize,
    /// Start Hard/Falcon in the random phase despite the bootstrapped model.
    pub bootstrap_random_phase: bool,
    pub estimator_rule: EstimatorRule,
    pub estimator_weighting: EstimatorWeighting,
    pub estimator_features: EstimatorFeatures,
    pub estimator_max_iterations: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            policy: Policy::Falcon,
            n1: 1,
            n2: 10,
            target_recall: 0.90,
            separation_fraction: 0.10,
            emblem_bootstrap: 100,
            retrain_every: 1,
            seed: 0,
            n_trees: DEFAULT_N_TREES,
            bootstrap_random_phase: false,
            estimator_rule: EstimatorRule::Threshold,
            estimator_weighting: EstimatorWeighting::Balanced,
            estimator_features: EstimatorFeatures::ModelScore,
            estimator_max_iterations: 50,
        }
    }
}

impl PolicyConfig {
    pub fn new(policy: Policy, seed: u64) -> Self {
        PolicyConfig {
            policy,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.target_recall > 0.0 && self.target_recall <= 1.0) {
            return bad("target_recall must lie in (0, 1]");
        }
        if self.n1 > self.n2 {
            return bad("n1 must not exceed n2");
        }
        if self.separation_fraction.is_nan()
            || self.separation_fraction <= 0.0
            || !self.separation_fraction.is_finite()
        {
            return bad("separation_fraction must be positive");
        }
        if self.retrain_every == 0 {
            return bad("retrain_every must be at least 1");
        }
        if self.n_trees == 0 {
            return bad("n_trees must be at least 1");
        }
        if self.estimator_max_iterations == 0 {
            return bad("estimator_max_iterations must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    True,
    Pseudo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainPool {
    pub features: FeatureMatrix,
    pub labels: Vec<bool>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Random,
    Uncertainty,
    Certainty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Unreviewed,
    ReviewedSatd,
    ReviewedNonSatd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TargetReached,
    PoolExhausted,
    Manual,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::TargetReached => "target_reached",
            StopReason::PoolExhausted => "pool_exhausted",
            StopReason::Manual => "manual",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewEntry {
    pub row: usize,
    pub comment_id: u64,
    /// Model probability when the row was labeled; `None` without a model.
    pub model_score: Option<f64>,
    pub label: bool,
    pub estimate_at_query: f64,
    pub found: usize,
    pub reviewed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    config: PolicyConfig,
    test: FeatureMatrix,
    train: Option<TrainPool>,
    status: Vec<Status>,
    phase: Phase,
    found: usize,
    reviewed: usize,
    estimate: f64,
    estimator_converged: bool,
    separated: bool,
    manual_stop: bool,
    trace: Vec<(usize, usize)>,
    log: Vec<ReviewEntry>,
    model: Option<FittedModel>,
    /// Current model probabilities for every test row.
    probs: Option<Vec<f64>>,
    /// `probs` with out-of-bag scores for reviewed rows in the last fit set.
    estimator_scores: Option<Vec<f64>>,
    estimator_model: Option<FittedModel>,
    fits: u64,
    labels_since_fit: usize,
}

pub fn init_session(
    config: PolicyConfig,
    test: FeatureMatrix,
    train: Option<TrainPool>,
) -> Result<SessionState> {
    config.validate()?;
    match (config.policy, &train) {
        (Policy::Emblem, Some(_)) => {
            return Err(Error::Config("emblem does not take a training pool".into()))
        }
        (Policy::Hard | Policy::Falcon, None) => {
            return Err(Error::Config(format!(
                "{} requires a training pool",
                config.policy.name()
            )))
        }
        _ => {}
    }
    if test.rows() == 0 {
        return Err(Error::EmptyCorpus);
    }
    if let Some(t) = &train {
        if t.features.cols() != test.cols() {
            return Err(Error::Shape {
                expected: test.cols(),
                actual: t.features.cols(),
            });
        }
        if t.labels.len() != t.features.rows() {
            return Err(Error::Length {
                what: "train labels",
                expected: t.features.rows(),
                actual: t.labels.len(),
            });
        }
        if t.features.rows() == 0 {
            return Err(Error::EmptyTrainingSet);
        }
    }
    let phase = if config.policy == Policy::Emblem || config.bootstrap_random_phase {
        Phase::Random
    } else {
        Phase::Uncertainty
    };
    let n = test.rows();
    let mut state = SessionState {
        config,
        test,
        train,
        status: vec![Status::Unreviewed; n],
        phase,
        found: 0,
        reviewed: 0,
        estimate: 0.0,
        estimator_converged: true,
        separated: false,
        manual_stop: false,
        trace: Vec::new(),
        log: Vec::new(),
        model: None,
        probs: None,
        estimator_scores: None,
        estimator_model: None,
        fits: 0,
        labels_since_fit: 0,
    };
    if state.train.is_some() {
        state.refit()?;
    }
    state.advance_phase();
    Ok(state)
}

impl SessionState {
    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn test(&self) -> &FeatureMatrix {
        &self.test
    }

    pub fn train(&self) -> Option<&TrainPool> {
        self.train.as_ref()
    }

    pub fn status(&self) -> &[Status] {
        &self.status
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn found(&self) -> usize {
        self.found
    }

    pub fn reviewed(&self) -> usize {
        self.reviewed
    }

    pub fn pool_size(&self) -> usize {
        self.status.len()
    }

    pub fn estimate(&self) -> f64 {
        self.estimate
    }

    pub fn estimator_converged(&self) -> bool {
        self.estimator_converged
    }

    pub fn separated(&self) -> bool {
        self.separated
    }

    pub fn trace(&self) -> &[(usize, usize)] {
        &self.trace
    }

    pub fn log(&self) -> &[ReviewEntry] {
        &self.log
    }

    pub fn model(&self) -> Option<&FittedModel> {
        self.model.as_ref()
    }

    /// Current model probability of a test row.
    pub fn score(&self, row: usize) -> Option<f64> {
        self.probs.as_ref().map(|p| p[row])
    }

    pub fn fits(&self) -> u64 {
        self.fits
    }

    pub fn unreviewed(&self) -> usize {
        self.status.len() - self.reviewed
    }

    pub fn stop_manually(&mut self) {
        self.manual_stop = true;
    }

    /// The test row to review next.
    pub fn next_query(&self) -> Result<usize> {
        if self.unreviewed() == 0 {
            return Err(Error::PoolExhausted);
        }
        let open = self
            .status
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == Status::Unreviewed)
            .map(|(i, _)| i);
        let probs = match (&self.probs, self.phase) {
            (Some(p), Phase::Uncertainty | Phase::Certainty) => p,
            _ => {
                // Derived per step so replaying labels reproduces the draw.
                let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
                rng.set_stream(self.reviewed as u64);
                let pick = rng.random_range(0..self.unreviewed());
                return Ok(open.into_iter().nth(pick).expect("pick < unreviewed"));
            }
        };
        // First index wins ties.
        let best = match self.phase {
            Phase::Certainty => open.fold(None::<(usize, f64)>, |acc, i| match acc {
                Some((_, b)) if probs[i] <= b => acc,
                _ => Some((i, probs[i])),
            }),
            _ => open.fold(None::<(usize, f64)>, |acc, i| {
                let d = (probs[i] - 0.5).abs();
                match acc {
                    Some((_, b)) if d >= b => acc,
                    _ => Some((i, d)),
                }
            }),
        };
        Ok(best.expect("pool not exhausted").0)
    }

    pub fn record_label(&mut self, row: usize, label: bool) -> Result<()> {
        match self.status.get(row) {
            None => return Err(Error::UnknownComment(row as u64)),
            Some(Status::Unreviewed) => {}
            Some(_) => return Err(Error::AlreadyReviewed(row)),
        }
        self.status[row] = if label {
            Status::ReviewedSatd
        } else {
            Status::ReviewedNonSatd
        };
        self.reviewed += 1;
        self.found += usize::from(label);
        self.trace.push((self.reviewed, self.found));
        self.log.push(ReviewEntry {
            row,
            comment_id: self.test.row_id(row).comment_id,
            model_score: self.score(row),
            label,
            estimate_at_query: self.estimate,
            found: self.found,
            reviewed: self.reviewed,
        });
        self.labels_since_fit += 1;
        let left_random = self.advance_phase();
        if self.phase != Phase::Random
            && (left_random || self.labels_since_fit >= self.config.retrain_every)
        {
            self.refit()?;
        }
        if self.unreviewed() == 0 {
            self.estimate = self.found as f64;
        }
        Ok(())
    }

    /// Applies phase transitions; true when the random phase was just left.
    fn advance_phase(&mut self) -> bool {
        let mut left_random = false;
        if self.phase == Phase::Random {
            let budget_spent = self.config.policy != Policy::Emblem
                || self.reviewed >= self.config.emblem_bootstrap.min(self.pool_size());
            if budget_spent && self.found >= self.config.n1 {
                self.phase = Phase::Uncertainty;
                left_random = true;
            }
        }
        if self.phase == Phase::Uncertainty && self.found >= self.config.n2 {
            self.phase = Phase::Certainty;
        }
        left_random
    }

    /// Refits the forest on the current fit set, then re-estimates and checks
    /// separation.
    fn refit(&mut self) -> Result<()> {
        let reviewed_rows: Vec<usize> = (0..self.status.len())
            .filter(|&i| self.status[i] != Status::Unreviewed)
            .collect();
        let reviewed_x = self.test.select_rows(&reviewed_rows);
        let mut y: Vec<bool> = Vec::new();
        // Test row behind each fit-set row; `None` for training rows.
        let mut origin: Vec<Option<usize>> = Vec::new();
        let x = match (&self.train, self.separated) {
            (Some(t), false) => {
                y.extend_from_slice(&t.labels);
                origin.resize(t.labels.len(), None);
                FeatureMatrix::vstack(&[&t.features, &reviewed_x])?
            }
            _ => reviewed_x,
        };
        y.extend(
            reviewed_rows
                .iter()
                .map(|&r| self.status[r] == Status::ReviewedSatd),
        );
        origin.extend(reviewed_rows.iter().map(|&r| Some(r)));
        if x.rows() == 0 {
            return Ok(());
        }

        let (x, y, origin, weights) = if self.phase == Phase::Certainty {
            let keep = self.undersample(&x, &y)?;
            let y: Vec<bool> = keep.iter().map(|&i| y[i]).collect();
            let origin: Vec<Option<usize>> = keep.iter().map(|&i| origin[i]).collect();
            (x.select_rows(&keep), y, origin, None)
        } else {
            let weights = balanced_weights(&y);
            (x, y, origin, weights)
        };

        let spec = ClassifierSpec::tree_ensemble(
            self.config.n_trees,
            fit_seed(self.config.seed, self.fits),
        );
        let (model, oob) = classifiers::fit_with_oob(&spec, &x, &y, weights.as_deref())?;
        let probs = model.predict_prob(&self.test)?;
        let mut scores = probs.clone();
        if let Some(oob) = oob {
            for (o, s) in origin.iter().zip(oob) {
                if let Some(r) = o {
                    scores[*r] = s;
                }
            }
        }
        self.probs = Some(probs);
        self.estimator_scores = Some(scores);
        self.model = Some(model);
        self.fits += 1;
        self.labels_since_fit = 0;

        self.update_estimate()?;
        if self.config.policy == Policy::Falcon
            && !self.separated
            && self.found as f64 > self.config.separation_fraction * self.estimate
        {
            log::debug!(
                "separating training data at found={} estimate={:.2}",
                self.found,
                self.estimate
            );
            self.separated = true;
        }
        Ok(())
    }

    /// Rows of the fit set kept by aggressive undersampling: every positive and
    /// the `#positives` negatives with the lowest current probability.
    fn undersample(&self, x: &FeatureMatrix, y: &[bool]) -> Result<Vec<usize>> {
        let pos = y.iter().filter(|&&l| l).count();
        let neg = y.len() - pos;
        let Some(model) = &self.model else {
            return Ok((0..y.len()).collect());
        };
        if neg <= pos {
            return Ok((0..y.len()).collect());
        }
        let p = model.predict_prob(x)?;
        let mut negatives: Vec<usize> = (0..y.len()).filter(|&i| !y[i]).collect();
        negatives.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
        negatives.truncate(pos);
        let mut keep: Vec<usize> = (0..y.len()).filter(|&i| y[i]).chain(negatives).collect();
        keep.sort_unstable();
        Ok(keep)
    }

    fn update_estimate(&mut self) -> Result<()> {
        let Some(probs) = &self.estimator_scores else {
            self.estimate = self.found as f64;
            return Ok(());
        };
        let unreviewed: Vec<usize> = (0..self.status.len())
            .filter(|&i| self.status[i] == Status::Unreviewed)
            .collect();
        if unreviewed.is_empty() {
            self.estimate = self.found as f64;
            self.estimator_converged = true;
            return Ok(());
        }
        let mut y: Vec<bool> = (0..self.status.len())
            .map(|i| match self.status[i] {
                Status::ReviewedSatd => true,
                Status::ReviewedNonSatd => false,
                Status::Unreviewed => probs[i] > 0.5,
            })
            .collect();
        let x_est = match self.config.estimator_features {
            EstimatorFeatures::ModelScore => {
                let mut m = FeatureMatrix::empty(1);
                for (r, &p) in probs.iter().enumerate() {
                    m.push_row(self.test.row_id(r).clone(), vec![(0, p)]);
                }
                m
            }
            EstimatorFeatures::Tfidf => self.test.clone(),
        };
        let spec = ClassifierSpec::logistic();
        let mut converged = false;
        let mut last_probs = Vec::new();
        for _ in 0..self.config.estimator_max_iterations {
            let weights = match self.config.estimator_weighting {
                EstimatorWeighting::Balanced => balanced_weights(&y),
                EstimatorWeighting::Unit => None,
            };
            let model = classifiers::fit_warm(
                &spec,
                &x_est,
                &y,
                weights.as_deref(),
                self.estimator_model.as_ref(),
            )?;
            last_probs = model.predict_prob(&x_est)?;
            self.estimator_model = Some(model);
            let mut changed = false;
            for &i in &unreviewed {
                let g = last_probs[i] > 0.5;
                if g != y[i] {
                    y[i] = g;
                    changed = true;
                }
            }
            if !changed {
                converged = true;
                break;
            }
        }
        let extra = match self.config.estimator_rule {
            EstimatorRule::Threshold => unreviewed.iter().filter(|&&i| y[i]).count() as f64,
            EstimatorRule::ProbabilitySum => unreviewed.iter().map(|&i| last_probs[i]).sum(),
        };
        self.estimate = self.found as f64 + extra;
        self.estimator_converged = converged;
        if !converged {
            log::debug!("estimator did not reach a fixed point; using last iterate");
        }
        Ok(())
    }

    /// Current stop reason, if the session should stop.
    pub fn stop_reason(&self) -> Option<StopReason> {
        if self.unreviewed() == 0 {
            Some(StopReason::PoolExhausted)
        } else if self.manual_stop {
            Some(StopReason::Manual)
        } else if self.model.is_some()
            && target_reached(self.found, self.estimate, self.config.target_recall)
        {
            Some(StopReason::TargetReached)
        } else {
            None
        }
    }

    pub fn should_stop(&self) -> bool {
        self.stop_reason().is_some()
    }

    pub fn session_trace(&self) -> SessionTrace {
        SessionTrace {
            entries: self.log.clone(),
            stop_reason: self.stop_reason(),
            pool_size: self.pool_size(),
            final_estimate: self.estimate,
            separated: self.separated,
            estimator_converged: self.estimator_converged,
        }
    }
}

/// The stopping rule on the counters alone.
pub fn target_reached(found: usize, estimate: f64, target_recall: f64) -> bool {
    estimate > 0.0 && found as f64 >= target_recall * estimate - 1e-9
}

/// Class weights `1/|positives|` and `1/|negatives|`; `None` when a class is
/// absent.
fn balanced_weights(y: &[bool]) -> Option<Vec<f64>> {
    let pos = y.iter().filter(|&&l| l).count();
    let neg = y.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let (wp, wn) = (1.0 / pos as f64, 1.0 / neg as f64);
    Some(y.iter().map(|&l| if l { wp } else { wn }).collect())
}

fn fit_seed(seed: u64, fit: u64) -> u64 {
    seed.wrapping_add(fit.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTrace {
    pub entries: Vec<ReviewEntry>,
    pub stop_reason: Option<StopReason>,
    pub pool_size: usize,
    pub final_estimate: f64,
    pub separated: bool,
    pub estimator_converged: bool,
}

impl SessionTrace {
    pub fn reviewed(&self) -> usize {
        self.entries.len()
    }

    pub fn found(&self) -> usize {
        self.entries.iter().filter(|e| e.label).count()
    }

    /// Test rows in review order.
    pub fn order(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.row).collect()
    }

    /// CSV with columns `step,comment_id,label,found,reviewed,estimate`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "step",
            "comment_id",
            "label",
            "found",
            "reviewed",
            "estimate",
        ])?;
        for (step, e) in self.entries.iter().enumerate() {
            w.write_record([
                (step + 1).to_string(),
                e.comment_id.to_string(),
                label_name(e.label).to_string(),
                e.found.to_string(),
                e.reviewed.to_string(),
                format!("{}", e.estimate_at_query),
            ])?;
        }
        w.flush().map_err(|e| Error::Persistence(e.to_string()))?;
        Ok(())
    }
}

pub fn label_name(label: bool) -> &'static str {
    if label {
        "satd"
    } else {
        "not-satd"
    }
}

/// Runs a session to completion answering every query from `truth`.
pub fn simulate(
    config: PolicyConfig,
    test: FeatureMatrix,
    train: Option<TrainPool>,
    truth: &[bool],
) -> Result<SessionTrace> {
    if truth.len() != test.rows() {
        return Err(Error::Length {
            what: "truth",
            expected: test.rows(),
            actual: truth.len(),
        });
    }
    let mut state = init_session(config, test, train)?;
    run_to_stop(&mut state, truth)?;
    Ok(state.session_trace())
}

pub fn run_to_stop(state: &mut SessionState, truth: &[bool]) -> Result<()> {
    while !state.should_stop() {
        let row = state.next_query()?;
        state.record_label(row, truth[row])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::RowId;

    /// Pool where rows `0..n_pos` carry feature 0 and the rest feature 1,
    /// plus a row-specific noise feature.
    fn toy_pool(n: usize, n_pos: usize) -> (FeatureMatrix, Vec<bool>) {
        let mut m = FeatureMatrix::empty(2 + n);
        let mut y = Vec::new();
        for i in 0..n {
            let pos = i < n_pos;
            let entries = vec![(if pos { 0 } else { 1 }, 1.0), (2 + i as u32, 0.5)];
            m.push_row(
                RowId {
                    project: "t".into(),
                    comment_id: i as u64,
                },
                entries,
            );
            y.push(pos);
        }
        (m, y)
    }

    fn with_probs(phase: Phase, probs: Vec<f64>) -> SessionState {
        let (test, _) = toy_pool(probs.len(), 1);
        let mut s = init_session(PolicyConfig::new(Policy::Emblem, 1), test, None).unwrap();
        s.phase = phase;
        s.probs = Some(probs);
        s
    }

    #[test]
    fn certainty_queries_argmax_and_uncertainty_nearest_half() {
        let s = with_probs(Phase::Certainty, vec![0.9, 0.48, 0.2]);
        assert_eq!(s.next_query().unwrap(), 0);
        let s = with_probs(Phase::Uncertainty, vec![0.9, 0.48, 0.2]);
        assert_eq!(s.next_query().unwrap(), 1);
        let s = with_probs(Phase::Uncertainty, vec![0.4, 0.6, 0.6]);
        assert_eq!(s.next_query().unwrap(), 0);
    }

    #[test]
    fn emblem_rejects_training_pool_and_hard_requires_one() {
        let (test, y) = toy_pool(10, 3);
        let train = TrainPool {
            features: test.clone(),
            labels: y,
            provenance: Provenance::True,
        };
        let err = init_session(
            PolicyConfig::new(Policy::Emblem, 0),
            test.clone(),
            Some(train),
        );
        assert!(matches!(err, Err(Error::Config(_))));
        let err = init_session(PolicyConfig::new(Policy::Hard, 0), test, None);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn stopping_rule_examples() {
        assert!(!target_reached(0, 0.0, 0.9));
        assert!(target_reached(90, 100.0, 0.9));
        assert!(!target_reached(9, 100.0, 0.9));
    }

    #[test]
    fn labeling_last_row_exhausts_pool() {
        let (test, _) = toy_pool(1, 0);
        let mut s = init_session(PolicyConfig::new(Policy::Emblem, 3), test, None).unwrap();
        s.record_label(0, false).unwrap();
        assert_eq!(s.reviewed(), 1);
        assert_eq!(s.stop_reason(), Some(StopReason::PoolExhausted));
        assert!(matches!(s.next_query(), Err(Error::PoolExhausted)));
        assert!(matches!(
            s.record_label(0, true),
            Err(Error::AlreadyReviewed(0))
        ));
    }

    #[test]
    fn undersampling_keeps_lowest_probability_negatives() {
        // 20 reviewed rows: 5 positives, 15 negatives with distinct scores.
        let (test, _) = toy_pool(20, 5);
        let y: Vec<bool> = (0..20).map(|i| i < 5).collect();
        let mut s = init_session(PolicyConfig::new(Policy::Emblem, 1), test.clone(), None).unwrap();
        let spec = ClassifierSpec::logistic();
        // A model scoring row i by its noise feature weight.
        let mut coef = vec![0.0; test.cols()];
        let scores: Vec<f64> = (0..20)
            .map(|i| ((i * 7) % 20) as f64 / 10.0 - 1.0)
            .collect();
        for i in 0..20 {
            coef[2 + i] = scores[i] * 2.0;
        }
        s.model = Some(FittedModel {
            spec,
            n_features: test.cols(),
            state: classifiers::ModelState::Logistic(classifiers::LogisticModel::with_parameters(
                coef, 0.0,
            )),
        });
        let keep = s.undersample(&test, &y).unwrap();
        // Oracle: sort the negatives by their model probability.
        let p = s.model.as_ref().unwrap().predict_prob(&test).unwrap();
        let mut neg: Vec<usize> = (5..20).collect();
        neg.sort_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap());
        let mut expected: Vec<usize> = (0..5).chain(neg[..5].iter().copied()).collect();
        expected.sort_unstable();
        assert_eq!(keep, expected);
    }

    #[test]
    fn estimate_is_exact_on_fully_reviewed_pool() {
        let (test, y) = toy_pool(30, 12);
        let mut s = init_session(
            PolicyConfig {
                emblem_bootstrap: 5,
                ..PolicyConfig::new(Policy::Emblem, 4)
            },
            test,
            None,
        )
        .unwrap();
        for (i, &l) in y.iter().enumerate() {
            s.record_label(i, l).unwrap();
        }
        assert_eq!(s.estimate(), 12.0);
    }

    #[test]
    fn estimate_counts_duplicates_of_reviewed_positives() {
        // Rows 0..4 positive (feature 0), rows 4..20 negative (feature 1);
        // rows 20..23 duplicate the positives' feature vector.
        let mut test = FeatureMatrix::empty(2);
        for i in 0..23u64 {
            let col = if (4..20).contains(&i) { 1 } else { 0 };
            test.push_row(
                RowId {
                    project: "t".into(),
                    comment_id: i,
                },
                vec![(col, 1.0)],
            );
        }
        let mut s = init_session(
            PolicyConfig {
                emblem_bootstrap: 1,
                ..PolicyConfig::new(Policy::Emblem, 0)
            },
            test,
            None,
        )
        .unwrap();
        for i in 0..20 {
            s.record_label(i, i < 4).unwrap();
        }
        assert_eq!(s.found(), 4);
        assert_eq!(s.estimate(), 4.0 + 3.0);
    }

    #[test]
    fn falcon_separates_once_found_exceeds_fraction() {
        let (test, y) = toy_pool(200, 40);
        let train = TrainPool {
            features: test.clone(),
            labels: y.clone(),
            provenance: Provenance::Pseudo,
        };
        let mut s = init_session(PolicyConfig::new(Policy::Falcon, 9), test, Some(train)).unwrap();
        assert!(!s.separated());
        let mut flipped_at = None;
        while !s.should_stop() {
            let r = s.next_query().unwrap();
            let was = s.separated();
            s.record_label(r, y[r]).unwrap();
            if !was && s.separated() {
                flipped_at = Some((s.found(), s.estimate()));
            }
        }
        let (found, _) = flipped_at.expect("separation happened");
        assert!(found >= 1);
    }

    #[test]
    fn random_phase_is_reproducible_and_uniform_draws_differ_by_seed() {
        let (test, y) = toy_pool(50, 5);
        let run = |seed| {
            simulate(
                PolicyConfig::new(Policy::Emblem, seed),
                test.clone(),
                None,
                &y,
            )
            .unwrap()
            .order()
        };
        assert_eq!(run(1), run(1));
        assert_ne!(run(1), run(2));
    }
}
