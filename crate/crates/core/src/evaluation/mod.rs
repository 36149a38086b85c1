//! Classification metrics, review-order APFD and rank grouping.

mod ranking;

pub use ranking::{cohen_groups, iqr, median, population_std, Group, MetricBlock, RankTable};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn from_predictions(predicted: &[bool], truth: &[bool]) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(Error::Length {
                what: "predictions",
                expected: truth.len(),
                actual: predicted.len(),
            });
        }
        let mut c = ConfusionCounts::default();
        for (&p, &t) in predicted.iter().zip(truth) {
            match (p, t) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// False-alarm rate denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FarMode {
    /// `fp / (fp + tn)`.
    #[default]
    Standard,
    /// `fp / (tp + tn)`.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub g1: f64,
    pub far: f64,
    /// True when some ratio had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

fn ratio(num: f64, den: f64, degenerate: &mut bool) -> f64 {
    if den == 0.0 {
        *degenerate = true;
        0.0
    } else {
        num / den
    }
}

pub fn compute_metrics(c: &ConfusionCounts, far_mode: FarMode) -> Metrics {
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let mut degenerate = false;
    let recall = ratio(tp, tp + fn_, &mut degenerate);
    let precision = ratio(tp, tp + fp, &mut degenerate);
    let far = match far_mode {
        FarMode::Standard => ratio(fp, fp + tn, &mut degenerate),
        FarMode::Literal => ratio(fp, tp + tn, &mut degenerate),
    };
    let f1 = ratio(
        2.0 * recall * precision,
        recall + precision,
        &mut degenerate,
    );
    let g1 = ratio(
        2.0 * recall * (1.0 - far),
        recall + 1.0 - far,
        &mut degenerate,
    );
    Metrics {
        recall,
        precision,
        f1,
        g1,
        far,
        degenerate,
    }
}

/// APFD of a review order. `reviewed` holds the truth of each reviewed item in
/// review order; the `total_positives - found` positives not reviewed take the
/// mean of the remaining positions.
pub fn apfd(reviewed: &[bool], total_positives: usize, total_comments: usize) -> Result<f64> {
    check_apfd_args(reviewed, total_positives, total_comments)?;
    let (n, m) = (total_comments as f64, total_positives as f64);
    let mut sum = 0.0;
    let mut found = 0usize;
    for (i, &t) in reviewed.iter().enumerate() {
        if t {
            sum += (i + 1) as f64;
            found += 1;
        }
    }
    let k = reviewed.len() as f64;
    let missing = (total_positives - found) as f64;
    sum += missing * (k + 1.0 + n) / 2.0;
    Ok(1.0 - sum / (n * m) + 1.0 / (2.0 * n))
}

/// Area under the recall-versus-cost polyline starting at (0, 0). Positives
/// not reviewed are spread evenly over the remaining positions.
pub fn apfd_trapezoid(
    reviewed: &[bool],
    total_positives: usize,
    total_comments: usize,
) -> Result<f64> {
    check_apfd_args(reviewed, total_positives, total_comments)?;
    let (n, m) = (total_comments as f64, total_positives as f64);
    let found = reviewed.iter().filter(|&&t| t).count();
    let rest = total_comments - reviewed.len();
    let tail_rate = if rest == 0 {
        0.0
    } else {
        (total_positives - found) as f64 / rest as f64
    };
    let mut area = 0.0;
    let mut prev = 0.0;
    let mut hits = 0.0;
    for i in 0..total_comments {
        hits += match reviewed.get(i) {
            Some(&t) => f64::from(u8::from(t)),
            None => tail_rate,
        };
        let recall = hits / m;
        area += (prev + recall) / 2.0 / n;
        prev = recall;
    }
    Ok(area)
}

fn check_apfd_args(reviewed: &[bool], m: usize, n: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::UndefinedMetric("APFD needs at least one positive"));
    }
    let found = reviewed.iter().filter(|&&t| t).count();
    if reviewed.len() > n || m > n || found > m {
        return Err(Error::Config(format!(
            "inconsistent APFD input: {} reviewed, {found} found, {m} positives, {n} items",
            reviewed.len()
        )));
    }
    Ok(())
}

/// Indices sorted by descending score, ties in index order.
pub fn rank_by_score(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}
