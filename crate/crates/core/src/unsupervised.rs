//! Median-based clustering and labeling (CLA), its feature/instance selection
//! extension (CLAFI), and the percentile-sweep filter.
//!
//! All comparisons against medians and thresholds are strict: a value equal
//! to the median is "not above".

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{median_with_zeros, FeatureMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaAssignment {
    pub k_counts: Vec<u32>,
    pub k_threshold: f64,
    pub labels: Vec<bool>,
}

impl ClaAssignment {
    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }
}

/// Number of features strictly above their column median, per row.
pub fn above_median_counts(matrix: &FeatureMatrix) -> Vec<u32> {
    above_counts(matrix, &matrix.column_medians())
}

fn above_counts(matrix: &FeatureMatrix, medians: &[f64]) -> Vec<u32> {
    // Implicit zeros are above a negative median.
    let negative_cols = medians.iter().filter(|&&m| m < 0.0).count() as u32;
    (0..matrix.rows())
        .map(|r| {
            let (cols, vals) = matrix.row(r);
            let mut k = negative_cols;
            for (&c, &v) in cols.iter().zip(vals) {
                let med = medians[c as usize];
                if med < 0.0 {
                    k -= 1;
                }
                if v > med {
                    k += 1;
                }
            }
            k
        })
        .collect()
}

fn median_of_counts(k: &[u32]) -> f64 {
    let mut v: Vec<f64> = k.iter().map(|&x| f64::from(x)).collect();
    let n = v.len();
    median_with_zeros(&mut v, n)
}

/// Labels a row SATD when its above-median count exceeds the median count.
pub fn cla_label(matrix: &FeatureMatrix) -> ClaAssignment {
    let k_counts = above_median_counts(matrix);
    let k_threshold = median_of_counts(&k_counts);
    let labels = k_counts
        .iter()
        .map(|&k| f64::from(k) > k_threshold)
        .collect();
    ClaAssignment {
        k_counts,
        k_threshold,
        labels,
    }
}

/// Which (value, label) combinations count as violating the proneness tendency.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationRule {
    /// High value with a negative label, or low value with a positive label.
    #[default]
    Tendency,
    /// The inverted reading: high value with a positive label, or low value
    /// with a negative label. Kept for sensitivity runs only.
    Literal,
}

impl ViolationRule {
    fn violates(self, above: bool, label: bool) -> bool {
        match self {
            ViolationRule::Tendency => above != label,
            ViolationRule::Literal => above == label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationTable {
    pub counts: Vec<usize>,
    pub selected_features: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClafiSelection {
    pub table: ViolationTable,
    pub retained: Vec<usize>,
    /// Which distinct violation level (0 = minimum) produced the selection.
    pub level: usize,
}

pub fn clafi_select(matrix: &FeatureMatrix, labels: &[bool]) -> Result<ClafiSelection> {
    clafi_select_with(matrix, labels, ViolationRule::Tendency)
}

pub fn clafi_select_with(
    matrix: &FeatureMatrix,
    labels: &[bool],
    rule: ViolationRule,
) -> Result<ClafiSelection> {
    if labels.len() != matrix.rows() {
        return Err(Error::Length {
            what: "labels",
            expected: matrix.rows(),
            actual: labels.len(),
        });
    }
    let medians = matrix.column_medians();
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;

    let mut above_pos = vec![0usize; matrix.cols()];
    let mut above_neg = vec![0usize; matrix.cols()];
    let mut nz_pos = vec![0usize; matrix.cols()];
    let mut nz_neg = vec![0usize; matrix.cols()];
    for (r, &label) in labels.iter().enumerate() {
        let (cols, vals) = matrix.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            let c = c as usize;
            let above = v > medians[c];
            match (label, above) {
                (true, true) => above_pos[c] += 1,
                (false, true) => above_neg[c] += 1,
                _ => {}
            }
            if label {
                nz_pos[c] += 1;
            } else {
                nz_neg[c] += 1;
            }
        }
    }
    let counts: Vec<usize> = (0..matrix.cols())
        .map(|c| {
            let zero_above = 0.0 > medians[c];
            let (zp, zn) = (n_pos - nz_pos[c], n_neg - nz_neg[c]);
            let ap = above_pos[c] + if zero_above { zp } else { 0 };
            let an = above_neg[c] + if zero_above { zn } else { 0 };
            let (bp, bn) = (n_pos - ap, n_neg - an);
            match rule {
                ViolationRule::Tendency => an + bp,
                ViolationRule::Literal => ap + bn,
            }
        })
        .collect();

    let mut levels: Vec<usize> = counts.clone();
    levels.sort_unstable();
    levels.dedup();

    for (level, &score) in levels.iter().enumerate() {
        let selected: Vec<u32> = counts
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == score)
            .map(|(c, _)| c as u32)
            .collect();
        let retained: Vec<usize> = (0..matrix.rows())
            .filter(|&r| {
                selected.iter().all(|&c| {
                    let above = matrix.get(r, c) > medians[c as usize];
                    !rule.violates(above, labels[r])
                })
            })
            .collect();
        let pos = retained.iter().filter(|&&r| labels[r]).count();
        if pos > 0 && pos < retained.len() {
            return Ok(ClafiSelection {
                table: ViolationTable {
                    counts,
                    selected_features: selected,
                },
                retained,
                level,
            });
        }
    }
    Err(Error::SelectionFailure)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub chosen_percentile: u32,
    pub chosen_threshold: f64,
    pub train_precision: f64,
    pub train_k: Vec<u32>,
    pub test_k: Vec<u32>,
    /// Test rows with `K > threshold`, auto-labeled SATD.
    pub auto_satd_test_ids: Vec<usize>,
    pub retained_train_ids: Vec<usize>,
    pub retained_test_ids: Vec<usize>,
}

pub const SWEEP_PERCENTILES: std::ops::RangeInclusive<u32> = 50..=95;

/// Nearest-rank percentile of an ascending slice.
pub fn nearest_rank(sorted: &[u32], percentile: u32) -> u32 {
    assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = (percentile as usize * n).div_ceil(100).max(1);
    sorted[rank - 1]
}

/// Precision of `K > threshold` against `labels` at every swept percentile;
/// `None` where nothing is predicted positive.
pub fn sweep_precisions(k: &[u32], labels: &[bool]) -> Vec<(u32, f64, Option<f64>)> {
    let mut sorted = k.to_vec();
    sorted.sort_unstable();
    SWEEP_PERCENTILES
        .map(|p| {
            let thr = f64::from(nearest_rank(&sorted, p));
            let (mut tp, mut fp) = (0usize, 0usize);
            for (&ki, &y) in k.iter().zip(labels) {
                if f64::from(ki) > thr {
                    if y {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
            let precision = (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64);
            (p, thr, precision)
        })
        .collect()
}

/// Picks the training percentile threshold with the best precision (ties go
/// to the higher percentile) and splits off the test rows above it.
pub fn cla_filter_sweep(
    train: &FeatureMatrix,
    train_labels: &[bool],
    test: &FeatureMatrix,
) -> Result<FilterOutcome> {
    if train_labels.len() != train.rows() {
        return Err(Error::Length {
            what: "train labels",
            expected: train.rows(),
            actual: train_labels.len(),
        });
    }
    if train.rows() == 0 || !train_labels.iter().any(|&l| l) {
        return Err(Error::FilterDegenerate);
    }
    let train_k = above_median_counts(train);
    let test_k = above_median_counts(test);

    let mut best: Option<(u32, f64, f64)> = None;
    for (p, thr, precision) in sweep_precisions(&train_k, train_labels) {
        let Some(precision) = precision else { continue };
        // Percentiles ascend, so `>=` keeps the higher one on ties.
        if best.is_none_or(|(_, _, b)| precision >= b) {
            best = Some((p, thr, precision));
        }
    }
    let (chosen_percentile, chosen_threshold, train_precision) =
        best.ok_or(Error::FilterDegenerate)?;

    let above = |k: u32| f64::from(k) > chosen_threshold;
    let (auto_satd_test_ids, retained_test_ids): (Vec<usize>, Vec<usize>) =
        (0..test.rows()).partition(|&r| above(test_k[r]));
    let retained_train_ids = (0..train.rows()).filter(|&r| !above(train_k[r])).collect();
    Ok(FilterOutcome {
        chosen_percentile,
        chosen_threshold,
        train_precision,
        train_k,
        test_k,
        auto_satd_test_ids,
        retained_train_ids,
        retained_test_ids,
    })
}
