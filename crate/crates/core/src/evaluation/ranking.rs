//! Effect-size rank groups over a block of per-project treatment results.
//!
//! `M = 0.35 * std(all values in the block)` (population form). Within a
//! project the top group holds every treatment within `M` of the best value;
//! the second group holds the remaining treatments within `M` of the best
//! remaining value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EFFECT_FACTOR: f64 = 0.35;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBlock {
    pub metric: String,
    pub higher_is_better: bool,
    pub treatments: Vec<String>,
    pub projects: Vec<String>,
    /// `values[project][treatment]`; `None` marks a failed cell.
    pub values: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Top,
    Second,
    Rest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub block: MetricBlock,
    pub m: f64,
    /// `groups[project][treatment]`; `None` for failed cells.
    pub groups: Vec<Vec<Option<Group>>>,
    pub medians: Vec<Option<f64>>,
    pub iqrs: Vec<Option<f64>>,
}

pub fn population_std(values: &[f64]) -> f64 {
    if values.windows(2).all(|w| w[0] == w[1]) {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Linear-interpolation quantile of unsorted values.
fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

pub fn median(values: &[f64]) -> Option<f64> {
    quantile(values, 0.5)
}

/// 75th minus 25th percentile.
pub fn iqr(values: &[f64]) -> Option<f64> {
    Some(quantile(values, 0.75)? - quantile(values, 0.25)?)
}

pub fn cohen_groups(block: MetricBlock) -> Result<RankTable> {
    if block.treatments.len() < 2 {
        return Err(Error::Config(
            "rank groups need at least two treatments".into(),
        ));
    }
    if block.values.len() != block.projects.len()
        || block
            .values
            .iter()
            .any(|r| r.len() != block.treatments.len())
    {
        return Err(Error::Config(
            "metric block is not projects x treatments".into(),
        ));
    }
    let all: Vec<f64> = block.values.iter().flatten().flatten().copied().collect();
    let m = EFFECT_FACTOR * population_std(&all);
    // Orient so that larger is better.
    let sign = if block.higher_is_better { 1.0 } else { -1.0 };
    let groups = block
        .values
        .iter()
        .map(|row| {
            let mut out: Vec<Option<Group>> = row.iter().map(|v| v.map(|_| Group::Rest)).collect();
            let best = |assigned: &[Option<Group>]| {
                row.iter()
                    .zip(assigned)
                    .filter(|(_, g)| **g == Some(Group::Rest))
                    .filter_map(|(v, _)| v.map(|x| sign * x))
                    .fold(None::<f64>, |acc, x| Some(acc.map_or(x, |a| a.max(x))))
            };
            for group in [Group::Top, Group::Second] {
                let Some(b) = best(&out) else { break };
                for (v, g) in row.iter().zip(out.iter_mut()) {
                    if let (Some(x), Some(Group::Rest)) = (v, *g) {
                        if b - sign * x <= m {
                            *g = Some(group);
                        }
                    }
                }
            }
            out
        })
        .collect();
    let column = |t: usize| -> Vec<f64> { block.values.iter().filter_map(|r| r[t]).collect() };
    let medians = (0..block.treatments.len())
        .map(|t| median(&column(t)))
        .collect();
    let iqrs = (0..block.treatments.len())
        .map(|t| iqr(&column(t)))
        .collect();
    Ok(RankTable {
        block,
        m,
        groups,
        medians,
        iqrs,
    })
}

impl RankTable {
    /// Markdown table: one row per project, `value (group)` per treatment,
    /// followed by median and IQR rows.
    pub fn to_markdown(&self) -> String {
        let b = &self.block;
        let mut s = format!("### {} (M = {:.4})\n\n| project |", b.metric, self.m);
        for t in &b.treatments {
            s.push_str(&format!(" {t} |"));
        }
        s.push_str("\n|---|");
        s.push_str(&"---|".repeat(b.treatments.len()));
        s.push('\n');
        for ((p, row), groups) in b.projects.iter().zip(&b.values).zip(&self.groups) {
            s.push_str(&format!("| {p} |"));
            for (v, g) in row.iter().zip(groups) {
                let cell = match (v, g) {
                    (Some(x), Some(Group::Top)) => format!(" **{:.1}** (1) |", 100.0 * x),
                    (Some(x), Some(Group::Second)) => format!(" *{:.1}* (2) |", 100.0 * x),
                    (Some(x), _) => format!(" {:.1} |", 100.0 * x),
                    (None, _) => " failed |".to_string(),
                };
                s.push_str(&cell);
            }
            s.push('\n');
        }
        for (name, stats) in [("median", &self.medians), ("IQR", &self.iqrs)] {
            s.push_str(&format!("| {name} |"));
            for v in stats {
                match v {
                    Some(x) => s.push_str(&format!(" {:.1} |", 100.0 * x)),
                    None => s.push_str(" - |"),
                }
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(values: Vec<Vec<Option<f64>>>, higher: bool) -> MetricBlock {
        MetricBlock {
            metric: "recall".into(),
            higher_is_better: higher,
            treatments: (0..values[0].len()).map(|i| format!("t{i}")).collect(),
            projects: (0..values.len()).map(|i| format!("p{i}")).collect(),
            values,
        }
    }

    #[test]
    fn hand_computed_groups() {
        let t = cohen_groups(block(vec![vec![Some(70.0), Some(69.0), Some(50.0)]], true)).unwrap();
        // mean 63, squared deviations 49 + 36 + 169 = 254, std = sqrt(254 / 3)
        let std = (254.0f64 / 3.0).sqrt();
        assert!((std - 9.2).abs() < 0.01);
        assert!((t.m - 0.35 * std).abs() < 1e-12);
        assert!((t.m - 3.22).abs() < 0.005);
        assert_eq!(
            t.groups[0],
            vec![Some(Group::Top), Some(Group::Top), Some(Group::Second)]
        );
    }

    #[test]
    fn identical_values_form_one_group() {
        let t = cohen_groups(block(vec![vec![Some(0.4); 3], vec![Some(0.4); 3]], true)).unwrap();
        assert_eq!(t.m, 0.0);
        assert!(t.groups.iter().flatten().all(|g| *g == Some(Group::Top)));
    }

    #[test]
    fn lower_is_better_and_failed_cells() {
        let t = cohen_groups(block(vec![vec![Some(0.1), Some(0.5), None]], false)).unwrap();
        assert_eq!(
            t.groups[0],
            vec![Some(Group::Top), Some(Group::Second), None]
        );
        assert!(t.to_markdown().contains("failed"));
    }

    #[test]
    fn quantiles() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]), Some(2.5));
        assert_eq!(iqr(&[1.0, 2.0, 3.0, 4.0, 5.0]), Some(2.0));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn needs_two_treatments() {
        assert!(cohen_groups(block(vec![vec![Some(1.0)]], true)).is_err());
    }
}
