//! Single-token pattern filter ("Easy").
//!
//! Patterns are ranked by `TP^4 / P^3` (precision to the fourth power times
//! support). The best pattern is kept, every training comment containing it is
//! removed, and scores are recomputed on the remainder. Selection stops when
//! the best remaining pattern falls below 80% precision.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Corpus};
use crate::error::{Error, Result};

pub const MIN_PATTERN_PRECISION: f64 = 0.80;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pattern {
    pub token: String,
    /// Remaining training comments containing the token when it was selected.
    pub support: usize,
    /// How many of those were SATD.
    pub true_positives: usize,
    pub precision: f64,
    pub score: f64,
}

impl Pattern {
    fn new(token: String, support: usize, true_positives: usize) -> Self {
        let (p, tp) = (support as f64, true_positives as f64);
        Pattern {
            token,
            support,
            true_positives,
            precision: if support == 0 { 0.0 } else { tp / p },
            score: if support == 0 {
                0.0
            } else {
                tp.powi(4) / p.powi(3)
            },
        }
    }
}

/// Ordering used to pick the next pattern: score, then precision, then the
/// lexicographically smaller token.
fn better(a: &Pattern, b: &Pattern) -> bool {
    a.score
        .total_cmp(&b.score)
        .then(a.precision.total_cmp(&b.precision))
        .then_with(|| b.token.cmp(&a.token))
        .is_gt()
}

fn token_sets(comments: &Corpus) -> Vec<BTreeSet<String>> {
    comments
        .records()
        .iter()
        .map(|r| tokenize(&r.text).into_iter().collect())
        .collect()
}

/// Scores every token over the comments whose `alive` flag is set.
pub fn score_tokens(sets: &[BTreeSet<String>], labels: &[bool], alive: &[bool]) -> Vec<Pattern> {
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    for ((set, &label), _) in sets.iter().zip(labels).zip(alive).filter(|(_, &a)| a) {
        for t in set {
            let e = counts.entry(t).or_insert((0, 0));
            e.0 += 1;
            e.1 += usize::from(label);
        }
    }
    let mut out: Vec<Pattern> = counts
        .into_iter()
        .map(|(t, (p, tp))| Pattern::new(t.to_string(), p, tp))
        .collect();
    out.sort_by(|a, b| a.token.cmp(&b.token));
    out
}

pub fn easy_fit(train: &Corpus, labels: &[bool]) -> Result<Vec<Pattern>> {
    if labels.len() != train.len() {
        return Err(Error::Length {
            what: "train labels",
            expected: train.len(),
            actual: labels.len(),
        });
    }
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let sets = token_sets(train);

    // Inverted index so removals only touch the affected tokens.
    let mut postings: HashMap<&str, Vec<usize>> = HashMap::new();
    let mut support: HashMap<&str, (usize, usize)> = HashMap::new();
    for (i, set) in sets.iter().enumerate() {
        for t in set {
            postings.entry(t).or_default().push(i);
            let e = support.entry(t).or_insert((0, 0));
            e.0 += 1;
            e.1 += usize::from(labels[i]);
        }
    }
    let mut alive = vec![true; sets.len()];
    let mut kept = Vec::new();
    loop {
        let best = support
            .iter()
            .filter(|(_, &(p, _))| p > 0)
            .map(|(t, &(p, tp))| Pattern::new(t.to_string(), p, tp))
            .fold(None::<Pattern>, |acc, cand| match acc {
                Some(a) if !better(&cand, &a) => Some(a),
                _ => Some(cand),
            });
        let Some(best) = best else { break };
        if best.precision < MIN_PATTERN_PRECISION {
            break;
        }
        for &doc in &postings[best.token.as_str()] {
            if !alive[doc] {
                continue;
            }
            alive[doc] = false;
            for t in &sets[doc] {
                let e = support.get_mut(t.as_str()).expect("indexed token");
                e.0 -= 1;
                e.1 -= usize::from(labels[doc]);
            }
        }
        kept.push(best);
    }
    Ok(kept)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EasyPrediction {
    pub predictions: Vec<bool>,
    /// Rows that contain at least one pattern token.
    pub matched: Vec<usize>,
}

pub fn easy_apply(patterns: &[Pattern], comments: &Corpus) -> EasyPrediction {
    let tokens: BTreeSet<&str> = patterns.iter().map(|p| p.token.as_str()).collect();
    let predictions: Vec<bool> = comments
        .records()
        .iter()
        .map(|r| {
            tokenize(&r.text)
                .iter()
                .any(|t| tokens.contains(t.as_str()))
        })
        .collect();
    let matched = predictions
        .iter()
        .enumerate()
        .filter(|(_, &p)| p)
        .map(|(i, _)| i)
        .collect();
    EasyPrediction {
        predictions,
        matched,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CommentRecord;

    fn corpus(texts: &[&str]) -> Corpus {
        Corpus::from_records(
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| CommentRecord {
                    project: "p".into(),
                    comment_id: i as u64,
                    text: t.to_string(),
                    truth: None,
                })
                .collect(),
        )
    }

    #[test]
    fn score_formula() {
        let todo = Pattern::new("todo".into(), 10, 9);
        let fixme = Pattern::new("fixme".into(), 4, 4);
        assert!((todo.score - 6.561).abs() < 1e-12);
        assert_eq!(fixme.score, 4.0);
        assert!(better(&todo, &fixme));
        assert_eq!(Pattern::new("x".into(), 5, 0).score, 0.0);
    }

    #[test]
    fn higher_score_wins_over_precision() {
        let mut texts = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            texts.push("todo later");
            labels.push(i < 9);
        }
        for _ in 0..4 {
            texts.push("fixme now");
            labels.push(true);
        }
        for _ in 0..30 {
            texts.push("plain getter");
            labels.push(false);
        }
        let c = corpus(&texts);
        let pats = easy_fit(&c, &labels).unwrap();
        assert_eq!(pats[0].token, "later"); // ties with "todo"; lexicographic
        assert_eq!(pats[0].support, 10);
        assert_eq!(pats[0].true_positives, 9);
        let tokens: Vec<&str> = pats.iter().map(|p| p.token.as_str()).collect();
        assert_eq!(tokens, vec!["later", "fixme"]);
    }

    #[test]
    fn no_candidate_reaches_threshold() {
        let c = corpus(&["todo", "todo", "other"]);
        let pats = easy_fit(&c, &[true, false, false]).unwrap();
        assert!(pats.is_empty());
    }

    #[test]
    fn apply_containment() {
        let pats = vec![Pattern::new("todo".into(), 1, 1)];
        let c = corpus(&["todo fix", "clean code"]);
        let out = easy_apply(&pats, &c);
        assert_eq!(out.predictions, vec![true, false]);
        assert_eq!(out.matched, vec![0]);
        assert_eq!(easy_apply(&[], &c).predictions, vec![false, false]);
    }
}
