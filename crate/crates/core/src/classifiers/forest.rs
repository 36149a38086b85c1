//! Bagged randomized decision trees over sparse rows.
//!
//! Each tree is grown on a bootstrap sample (duplicates folded into sample
//! weights) using weighted entropy. At every node `ceil(log2 C)` candidate
//! features are drawn at random among those that are not constant within the
//! node. Trees are grown until leaves are pure or no candidate can split.
//! The ensemble probability is the fraction of trees voting positive.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub(crate) enum Node {
    Leaf {
        positive: bool,
    },
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn vote(&self, x: &FeatureMatrix, r: usize) -> bool {
        let mut at = 0usize;
        loop {
            match self.nodes[at] {
                Node::Leaf { positive } => return positive,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x.get(r, feature) <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 1,
                Node::Split { left, right, .. } => {
                    1 + go(nodes, left as usize).max(go(nodes, right as usize))
                }
            }
        }
        go(&self.nodes, 0)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<Tree>,
}

impl Forest {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn predict_prob(&self, x: &FeatureMatrix) -> Vec<f64> {
        let n = self.trees.len() as f64;
        (0..x.rows())
            .map(|r| {
                let votes = self.trees.iter().filter(|t| t.vote(x, r)).count();
                votes as f64 / n
            })
            .collect()
    }
}

/// Number of candidate features per split for `n_cols` columns.
pub fn candidates_per_split(n_cols: usize) -> usize {
    if n_cols <= 1 {
        1
    } else {
        (n_cols as f64).log2().ceil() as usize
    }
}

#[cfg(test)]
fn fit_forest(x: &FeatureMatrix, y: &[bool], weights: &[f64], n_trees: usize, seed: u64) -> Forest {
    fit_forest_oob(x, y, weights, n_trees, seed, false).0
}

/// Fits the forest and, when `oob` is set, the out-of-bag probability of
/// every training row: the positive vote share among trees whose bootstrap
/// sample missed the row, or the full-ensemble share if none did.
pub(crate) fn fit_forest_oob(
    x: &FeatureMatrix,
    y: &[bool],
    weights: &[f64],
    n_trees: usize,
    seed: u64,
    oob: bool,
) -> (Forest, Option<Vec<f64>>) {
    let columns = x.columns();
    let mut votes = vec![(0u32, 0u32); if oob { x.rows() } else { 0 }];
    let trees = (0..n_trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
            let (tree, multiplicity) = fit_tree(x, &columns, y, weights, &mut rng);
            for (r, v) in votes.iter_mut().enumerate() {
                if multiplicity[r] == 0 {
                    v.0 += u32::from(tree.vote(x, r));
                    v.1 += 1;
                }
            }
            tree
        })
        .collect();
    let forest = Forest { trees };
    let scores = oob.then(|| {
        let full = forest.predict_prob(x);
        votes
            .iter()
            .zip(full)
            .map(|(&(p, n), f)| {
                if n == 0 {
                    f
                } else {
                    f64::from(p) / f64::from(n)
                }
            })
            .collect()
    });
    (forest, scores)
}

struct Scratch {
    /// Node counter stamped on member rows and on touched columns.
    node: u32,
    row_node: Vec<u32>,
    row_pos: Vec<u32>,
    col_node: Vec<u32>,
    touched: Vec<u32>,
    values: Vec<(f64, u32)>,
}

struct Sample<'a> {
    x: &'a FeatureMatrix,
    columns: &'a [Vec<(u32, f64)>],
    y: &'a [bool],
    w: Vec<f64>,
}

fn fit_tree(
    x: &FeatureMatrix,
    columns: &[Vec<(u32, f64)>],
    y: &[bool],
    weights: &[f64],
    rng: &mut ChaCha8Rng,
) -> (Tree, Vec<u32>) {
    let n = x.rows();
    let mut multiplicity = vec![0u32; n];
    for _ in 0..n {
        multiplicity[rng.random_range(0..n)] += 1;
    }
    let w: Vec<f64> = multiplicity
        .iter()
        .zip(weights)
        .map(|(&m, &wi)| f64::from(m) * wi)
        .collect();
    let rows: Vec<u32> = (0..n as u32).filter(|&r| w[r as usize] > 0.0).collect();
    let sample = Sample { x, columns, y, w };
    let mut scratch = Scratch {
        node: 0,
        row_node: vec![0; n],
        row_pos: vec![0; n],
        col_node: vec![0; x.cols()],
        touched: Vec::new(),
        values: Vec::new(),
    };
    let k = candidates_per_split(x.cols());
    let mut nodes = Vec::new();
    // Explicit stack: (node slot, rows)
    nodes.push(Node::Leaf { positive: false });
    let mut stack = vec![(0usize, rows)];
    while let Some((slot, rows)) = stack.pop() {
        let (wp, wn) = class_weights(&sample, &rows);
        let leaf = Node::Leaf { positive: wp > wn };
        if wp == 0.0 || wn == 0.0 {
            nodes[slot] = leaf;
            continue;
        }
        match best_split(&sample, &rows, k, rng, &mut scratch) {
            None => nodes[slot] = leaf,
            Some((feature, threshold)) => {
                let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows
                    .iter()
                    .partition(|&&r| x.get(r as usize, feature) <= threshold);
                let left = nodes.len();
                nodes.push(Node::Leaf { positive: false });
                let right = nodes.len();
                nodes.push(Node::Leaf { positive: false });
                nodes[slot] = Node::Split {
                    feature,
                    threshold,
                    left: left as u32,
                    right: right as u32,
                };
                stack.push((right, right_rows));
                stack.push((left, left_rows));
            }
        }
    }
    (Tree { nodes }, multiplicity)
}

fn class_weights(s: &Sample<'_>, rows: &[u32]) -> (f64, f64) {
    let mut wp = 0.0;
    let mut wn = 0.0;
    for &r in rows {
        if s.y[r as usize] {
            wp += s.w[r as usize];
        } else {
            wn += s.w[r as usize];
        }
    }
    (wp, wn)
}

fn entropy(wp: f64, wn: f64) -> f64 {
    let total = wp + wn;
    if total <= 0.0 {
        return 0.0;
    }
    let mut h = 0.0;
    for w in [wp, wn] {
        if w > 0.0 {
            let p = w / total;
            h -= p * p.log2();
        }
    }
    h
}

/// Returns the best `(feature, threshold)` among sampled non-constant
/// features, or `None` when every feature is constant in the node.
fn best_split(
    s: &Sample<'_>,
    rows: &[u32],
    k: usize,
    rng: &mut ChaCha8Rng,
    scratch: &mut Scratch,
) -> Option<(u32, f64)> {
    scratch.node += 1;
    let node = scratch.node;
    scratch.touched.clear();
    for (pos, &r) in rows.iter().enumerate() {
        scratch.row_node[r as usize] = node;
        scratch.row_pos[r as usize] = pos as u32;
        for &c in s.x.row(r as usize).0 {
            if scratch.col_node[c as usize] != node {
                scratch.col_node[c as usize] = node;
                scratch.touched.push(c);
            }
        }
    }
    // Features absent from every row are constant zero; only touched ones can
    // split. Sorting first makes the draw independent of row order.
    let mut candidates = std::mem::take(&mut scratch.touched);
    candidates.sort_unstable();

    let (total_p, total_n) = class_weights(s, rows);
    let mut best: Option<(f64, u32, f64)> = None;
    let mut evaluated = 0;
    // Partial Fisher-Yates: draw features without replacement until `k`
    // non-constant ones have been scanned.
    for i in 0..candidates.len() {
        if evaluated == k {
            break;
        }
        let j = rng.random_range(i..candidates.len());
        candidates.swap(i, j);
        let feature = candidates[i];
        scratch.values.clear();
        for &(r, v) in &s.columns[feature as usize] {
            if scratch.row_node[r as usize] == node {
                scratch.values.push((v, scratch.row_pos[r as usize]));
            }
        }
        if let Some((gain, thr)) = scan_feature(s, rows, &mut scratch.values, total_p, total_n) {
            evaluated += 1;
            if best.is_none_or(|(g, _, _)| gain > g) {
                best = Some((gain, feature, thr));
            }
        }
    }
    scratch.touched = candidates;
    best.map(|(_, f, t)| (f, t))
}

/// Best impurity decrease for one feature. `nonzero` holds the node's nonzero
/// values; the remaining rows sit at zero. `None` if the feature is constant.
fn scan_feature(
    s: &Sample<'_>,
    rows: &[u32],
    nonzero: &mut [(f64, u32)],
    total_p: f64,
    total_n: f64,
) -> Option<(f64, f64)> {
    let mut zero_p = total_p;
    let mut zero_n = total_n;
    for &(_, pos) in nonzero.iter() {
        let r = rows[pos as usize] as usize;
        if s.y[r] {
            zero_p -= s.w[r];
        } else {
            zero_n -= s.w[r];
        }
    }
    let has_zeros = nonzero.len() < rows.len();
    nonzero.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    // Walk distinct values in ascending order, inserting the zero group at its
    // sorted position; every boundary is a candidate threshold.
    let mut groups: Vec<(f64, f64, f64)> = Vec::new(); // (value, wp, wn)
    let mut zero_done = !has_zeros;
    let push = |v: f64, p: f64, n: f64, groups: &mut Vec<(f64, f64, f64)>| match groups.last_mut() {
        Some(last) if last.0 == v => {
            last.1 += p;
            last.2 += n;
        }
        _ => groups.push((v, p, n)),
    };
    for &(v, pos) in nonzero.iter() {
        if !zero_done && v > 0.0 {
            push(0.0, zero_p, zero_n, &mut groups);
            zero_done = true;
        }
        let r = rows[pos as usize] as usize;
        let (p, n) = if s.y[r] { (s.w[r], 0.0) } else { (0.0, s.w[r]) };
        push(v, p, n, &mut groups);
    }
    if !zero_done {
        push(0.0, zero_p, zero_n, &mut groups);
    }
    if groups.len() < 2 {
        return None;
    }

    let parent = entropy(total_p, total_n);
    let total = total_p + total_n;
    let (mut lp, mut ln) = (0.0, 0.0);
    let mut best: Option<(f64, f64)> = None;
    for pair in groups.windows(2) {
        lp += pair[0].1;
        ln += pair[0].2;
        let (rp, rn) = (total_p - lp, total_n - ln);
        let (rp, rn) = (rp.max(0.0), rn.max(0.0));
        let child = ((lp + ln) * entropy(lp, ln) + (rp + rn) * entropy(rp, rn)) / total;
        let gain = parent - child;
        let thr = pair[0].0 + (pair[1].0 - pair[0].0) / 2.0;
        if best.is_none_or(|(g, _)| gain > g) {
            best = Some((gain, thr));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn candidate_count() {
        assert_eq!(candidates_per_split(1), 1);
        assert_eq!(candidates_per_split(2), 1);
        assert_eq!(candidates_per_split(3), 2);
        assert_eq!(candidates_per_split(4000), 12);
    }

    #[test]
    fn entropy_values() {
        assert_eq!(entropy(1.0, 1.0), 1.0);
        assert_eq!(entropy(1.0, 0.0), 0.0);
    }

    #[test]
    fn single_tree_separates_threshold_data() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 10.0]).collect();
        let y: Vec<bool> = (0..10).map(|i| i >= 5).collect();
        let x = FeatureMatrix::from_dense(&rows);
        let w = vec![1.0; 10];
        let (f, oob) = fit_forest_oob(&x, &y, &w, 25, 7, true);
        let p = f.predict_prob(&x);
        assert_eq!(f, fit_forest(&x, &y, &w, 25, 7));
        assert_eq!(oob.unwrap().len(), 10);
        for (i, &pi) in p.iter().enumerate() {
            if i <= 2 {
                assert!(pi < 0.5, "row {i}: {pi}");
            }
            if i >= 7 {
                assert!(pi > 0.5, "row {i}: {pi}");
            }
        }
    }

    #[test]
    fn split_handles_negative_and_zero_values() {
        let x = FeatureMatrix::from_dense(&[vec![-1.0], vec![0.0], vec![1.0], vec![2.0]]);
        let y = [true, false, false, true];
        let columns = x.columns();
        let s = Sample {
            x: &x,
            columns: &columns,
            y: &y,
            w: vec![1.0; 4],
        };
        let rows = [0u32, 1, 2, 3];
        let mut nonzero = vec![(-1.0, 0u32), (1.0, 2), (2.0, 3)];
        let (gain, thr) = scan_feature(&s, &rows, &mut nonzero, 2.0, 2.0).unwrap();
        assert!(gain > 0.0);
        assert!([-0.5, 1.5].contains(&thr), "{thr}");
    }
}
