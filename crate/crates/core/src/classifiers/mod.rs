//! Classifier contract shared by the active-learning engine and the estimator.

mod forest;
mod logistic;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

pub use forest::{candidates_per_split, Forest, Tree};
pub use logistic::{sigmoid, LogisticModel, LogisticParams};

pub const DEFAULT_N_TREES: usize = 100;
pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_ITERATIONS: usize = 1000;
pub const DEFAULT_C: f64 = 1.0;

const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierKind {
    TreeEnsemble {
        n_trees: usize,
    },
    Logistic {
        max_iterations: usize,
        tolerance: f64,
        /// Inverse L2 penalty strength.
        c: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    #[serde(flatten)]
    pub kind: ClassifierKind,
    pub seed: u64,
}

impl ClassifierSpec {
    pub fn tree_ensemble(n_trees: usize, seed: u64) -> Self {
        ClassifierSpec {
            kind: ClassifierKind::TreeEnsemble { n_trees },
            seed,
        }
    }

    pub fn logistic() -> Self {
        ClassifierSpec {
            kind: ClassifierKind::Logistic {
                max_iterations: DEFAULT_MAX_ITERATIONS,
                tolerance: DEFAULT_TOLERANCE,
                c: DEFAULT_C,
            },
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ClassifierKind::TreeEnsemble { n_trees: 0 } => {
                Err(Error::Config("n_trees must be at least 1".into()))
            }
            ClassifierKind::Logistic { tolerance, c, .. } if !(tolerance > 0.0 && c > 0.0) => {
                Err(Error::Config("tolerance and c must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelState {
    TreeEnsemble(Forest),
    Logistic(LogisticModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: ClassifierSpec,
    pub n_features: usize,
    pub state: ModelState,
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format_version: u32,
    model: FittedModel,
}

impl FittedModel {
    pub fn predict_prob(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        if x.cols() != self.n_features {
            return Err(Error::Shape {
                expected: self.n_features,
                actual: x.cols(),
            });
        }
        Ok(match &self.state {
            ModelState::TreeEnsemble(f) => f.predict_prob(x),
            ModelState::Logistic(m) => m.predict_prob(x),
        })
    }

    pub fn logistic(&self) -> Option<&LogisticModel> {
        match &self.state {
            ModelState::Logistic(m) => Some(m),
            ModelState::TreeEnsemble(_) => None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Envelope {
            format_version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(s)?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(MODEL_FORMAT_VERSION) => {}
            other => {
                return Err(Error::ModelFormat(format!(
                    "unsupported format_version {other:?}"
                )))
            }
        }
        let env: Envelope = serde_json::from_value(value)?;
        Ok(env.model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

/// Fits a classifier. `sample_weight` defaults to all ones.
pub fn fit(
    spec: &ClassifierSpec,
    x: &FeatureMatrix,
    y: &[bool],
    sample_weight: Option<&[f64]>,
) -> Result<FittedModel> {
    fit_warm(spec, x, y, sample_weight, None)
}

/// Like [`fit`], starting a logistic solve from `warm` when given. The optimum
/// is unique, so the result differs from a cold start only within tolerance.
pub fn fit_warm(
    spec: &ClassifierSpec,
    x: &FeatureMatrix,
    y: &[bool],
    sample_weight: Option<&[f64]>,
    warm: Option<&FittedModel>,
) -> Result<FittedModel> {
    Ok(fit_inner(spec, x, y, sample_weight, warm, false)?.0)
}

/// Like [`fit`], also returning out-of-bag probabilities of the training rows
/// for tree ensembles (`None` for logistic models).
pub fn fit_with_oob(
    spec: &ClassifierSpec,
    x: &FeatureMatrix,
    y: &[bool],
    sample_weight: Option<&[f64]>,
) -> Result<(FittedModel, Option<Vec<f64>>)> {
    fit_inner(spec, x, y, sample_weight, None, true)
}

fn fit_inner(
    spec: &ClassifierSpec,
    x: &FeatureMatrix,
    y: &[bool],
    sample_weight: Option<&[f64]>,
    warm: Option<&FittedModel>,
    oob: bool,
) -> Result<(FittedModel, Option<Vec<f64>>)> {
    spec.validate()?;
    if x.rows() == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    if y.len() != x.rows() {
        return Err(Error::Length {
            what: "labels",
            expected: x.rows(),
            actual: y.len(),
        });
    }
    let ones;
    let w = match sample_weight {
        Some(w) => {
            if w.len() != x.rows() {
                return Err(Error::Length {
                    what: "sample weights",
                    expected: x.rows(),
                    actual: w.len(),
                });
            }
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Config(
                    "sample weights must be finite and >= 0".into(),
                ));
            }
            w
        }
        None => {
            ones = vec![1.0; x.rows()];
            &ones
        }
    };
    let mut oob_scores = None;
    let state = match spec.kind {
        ClassifierKind::TreeEnsemble { n_trees } => {
            let (forest, scores) = forest::fit_forest_oob(x, y, w, n_trees, spec.seed, oob);
            oob_scores = scores;
            ModelState::TreeEnsemble(forest)
        }
        ClassifierKind::Logistic {
            max_iterations,
            tolerance,
            c,
        } => {
            let params = LogisticParams {
                c,
                tolerance,
                max_iterations,
            };
            let warm = warm
                .filter(|m| m.n_features == x.cols())
                .and_then(FittedModel::logistic);
            ModelState::Logistic(logistic::fit_logistic(x, y, w, params, warm))
        }
    };
    let model = FittedModel {
        spec: *spec,
        n_features: x.cols(),
        state,
    };
    Ok((model, oob_scores))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(values: &[f64]) -> FeatureMatrix {
        FeatureMatrix::from_dense(&values.iter().map(|&v| vec![v]).collect::<Vec<_>>())
    }

    #[test]
    fn single_class_predicts_zero() {
        let x = column(&[0.1, 0.5, 0.9]);
        let y = [false; 3];
        for spec in [
            ClassifierSpec::tree_ensemble(10, 1),
            ClassifierSpec::logistic(),
        ] {
            let m = fit(&spec, &x, &y, None).unwrap();
            assert_eq!(m.predict_prob(&x).unwrap(), vec![0.0; 3]);
        }
    }

    #[test]
    fn logistic_separable_ordering() {
        let mut v = Vec::new();
        let mut y = Vec::new();
        for _ in 0..50 {
            v.extend([0.0, 1.0]);
            y.extend([false, true]);
        }
        let m = fit(&ClassifierSpec::logistic(), &column(&v), &y, None).unwrap();
        let p = m.predict_prob(&column(&[0.0, 1.0])).unwrap();
        assert!(p[0] < 0.5 && 0.5 < p[1], "{p:?}");
    }

    #[test]
    fn logistic_direct_evaluation() {
        let zero = LogisticModel::with_parameters(vec![0.0], 0.0);
        assert_eq!(zero.predict_prob(&column(&[3.0, -2.0])), vec![0.5, 0.5]);
        let one = LogisticModel::with_parameters(vec![1.0], 0.0);
        let p = one.predict_prob(&column(&[1.0]))[0];
        assert!((p - 1.0 / (1.0 + (-1f64).exp())).abs() < 1e-15);
        assert!((p - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn forest_fits_axis_separable_toy_set() {
        // 20 points, class determined by x0 > 0.5 with margin >= 0.5 between
        // classes along x0.
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..10 {
            rows.push(vec![0.0 + 0.02 * i as f64, (i % 3) as f64]);
            y.push(false);
            rows.push(vec![1.0 + 0.02 * i as f64, (i % 4) as f64]);
            y.push(true);
        }
        // Oracle: a single threshold on x0 separates the classes.
        let max_neg = rows
            .iter()
            .zip(&y)
            .filter(|(_, &l)| !l)
            .map(|(r, _)| r[0])
            .fold(f64::MIN, f64::max);
        let min_pos = rows
            .iter()
            .zip(&y)
            .filter(|(_, &l)| l)
            .map(|(r, _)| r[0])
            .fold(f64::MAX, f64::min);
        assert!(min_pos - max_neg >= 0.5);

        let x = FeatureMatrix::from_dense(&rows);
        let m = fit(&ClassifierSpec::tree_ensemble(100, 42), &x, &y, None).unwrap();
        let p = m.predict_prob(&x).unwrap();
        let correct = p
            .iter()
            .zip(&y)
            .filter(|(&pi, &yi)| (pi > 0.5) == yi)
            .count();
        assert_eq!(correct, 20);
        for pi in p {
            assert_eq!((pi * 100.0).round() / 100.0, pi);
        }
    }

    #[test]
    fn shape_and_empty_errors() {
        let x = column(&[0.0, 1.0]);
        let m = fit(&ClassifierSpec::logistic(), &x, &[false, true], None).unwrap();
        let wide = FeatureMatrix::from_dense(&[vec![0.0, 1.0]]);
        assert!(matches!(m.predict_prob(&wide), Err(Error::Shape { .. })));
        let empty = FeatureMatrix::empty(1);
        assert!(matches!(
            fit(&ClassifierSpec::logistic(), &empty, &[], None),
            Err(Error::EmptyTrainingSet)
        ));
        assert!(ClassifierSpec::tree_ensemble(0, 1).validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let x = FeatureMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0, 0.0], vec![0.3, 0.2]]);
        let y = [false, true, true];
        for spec in [
            ClassifierSpec::tree_ensemble(5, 3),
            ClassifierSpec::logistic(),
        ] {
            let m = fit(&spec, &x, &y, None).unwrap();
            let back = FittedModel::from_json(&m.to_json().unwrap()).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.predict_prob(&x).unwrap(), m.predict_prob(&x).unwrap());
        }
        assert!(matches!(
            FittedModel::from_json(r#"{"format_version":99,"model":null}"#),
            Err(Error::ModelFormat(_))
        ));
    }

    #[test]
    fn doubling_weights_keeps_logistic_predictions() {
        let x = FeatureMatrix::from_dense(&[
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![0.6, 0.4],
            vec![0.2, 0.9],
        ]);
        let y = [false, true, true, false];
        let w = [1.0, 3.0, 0.5, 2.0];
        let w2: Vec<f64> = w.iter().map(|v| v * 2.0).collect();
        let a = fit(&ClassifierSpec::logistic(), &x, &y, Some(&w)).unwrap();
        let b = fit(&ClassifierSpec::logistic(), &x, &y, Some(&w2)).unwrap();
        let pa = a.predict_prob(&x).unwrap();
        let pb = b.predict_prob(&x).unwrap();
        for (u, v) in pa.iter().zip(&pb) {
            assert_eq!(*u > 0.5, *v > 0.5);
            assert!((u - v).abs() < 1e-5);
        }
    }
}
