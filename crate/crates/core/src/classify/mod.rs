//! In-context classifier backends and the leakage-free evaluation harness.
//!
//! A backend receives the labeled training rows together with the query rows
//! on every call and keeps no fitted state between calls. Query labels are
//! never part of the call.

mod bridge;
mod evaluate;
mod knn;
mod logreg;

use std::time::Duration;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bridge::{bridge_timeout_from_env, BridgeBackend, BRIDGE_TIMEOUT_ENV};
pub use evaluate::{evaluate, evaluate_with_predictions, ClassAccuracy, Confusion, MetricsReport};
pub use knn::Knn;
pub use logreg::{LogReg, SoftmaxObjective};

/// Limits a backend advertises for a single call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub max_samples: usize,
    pub max_features: usize,
    pub max_classes: usize,
}

impl Capabilities {
    pub const UNLIMITED: Capabilities = Capabilities {
        max_samples: usize::MAX,
        max_features: usize::MAX,
        max_classes: usize::MAX,
    };
}

/// Raw backend output: one probability row per query, columns ordered as `classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub classes: Vec<i64>,
    pub proba: DMatrix<f64>,
}

/// An in-context classifier: context (train rows and labels) is passed on every call.
pub trait ClassifierBackend {
    fn name(&self) -> &str;
    fn version(&self) -> &str;
    fn capabilities(&self) -> Capabilities;

    /// Class probabilities for each row of `query_x`. `train_y` holds at least two classes.
    fn predict_proba(
        &mut self,
        train_x: &DMatrix<f64>,
        train_y: &[i64],
        query_x: &DMatrix<f64>,
        seed: u64,
    ) -> Result<Prediction>;
}

/// Probabilities for query rows plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionResult {
    #[serde(serialize_with = "serialize_rows")]
    pub proba: DMatrix<f64>,
    pub classes: Vec<i64>,
    pub backend: String,
    pub backend_version: String,
    pub recipe_fingerprint: String,
    pub seed: u64,
}

impl PredictionResult {
    /// Predicted label per query row; ties go to the earlier class.
    pub fn argmax_labels(&self) -> Vec<i64> {
        (0..self.proba.nrows())
            .map(|r| {
                let row = self.proba.row(r);
                let mut best = 0;
                for c in 1..row.len() {
                    if row[c] > row[best] {
                        best = c;
                    }
                }
                self.classes[best]
            })
            .collect()
    }
}

fn serialize_rows<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect();
    rows.serialize(s)
}

pub(crate) fn sorted_classes(y: &[i64]) -> Vec<i64> {
    let mut classes = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    classes
}

/// Runs one in-context prediction with capability checks and the
/// single-class shortcut, then verifies the returned probabilities.
pub fn fit_predict(
    backend: &mut dyn ClassifierBackend,
    train_x: &DMatrix<f64>,
    train_y: &[i64],
    query_x: &DMatrix<f64>,
    seed: u64,
) -> Result<PredictionResult> {
    if train_x.nrows() == 0 {
        return Err(Error::Invalid("empty training context".into()));
    }
    if train_x.nrows() != train_y.len() {
        return Err(Error::Invalid(format!(
            "{} training rows but {} labels",
            train_x.nrows(),
            train_y.len()
        )));
    }
    if train_x.ncols() != query_x.ncols() {
        return Err(Error::Invalid(format!(
            "train has {} features, query has {}",
            train_x.ncols(),
            query_x.ncols()
        )));
    }
    let classes = sorted_classes(train_y);
    let caps = backend.capabilities();
    let checks = [
        ("samples", train_x.nrows(), caps.max_samples),
        ("features", train_x.ncols(), caps.max_features),
        ("classes", classes.len(), caps.max_classes),
    ];
    for (what, got, limit) in checks {
        if got > limit {
            return Err(Error::Capability { what, got, limit });
        }
    }
    let name = backend.name().to_string();
    let version = backend.version().to_string();
    let wrap = |proba, classes| PredictionResult {
        proba,
        classes,
        backend: name,
        backend_version: version,
        recipe_fingerprint: String::new(),
        seed,
    };
    if classes.len() == 1 {
        log::warn!(
            "training context holds a single class ({}); predicting it with probability 1",
            classes[0]
        );
        return Ok(wrap(DMatrix::from_element(query_x.nrows(), 1, 1.0), classes));
    }

    let pred = backend.predict_proba(train_x, train_y, query_x, seed)?;
    if pred.proba.nrows() != query_x.nrows() || pred.proba.ncols() != pred.classes.len() {
        return Err(Error::Invalid(format!(
            "backend returned a {}×{} probability matrix for {} queries and {} classes",
            pred.proba.nrows(),
            pred.proba.ncols(),
            query_x.nrows(),
            pred.classes.len()
        )));
    }
    for r in 0..pred.proba.nrows() {
        let row = pred.proba.row(r);
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || row.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Invalid(format!(
                "backend probability row {r} is not a distribution (sum {sum})"
            )));
        }
    }
    Ok(wrap(pred.proba, pred.classes))
}

/// Parses a backend spec: `builtin:logreg[?l2=..&max_iter=..&tol=..]`,
/// `builtin:knn[?k=..]` or `bridge:<shell command>`.
pub fn parse_backend(spec: &str, bridge_timeout: Duration) -> Result<Box<dyn ClassifierBackend>> {
    if let Some(cmd) = spec.strip_prefix("bridge:") {
        if cmd.trim().is_empty() {
            return Err(Error::Invalid("bridge backend needs a command".into()));
        }
        let argv = vec!["sh".to_string(), "-c".to_string(), cmd.to_string()];
        return Ok(Box::new(BridgeBackend::spawn(&argv, bridge_timeout)?));
    }
    let rest = spec
        .strip_prefix("builtin:")
        .ok_or_else(|| Error::Invalid(format!("unknown backend spec {spec:?}")))?;
    let (kind, query) = rest.split_once('?').unwrap_or((rest, ""));
    let params: Vec<(&str, &str)> = query
        .split('&')
        .filter(|p| !p.is_empty())
        .map(|p| p.split_once('=').ok_or_else(|| Error::Invalid(format!("bad backend parameter {p:?}"))))
        .collect::<Result<_>>()?;
    fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
        value
            .parse()
            .map_err(|_| Error::Invalid(format!("bad value for {key}: {value:?}")))
    }
    match kind {
        "logreg" => {
            let mut lr = LogReg::default();
            for (key, value) in params {
                match key {
                    "l2" => lr.l2 = num(key, value)?,
                    "max_iter" => lr.max_iter = num(key, value)?,
                    "tol" => lr.tol = num(key, value)?,
                    _ => return Err(Error::Invalid(format!("unknown logreg parameter {key}"))),
                }
            }
            if lr.l2.is_nan() || lr.l2 < 0.0 {
                return Err(Error::Invalid("l2 must be nonnegative".into()));
            }
            Ok(Box::new(lr))
        }
        "knn" => {
            let mut knn = Knn::default();
            for (key, value) in params {
                match key {
                    "k" => knn.k = num(key, value)?,
                    _ => return Err(Error::Invalid(format!("unknown knn parameter {key}"))),
                }
            }
            if knn.k == 0 {
                return Err(Error::Invalid("k must be at least 1".into()));
            }
            Ok(Box::new(knn))
        }
        _ => Err(Error::Invalid(format!("unknown builtin backend {kind:?}"))),
    }
}
