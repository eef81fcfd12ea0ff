//! Multi-seed accuracy evaluation over a train/val/test split.

use std::collections::BTreeSet;

use serde::Serialize;

use super::{fit_predict, ClassifierBackend, PredictionResult};
use crate::error::{Error, Result};
use crate::graph::{Graph, SplitSpec, UNLABELED};
use crate::tabularize::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAccuracy {
    pub label: i64,
    /// Test nodes of this class, summed over seeds.
    pub support: usize,
    pub accuracy: f64,
}

/// Rows are true labels, columns predicted labels, counts summed over seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Confusion {
    pub labels: Vec<i64>,
    pub matrix: Vec<Vec<usize>>,
}

/// Accuracy summary. `val_*` drives model selection, `test_*` is for
/// reporting; std is the population std across seeds. `per_class` and
/// `confusion` are computed on the test nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub dataset: String,
    pub recipe_fingerprint: String,
    pub backend: String,
    pub backend_version: String,
    pub seeds: Vec<u64>,
    pub val_acc_mean: Option<f64>,
    pub val_acc_std: Option<f64>,
    pub test_acc_mean: Option<f64>,
    pub test_acc_std: Option<f64>,
    pub val_acc: Vec<f64>,
    pub test_acc: Vec<f64>,
    pub per_class: Vec<ClassAccuracy>,
    pub confusion: Confusion,
}

fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

fn accuracy(pred: &[i64], truth: &[i64]) -> Option<f64> {
    if truth.is_empty() {
        return None;
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Some(hits as f64 / truth.len() as f64)
}

/// [`evaluate`], also returning the raw per-seed predictions for the
/// concatenated `val ++ test` query rows.
pub fn evaluate_with_predictions(
    g: &Graph,
    fm: &FeatureMatrix,
    split: &SplitSpec,
    backend: &mut dyn ClassifierBackend,
    seeds: &[u64],
    dataset: &str,
) -> Result<(MetricsReport, Vec<PredictionResult>)> {
    if seeds.is_empty() {
        return Err(Error::Invalid("at least one seed is required".into()));
    }
    if fm.num_rows() != g.num_nodes() {
        return Err(Error::Invalid(format!(
            "feature matrix has {} rows for {} nodes",
            fm.num_rows(),
            g.num_nodes()
        )));
    }
    let labels = g
        .labels()
        .ok_or_else(|| Error::Invalid("graph has no labels".into()))?;
    let all = split.train.iter().chain(&split.val).chain(&split.test);
    for &v in all {
        if v >= labels.len() {
            return Err(Error::IndexOutOfRange {
                index: v as i64,
                len: labels.len(),
            });
        }
        if labels[v] == UNLABELED {
            return Err(Error::Invalid(format!("split node {v} is unlabeled")));
        }
    }
    let label_of = |nodes: &[usize]| nodes.iter().map(|&v| labels[v]).collect::<Vec<_>>();
    let train_y = label_of(&split.train);
    let val_y = label_of(&split.val);
    let test_y = label_of(&split.test);

    let train_x = fm.select_rows(&split.train);
    let query: Vec<usize> = split.val.iter().chain(&split.test).copied().collect();
    let query_x = fm.select_rows(&query);
    let nval = split.val.len();

    let mut val_acc = Vec::new();
    let mut test_acc = Vec::new();
    let mut predictions = Vec::with_capacity(seeds.len());
    let mut test_pairs: Vec<(i64, i64)> = Vec::new();
    for &seed in seeds {
        let mut result = fit_predict(backend, &train_x, &train_y, &query_x, seed)?;
        result.recipe_fingerprint = fm.recipe_fingerprint.clone();
        let pred = result.argmax_labels();
        let (pv, pt) = pred.split_at(nval);
        val_acc.extend(accuracy(pv, &val_y));
        test_acc.extend(accuracy(pt, &test_y));
        test_pairs.extend(test_y.iter().copied().zip(pt.iter().copied()));
        predictions.push(result);
    }

    let label_set: BTreeSet<i64> = test_pairs.iter().flat_map(|&(t, p)| [t, p]).collect();
    let conf_labels: Vec<i64> = label_set.into_iter().collect();
    let mut matrix = vec![vec![0usize; conf_labels.len()]; conf_labels.len()];
    let pos = |l: i64| conf_labels.binary_search(&l).unwrap();
    for &(t, p) in &test_pairs {
        matrix[pos(t)][pos(p)] += 1;
    }
    let per_class = conf_labels
        .iter()
        .enumerate()
        .filter_map(|(i, &label)| {
            let support: usize = matrix[i].iter().sum();
            (support > 0).then(|| ClassAccuracy {
                label,
                support,
                accuracy: matrix[i][i] as f64 / support as f64,
            })
        })
        .collect();

    let (val_acc_mean, val_acc_std) = mean_std(&val_acc);
    let (test_acc_mean, test_acc_std) = mean_std(&test_acc);
    let report = MetricsReport {
        dataset: dataset.to_string(),
        recipe_fingerprint: fm.recipe_fingerprint.clone(),
        backend: backend.name().to_string(),
        backend_version: backend.version().to_string(),
        seeds: seeds.to_vec(),
        val_acc_mean,
        val_acc_std,
        test_acc_mean,
        test_acc_std,
        val_acc,
        test_acc,
        per_class,
        confusion: Confusion {
            labels: conf_labels,
            matrix,
        },
    };
    Ok((report, predictions))
}

/// Runs one in-context prediction per seed with the train nodes as context
/// and the val and test nodes as queries, then scores the argmax.
pub fn evaluate(
    g: &Graph,
    fm: &FeatureMatrix,
    split: &SplitSpec,
    backend: &mut dyn ClassifierBackend,
    seeds: &[u64],
    dataset: &str,
) -> Result<MetricsReport> {
    evaluate_with_predictions(g, fm, split, backend, seeds, dataset).map(|(r, _)| r)
}
