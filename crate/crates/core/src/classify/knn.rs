//! Euclidean k-nearest-neighbor voting.

use nalgebra::DMatrix;

use super::{sorted_classes, Capabilities, ClassifierBackend, Prediction};
use crate::error::Result;

/// Probability of a class is its frequency among the `k` nearest training
/// rows. Equal distances are broken toward the lower training-row index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Knn {
    pub k: usize,
}

impl Default for Knn {
    fn default() -> Self {
        Knn { k: 5 }
    }
}

impl ClassifierBackend for Knn {
    fn name(&self) -> &str {
        "builtin:knn"
    }

    fn version(&self) -> &str {
        env!("CARGO_PKG_VERSION")
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::UNLIMITED
    }

    fn predict_proba(
        &mut self,
        train_x: &DMatrix<f64>,
        train_y: &[i64],
        query_x: &DMatrix<f64>,
        _seed: u64,
    ) -> Result<Prediction> {
        let n = train_x.nrows();
        let k = if self.k > n {
            log::warn!("k = {} exceeds the {n} training rows; using k = {n}", self.k);
            n
        } else {
            self.k
        };
        let classes = sorted_classes(train_y);
        let target: Vec<usize> = train_y.iter().map(|y| classes.binary_search(y).unwrap()).collect();
        let mut proba = DMatrix::zeros(query_x.nrows(), classes.len());
        let mut dist: Vec<(f64, usize)> = Vec::with_capacity(n);
        for q in 0..query_x.nrows() {
            let qrow = query_x.row(q);
            dist.clear();
            dist.extend((0..n).map(|i| ((train_x.row(i) - qrow).norm_squared(), i)));
            dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for &(_, i) in &dist[..k] {
                proba[(q, target[i])] += 1.0 / k as f64;
            }
        }
        Ok(Prediction { classes, proba })
    }
}
