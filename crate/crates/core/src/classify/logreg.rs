//! Multinomial logistic regression fitted per call with L-BFGS.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use super::{sorted_classes, Capabilities, ClassifierBackend, Prediction};
use crate::error::Result;

const HISTORY: usize = 10;

/// Mean cross-entropy plus `l2/2 · ‖W‖²` (bias unpenalized).
///
/// Parameters are laid out as `W` (C×F, row-major) followed by the C biases.
pub struct SoftmaxObjective<'a> {
    x: &'a DMatrix<f64>,
    targets: Vec<usize>,
    num_classes: usize,
    l2: f64,
}

impl<'a> SoftmaxObjective<'a> {
    /// `targets[i]` is the class index of row `i`, in `0..num_classes`.
    pub fn new(x: &'a DMatrix<f64>, targets: Vec<usize>, num_classes: usize, l2: f64) -> Self {
        assert_eq!(x.nrows(), targets.len());
        assert!(targets.iter().all(|&t| t < num_classes));
        SoftmaxObjective {
            x,
            targets,
            num_classes,
            l2,
        }
    }

    pub fn num_params(&self) -> usize {
        self.num_classes * (self.x.ncols() + 1)
    }

    fn split<'p>(&self, params: &'p [f64]) -> (DMatrix<f64>, &'p [f64]) {
        let f = self.x.ncols();
        let c = self.num_classes;
        (DMatrix::from_row_slice(c, f, &params[..c * f]), &params[c * f..])
    }

    /// Row-wise softmax of `X Wᵀ + b`.
    pub fn probabilities(&self, x: &DMatrix<f64>, params: &[f64]) -> DMatrix<f64> {
        let (w, b) = self.split(params);
        let mut z = x * w.transpose();
        for mut row in z.row_iter_mut() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (v, bias) in row.iter_mut().zip(b) {
                *v = (*v + bias - max).exp();
                sum += *v;
            }
            row /= sum;
        }
        z
    }

    pub fn value_grad(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let (w, b) = self.split(params);
        let n = self.x.nrows() as f64;
        let mut z = self.x * w.transpose();
        let mut loss = 0.0;
        for (i, mut row) in z.row_iter_mut().enumerate() {
            for (v, bias) in row.iter_mut().zip(b) {
                *v += bias;
            }
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[self.targets[i]];
            for v in row.iter_mut() {
                *v = (*v - lse).exp();
            }
            row[self.targets[i]] -= 1.0;
        }
        // z now holds (P − Y)
        let gw = z.tr_mul(self.x) / n + &w * self.l2;
        let mut grad = Vec::with_capacity(self.num_params());
        for r in 0..gw.nrows() {
            grad.extend(gw.row(r).iter());
        }
        for c in 0..self.num_classes {
            grad.push(z.column(c).sum() / n);
        }
        let value = loss / n + 0.5 * self.l2 * w.norm_squared();
        (value, grad)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Result of [`minimize`]: final point, gradient norm and whether `tol` was met.
struct Minimum {
    params: Vec<f64>,
    grad_norm: f64,
    iterations: usize,
    converged: bool,
}

fn minimize(obj: &SoftmaxObjective, max_iter: usize, tol: f64) -> Minimum {
    let dim = obj.num_params();
    let mut x = vec![0.0; dim];
    let (mut fx, mut g) = obj.value_grad(&x);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(HISTORY);
    let mut iterations = 0;

    while iterations < max_iter {
        let gnorm = dot(&g, &g).sqrt();
        if gnorm <= tol {
            return Minimum {
                params: x,
                grad_norm: gnorm,
                iterations,
                converged: true,
            };
        }
        iterations += 1;

        // two-loop recursion
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &d);
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|di| *di *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            d.iter_mut().zip(s).for_each(|(di, si)| *di += (a - b) * si);
        }
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            history.clear();
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }

        let mut step = if history.is_empty() { 1.0 / gnorm.max(1.0) } else { 1.0 };
        let accepted = loop {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            let (ft, gt) = obj.value_grad(&trial);
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                break Some((trial, ft, gt));
            }
            step *= 0.5;
            if step < 1e-20 {
                break None;
            }
        };
        let Some((trial, ft, gt)) = accepted else {
            break;
        };
        let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if history.len() == HISTORY {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = trial;
        fx = ft;
        g = gt;
    }
    let grad_norm = dot(&g, &g).sqrt();
    Minimum {
        params: x,
        grad_norm,
        iterations,
        converged: grad_norm <= tol,
    }
}

/// Built-in multinomial logistic regression backend.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogReg {
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogReg {
    fn default() -> Self {
        LogReg {
            l2: 1e-2,
            max_iter: 500,
            tol: 1e-8,
        }
    }
}

impl ClassifierBackend for LogReg {
    fn name(&self) -> &str {
        "builtin:logreg"
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
        let classes = sorted_classes(train_y);
        let targets = train_y
            .iter()
            .map(|y| classes.binary_search(y).expect("label in class list"))
            .collect();
        let obj = SoftmaxObjective::new(train_x, targets, classes.len(), self.l2);
        let min = minimize(&obj, self.max_iter, self.tol);
        if !min.converged {
            log::warn!(
                "logreg stopped after {} iterations with gradient norm {:.3e} (tol {:.1e})",
                min.iterations,
                min.grad_norm,
                self.tol
            );
        }
        Ok(Prediction {
            proba: obj.probabilities(query_x, &min.params),
            classes,
        })
    }
}
