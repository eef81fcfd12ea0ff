//! Node-attribute transforms: randomized truncated SVD and parameter-free
//! neighborhood smoothing by powers of the self-loop normalized adjacency.

use nalgebra::{DMatrix, SVD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::NormalizedOperators;
use crate::posenc::apply_sign_convention;

/// Node-side SVD embedding `U_r Σ_r` of an attribute matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedAttributes {
    /// N×r projected attributes.
    pub matrix: DMatrix<f64>,
    /// Nonincreasing singular values, length r.
    pub singular_values: Vec<f64>,
    /// r×D right singular vectors; `matrix · components` reconstructs the input.
    pub components: DMatrix<f64>,
    /// `Σσ_i² / ‖X‖_F²` over the kept components.
    pub explained_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SvdOptions {
    pub oversample: usize,
    pub power_iters: usize,
}

impl Default for SvdOptions {
    fn default() -> Self {
        SvdOptions {
            oversample: 10,
            power_iters: 4,
        }
    }
}

fn orthonormal_basis(y: DMatrix<f64>) -> DMatrix<f64> {
    y.qr().q()
}

/// Randomized range-finder SVD keeping `rank` components.
///
/// Deterministic for a given seed. Each right singular vector is signed so
/// that its largest-magnitude entry is positive, which makes the embedding
/// independent of node order up to rounding.
pub fn truncated_svd(x: &DMatrix<f64>, rank: usize, seed: u64, opts: SvdOptions) -> Result<ReducedAttributes> {
    let (n, d) = x.shape();
    let limit = n.min(d);
    if rank == 0 || rank > limit {
        return Err(Error::Invalid(format!(
            "SVD rank {rank} must lie in [1, {limit}] for a {n}×{d} matrix"
        )));
    }
    let width = (rank + opts.oversample).min(limit);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = DMatrix::from_fn(d, width, |_, _| StandardNormal.sample(&mut rng));

    let mut q = orthonormal_basis(x * omega);
    for _ in 0..opts.power_iters {
        let z = orthonormal_basis(x.tr_mul(&q));
        q = orthonormal_basis(x * z);
    }
    let b = q.tr_mul(x);
    let svd = SVD::new(b, true, true);
    let ub = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let order = &order[..rank];

    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut v = DMatrix::from_fn(d, rank, |r, c| vt[(order[c], r)]);
    let mut u = &q * DMatrix::from_fn(ub.nrows(), rank, |r, c| ub[(r, order[c])]);
    let before = v.clone();
    apply_sign_convention(&mut v);
    for c in 0..rank {
        if v.column(c) != before.column(c) {
            u.column_mut(c).neg_mut();
        }
    }
    let mut matrix = u;
    for (c, s) in singular_values.iter().enumerate() {
        matrix.column_mut(c).scale_mut(*s);
    }
    let total = x.norm_squared();
    let kept: f64 = singular_values.iter().map(|s| s * s).sum();
    let explained_ratio = if total > 0.0 { (kept / total).min(1.0) } else { 0.0 };
    Ok(ReducedAttributes {
        matrix,
        singular_values,
        components: v.transpose(),
        explained_ratio,
    })
}

/// `Ā^L X` for the self-loop normalized adjacency `Ā`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedAttributes {
    pub matrix: DMatrix<f64>,
    pub steps: usize,
}

/// Applies `steps` rounds of `X ← Ā X`; zero steps returns `X` unchanged.
pub fn smooth(ops: &NormalizedOperators, x: &DMatrix<f64>, steps: usize) -> SmoothedAttributes {
    let mut matrix = x.clone();
    for _ in 0..steps {
        matrix = ops.gcn_norm.mul_dense(&matrix);
    }
    SmoothedAttributes { matrix, steps }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_operators, Graph};

    #[test]
    fn rank_one_is_recovered() {
        let u = DMatrix::from_column_slice(6, 1, &[1.0, -2.0, 0.5, 3.0, 0.0, 1.5]);
        let v = DMatrix::from_column_slice(4, 1, &[0.3, -1.0, 2.0, 0.7]);
        let x = &u * v.transpose();
        let r = truncated_svd(&x, 1, 7, SvdOptions::default()).unwrap();
        assert!((r.explained_ratio - 1.0).abs() < 1e-12);
        assert!((&r.matrix * &r.components - &x).abs().max() < 1e-10);
    }

    #[test]
    fn identity_singular_values() {
        let r = truncated_svd(&DMatrix::identity(5, 5), 5, 0, SvdOptions::default()).unwrap();
        for s in r.singular_values {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_bounds_checked() {
        let x = DMatrix::zeros(3, 5);
        assert!(truncated_svd(&x, 4, 0, SvdOptions::default()).is_err());
        assert!(truncated_svd(&x, 0, 0, SvdOptions::default()).is_err());
    }

    #[test]
    fn smoothing_k2() {
        let g = Graph::from_edges(2, [(0, 1)]).unwrap().0;
        let ops = build_operators(&g);
        let x = DMatrix::identity(2, 2);
        assert_eq!(smooth(&ops, &x, 0).matrix, x);
        let s = smooth(&ops, &x, 1);
        assert!(s.matrix.iter().all(|&v| (v - 0.5).abs() < 1e-15));
        assert_eq!(s.steps, 1);
    }
}
