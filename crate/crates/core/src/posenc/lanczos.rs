//! Thick-restart Lanczos for the smallest eigenpairs of a sparse symmetric operator.
//!
//! Each expansion step orthogonalizes the new vector against the whole basis
//! twice (classical Gram–Schmidt, repeated). Restarts keep the smallest Ritz
//! vectors, which turns the projected matrix into an arrowhead; computing the
//! full projection column at every step absorbs that structure without special
//! cases. Invariant subspaces are continued with a fresh random vector, and a
//! probe run in the orthogonal complement of the converged vectors picks up
//! eigenvalue multiplicities a single Krylov sequence cannot see.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanczosOptions {
    /// Ritz residual `‖Au − θu‖₂` required for convergence.
    pub tol: f64,
    pub max_restarts: usize,
    /// Krylov basis size; defaults to `max(3k, k + 50)`.
    pub basis_size: Option<usize>,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            tol: 1e-11,
            max_restarts: 5000,
            basis_size: None,
            seed: 0,
        }
    }
}

/// Ascending eigenvalues with matching unit eigenvectors (columns).
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// One classical Gram–Schmidt sweep of `w` against `basis`; returns the coefficients.
fn orthogonalize_once(w: &mut [f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let h: Vec<f64> = basis.iter().map(|b| dot(b, w)).collect();
    for (b, &c) in basis.iter().zip(&h) {
        axpy(-c, b, w);
    }
    h
}

struct Problem<'a, A, P> {
    n: usize,
    apply: &'a A,
    project: &'a P,
    /// Dimension of the complement of the implicit (projected) nullspace.
    free_dim: usize,
}

impl<A, P> Problem<'_, A, P>
where
    A: Fn(&[f64], &mut [f64]),
    P: Fn(&mut [f64]),
{
    /// Two Gram–Schmidt passes against the implicit nullspace, `locked` and
    /// `basis` together; returns the summed `basis` coefficients. Doing all
    /// three in every pass keeps rounding errors from re-entering through the
    /// three-term recurrence.
    fn orthogonalize(&self, w: &mut [f64], locked: &[Vec<f64>], basis: &[Vec<f64>]) -> Vec<f64> {
        let mut coeffs = vec![0.0; basis.len()];
        for _ in 0..2 {
            (self.project)(w);
            orthogonalize_once(w, locked);
            for (acc, c) in coeffs.iter_mut().zip(orthogonalize_once(w, basis)) {
                *acc += c;
            }
        }
        coeffs
    }

    fn random_start(&self, rng: &mut ChaCha8Rng, locked: &[Vec<f64>], basis: &[Vec<f64>]) -> Option<Vec<f64>> {
        for _ in 0..8 {
            let mut v: Vec<f64> = (0..self.n).map(|_| StandardNormal.sample(rng)).collect();
            self.orthogonalize(&mut v, locked, basis);
            let nv = norm(&v);
            if nv > 1e-8 {
                v.iter_mut().for_each(|x| *x /= nv);
                return Some(v);
            }
        }
        None
    }

    /// Krylov–Schur iteration for the `want` smallest eigenpairs in the
    /// complement of the projected nullspace and `locked`.
    fn run(
        &self,
        want: usize,
        locked: &[Vec<f64>],
        opts: &LanczosOptions,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let avail = self.free_dim - locked.len();
        assert!(want >= 1 && want <= avail);
        let m = opts
            .basis_size
            .unwrap_or_else(|| (3 * want).max(want + 50))
            .max(want + 2)
            .min(avail);
        let keep = (want + (m - want) / 2).max(want).min(m.saturating_sub(1)).max(1);

        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        let mut h = DMatrix::<f64>::zeros(m, m);
        let mut next = self
            .random_start(rng, locked, &[])
            .ok_or_else(|| Error::Invalid("no start vector outside the deflated subspace".into()))?;
        let mut beta = 0.0;
        let mut worst = f64::INFINITY;
        let mut w = vec![0.0; self.n];

        for _restart in 0..opts.max_restarts {
            while basis.len() < m {
                let j = basis.len();
                basis.push(std::mem::take(&mut next));
                (self.apply)(&basis[j], &mut w);
                let coeffs = self.orthogonalize(&mut w, locked, &basis);
                for (i, &c) in coeffs.iter().enumerate() {
                    h[(i, j)] = c;
                    h[(j, i)] = c;
                }
                beta = norm(&w);
                if basis.len() == avail {
                    beta = 0.0;
                    break;
                }
                if beta <= 1e-10 {
                    beta = 0.0;
                    next = self.random_start(rng, locked, &basis).ok_or_else(|| {
                        Error::Invalid("Krylov space exhausted before the basis filled".into())
                    })?;
                } else {
                    next = w.iter().map(|x| x / beta).collect();
                }
            }

            let p = basis.len();
            let eig = SymmetricEigen::new(h.view((0, 0), (p, p)).into_owned());
            let mut order: Vec<usize> = (0..p).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let residual = |i: usize| beta * eig.eigenvectors[(p - 1, order[i])].abs();
            worst = (0..want).map(residual).fold(0.0, f64::max);

            let take = if worst <= opts.tol { want } else { keep };
            let mut ritz: Vec<Vec<f64>> = Vec::with_capacity(take);
            for &col in order.iter().take(take) {
                let mut u = vec![0.0; self.n];
                for (row, b) in basis.iter().enumerate() {
                    axpy(eig.eigenvectors[(row, col)], b, &mut u);
                }
                ritz.push(u);
            }
            let values: Vec<f64> = order.iter().take(take).map(|&c| eig.eigenvalues[c]).collect();
            if worst <= opts.tol {
                return Ok((values, ritz));
            }

            // restart: the kept Ritz vectors are the new basis and the
            // residual direction `next` continues the expansion
            basis = ritz;
            h.fill(0.0);
            for (i, &theta) in values.iter().enumerate() {
                h[(i, i)] = theta;
            }
        }
        Err(Error::NoConvergence {
            what: "lanczos",
            iterations: opts.max_restarts,
            residual: worst,
        })
    }
}

/// Smallest `k` eigenpairs of the symmetric operator `apply` restricted to the
/// complement of the subspace removed by `project` (an orthogonal projector of
/// rank `n − free_dim` onto a known invariant subspace's complement).
///
/// The returned vectors are refined by a final Rayleigh–Ritz step over every
/// vector found, so they are orthonormal to working precision.
pub fn smallest_eigenpairs<A, P>(
    n: usize,
    free_dim: usize,
    apply: A,
    project: P,
    k: usize,
    opts: &LanczosOptions,
) -> Result<EigenPairs>
where
    A: Fn(&[f64], &mut [f64]),
    P: Fn(&mut [f64]),
{
    if k == 0 || k > free_dim {
        return Err(Error::Invalid(format!(
            "requested {k} eigenpairs from a {free_dim}-dimensional subspace"
        )));
    }
    let problem = Problem {
        n,
        apply: &apply,
        project: &project,
        free_dim,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (mut values, mut vectors) = problem.run(k, &[], opts, &mut rng)?;

    // probe the complement for eigenvalues the first sequence missed
    let slack = 1e3 * opts.tol;
    while vectors.len() < free_dim {
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let kth = sorted[k - 1];
        let (pv, pvec) = problem.run(1, &vectors, opts, &mut rng)?;
        if pv[0] < kth - slack {
            values.push(pv[0]);
            vectors.extend(pvec);
        } else {
            break;
        }
    }

    // Rayleigh–Ritz over everything collected
    let f = vectors.len();
    let mut av = vec![vec![0.0; n]; f];
    for (src, dst) in vectors.iter().zip(av.iter_mut()) {
        apply(src, dst);
    }
    let g = DMatrix::from_fn(f, f, |i, j| 0.5 * (dot(&vectors[i], &av[j]) + dot(&vectors[j], &av[i])));
    let eig = SymmetricEigen::new(g);
    let mut order: Vec<usize> = (0..f).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut out = DMatrix::zeros(n, k);
    let mut out_values = Vec::with_capacity(k);
    for (c, &col) in order.iter().take(k).enumerate() {
        let mut u = vec![0.0; n];
        for (row, v) in vectors.iter().enumerate() {
            axpy(eig.eigenvectors[(row, col)], v, &mut u);
        }
        let nu = norm(&u);
        for (r, x) in u.iter().enumerate() {
            out[(r, c)] = x / nu;
        }
        out_values.push(eig.eigenvalues[col]);
    }
    Ok(EigenPairs {
        values: out_values,
        vectors: out,
    })
}
