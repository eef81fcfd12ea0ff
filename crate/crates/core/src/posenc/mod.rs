//! Positional encodings: Laplacian eigenvectors and random-walk return probabilities.

pub mod lanczos;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::NormalizedOperators;
use crate::sparse::CsrMatrix;

pub use lanczos::{EigenPairs, LanczosOptions};

/// Largest graph solved with the dense symmetric eigensolver under [`EigenSolver::Auto`].
pub const DENSE_EIGEN_LIMIT: usize = 2000;

/// Entries within this distance of the column's largest magnitude count as tied
/// for the sign rule.
const SIGN_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EigenSolver {
    /// Dense for `N ≤ DENSE_EIGEN_LIMIT`, Lanczos above.
    #[default]
    Auto,
    Dense,
    Lanczos,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LapPeOptions {
    pub k: usize,
    /// Eigenvalues at or below this are treated as component nullspace and skipped.
    pub trivial_tol: f64,
    pub solver: EigenSolver,
    pub lanczos: LanczosOptions,
}

impl LapPeOptions {
    pub fn new(k: usize) -> Self {
        LapPeOptions {
            k,
            trivial_tol: 1e-8,
            solver: EigenSolver::Auto,
            lanczos: LanczosOptions::default(),
        }
    }
}

/// Laplacian positional encoding: `vectors` is N×k, column `j` is the
/// eigenvector of the `j`-th smallest non-trivial eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct LapPe {
    pub vectors: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
}

/// Random-walk structural encoding: column `i` holds `diag(P^{i+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rwse {
    pub probs: DMatrix<f64>,
}

/// Flips each column so its largest-magnitude entry is positive; among entries
/// tied within `1e-9`, the lowest row index decides.
pub fn apply_sign_convention(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        let max = col.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if let Some(pivot) = col.iter().find(|x| x.abs() >= max - SIGN_TIE_TOL) {
            if *pivot < 0.0 {
                col.neg_mut();
            }
        }
    }
}

/// Unit null vectors of the normalized Laplacian, one per connected component:
/// `D^{1/2}·1` restricted to the component, or the indicator of an isolated node.
struct ComponentNullspace {
    component: Vec<usize>,
    weight: Vec<f64>,
    count: usize,
}

impl ComponentNullspace {
    fn from_laplacian(lap: &CsrMatrix) -> Self {
        let n = lap.nrows();
        let degree: Vec<usize> = (0..n)
            .map(|v| lap.row(v).0.iter().filter(|&&w| w != v).count())
            .collect();
        let mut component = vec![usize::MAX; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for s in 0..n {
            if component[s] != usize::MAX {
                continue;
            }
            component[s] = count;
            stack.push(s);
            while let Some(v) = stack.pop() {
                for &w in lap.row(v).0 {
                    if component[w] == usize::MAX {
                        component[w] = count;
                        stack.push(w);
                    }
                }
            }
            count += 1;
        }
        let mut norms = vec![0.0; count];
        let raw: Vec<f64> = degree
            .iter()
            .map(|&d| if d == 0 { 1.0 } else { (d as f64).sqrt() })
            .collect();
        for (v, &x) in raw.iter().enumerate() {
            norms[component[v]] += x * x;
        }
        let weight = raw
            .iter()
            .enumerate()
            .map(|(v, &x)| x / norms[component[v]].sqrt())
            .collect();
        ComponentNullspace {
            component,
            weight,
            count,
        }
    }

    fn project_out(&self, w: &mut [f64]) {
        let mut coeff = vec![0.0; self.count];
        for (v, x) in w.iter().enumerate() {
            coeff[self.component[v]] += self.weight[v] * x;
        }
        for (v, x) in w.iter_mut().enumerate() {
            *x -= coeff[self.component[v]] * self.weight[v];
        }
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Invalid("positional encoding dimension must be at least 1".into()));
    }
    Ok(())
}

/// LapPE with default options (dense up to 2,000 nodes, Lanczos beyond).
pub fn lap_pe(ops: &NormalizedOperators, k: usize, trivial_tol: f64) -> Result<LapPe> {
    lap_pe_with(
        ops,
        &LapPeOptions {
            trivial_tol,
            ..LapPeOptions::new(k)
        },
    )
}

pub fn lap_pe_with(ops: &NormalizedOperators, opts: &LapPeOptions) -> Result<LapPe> {
    check_k(opts.k)?;
    let lap = &ops.sym_laplacian;
    let n = lap.nrows();
    let use_dense = match opts.solver {
        EigenSolver::Dense => true,
        EigenSolver::Lanczos => false,
        EigenSolver::Auto => n <= DENSE_EIGEN_LIMIT,
    };
    let (eigenvalues, mut vectors) = if use_dense {
        dense_nontrivial(lap, opts)?
    } else {
        lanczos_nontrivial(lap, opts)?
    };
    apply_sign_convention(&mut vectors);
    Ok(LapPe { vectors, eigenvalues })
}

fn insufficient(k: usize, available: usize) -> Error {
    Error::Invalid(format!(
        "graph has only {available} non-trivial Laplacian eigenpairs, {k} requested"
    ))
}

fn dense_nontrivial(lap: &CsrMatrix, opts: &LapPeOptions) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = lap.nrows();
    let eig = SymmetricEigen::new(lap.to_dense());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let chosen: Vec<usize> = order
        .into_iter()
        .filter(|&i| eig.eigenvalues[i] > opts.trivial_tol)
        .collect();
    if chosen.len() < opts.k {
        return Err(insufficient(opts.k, chosen.len()));
    }
    let chosen = &chosen[..opts.k];
    let values = chosen.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, opts.k, |r, c| eig.eigenvectors[(r, chosen[c])]);
    Ok((values, vectors))
}

fn lanczos_nontrivial(lap: &CsrMatrix, opts: &LapPeOptions) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = lap.nrows();
    let null = ComponentNullspace::from_laplacian(lap);
    let free_dim = n - null.count;
    if opts.k > free_dim {
        return Err(insufficient(opts.k, free_dim));
    }
    let pairs = lanczos::smallest_eigenpairs(
        n,
        free_dim,
        |x, y| lap.mul_vec_into(x, y),
        |w| null.project_out(w),
        opts.k,
        &opts.lanczos,
    )?;
    if let Some(v) = pairs.values.iter().find(|&&v| v <= opts.trivial_tol) {
        // the component nullspace is projected out exactly, so this means the
        // operator is not a normalized Laplacian
        return Err(Error::Invalid(format!(
            "eigenvalue {v:e} below trivial tolerance outside the component nullspace"
        )));
    }
    let residual = max_residual(lap, &pairs.values, &pairs.vectors);
    if residual > 1e-8 {
        return Err(Error::NoConvergence {
            what: "lanczos",
            iterations: opts.lanczos.max_restarts,
            residual,
        });
    }
    Ok((pairs.values, pairs.vectors))
}

/// Largest `‖Lu − λu‖₂` over the columns.
pub fn max_residual(lap: &CsrMatrix, values: &[f64], vectors: &DMatrix<f64>) -> f64 {
    let lu = lap.mul_dense(vectors);
    values
        .iter()
        .enumerate()
        .map(|(c, &lambda)| (lu.column(c) - vectors.column(c) * lambda).norm())
        .fold(0.0, f64::max)
}

/// Return probabilities `diag(P^i)` for `i = 1..=k`.
///
/// Each node's walk distribution is propagated sparsely for `⌈k/2⌉` steps; the
/// longer walks are recombined using reversibility of `P`:
/// `[P^{a+b}]_{vv} = Σ_u [P^a]_{vu} [P^b]_{vu} d_v / d_u`.
/// Cost per node is bounded by the size of its `⌈k/2⌉`-hop neighborhood.
pub fn rwse(ops: &NormalizedOperators, k: usize) -> Result<Rwse> {
    check_k(k)?;
    let p = &ops.rw_transition;
    let n = p.nrows();
    let degree: Vec<f64> = (0..n).map(|v| p.row(v).0.len() as f64).collect();
    let half = k.div_ceil(2);
    let nodes: Vec<usize> = (0..n).collect();
    let rows: Vec<Vec<f64>> = nodes
        .par_chunks(64)
        .flat_map_iter(|chunk| {
            let mut bufs = vec![vec![0.0f64; n]; half + 1];
            let mut supports: Vec<Vec<usize>> = vec![Vec::new(); half + 1];
            chunk
                .iter()
                .map(|&v| {
                    let mut out = vec![0.0; k];
                    if degree[v] == 0.0 {
                        return out;
                    }
                    bufs[0][v] = 1.0;
                    supports[0].push(v);
                    for a in 1..=half {
                        let (prev, cur) = bufs.split_at_mut(a);
                        let (prev, cur) = (&prev[a - 1], &mut cur[0]);
                        let (prev_s, cur_s) = supports.split_at_mut(a);
                        for &u in &prev_s[a - 1] {
                            let (cols, vals) = p.row(u);
                            let mass = prev[u];
                            for (&w, &pw) in cols.iter().zip(vals) {
                                if cur[w] == 0.0 {
                                    cur_s[0].push(w);
                                }
                                cur[w] += mass * pw;
                            }
                        }
                    }
                    for (i, slot) in out.iter_mut().enumerate() {
                        let steps = i + 1;
                        let (a, b) = (steps.div_ceil(2), steps / 2);
                        *slot = supports[b]
                            .iter()
                            .map(|&u| bufs[a][u] * bufs[b][u] * degree[v] / degree[u])
                            .sum::<f64>();
                    }
                    for (buf, supp) in bufs.iter_mut().zip(supports.iter_mut()) {
                        for &u in supp.iter() {
                            buf[u] = 0.0;
                        }
                        supp.clear();
                    }
                    out
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(Rwse {
        probs: DMatrix::from_fn(n, k, |r, c| rows[r][c]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_operators, Graph};

    fn ops(n: usize, edges: &[(usize, usize)]) -> NormalizedOperators {
        build_operators(&Graph::from_edges(n, edges.iter().copied()).unwrap().0)
    }

    fn cycle(n: usize) -> Vec<(usize, usize)> {
        (0..n).map(|i| (i, (i + 1) % n)).collect()
    }

    #[test]
    fn k2_encoding() {
        for solver in [EigenSolver::Dense, EigenSolver::Lanczos] {
            let pe = lap_pe_with(
                &ops(2, &[(0, 1)]),
                &LapPeOptions {
                    solver,
                    ..LapPeOptions::new(1)
                },
            )
            .unwrap();
            assert!((pe.eigenvalues[0] - 2.0).abs() < 1e-12);
            assert!((pe.vectors[(0, 0)] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-8);
            assert!((pe.vectors[(1, 0)] + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-8);
        }
    }

    #[test]
    fn four_cycle_degenerate_pair() {
        let o = ops(4, &cycle(4));
        for solver in [EigenSolver::Dense, EigenSolver::Lanczos] {
            let pe = lap_pe_with(
                &o,
                &LapPeOptions {
                    solver,
                    ..LapPeOptions::new(2)
                },
            )
            .unwrap();
            assert!((pe.eigenvalues[0] - 1.0).abs() < 1e-10);
            assert!((pe.eigenvalues[1] - 1.0).abs() < 1e-10);
            let gram = pe.vectors.transpose() * &pe.vectors;
            assert!((gram - DMatrix::identity(2, 2)).abs().max() < 1e-10);
            assert!(max_residual(&o.sym_laplacian, &pe.eigenvalues, &pe.vectors) < 1e-10);
        }
    }

    #[test]
    fn trivial_eigenvalues_skipped_per_component() {
        let o = ops(4, &[(0, 1), (2, 3)]);
        for solver in [EigenSolver::Dense, EigenSolver::Lanczos] {
            let pe = lap_pe_with(
                &o,
                &LapPeOptions {
                    solver,
                    ..LapPeOptions::new(1)
                },
            )
            .unwrap();
            assert!((pe.eigenvalues[0] - 2.0).abs() < 1e-10);
        }
        assert!(lap_pe(&o, 3, 1e-8).is_err());
    }

    #[test]
    fn isolated_nodes_count_as_components() {
        let o = ops(5, &[(0, 1), (1, 2)]);
        // P3 has eigenvalues 0, 1, 2; two isolated nodes add only zeros
        let pe = lap_pe(&o, 2, 1e-8).unwrap();
        assert!((pe.eigenvalues[0] - 1.0).abs() < 1e-10);
        assert!((pe.eigenvalues[1] - 2.0).abs() < 1e-10);
        assert!(lap_pe(&o, 3, 1e-8).is_err());
    }

    #[test]
    fn sign_rule_ties_prefer_lowest_index() {
        let mut m = DMatrix::from_column_slice(3, 2, &[-0.5, 0.5, 0.1, 0.2, -0.9, 0.3]);
        apply_sign_convention(&mut m);
        assert_eq!(m.column(0).as_slice(), &[0.5, -0.5, -0.1]);
        assert_eq!(m.column(1).as_slice(), &[-0.2, 0.9, -0.3]);
    }

    #[test]
    fn rwse_cycle_and_first_column() {
        let r = rwse(&ops(7, &cycle(7)), 4).unwrap();
        for v in 0..7 {
            assert_eq!(r.probs[(v, 0)], 0.0);
            assert_eq!(r.probs[(v, 1)], 0.5);
        }
    }

    #[test]
    fn rwse_isolated_rows_zero() {
        let r = rwse(&ops(3, &[(0, 1)]), 3).unwrap();
        assert!(r.probs.row(2).iter().all(|&x| x == 0.0));
        assert_eq!(r.probs[(0, 1)], 1.0);
        assert!(rwse(&ops(3, &[(0, 1)]), 0).is_err());
    }
}
