//! Randomized truncated SVD of node attributes and neighborhood smoothing.
//!
//! cargo run --example attribute_reduction

use graphtab::attrfeat::{smooth, truncated_svd, SvdOptions};
use graphtab::graph::{build_operators, Graph};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> graphtab::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (n, d, true_rank) = (300, 80, 5);
    // low-rank signal plus a little noise
    let u = DMatrix::from_fn(n, true_rank, |_, _| rng.random_range(-1.0..1.0));
    let v = DMatrix::from_fn(true_rank, d, |_, _| rng.random_range(-1.0..1.0));
    let x = &u * &v + DMatrix::from_fn(n, d, |_, _| rng.random_range(-0.01..0.01));

    for rank in [2, 5, 16] {
        let r = truncated_svd(&x, rank, 7, SvdOptions::default())?;
        let err = (&x - &r.matrix * &r.components).norm() / x.norm();
        println!(
            "rank {rank:>2}: explained {:.4}, relative error {err:.2e}, top σ {:.2?}",
            r.explained_ratio,
            &r.singular_values[..3.min(rank)]
        );
    }

    // smoothing on a path: each step mixes a node with its neighbors
    let path = Graph::from_edges(5, (0..4).map(|i| (i, i + 1)))?.0;
    let ops = build_operators(&path);
    let spike = DMatrix::from_column_slice(5, 1, &[0.0, 0.0, 1.0, 0.0, 0.0]);
    for steps in 0..3 {
        println!("L={steps}: {:.3?}", smooth(&ops, &spike, steps).matrix.as_slice());
    }
    Ok(())
}
