//! Laplacian eigenvector encodings and random-walk return probabilities.
//!
//! cargo run --example positional_encodings

use graphtab::graph::{build_operators, Graph};
use graphtab::posenc::{lap_pe, lap_pe_with, max_residual, rwse, EigenSolver, LapPeOptions};

fn ladder(rungs: usize) -> Graph {
    let mut edges = Vec::new();
    for i in 0..rungs {
        edges.push((2 * i, 2 * i + 1));
        if i + 1 < rungs {
            edges.push((2 * i, 2 * i + 2));
            edges.push((2 * i + 1, 2 * i + 3));
        }
    }
    Graph::from_edges(2 * rungs, edges).unwrap().0
}

fn main() -> graphtab::Result<()> {
    let g = ladder(5);
    let ops = build_operators(&g);

    let pe = lap_pe(&ops, 3, 1e-8)?;
    println!("ladder LapPE eigenvalues {:.6?}", pe.eigenvalues);
    println!("first vector {:.4?}", pe.vectors.column(0).as_slice());

    // same problem through the iterative solver
    let lz = lap_pe_with(&ops, &LapPeOptions { solver: EigenSolver::Lanczos, ..LapPeOptions::new(3) })?;
    println!("lanczos eigenvalues    {:.6?}", lz.eigenvalues);
    println!("lanczos residual {:.1e}", max_residual(&ops.sym_laplacian, &lz.eigenvalues, &lz.vectors));

    // a ladder is bipartite: odd-length walks never return
    let rw = rwse(&ops, 6)?;
    println!("RWSE of node 0: {:.4?}", rw.probs.row(0).iter().collect::<Vec<_>>());

    let cycle = Graph::from_edges(8, (0..8).map(|i| (i, (i + 1) % 8)))?.0;
    let rw = rwse(&build_operators(&cycle), 4)?;
    println!("8-cycle RWSE of node 0: {:.4?}", rw.probs.row(0).iter().collect::<Vec<_>>());
    Ok(())
}
