//! Graph-level classification: pool node rows into one row per graph.
//!
//! cargo run --example graph_pooling

use graphtab::classify::{evaluate, LogReg};
use graphtab::graph::{build_operators, Graph, SplitSpec};
use graphtab::tabularize::{assemble, pool_graph, z_normalize, FeatureMatrix, FeatureRecipe, PoolMode};
use nalgebra::DMatrix;

fn cycle(n: usize) -> Graph {
    Graph::from_edges(n, (0..n).map(|i| (i, (i + 1) % n))).unwrap().0
}

fn star(n: usize) -> Graph {
    Graph::from_edges(n, (1..n).map(|i| (0, i))).unwrap().0
}

fn main() -> graphtab::Result<()> {
    // label 0: cycles, label 1: stars
    let mut graphs = Vec::new();
    for n in 4..14 {
        graphs.push((cycle(n), 0));
        graphs.push((star(n), 1));
    }
    let recipe = FeatureRecipe { attributes: false, ..FeatureRecipe::default() };
    let mut rows = Vec::new();
    for (g, _) in &graphs {
        let fm = assemble(g, &build_operators(g), &recipe)?;
        let all: Vec<usize> = (0..g.num_nodes()).collect();
        rows.push(pool_graph(&fm, &all, PoolMode::Mean)?);
    }
    let f = rows[0].len();
    let data = DMatrix::from_fn(rows.len(), f, |r, c| rows[r][c]);
    println!("{} graphs pooled into {}×{}", graphs.len(), data.nrows(), data.ncols());

    // the pooled table is itself an edgeless "graph" of graph rows
    let m = graphs.len();
    let table = Graph::from_edges(m, std::iter::empty())?
        .0
        .with_num_classes(Some(2))
        .with_labels(graphs.iter().map(|(_, y)| *y).collect())?;
    let fm = z_normalize(&FeatureMatrix::from_blocks(vec![("pooled".into(), data)], String::new())?);
    let train: Vec<usize> = (0..m).filter(|i| i % 4 != 3).collect();
    let test: Vec<usize> = (0..m).filter(|i| i % 4 == 3).collect();
    let split = SplitSpec::new(train, vec![], test, m)?;
    let report = evaluate(&table, &fm, &split, &mut LogReg::default(), &[0], "cycles-vs-stars")?;
    println!("test accuracy {:.3}", report.test_acc_mean.unwrap());
    Ok(())
}
