#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use graphtab::graph::{save_graph, Graph, SplitSpec};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn gtab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gtab"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("run gtab")
}

pub fn bridge_script() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/bridge_double.py")
}

pub fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

/// Two 10-cliques joined by one edge; class 0 attributes sit near -1,
/// class 1 near +1. Nodes alternate between the cliques so labels are not
/// sorted by index.
pub fn separable_graph(seed: u64) -> (Graph, SplitSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 20;
    let side = |v: usize| v % 2;
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if side(u) == side(v) {
                edges.push((u, v));
            }
        }
    }
    edges.push((0, 1));
    let x = DMatrix::from_fn(n, 2, |r, _| {
        let center = if side(r) == 0 { -1.0 } else { 1.0 };
        center + rng.random_range(-0.2..0.2)
    });
    let labels = (0..n).map(|v| side(v) as i64).collect();
    let g = Graph::from_edges(n, edges)
        .unwrap()
        .0
        .with_num_classes(Some(2))
        .with_attributes(x)
        .unwrap()
        .with_labels(labels)
        .unwrap();
    let split = SplitSpec::new(
        (0..8).collect(),
        (8..14).collect(),
        (14..20).collect(),
        n,
    )
    .unwrap();
    (g, split)
}

/// Writes the separable bundle into `dir/graph` and its split into `dir/split.json`.
pub fn separable_bundle(dir: &Path) -> (PathBuf, PathBuf) {
    let (g, split) = separable_graph(7);
    let gdir = dir.join("graph");
    save_graph(&g, &gdir).unwrap();
    let split_path = dir.join("split.json");
    split.save(&split_path).unwrap();
    (gdir, split_path)
}

pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, edges).unwrap().0
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}
