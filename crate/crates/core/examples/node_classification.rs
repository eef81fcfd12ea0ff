//! Featurize a two-community graph and evaluate the built-in backends.
//!
//! cargo run --example node_classification

use graphtab::classify::{evaluate, Knn, LogReg};
use graphtab::graph::{build_operators, Graph, SplitSpec};
use graphtab::tabularize::{assemble, z_normalize, FeatureRecipe, PeKind};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> graphtab::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 120;
    let community = |v: usize| v % 2;
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if community(u) == community(v) { 0.12 } else { 0.01 };
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    // attributes are only weakly informative; structure does the rest
    let x = DMatrix::from_fn(n, 8, |r, c| {
        let shift = if c == 0 && community(r) == 1 { 0.4 } else { 0.0 };
        shift + rng.random_range(-1.0..1.0)
    });
    let labels = (0..n).map(|v| community(v) as i64).collect();
    let g = Graph::from_edges(n, edges)?
        .0
        .with_num_classes(Some(2))
        .with_attributes(x)?
        .with_labels(labels)?;
    let split = SplitSpec::new((0..40).collect(), (40..80).collect(), (80..120).collect(), n)?;

    let ops = build_operators(&g);
    let recipes = [
        ("attributes only", FeatureRecipe { local_structural: false, global_structural: Default::default(), ..FeatureRecipe::default() }),
        ("+ smoothing", FeatureRecipe { smooth_steps: 2, ..FeatureRecipe::default() }),
        ("+ smoothing + LapPE", FeatureRecipe { smooth_steps: 2, pe_kind: PeKind::Lap, pe_dim: 4, ..FeatureRecipe::default() }),
    ];
    for (name, recipe) in recipes {
        let fm = z_normalize(&assemble(&g, &ops, &recipe)?);
        let lr = evaluate(&g, &fm, &split, &mut LogReg::default(), &[0, 1, 2], "sbm")?;
        let knn = evaluate(&g, &fm, &split, &mut Knn { k: 5 }, &[0], "sbm")?;
        println!(
            "{name:<22} F={:<3} logreg val {:.3} test {:.3} | knn test {:.3}",
            fm.num_features(),
            lr.val_acc_mean.unwrap(),
            lr.test_acc_mean.unwrap(),
            knn.test_acc_mean.unwrap()
        );
    }
    Ok(())
}
