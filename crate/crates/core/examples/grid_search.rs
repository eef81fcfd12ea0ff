//! Search a slice of the recipe space and select on validation accuracy.
//!
//! cargo run --example grid_search

use graphtab::classify::{evaluate, LogReg};
use graphtab::cli::{expand_space, select_best, Trial};
use graphtab::graph::{build_operators, Graph, SplitSpec};
use graphtab::tabularize::{assemble, z_normalize};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

fn main() -> graphtab::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 90;
    let block = |v: usize| v % 3;
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(if block(u) == block(v) { 0.15 } else { 0.02 }) {
                edges.push((u, v));
            }
        }
    }
    // one weakly informative column per block, buried in noise
    let x = DMatrix::from_fn(n, 6, |r, c| if c == block(r) { 0.5 } else { 0.0 } + rng.random_range(-1.0..1.0));
    let g = Graph::from_edges(n, edges)?
        .0
        .with_num_classes(Some(3))
        .with_attributes(x)?
        .with_labels((0..n).map(|v| block(v) as i64).collect())?;
    let split = SplitSpec::new((0..30).collect(), (30..60).collect(), (60..90).collect(), n)?;

    let space = json!({
        "smooth_steps": [0, 1, 2],
        "pe_kind": ["none", "rwse"],
        "pe_dim": [4],
    });
    let ops = build_operators(&g);
    let mut trials = Vec::new();
    for recipe in expand_space(&space)? {
        let fm = z_normalize(&assemble(&g, &ops, &recipe)?);
        let r = evaluate(&g, &fm, &split, &mut LogReg::default(), &[0], "sbm3")?;
        println!(
            "smooth={} pe={:<5?} F={:<3} val {:.3} test {:.3}",
            recipe.smooth_steps,
            recipe.pe_kind,
            fm.num_features(),
            r.val_acc_mean.unwrap(),
            r.test_acc_mean.unwrap()
        );
        trials.push(Trial {
            recipe,
            num_features: fm.num_features(),
            val_acc_mean: r.val_acc_mean.unwrap(),
            val_acc_std: 0.0,
            test_acc_mean: r.test_acc_mean,
            test_acc_std: r.test_acc_std,
        });
    }
    let best = select_best(&trials).unwrap();
    println!("selected {}", trials[best].recipe.canonical_json());
    Ok(())
}
