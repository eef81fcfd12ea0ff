mod common;

use graphtab::attrfeat::smooth;
use graphtab::classify::{fit_predict, Knn, LogReg};
use graphtab::graph::{build_operators, Graph};
use graphtab::posenc::{lap_pe, rwse};
use graphtab::structural::{betweenness, pagerank, PageRankParams};
use graphtab::tabularize::{
    assemble, enforce_budget, z_normalize, FeatureMatrix, FeatureRecipe, GlobalFeature, PeKind,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn graph_strategy(max_n: usize) -> impl Strategy<Value = Graph> {
    (2..max_n).prop_flat_map(|n| {
        proptest::collection::vec((0..n, 0..n), 0..3 * n).prop_map(move |edges| Graph::from_edges(n, edges).unwrap().0)
    })
}

fn with_attrs(g: Graph, seed: u64) -> Graph {
    let n = g.num_nodes();
    let x = DMatrix::from_fn(n, 3, |r, c| (((r * 7 + c * 13) as u64 + seed) % 11) as f64 / 3.0 - 1.5);
    g.with_attributes(x).unwrap()
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn operators_are_well_formed(g in graph_strategy(25)) {
        let ops = build_operators(&g);
        for v in 0..g.num_nodes() {
            let s = ops.rw_transition.row_sum(v);
            if g.degree(v) > 0 {
                prop_assert!((s - 1.0).abs() < 1e-12);
            } else {
                prop_assert_eq!(s, 0.0);
            }
            for (&u, &w) in ops.gcn_norm.row(v).0.iter().zip(ops.gcn_norm.row(v).1) {
                prop_assert!((ops.gcn_norm.get(u, v) - w).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn assemble_is_permutation_equivariant(
        (g, perm) in graph_strategy(20).prop_flat_map(|g| { let n = g.num_nodes(); (Just(g), permutation(n)) })
    ) {
        let g = with_attrs(g, 3);
        let recipe = FeatureRecipe {
            global_structural: [GlobalFeature::Betweenness, GlobalFeature::Closeness, GlobalFeature::Pagerank].into(),
            pe_kind: PeKind::Rwse,
            pe_dim: 4,
            smooth_steps: 2,
            ..FeatureRecipe::default()
        };
        let a = assemble(&g, &build_operators(&g), &recipe).unwrap();
        let gp = g.permuted(&perm);
        let b = assemble(&gp, &build_operators(&gp), &recipe).unwrap();
        for (v, &pv) in perm.iter().enumerate() {
            for c in 0..a.num_features() {
                prop_assert!((a.data[(v, c)] - b.data[(pv, c)]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn lap_pe_equivariant_on_simple_spectra(
        (g, perm) in graph_strategy(16).prop_flat_map(|g| { let n = g.num_nodes(); (Just(g), permutation(n)) })
    ) {
        let k = 3;
        let ops = build_operators(&g);
        let a = lap_pe(&ops, k, 1e-8);
        prop_assume!(a.is_ok());
        let a = a.unwrap();
        // gap test against the full nontrivial spectrum
        let dense = nalgebra::SymmetricEigen::new(ops.sym_laplacian.to_dense());
        let mut spec: Vec<f64> = dense.eigenvalues.iter().copied().filter(|&l| l > 1e-8).collect();
        spec.sort_by(f64::total_cmp);
        let simple = (0..k).all(|i| {
            (i == 0 || spec[i] - spec[i - 1] > 1e-6) && (i + 1 >= spec.len() || spec[i + 1] - spec[i] > 1e-6)
        });
        prop_assume!(simple);
        // a unique max-|entry| is needed for the sign rule to be order-free
        let unique_max = (0..k).all(|c| {
            let col = a.vectors.column(c);
            let m = col.amax();
            col.iter().filter(|x| (x.abs() - m).abs() < 1e-7).count() == 1
        });
        prop_assume!(unique_max);
        let gp = g.permuted(&perm);
        let b = lap_pe(&build_operators(&gp), k, 1e-8).unwrap();
        for (v, &pv) in perm.iter().enumerate() {
            for c in 0..k {
                prop_assert!((a.vectors[(v, c)] - b.vectors[(pv, c)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn rwse_in_unit_interval(g in graph_strategy(25)) {
        let r = rwse(&build_operators(&g), 6).unwrap();
        prop_assert!(r.probs.iter().all(|&p| (-1e-15..=1.0 + 1e-12).contains(&p)));
        // no self-loops: a one-step walk never returns
        prop_assert!(r.probs.column(0).iter().all(|&p| p == 0.0));
    }

    #[test]
    fn pagerank_is_a_distribution(g in graph_strategy(30)) {
        let pr = pagerank(&g, &PageRankParams::default()).unwrap();
        prop_assert!((pr.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(pr.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn full_sample_betweenness_is_exact(g in graph_strategy(30), seed in any::<u64>()) {
        let n = g.num_nodes();
        prop_assert_eq!(betweenness(&g, Some(n), seed).unwrap(), betweenness(&g, None, 0).unwrap());
    }

    #[test]
    fn smoothing_is_linear(g in graph_strategy(20), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let ops = build_operators(&g);
        let n = g.num_nodes();
        let x = DMatrix::from_fn(n, 2, |r, c| (r as f64 * 0.3 + c as f64).sin());
        let y = DMatrix::from_fn(n, 2, |r, c| (r as f64 * 0.7 - c as f64).cos());
        let lhs = smooth(&ops, &(&x * a + &y * b), 2).matrix;
        let rhs = smooth(&ops, &x, 2).matrix * a + smooth(&ops, &y, 2).matrix * b;
        prop_assert!((lhs - rhs).abs().max() < 1e-12);
    }

    #[test]
    fn z_normalize_idempotent(rows in 2usize..30, cols in 1usize..6, seed in any::<u64>()) {
        let data = DMatrix::from_fn(rows, cols, |r, c| {
            if c == 0 { 5.0 } else { ((r * 31 + c * 17) as u64 ^ seed) as f64 % 97.0 }
        });
        let fm = FeatureMatrix::from_blocks(vec![("attr".into(), data)], String::new()).unwrap();
        let once = z_normalize(&fm);
        let twice = z_normalize(&once);
        prop_assert!((&once.data - &twice.data).abs().max() < 1e-10);
        prop_assert!(once.data.column(0).iter().all(|&v| v == 0.0));
        for c in 1..cols {
            let col = once.data.column(c);
            if col.iter().any(|&v| v != 0.0) {
                let mean = col.mean();
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rows as f64;
                prop_assert!(mean.abs() < 1e-10);
                prop_assert!((var.sqrt() - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn budget_preserves_protected_groups(attr in 1usize..40, smooth_w in 0usize..40, protected in 1usize..10, max in 1usize..90) {
        let n = 3;
        let mut blocks = vec![("attr".to_string(), DMatrix::from_element(n, attr, 1.0))];
        blocks.push(("local".to_string(), DMatrix::from_element(n, protected, 2.0)));
        blocks.push(("smooth".to_string(), DMatrix::from_element(n, smooth_w, 3.0)));
        let fm = FeatureMatrix::from_blocks(blocks, String::new()).unwrap();
        match enforce_budget(&fm, max) {
            Ok((out, warning)) => {
                prop_assert!(out.num_features() <= max);
                prop_assert_eq!(warning.is_some(), fm.num_features() > max);
                prop_assert_eq!(out.group("local").unwrap().len, protected);
                let total: usize = out.column_groups.iter().map(|g| g.len).sum();
                prop_assert_eq!(total, out.num_features());
            }
            Err(_) => prop_assert!(protected > max),
        }
    }

    #[test]
    fn binary_roundtrip(rows in 1usize..10, cols in 1usize..5, seed in any::<u32>()) {
        let data = DMatrix::from_fn(rows, cols, |r, c| (r as f64 - c as f64) * seed as f64 / 7.0);
        let fm = FeatureMatrix::from_blocks(vec![("attr".into(), data)], "abc".into()).unwrap();
        prop_assert_eq!(FeatureMatrix::from_binary(&fm.to_binary()).unwrap(), fm);
    }

    #[test]
    fn probabilities_are_distributions(rows in 3usize..25, seed in any::<u64>(), k in 1usize..6) {
        let x = DMatrix::from_fn(rows, 3, |r, c| (((r * 5 + c) as u64).wrapping_mul(seed | 1) % 13) as f64 - 6.0);
        let y: Vec<i64> = (0..rows).map(|r| (r % 3) as i64).collect();
        let q = DMatrix::from_fn(4, 3, |r, c| (r + c) as f64 - 3.0);
        for r in [
            fit_predict(&mut LogReg::default(), &x, &y, &q, 0).unwrap(),
            fit_predict(&mut Knn { k }, &x, &y, &q, 0).unwrap(),
        ] {
            prop_assert_eq!(r.proba.shape(), (4, 3));
            for row in r.proba.row_iter() {
                prop_assert!((row.sum() - 1.0).abs() < 1e-6);
                prop_assert!(row.iter().all(|p| (0.0..=1.0).contains(p)));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn logreg_duplicate_feature_keeps_argmax(seed in any::<u64>(), dup in 0usize..2) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let centers = [(-2.0, 0.0), (2.0, 1.0), (0.0, 4.0)];
        let sample = |rng: &mut rand_chacha::ChaCha8Rng, m: usize| {
            let mut rows = Vec::new();
            let mut labels = Vec::new();
            for i in 0..m {
                let c = i % 3;
                rows.push(centers[c].0 + rng.random_range(-0.5..0.5));
                rows.push(centers[c].1 + rng.random_range(-0.5..0.5));
                labels.push(c as i64);
            }
            (DMatrix::from_row_slice(m, 2, &rows), labels)
        };
        let (x, y) = sample(&mut rng, 60);
        let (q, _) = sample(&mut rng, 30);
        let augment = |m: &DMatrix<f64>| m.clone().insert_column(2, 0.0).set_column_from(dup, 2);
        let mut lr = LogReg { l2: 0.0, ..LogReg::default() };
        let a = fit_predict(&mut lr, &x, &y, &q, 0).unwrap().argmax_labels();
        let b = fit_predict(&mut lr, &augment(&x), &y, &augment(&q), 0).unwrap().argmax_labels();
        prop_assert_eq!(a, b);
    }
}

trait SetColumnFrom {
    fn set_column_from(self, src: usize, dst: usize) -> Self;
}

impl SetColumnFrom for DMatrix<f64> {
    fn set_column_from(mut self, src: usize, dst: usize) -> Self {
        let col = self.column(src).clone_owned();
        self.set_column(dst, &col);
        self
    }
}
