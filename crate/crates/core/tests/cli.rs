mod common;

use std::fs;

use common::{bridge_script, gtab, separable_bundle, write};
use graphtab::graph::{load_graph, save_graph, Graph};
use nalgebra::DMatrix;
use serde_json::Value;

fn ok(out: &std::process::Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout {}\nstderr {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_json(path: &std::path::Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn featurize_k4_local_only() {
    let tmp = tempfile::tempdir().unwrap();
    let g = Graph::from_edges(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap().0;
    save_graph(&g, tmp.path().join("k4")).unwrap();
    let recipe = tmp.path().join("r.json");
    write(&recipe, r#"{"global_structural": []}"#);
    let out_csv = tmp.path().join("k4.csv");
    let out = gtab(&[
        "featurize",
        "--graph",
        tmp.path().join("k4").to_str().unwrap(),
        "--recipe",
        recipe.to_str().unwrap(),
        "--out",
        out_csv.to_str().unwrap(),
    ]);
    ok(&out);
    assert_eq!(
        fs::read_to_string(&out_csv).unwrap(),
        "local.0,local.1,local.2\n3,1,3\n3,1,3\n3,1,3\n3,1,3\n"
    );
    // one machine-readable line on stdout
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1);
    let log: Value = serde_json::from_str(stdout.trim()).unwrap();
    assert_eq!(log["features"], 3);
    assert_eq!(log["column_groups"][0]["name"], "local");

    let out_bin = tmp.path().join("k4.bin");
    ok(&gtab(&[
        "featurize",
        "--graph",
        tmp.path().join("k4").to_str().unwrap(),
        "--recipe",
        recipe.to_str().unwrap(),
        "--out",
        out_bin.to_str().unwrap(),
        "--format",
        "bin",
    ]));
    let fm = graphtab::tabularize::FeatureMatrix::from_binary(&fs::read(&out_bin).unwrap()).unwrap();
    assert_eq!(fm.data, DMatrix::from_row_slice(4, 3, &[3.0, 1.0, 3.0].repeat(4)));
}

#[test]
fn featurize_validation_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let g = Graph::from_edges(3, [(0, 1)]).unwrap().0;
    let gdir = tmp.path().join("g");
    save_graph(&g, &gdir).unwrap();
    let recipe = tmp.path().join("r.json");
    let out = tmp.path().join("o.csv");
    let run = |text: &str| {
        write(&recipe, text);
        gtab(&[
            "featurize",
            "--graph",
            gdir.to_str().unwrap(),
            "--recipe",
            recipe.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
    };
    let res = run(r#"{"svd_rank": 16}"#);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("features.csv"));
    assert_eq!(run(r#"{"svd_rank": 17}"#).status.code(), Some(2));
    assert_eq!(run(r#"{"bogus": 1}"#).status.code(), Some(2));
    assert_eq!(
        run(r#"{"attributes": false, "local_structural": false, "global_structural": []}"#).status.code(),
        Some(2)
    );
    assert_eq!(run(r#"{"pe_kind": "lap", "pe_dim": 4}"#).status.code(), Some(2));
}

fn classify(dir: &std::path::Path, backend: &str, seeds: &str, tag: &str) -> (Vec<u8>, Vec<u8>) {
    let recipe = dir.join("recipe.json");
    let report = dir.join(format!("report-{tag}.json"));
    let preds = dir.join(format!("preds-{tag}.json"));
    let out = gtab(&[
        "classify",
        "--graph",
        dir.join("graph").to_str().unwrap(),
        "--recipe",
        recipe.to_str().unwrap(),
        "--split",
        dir.join("split.json").to_str().unwrap(),
        "--backend",
        backend,
        "--seeds",
        seeds,
        "--out",
        report.to_str().unwrap(),
        "--predictions",
        preds.to_str().unwrap(),
    ]);
    ok(&out);
    (fs::read(report).unwrap(), fs::read(preds).unwrap())
}

#[test]
fn classify_separable_is_perfect_and_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    separable_bundle(tmp.path());
    write(&tmp.path().join("recipe.json"), r#"{"global_structural": ["pagerank"], "pe_kind": "rwse", "pe_dim": 4}"#);
    let (a, _) = classify(tmp.path(), "builtin:logreg", "0,1,2", "a");
    let (b, _) = classify(tmp.path(), "builtin:logreg", "0,1,2", "b");
    assert_eq!(a, b);
    let report: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(report["test_acc_mean"], 1.0);
    assert_eq!(report["test_acc_std"], 0.0);
    assert_eq!(report["dataset"], "graph");
    assert_eq!(report["seeds"], serde_json::json!([0, 1, 2]));
    for key in ["recipe_fingerprint", "backend", "val_acc_mean", "val_acc_std", "per_class", "confusion"] {
        assert!(report.get(key).is_some(), "{key}");
    }
}

/// Rewrites the bundle's labels with the test-node labels permuted.
fn permute_test_labels(dir: &std::path::Path) {
    let gdir = dir.join("graph");
    let g = load_graph(&gdir).unwrap();
    let split: Value = read_json(&dir.join("split.json"));
    let test: Vec<usize> = serde_json::from_value(split["test"].clone()).unwrap();
    let mut labels = g.labels().unwrap().to_vec();
    let values: Vec<i64> = test.iter().map(|&v| labels[v]).collect();
    for (i, &v) in test.iter().enumerate() {
        labels[v] = values[(i + 1) % values.len()];
    }
    // flip one outright so the multiset changes too
    labels[test[0]] = 1 - labels[test[0]];
    let g = g.with_labels(labels).unwrap();
    save_graph(&g, &gdir).unwrap();
}

#[test]
fn leakage_guard_end_to_end() {
    let script = bridge_script();
    let backends = [
        "builtin:logreg".to_string(),
        "builtin:knn?k=3".to_string(),
        format!("bridge:python3 {} centroid", script.display()),
        format!("bridge:python3 {} uniform", script.display()),
    ];
    for backend in &backends {
        let tmp = tempfile::tempdir().unwrap();
        separable_bundle(tmp.path());
        write(&tmp.path().join("recipe.json"), r#"{"smooth_steps": 1}"#);
        let (report_a, preds_a) = classify(tmp.path(), backend, "0,5", "a");
        permute_test_labels(tmp.path());
        let (report_b, preds_b) = classify(tmp.path(), backend, "0,5", "b");
        assert_eq!(preds_a, preds_b, "{backend}: predictions changed with test labels");
        let (ra, rb): (Value, Value) = (
            serde_json::from_slice(&report_a).unwrap(),
            serde_json::from_slice(&report_b).unwrap(),
        );
        assert_eq!(ra["val_acc_mean"], rb["val_acc_mean"], "{backend}");
        assert_eq!(ra["recipe_fingerprint"], rb["recipe_fingerprint"], "{backend}");
    }
}

#[test]
fn classify_transport_failure_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    separable_bundle(tmp.path());
    write(&tmp.path().join("recipe.json"), "{}");
    let backend = format!("bridge:python3 {} die", bridge_script().display());
    let out = gtab(&[
        "classify",
        "--graph",
        tmp.path().join("graph").to_str().unwrap(),
        "--recipe",
        tmp.path().join("recipe.json").to_str().unwrap(),
        "--split",
        tmp.path().join("split.json").to_str().unwrap(),
        "--backend",
        &backend,
        "--out",
        tmp.path().join("r.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("request Some(1)"));
}

#[test]
fn classify_respects_bridge_budget() {
    let tmp = tempfile::tempdir().unwrap();
    separable_bundle(tmp.path());
    // attr(2) + local(3) + global(2) + smooth(2) = 9 columns, bridge takes 7
    write(&tmp.path().join("recipe.json"), r#"{"smooth_steps": 1}"#);
    let backend = format!("bridge:python3 {} centroid 7", bridge_script().display());
    let out = gtab(&[
        "classify",
        "--graph",
        tmp.path().join("graph").to_str().unwrap(),
        "--recipe",
        tmp.path().join("recipe.json").to_str().unwrap(),
        "--split",
        tmp.path().join("split.json").to_str().unwrap(),
        "--backend",
        &backend,
        "--out",
        tmp.path().join("r.json").to_str().unwrap(),
    ]);
    ok(&out);
    let stdout = String::from_utf8(out.stdout).unwrap();
    let budget: Value = stdout
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap())
        .find(|v| v["event"] == "budget")
        .expect("budget log line");
    assert_eq!(budget["warning"]["attr_removed"], 1);
    assert_eq!(budget["warning"]["smooth_removed"], 1);
}

fn grid(dir: &std::path::Path, space: &str) -> Value {
    let space_path = dir.join("space.json");
    write(&space_path, space);
    let best = dir.join("best.json");
    let out = gtab(&[
        "grid",
        "--graph",
        dir.join("graph").to_str().unwrap(),
        "--space",
        space_path.to_str().unwrap(),
        "--split",
        dir.join("split.json").to_str().unwrap(),
        "--backend",
        "builtin:logreg",
        "--out",
        best.to_str().unwrap(),
    ]);
    ok(&out);
    read_json(&best)
}

#[test]
fn grid_selection_rules() {
    let tmp = tempfile::tempdir().unwrap();
    separable_bundle(tmp.path());

    let one = grid(tmp.path(), r#"{"smooth_steps": [1]}"#);
    assert_eq!(one["trials"].as_array().unwrap().len(), 1);
    assert_eq!(one["best"]["smooth_steps"], 1);

    // structure alone cannot tell the two identical cliques apart
    let better = grid(
        tmp.path(),
        r#"{"attributes": [false, true], "global_structural": [[]], "local_structural": [true]}"#,
    );
    assert_eq!(better["best"]["attributes"], true);
    let trials = better["trials"].as_array().unwrap();
    assert!(trials[0]["val_acc_mean"].as_f64().unwrap() < trials[1]["val_acc_mean"].as_f64().unwrap());

    // both perfect on validation: the narrower recipe wins
    let tie = grid(tmp.path(), r#"{"local_structural": [true, false], "global_structural": [[]]}"#);
    let trials = tie["trials"].as_array().unwrap();
    assert_eq!(trials[0]["val_acc_mean"], trials[1]["val_acc_mean"]);
    assert_eq!(tie["best"]["local_structural"], false);

    let space_path = tmp.path().join("empty.json");
    write(&space_path, "{}");
    let out = gtab(&[
        "grid",
        "--graph",
        tmp.path().join("graph").to_str().unwrap(),
        "--space",
        space_path.to_str().unwrap(),
        "--split",
        tmp.path().join("split.json").to_str().unwrap(),
        "--out",
        tmp.path().join("x.json").to_str().unwrap(),
    ]);
    // `{}` expands to the single default recipe; an empty list is the empty space
    ok(&out);
    write(&space_path, r#"{"smooth_steps": []}"#);
    let out = gtab(&[
        "grid",
        "--graph",
        tmp.path().join("graph").to_str().unwrap(),
        "--space",
        space_path.to_str().unwrap(),
        "--split",
        tmp.path().join("split.json").to_str().unwrap(),
        "--out",
        tmp.path().join("x.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn pool_single_node_graphs() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("graphs");
    let rows = [[1.0, 2.0], [3.0, -4.0], [0.5, 0.25]];
    for (i, row) in rows.iter().enumerate() {
        let g = Graph::from_edges(1, [])
            .unwrap()
            .0
            .with_attributes(DMatrix::from_row_slice(1, 2, row))
            .unwrap();
        save_graph(&g, root.join(format!("g{i}"))).unwrap();
    }
    write(&root.join("graph_labels.csv"), "name,label\ng0,1\ng1,0\ng2,1\n");
    let recipe = tmp.path().join("r.json");
    write(&recipe, r#"{"global_structural": []}"#);
    let out_dir = tmp.path().join("pooled");
    ok(&gtab(&[
        "pool",
        "--graphs",
        root.to_str().unwrap(),
        "--recipe",
        recipe.to_str().unwrap(),
        "--mode",
        "sum",
        "--out",
        out_dir.to_str().unwrap(),
    ]));
    let pooled = load_graph(&out_dir).unwrap();
    assert_eq!(pooled.num_nodes(), 3);
    assert_eq!(pooled.num_edges(), 0);
    assert_eq!(pooled.labels().unwrap(), &[1, 0, 1]);
    let x = pooled.attributes().unwrap();
    for (r, row) in rows.iter().enumerate() {
        // attr columns followed by the zero local features of an isolated node
        assert_eq!(x.row(r).iter().copied().collect::<Vec<_>>(), vec![row[0], row[1], 0.0, 0.0, 0.0]);
    }
}

#[test]
fn pool_empty_directory_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let recipe = tmp.path().join("r.json");
    write(&recipe, "{}");
    let root = tmp.path().join("graphs");
    fs::create_dir(&root).unwrap();
    let run = || {
        gtab(&[
            "pool",
            "--graphs",
            root.to_str().unwrap(),
            "--recipe",
            recipe.to_str().unwrap(),
            "--out",
            tmp.path().join("o").to_str().unwrap(),
        ])
    };
    assert_eq!(run().status.code(), Some(2));
    write(&root.join("graph_labels.csv"), "name,label\n");
    assert_eq!(run().status.code(), Some(2));
}
