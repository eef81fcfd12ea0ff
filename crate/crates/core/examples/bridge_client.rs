//! Talk to an external classifier over the NDJSON bridge protocol.
//!
//! The bridge here is a tiny nearest-centroid server written in Python; a
//! real deployment points the same client at the TabPFN bridge.
//!
//! cargo run --example bridge_client

use std::time::Duration;

use graphtab::classify::{fit_predict, BridgeBackend, ClassifierBackend};
use nalgebra::DMatrix;

const SERVER: &str = r#"
import json, sys
for line in sys.stdin:
    req = json.loads(line)
    if req["op"] == "hello":
        out = {"id": req["id"], "name": "centroid-demo", "version": "0.1",
               "max_samples": 1000, "max_features": 50, "max_classes": 10}
    else:
        classes = sorted(set(req["train_y"]))
        cents = []
        for c in classes:
            rows = [x for x, y in zip(req["train_x"], req["train_y"]) if y == c]
            cents.append([sum(col) / len(rows) for col in zip(*rows)])
        proba = []
        for q in req["test_x"]:
            w = [1.0 / (1e-9 + sum((a - b) ** 2 for a, b in zip(q, m))) for m in cents]
            proba.append([v / sum(w) for v in w])
        out = {"id": req["id"], "classes": classes, "proba": proba}
    print(json.dumps(out), flush=True)
"#;

fn main() -> graphtab::Result<()> {
    let argv = ["python3", "-c", SERVER].map(String::from);
    let mut bridge = BridgeBackend::spawn(&argv, Duration::from_secs(30))?;
    println!("connected to {} {} {:?}", bridge.name(), bridge.version(), bridge.capabilities());

    let train = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 0.2, 0.1, 3.0, 3.0, 3.1, 2.9]);
    let query = DMatrix::from_row_slice(3, 2, &[0.1, 0.0, 2.9, 3.2, 1.5, 1.5]);
    let result = fit_predict(&mut bridge, &train, &[10, 10, 20, 20], &query, 0)?;
    println!("classes {:?}", result.classes);
    for (row, label) in result.proba.row_iter().zip(result.argmax_labels()) {
        println!("  {:.3?} -> {label}", row.iter().collect::<Vec<_>>());
    }

    // too many columns for the advertised budget: rejected before sending
    let wide = DMatrix::zeros(4, 60);
    let err = fit_predict(&mut bridge, &wide, &[10, 10, 20, 20], &DMatrix::zeros(1, 60), 0).unwrap_err();
    println!("rejected locally: {err}");
    Ok(())
}
