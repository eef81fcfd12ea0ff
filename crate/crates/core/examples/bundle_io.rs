//! Round-trip a graph bundle, a split file and a binary feature matrix.
//!
//! cargo run --example bundle_io

use graphtab::graph::{build_operators, load_graph_with_report, load_split, save_graph, SplitSpec};
use graphtab::tabularize::{assemble, FeatureMatrix, FeatureRecipe};

fn main() -> graphtab::Result<()> {
    let dir = std::env::temp_dir().join("graphtab-bundle-io");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).map_err(|e| graphtab::Error::Invalid(e.to_string()))?;

    // a directed edge list with a duplicate and a self-loop
    std::fs::write(dir.join("meta.json"), r#"{"num_nodes": 5, "directed": true, "num_classes": 2}"#).unwrap();
    std::fs::write(dir.join("edges.tsv"), "# src dst\n0\t1\n1\t0\n1\t2\n2\t2\n2\t3\n3\t4\n").unwrap();
    std::fs::write(dir.join("labels.csv"), "0\n0\n1\n1\n-1\n").unwrap();

    let (g, report) = load_graph_with_report(&dir)?;
    println!("loaded {} nodes, {} undirected edges, {:?}", g.num_nodes(), g.num_edges(), report);

    let split = SplitSpec::new(vec![0, 2], vec![1], vec![3], g.num_nodes())?;
    split.save(dir.join("split.json"))?;
    println!("split {:?}", load_split(dir.join("split.json"), g.num_nodes())?);

    let fm = assemble(&g, &build_operators(&g), &FeatureRecipe::default())?;
    let bytes = fm.to_binary();
    let back = FeatureMatrix::from_binary(&bytes)?;
    println!("{} bytes, round trip equal: {}", bytes.len(), back == fm);
    println!("columns {:?}", fm.column_names());

    save_graph(&g, dir.join("copy"))?;
    println!("saved canonical copy to {}", dir.join("copy").display());
    Ok(())
}
