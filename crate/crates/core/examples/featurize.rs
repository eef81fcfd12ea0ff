//! Build a small attributed graph, assemble a feature table and export it.
//!
//! cargo run --example featurize

use graphtab::graph::{build_operators, Graph};
use graphtab::tabularize::{assemble_timed, z_normalize, ExportFormat, FeatureRecipe, GlobalFeature, PeKind};
use nalgebra::DMatrix;

fn main() -> graphtab::Result<()> {
    // two triangles joined through node 2 -- 3
    let edges = [(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5), (5, 3)];
    let (g, report) = Graph::from_edges(6, edges)?;
    println!("{} nodes, {} edges ({:?})", g.num_nodes(), g.num_edges(), report);

    let x = DMatrix::from_fn(6, 4, |r, c| ((r + 1) * (c + 2) % 5) as f64);
    let g = g.with_attributes(x)?;

    let recipe = FeatureRecipe {
        pe_kind: PeKind::Both,
        pe_dim: 4,
        smooth_steps: 1,
        global_structural: [GlobalFeature::Betweenness, GlobalFeature::Closeness, GlobalFeature::Pagerank].into(),
        ..FeatureRecipe::default()
    };
    println!("recipe {}", recipe.canonical_json());

    let ops = build_operators(&g);
    let (fm, timings) = assemble_timed(&g, &ops, &recipe)?;
    for group in &fm.column_groups {
        println!("  {:<7} columns {:>2}..{:<2}", group.name, group.start, group.start + group.len);
    }
    for t in timings {
        println!("  {:<7} {:.3} ms", t.family, t.seconds * 1e3);
    }
    println!("fingerprint {}", fm.recipe_fingerprint);

    let normalized = z_normalize(&fm);
    let dir = std::env::temp_dir().join("graphtab-featurize");
    std::fs::create_dir_all(&dir).map_err(|e| graphtab::Error::Invalid(e.to_string()))?;
    normalized.write(dir.join("features.csv"), ExportFormat::Csv)?;
    normalized.write(dir.join("features.bin"), ExportFormat::Bin)?;
    println!("wrote {}", dir.display());
    print!("{}", normalized.to_csv().lines().take(3).collect::<Vec<_>>().join("\n"));
    println!();
    Ok(())
}
