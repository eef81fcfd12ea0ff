//! Local and global structural features on a barbell graph.
//!
//! cargo run --example centrality

use graphtab::graph::Graph;
use graphtab::structural::{betweenness, closeness, local_features, pagerank, PageRankParams};

fn main() -> graphtab::Result<()> {
    // two 5-cliques connected by a 3-node path
    let mut edges = Vec::new();
    for offset in [0, 8] {
        for u in 0..5 {
            for v in u + 1..5 {
                edges.push((offset + u, offset + v));
            }
        }
    }
    edges.extend([(4, 5), (5, 6), (6, 7), (7, 8)]);
    let (g, _) = Graph::from_edges(13, edges)?;

    let local = local_features(&g);
    let exact = betweenness(&g, None, 0)?;
    let sampled = betweenness(&g, Some(6), 42)?;
    let close = closeness(&g);
    let pr = pagerank(&g, &PageRankParams::default())?;

    println!("node  deg  clust  tri   betw   betw~6  close  pagerank");
    for v in 0..g.num_nodes() {
        println!(
            "{v:>4} {:>4} {:>6.3} {:>4} {:>6.1} {:>7.1} {:>6.3} {:>8.4}",
            local.degree[v], local.clustering[v], local.triangles[v], exact[v], sampled[v], close[v], pr[v]
        );
    }
    Ok(())
}
