//! Local and global structural node features.
//!
//! Local: degree, clustering coefficient and triangle count.
//! Global: Brandes betweenness, component-corrected closeness and PageRank.
//!
//! Parallel sweeps split the sources into fixed-size chunks and merge the
//! per-chunk accumulators in chunk order, so results do not depend on the
//! number of worker threads.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Graph;

const SOURCE_CHUNK: usize = 64;

/// Degree, clustering coefficient and triangle count per node.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFeatures {
    pub degree: Vec<usize>,
    pub clustering: Vec<f64>,
    pub triangles: Vec<usize>,
}

/// All structural features of a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralFeatures {
    pub degree: Vec<usize>,
    pub clustering: Vec<f64>,
    pub triangles: Vec<usize>,
    pub betweenness: Vec<f64>,
    pub closeness: Vec<f64>,
    pub pagerank: Vec<f64>,
}

impl StructuralFeatures {
    /// Computes every structural feature with exact betweenness and default PageRank settings.
    pub fn compute(g: &Graph) -> Result<StructuralFeatures> {
        let local = local_features(g);
        Ok(StructuralFeatures {
            degree: local.degree,
            clustering: local.clustering,
            triangles: local.triangles,
            betweenness: betweenness(g, None, 0)?,
            closeness: closeness(g),
            pagerank: pagerank(g, &PageRankParams::default())?,
        })
    }
}

fn sorted_intersection_len(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

/// Degree, triangles (by sorted neighbor-list intersection) and clustering.
pub fn local_features(g: &Graph) -> LocalFeatures {
    let n = g.num_nodes();
    let triangles: Vec<usize> = (0..n)
        .into_par_iter()
        .map(|v| {
            let nv = g.neighbors(v);
            // each triangle through v is seen from both of its other corners
            nv.iter()
                .map(|&w| sorted_intersection_len(nv, g.neighbors(w)))
                .sum::<usize>()
                / 2
        })
        .collect();
    let degree: Vec<usize> = (0..n).map(|v| g.degree(v)).collect();
    let clustering = degree
        .iter()
        .zip(&triangles)
        .map(|(&d, &t)| {
            if d <= 1 {
                0.0
            } else {
                t as f64 / (d * (d - 1) / 2) as f64
            }
        })
        .collect();
    LocalFeatures {
        degree,
        clustering,
        triangles,
    }
}

/// Per-source Brandes state, reused across sources of one chunk.
struct BrandesScratch {
    sigma: Vec<f64>,
    dist: Vec<i64>,
    delta: Vec<f64>,
    order: Vec<usize>,
    queue: VecDeque<usize>,
}

impl BrandesScratch {
    fn new(n: usize) -> Self {
        BrandesScratch {
            sigma: vec![0.0; n],
            dist: vec![-1; n],
            delta: vec![0.0; n],
            order: Vec::with_capacity(n),
            queue: VecDeque::new(),
        }
    }

    /// Adds the dependencies of source `s` into `acc`.
    fn accumulate(&mut self, g: &Graph, s: usize, acc: &mut [f64]) {
        self.sigma[s] = 1.0;
        self.dist[s] = 0;
        self.queue.push_back(s);
        while let Some(v) = self.queue.pop_front() {
            self.order.push(v);
            let dv = self.dist[v];
            for &w in g.neighbors(v) {
                if self.dist[w] < 0 {
                    self.dist[w] = dv + 1;
                    self.queue.push_back(w);
                }
                if self.dist[w] == dv + 1 {
                    self.sigma[w] += self.sigma[v];
                }
            }
        }
        // predecessors are recovered from distances instead of stored lists
        for &w in self.order.iter().rev() {
            let dw = self.dist[w];
            let coeff = (1.0 + self.delta[w]) / self.sigma[w];
            for &v in g.neighbors(w) {
                if self.dist[v] == dw - 1 {
                    self.delta[v] += self.sigma[v] * coeff;
                }
            }
            if w != s {
                acc[w] += self.delta[w];
            }
        }
        for &v in &self.order {
            self.sigma[v] = 0.0;
            self.dist[v] = -1;
            self.delta[v] = 0.0;
        }
        self.order.clear();
    }
}

/// Unnormalized shortest-path betweenness for the undirected graph.
///
/// With `sample_sources = Some(s)`, Brandes runs from `s` sources drawn
/// uniformly without replacement (seeded) and the sum is rescaled by `N/s`.
/// Sampled sources are processed in ascending order, so `s = N` reproduces the
/// exact result bit for bit.
pub fn betweenness(g: &Graph, sample_sources: Option<usize>, seed: u64) -> Result<Vec<f64>> {
    let n = g.num_nodes();
    let (sources, scale) = match sample_sources {
        None => ((0..n).collect::<Vec<_>>(), 1.0),
        Some(s) if s > n => {
            return Err(Error::Invalid(format!(
                "betweenness sample size {s} exceeds node count {n}"
            )))
        }
        Some(0) => return Err(Error::Invalid("betweenness sample size must be positive".into())),
        Some(s) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked = rand::seq::index::sample(&mut rng, n, s).into_vec();
            picked.sort_unstable();
            (picked, n as f64 / s as f64)
        }
    };
    let partials: Vec<Vec<f64>> = sources
        .par_chunks(SOURCE_CHUNK)
        .map(|chunk| {
            let mut scratch = BrandesScratch::new(n);
            let mut acc = vec![0.0; n];
            for &s in chunk {
                scratch.accumulate(g, s, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; n];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            *t += p;
        }
    }
    for t in &mut total {
        *t *= scale / 2.0;
    }
    Ok(total)
}

fn bfs_distance_sum(g: &Graph, s: usize, dist: &mut [i64], queue: &mut VecDeque<usize>) -> (usize, u64) {
    let mut reached = Vec::new();
    dist[s] = 0;
    queue.push_back(s);
    let mut total = 0u64;
    while let Some(v) = queue.pop_front() {
        reached.push(v);
        total += dist[v] as u64;
        for &w in g.neighbors(v) {
            if dist[w] < 0 {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    for &v in &reached {
        dist[v] = -1;
    }
    (reached.len(), total)
}

/// Wasserman–Faust closeness: `((r−1)/(N−1)) · ((r−1)/Σd)` over the `r` nodes
/// reachable from `v` (including `v`); zero when nothing else is reachable.
pub fn closeness(g: &Graph) -> Vec<f64> {
    let n = g.num_nodes();
    let nodes: Vec<usize> = (0..n).collect();
    nodes
        .par_chunks(SOURCE_CHUNK)
        .flat_map_iter(|chunk| {
            let mut dist = vec![-1i64; n];
            let mut queue = VecDeque::new();
            chunk
                .iter()
                .map(|&s| {
                    let (r, sum) = bfs_distance_sum(g, s, &mut dist, &mut queue);
                    if r <= 1 || sum == 0 {
                        0.0
                    } else {
                        let reach = (r - 1) as f64;
                        (reach / (n - 1) as f64) * (reach / sum as f64)
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// PageRank settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PageRankParams {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PageRankParams {
    fn default() -> Self {
        PageRankParams {
            damping: 0.85,
            tol: 1e-10,
            max_iter: 1000,
        }
    }
}

/// PageRank by power iteration on `P = D^{-1}A`, with the mass of dangling
/// (isolated) nodes spread uniformly. Stops when the L1 change drops below
/// `tol`; the returned vector sums to one.
pub fn pagerank(g: &Graph, params: &PageRankParams) -> Result<Vec<f64>> {
    let n = g.num_nodes();
    if !(params.damping > 0.0 && params.damping < 1.0) {
        return Err(Error::Invalid(format!(
            "damping must lie in (0, 1), got {}",
            params.damping
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let alpha = params.damping;
    let uniform = 1.0 / n as f64;
    let mut x = vec![uniform; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..params.max_iter {
        let dangling: f64 = (0..n).filter(|&v| g.degree(v) == 0).map(|v| x[v]).sum();
        let base = (1.0 - alpha) * uniform + alpha * dangling * uniform;
        for (w, slot) in next.iter_mut().enumerate() {
            let inflow: f64 = g
                .neighbors(w)
                .iter()
                .map(|&u| x[u] / g.degree(u) as f64)
                .sum();
            *slot = base + alpha * inflow;
        }
        residual = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut x, &mut next);
        if residual < params.tol {
            let total: f64 = x.iter().sum();
            x.iter_mut().for_each(|v| *v /= total);
            return Ok(x);
        }
    }
    Err(Error::NoConvergence {
        what: "pagerank",
        iterations: params.max_iter,
        residual,
    })
}
