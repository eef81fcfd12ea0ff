//! Graph representation, bundle ingestion, train/val/test splits and the
//! normalized operators every feature family is computed from.
//!
//! A bundle is a directory holding:
//!
//! ```text
//! meta.json      {"num_nodes": N, "directed": bool, "num_classes": int|null}
//! edges.tsv      src<TAB>dst per line, 0-based, `#` comments allowed
//! features.csv   optional, N rows of comma-separated floats, no header
//! labels.csv     optional, N lines with one integer each, -1 = unlabeled
//! split.json     optional, {"train": [...], "val": [...], "test": [...]}
//! ```
//!
//! Edges are always stored undirected: directed inputs are symmetrized,
//! self-loops and duplicates are dropped and counted.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Label value marking an unlabeled node.
pub const UNLABELED: i64 = -1;

/// Immutable simple undirected graph with optional node attributes and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    attributes: Option<DMatrix<f64>>,
    labels: Option<Vec<i64>>,
    num_classes: Option<usize>,
}

/// What was discarded while normalizing an edge list.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EdgeReport {
    pub self_loops_dropped: usize,
    pub duplicates_dropped: usize,
}

impl Graph {
    /// Builds a graph from an edge list, treating every pair as undirected.
    pub fn from_edges<I>(num_nodes: usize, edges: I) -> Result<(Graph, EdgeReport)>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut report = EdgeReport::default();
        let mut pairs = Vec::new();
        for (u, v) in edges {
            for x in [u, v] {
                if x >= num_nodes {
                    return Err(Error::IndexOutOfRange {
                        index: x as i64,
                        len: num_nodes,
                    });
                }
            }
            if u == v {
                report.self_loops_dropped += 1;
                continue;
            }
            pairs.push((u.min(v), u.max(v)));
        }
        let before = pairs.len();
        pairs.sort_unstable();
        pairs.dedup();
        report.duplicates_dropped = before - pairs.len();

        let mut degree = vec![0usize; num_nodes];
        for &(u, v) in &pairs {
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..num_nodes].to_vec();
        let mut neighbors = vec![0usize; offsets[num_nodes]];
        for &(u, v) in &pairs {
            neighbors[fill[u]] = v;
            fill[u] += 1;
            neighbors[fill[v]] = u;
            fill[v] += 1;
        }
        for v in 0..num_nodes {
            neighbors[offsets[v]..offsets[v + 1]].sort_unstable();
        }
        Ok((
            Graph {
                num_nodes,
                offsets,
                neighbors,
                attributes: None,
                labels: None,
                num_classes: None,
            },
            report,
        ))
    }

    /// Attaches an N×D attribute matrix.
    pub fn with_attributes(mut self, attributes: DMatrix<f64>) -> Result<Graph> {
        if attributes.nrows() != self.num_nodes {
            return Err(Error::Invalid(format!(
                "attribute matrix has {} rows, graph has {} nodes",
                attributes.nrows(),
                self.num_nodes
            )));
        }
        if attributes.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("attribute matrix contains NaN or Inf".into()));
        }
        self.attributes = Some(attributes);
        Ok(self)
    }

    /// Attaches per-node labels; `UNLABELED` marks missing ones.
    pub fn with_labels(mut self, labels: Vec<i64>) -> Result<Graph> {
        if labels.len() != self.num_nodes {
            return Err(Error::Invalid(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.num_nodes
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y < UNLABELED) {
            return Err(Error::Invalid(format!("label {bad} is negative")));
        }
        if let Some(c) = self.num_classes {
            if let Some(&bad) = labels.iter().find(|&&y| y >= c as i64) {
                return Err(Error::Invalid(format!("label {bad} exceeds num_classes {c}")));
            }
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_num_classes(mut self, num_classes: Option<usize>) -> Graph {
        self.num_classes = num_classes;
        self
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    /// Sorted neighbor list of `v`.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    /// Undirected edges as `(u, v)` with `u < v`, in sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }

    pub fn attributes(&self) -> Option<&DMatrix<f64>> {
        self.attributes.as_ref()
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.num_classes
    }

    /// Connected component id per node, numbered in order of first appearance.
    pub fn components(&self) -> (usize, Vec<usize>) {
        let mut comp = vec![usize::MAX; self.num_nodes];
        let mut count = 0;
        let mut stack = Vec::new();
        for s in 0..self.num_nodes {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = count;
            stack.push(s);
            while let Some(v) = stack.pop() {
                for &w in self.neighbors(v) {
                    if comp[w] == usize::MAX {
                        comp[w] = count;
                        stack.push(w);
                    }
                }
            }
            count += 1;
        }
        (count, comp)
    }

    /// Relabels nodes so that old node `v` becomes `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Graph {
        assert_eq!(perm.len(), self.num_nodes);
        let edges: Vec<_> = self.edges().map(|(u, v)| (perm[u], perm[v])).collect();
        let (mut g, _) = Graph::from_edges(self.num_nodes, edges).expect("permutation is in range");
        g.num_classes = self.num_classes;
        if let Some(x) = &self.attributes {
            let mut y = x.clone();
            for (old, &new) in perm.iter().enumerate() {
                y.set_row(new, &x.row(old));
            }
            g.attributes = Some(y);
        }
        if let Some(labels) = &self.labels {
            let mut out = labels.clone();
            for (old, &new) in perm.iter().enumerate() {
                out[new] = labels[old];
            }
            g.labels = Some(out);
        }
        g
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Meta {
    num_nodes: usize,
    #[serde(default)]
    directed: bool,
    #[serde(default)]
    num_classes: Option<usize>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads a graph bundle directory. Warnings about dropped edges go to the log.
pub fn load_graph(dir: impl AsRef<Path>) -> Result<Graph> {
    load_graph_with_report(dir).map(|(g, _)| g)
}

/// Like [`load_graph`] but also returns the edge normalization report.
pub fn load_graph_with_report(dir: impl AsRef<Path>) -> Result<(Graph, EdgeReport)> {
    let dir = dir.as_ref();
    let meta_path = dir.join("meta.json");
    if !meta_path.exists() {
        return Err(Error::MissingFile(meta_path));
    }
    let meta: Meta = serde_json::from_str(&read_text(&meta_path)?)
        .map_err(|e| Error::parse(&meta_path, e.line(), e.to_string()))?;

    let edges_path = dir.join("edges.tsv");
    if !edges_path.exists() {
        return Err(Error::MissingFile(edges_path));
    }
    let edges = parse_edges(&edges_path, &read_text(&edges_path)?, meta.num_nodes)?;
    let (graph, report) = Graph::from_edges(meta.num_nodes, edges)?;
    if report.self_loops_dropped > 0 || report.duplicates_dropped > 0 {
        log::warn!(
            "{}: dropped {} self-loops and {} duplicate edges",
            edges_path.display(),
            report.self_loops_dropped,
            report.duplicates_dropped
        );
    }
    let mut graph = graph.with_num_classes(meta.num_classes);

    let features_path = dir.join("features.csv");
    if features_path.exists() {
        let x = parse_features(&features_path, &read_text(&features_path)?)?;
        if x.nrows() != meta.num_nodes {
            return Err(Error::Invalid(format!(
                "{}: {} feature rows for {} nodes",
                features_path.display(),
                x.nrows(),
                meta.num_nodes
            )));
        }
        graph = graph.with_attributes(x)?;
    }

    let labels_path = dir.join("labels.csv");
    if labels_path.exists() {
        let labels = parse_labels(&labels_path, &read_text(&labels_path)?)?;
        graph = graph.with_labels(labels)?;
    }
    Ok((graph, report))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r').trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_edges(path: &Path, text: &str, n: usize) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    for (line_no, line) in content_lines(text) {
        let mut parts = line.split_whitespace();
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::parse(path, line_no, "expected `src<TAB>dst`"));
        };
        let mut idx = [0usize; 2];
        for (slot, tok) in idx.iter_mut().zip([a, b]) {
            let v: i64 = tok
                .parse()
                .map_err(|_| Error::parse(path, line_no, format!("not an integer: {tok:?}")))?;
            if v < 0 || v as usize >= n {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("node index {v} out of range for {n} nodes"),
                ));
            }
            *slot = v as usize;
        }
        out.push((idx[0], idx[1]));
    }
    Ok(out)
}

fn parse_features(path: &Path, text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| {
                let tok = tok.trim();
                match tok.parse::<f64>() {
                    Ok(x) if x.is_finite() => Ok(x),
                    _ => Err(Error::parse(
                        path,
                        line_no + 1,
                        format!("not a finite number: {tok:?}"),
                    )),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::parse(
                    path,
                    line_no + 1,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    let d = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
}

fn parse_labels(path: &Path, text: &str) -> Result<Vec<i64>> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r').trim()))
        .filter(|(_, l)| !l.is_empty())
        .map(|(line_no, l)| {
            l.parse::<i64>()
                .map_err(|_| Error::parse(path, line_no, format!("not an integer label: {l:?}")))
        })
        .collect()
}

/// Writes `graph` as a bundle directory (creating it if needed).
///
/// Each undirected edge is written once with `src < dst`; the bundle is
/// marked undirected. Reloading yields an identical graph.
pub fn save_graph(graph: &Graph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = Meta {
        num_nodes: graph.num_nodes,
        directed: false,
        num_classes: graph.num_classes,
    };
    write_file(
        &dir.join("meta.json"),
        serde_json::to_string(&meta).expect("meta serializes").as_bytes(),
    )?;

    let mut edges = String::new();
    for (u, v) in graph.edges() {
        edges.push_str(&format!("{u}\t{v}\n"));
    }
    write_file(&dir.join("edges.tsv"), edges.as_bytes())?;

    if let Some(x) = &graph.attributes {
        let mut s = String::new();
        for i in 0..x.nrows() {
            let row: Vec<String> = x.row(i).iter().map(|v| v.to_string()).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        write_file(&dir.join("features.csv"), s.as_bytes())?;
    }
    if let Some(labels) = &graph.labels {
        let s: String = labels.iter().map(|y| format!("{y}\n")).collect();
        write_file(&dir.join("labels.csv"), s.as_bytes())?;
    }
    Ok(())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Disjoint train/validation/test node sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitSpec {
    /// Validates disjointness, range and a non-empty train set.
    pub fn new(train: Vec<usize>, val: Vec<usize>, test: Vec<usize>, num_nodes: usize) -> Result<SplitSpec> {
        if train.is_empty() {
            return Err(Error::Invalid("split has an empty train set".into()));
        }
        let mut seen = BTreeSet::new();
        for &v in train.iter().chain(&val).chain(&test) {
            if v >= num_nodes {
                return Err(Error::IndexOutOfRange {
                    index: v as i64,
                    len: num_nodes,
                });
            }
            if !seen.insert(v) {
                return Err(Error::SplitOverlap(v));
            }
        }
        Ok(SplitSpec { train, val, test })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        write_file(path, serde_json::to_string(self).expect("split serializes").as_bytes())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSplit {
    train: Vec<i64>,
    #[serde(default)]
    val: Vec<i64>,
    #[serde(default)]
    test: Vec<i64>,
}

/// Loads and validates a `split.json` file against a graph of `num_nodes` nodes.
pub fn load_split(path: impl AsRef<Path>, num_nodes: usize) -> Result<SplitSpec> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(PathBuf::from(path)));
    }
    let raw: RawSplit = serde_json::from_str(&read_text(path)?)
        .map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
    let convert = |xs: Vec<i64>| -> Result<Vec<usize>> {
        xs.into_iter()
            .map(|v| {
                if v < 0 {
                    Err(Error::IndexOutOfRange {
                        index: v,
                        len: num_nodes,
                    })
                } else {
                    Ok(v as usize)
                }
            })
            .collect()
    };
    SplitSpec::new(convert(raw.train)?, convert(raw.val)?, convert(raw.test)?, num_nodes)
}

/// The three sparse operators derived from the adjacency matrix.
#[derive(Debug, Clone)]
pub struct NormalizedOperators {
    /// `D̃^{-1/2}(A+I)D̃^{-1/2}` with self-loops added.
    pub gcn_norm: CsrMatrix,
    /// `P = D^{-1}A`; rows of isolated nodes are zero.
    pub rw_transition: CsrMatrix,
    /// `L = I − D^{-1/2}AD^{-1/2}`; isolated nodes get an all-zero row, so
    /// every connected component (isolated nodes included) contributes exactly
    /// one zero eigenvalue.
    pub sym_laplacian: CsrMatrix,
}

/// Builds the normalized operators of `g`.
pub fn build_operators(g: &Graph) -> NormalizedOperators {
    let n = g.num_nodes();
    let deg: Vec<f64> = (0..n).map(|v| g.degree(v) as f64).collect();
    let inv_sqrt = |d: f64| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 };

    let mut gcn = (vec![0usize], Vec::new(), Vec::new());
    let mut rw = (vec![0usize], Vec::new(), Vec::new());
    let mut lap = (vec![0usize], Vec::new(), Vec::new());
    for v in 0..n {
        let nbrs = g.neighbors(v);
        let dv = deg[v];
        let tilde_v = 1.0 / (dv + 1.0).sqrt();
        let mut self_done = false;
        for &w in nbrs {
            if !self_done && w > v {
                gcn.1.push(v);
                gcn.2.push(tilde_v * tilde_v);
                lap.1.push(v);
                lap.2.push(if dv > 0.0 { 1.0 } else { 0.0 });
                self_done = true;
            }
            gcn.1.push(w);
            gcn.2.push(tilde_v / (deg[w] + 1.0).sqrt());
            rw.1.push(w);
            rw.2.push(1.0 / dv);
            lap.1.push(w);
            lap.2.push(-inv_sqrt(dv) * inv_sqrt(deg[w]));
        }
        if !self_done {
            gcn.1.push(v);
            gcn.2.push(tilde_v * tilde_v);
            if dv > 0.0 {
                lap.1.push(v);
                lap.2.push(1.0);
            }
        }
        gcn.0.push(gcn.1.len());
        rw.0.push(rw.1.len());
        lap.0.push(lap.1.len());
    }
    NormalizedOperators {
        gcn_norm: CsrMatrix::from_raw(n, n, gcn.0, gcn.1, gcn.2),
        rw_transition: CsrMatrix::from_raw(n, n, rw.0, rw.1, rw.2),
        sym_laplacian: CsrMatrix::from_raw(n, n, lap.0, lap.1, lap.2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::from_edges(n, edges.iter().copied()).unwrap().0
    }

    #[test]
    fn dedup_and_self_loops() {
        let (g, report) = Graph::from_edges(2, [(0, 1), (1, 0), (1, 1)]).unwrap();
        assert_eq!(g.num_edges(), 1);
        assert_eq!(report.self_loops_dropped, 1);
        assert_eq!(report.duplicates_dropped, 1);
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0]);
    }

    #[test]
    fn directed_input_is_symmetrized() {
        let g = graph(3, &[(0, 1), (1, 2)]);
        assert_eq!(g.neighbors(1), &[0, 2]);
        assert_eq!(g.neighbors(2), &[1]);
        for (u, v) in g.edges() {
            assert!(g.neighbors(v).contains(&u));
        }
    }

    #[test]
    fn out_of_range_edge_rejected() {
        assert!(matches!(
            Graph::from_edges(2, [(0, 2)]),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        ));
    }

    #[test]
    fn attribute_rows_must_match() {
        let g = graph(3, &[(0, 1)]);
        assert!(g.with_attributes(DMatrix::zeros(2, 4)).is_err());
    }

    #[test]
    fn k2_operators() {
        let ops = build_operators(&graph(2, &[(0, 1)]));
        for i in 0..2 {
            for j in 0..2 {
                assert!((ops.gcn_norm.get(i, j) - 0.5).abs() < 1e-15);
            }
        }
        assert_eq!(
            ops.sym_laplacian.to_dense(),
            DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0])
        );
    }

    #[test]
    fn triangle_transition() {
        let ops = build_operators(&graph(3, &[(0, 1), (1, 2), (0, 2)]));
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 0.0 } else { 0.5 };
                assert_eq!(ops.rw_transition.get(i, j), want);
            }
        }
    }

    #[test]
    fn isolated_node_conventions() {
        let ops = build_operators(&graph(3, &[(0, 1)]));
        assert_eq!(ops.rw_transition.row_sum(2), 0.0);
        assert_eq!(ops.rw_transition.row(2).0.len(), 0);
        assert_eq!(ops.gcn_norm.get(2, 2), 1.0);
        assert_eq!(ops.sym_laplacian.row(2).0.len(), 0);
    }

    #[test]
    fn components_counted() {
        let g = graph(5, &[(0, 1), (3, 4)]);
        let (count, comp) = g.components();
        assert_eq!(count, 3);
        assert_eq!(comp, vec![0, 0, 1, 2, 2]);
    }

    #[test]
    fn split_validation() {
        assert!(SplitSpec::new(vec![0, 1], vec![2], vec![3], 4).is_ok());
        assert!(matches!(
            SplitSpec::new(vec![0], vec![0], vec![1], 4),
            Err(Error::SplitOverlap(0))
        ));
        assert!(SplitSpec::new(vec![], vec![0], vec![1], 4).is_err());
        assert!(matches!(
            SplitSpec::new(vec![0], vec![], vec![9], 4),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn parse_edges_reports_line() {
        let err = parse_edges(Path::new("e.tsv"), "# header\n0\t1\n0\tx\n", 3).unwrap_err();
        assert_eq!(err.to_string(), "e.tsv:3: not an integer: \"x\"");
        let err = parse_edges(Path::new("e.tsv"), "0\t5\n", 3).unwrap_err();
        assert!(err.to_string().starts_with("e.tsv:1:"));
        let ok = parse_edges(Path::new("e.tsv"), "0\t1\r\n1 2\r\n", 3).unwrap();
        assert_eq!(ok, vec![(0, 1), (1, 2)]);
    }
}
