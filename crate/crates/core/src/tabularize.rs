//! Assembly of per-node feature rows from a [`FeatureRecipe`], z-normalization,
//! feature-budget enforcement, graph-level pooling and matrix export.
//!
//! Column groups always appear in the order
//! `attr → local → global → lap → rwse → smooth`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attrfeat::{smooth, truncated_svd, SvdOptions};
use crate::error::{Error, Result};
use crate::graph::{write_file, Graph, NormalizedOperators};
use crate::posenc::{apply_sign_convention, lap_pe, rwse};
use crate::structural::{betweenness, closeness, local_features, pagerank, PageRankParams};

pub const SVD_RANKS: [usize; 5] = [16, 32, 64, 128, 256];
pub const PE_DIMS: [usize; 5] = [4, 8, 16, 32, 64];
pub const SMOOTH_STEPS: [usize; 3] = [0, 1, 2];

/// Graphs above this size use sampled betweenness (this many sources) unless
/// the recipe sets its own sample count.
pub const EXACT_BETWEENNESS_LIMIT: usize = 20_000;

const LAP_TRIVIAL_TOL: f64 = 1e-8;
const CONSTANT_COLUMN_STD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeKind {
    Lap,
    Rwse,
    Both,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GlobalFeature {
    Betweenness,
    Closeness,
    Pagerank,
}

/// Which nodes the z-normalization statistics are computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormStats {
    #[default]
    All,
    Train,
}

fn default_true() -> bool {
    true
}

fn default_pe_dim() -> usize {
    8
}

fn default_global() -> BTreeSet<GlobalFeature> {
    [GlobalFeature::Betweenness, GlobalFeature::Pagerank].into()
}

/// Declarative description of the feature families to compute.
///
/// This is also the on-disk recipe JSON; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureRecipe {
    /// Include the (possibly reduced) node attributes as a column group.
    #[serde(default = "default_true")]
    pub attributes: bool,
    /// Truncated-SVD rank for the attributes; `None` keeps them raw.
    #[serde(default)]
    pub svd_rank: Option<usize>,
    #[serde(default = "default_pe_kind")]
    pub pe_kind: PeKind,
    #[serde(default = "default_pe_dim")]
    pub pe_dim: usize,
    #[serde(default = "default_true")]
    pub local_structural: bool,
    #[serde(default = "default_global")]
    pub global_structural: BTreeSet<GlobalFeature>,
    #[serde(default)]
    pub smooth_steps: usize,
    #[serde(default)]
    pub betweenness_samples: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub normalize_on: NormStats,
    /// Permit values outside the standard search space.
    #[serde(default)]
    pub override_search_space: bool,
}

fn default_pe_kind() -> PeKind {
    PeKind::None
}

impl Default for FeatureRecipe {
    fn default() -> Self {
        FeatureRecipe {
            attributes: true,
            svd_rank: None,
            pe_kind: PeKind::None,
            pe_dim: default_pe_dim(),
            local_structural: true,
            global_structural: default_global(),
            smooth_steps: 0,
            betweenness_samples: None,
            seed: 0,
            normalize_on: NormStats::All,
            override_search_space: false,
        }
    }
}

impl FeatureRecipe {
    /// Checks every field against the search space (unless overridden).
    pub fn validate(&self) -> Result<()> {
        if self.pe_kind != PeKind::None && self.pe_dim == 0 {
            return Err(Error::Invalid("pe_dim must be at least 1".into()));
        }
        if self.svd_rank == Some(0) {
            return Err(Error::Invalid("svd_rank must be at least 1".into()));
        }
        if self.override_search_space {
            return Ok(());
        }
        if let Some(r) = self.svd_rank {
            if !SVD_RANKS.contains(&r) {
                return Err(Error::Invalid(format!(
                    "svd_rank {r} outside {SVD_RANKS:?} (set override_search_space to allow)"
                )));
            }
        }
        if self.pe_kind != PeKind::None && !PE_DIMS.contains(&self.pe_dim) {
            return Err(Error::Invalid(format!(
                "pe_dim {} outside {PE_DIMS:?} (set override_search_space to allow)",
                self.pe_dim
            )));
        }
        if !SMOOTH_STEPS.contains(&self.smooth_steps) {
            return Err(Error::Invalid(format!(
                "smooth_steps {} outside {SMOOTH_STEPS:?} (set override_search_space to allow)",
                self.smooth_steps
            )));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<FeatureRecipe> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let recipe: FeatureRecipe = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        recipe.validate()?;
        Ok(recipe)
    }

    /// Canonical JSON, used for fingerprints and tie-breaking.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("recipe serializes")
    }
}

/// A named contiguous span of columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnGroup {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

/// Dense N×F tabular rows with named column groups.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub data: DMatrix<f64>,
    pub column_groups: Vec<ColumnGroup>,
    pub recipe_fingerprint: String,
}

impl FeatureMatrix {
    /// Builds a matrix from `(name, block)` pairs concatenated left to right.
    pub fn from_blocks(blocks: Vec<(String, DMatrix<f64>)>, recipe_fingerprint: String) -> Result<FeatureMatrix> {
        let blocks: Vec<_> = blocks.into_iter().filter(|(_, b)| b.ncols() > 0).collect();
        if blocks.is_empty() {
            return Err(Error::Invalid("no feature families enabled".into()));
        }
        let n = blocks[0].1.nrows();
        let f: usize = blocks.iter().map(|(_, b)| b.ncols()).sum();
        let mut data = DMatrix::zeros(n, f);
        let mut column_groups = Vec::with_capacity(blocks.len());
        let mut start = 0;
        for (name, block) in blocks {
            assert_eq!(block.nrows(), n, "block {name} row count");
            data.columns_mut(start, block.ncols()).copy_from(&block);
            column_groups.push(ColumnGroup {
                name,
                start,
                len: block.ncols(),
            });
            start += block.ncols();
        }
        Ok(FeatureMatrix {
            data,
            column_groups,
            recipe_fingerprint,
        })
    }

    pub fn num_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn num_features(&self) -> usize {
        self.data.ncols()
    }

    pub fn group(&self, name: &str) -> Option<&ColumnGroup> {
        self.column_groups.iter().find(|g| g.name == name)
    }

    /// `group.index` column names.
    pub fn column_names(&self) -> Vec<String> {
        self.column_groups
            .iter()
            .flat_map(|g| (0..g.len).map(move |i| format!("{}.{i}", g.name)))
            .collect()
    }

    /// Rows `rows`, in that order.
    pub fn select_rows(&self, rows: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), self.num_features(), |r, c| self.data[(rows[r], c)])
    }

    /// Re-applies the eigenvector sign rule to the `lap` columns, e.g. after
    /// permuting rows.
    pub fn canonicalize_lap_signs(&mut self) {
        if let Some(g) = self.group("lap").cloned() {
            let mut block = self.data.columns(g.start, g.len).into_owned();
            apply_sign_convention(&mut block);
            self.data.columns_mut(g.start, g.len).copy_from(&block);
        }
    }

    fn check_groups(&self) {
        let mut next = 0;
        for g in &self.column_groups {
            debug_assert_eq!(g.start, next);
            next += g.len;
        }
        debug_assert_eq!(next, self.num_features());
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.column_names().join(",");
        out.push('\n');
        for r in 0..self.num_rows() {
            let row: Vec<String> = self.data.row(r).iter().map(|x| x.to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Framed little-endian binary: magic `GTABFM1\0`, u64 N, u64 F, row-major
    /// f64 data, then a JSON trailer with the column groups and fingerprint.
    pub fn to_binary(&self) -> Vec<u8> {
        let (n, f) = self.data.shape();
        let mut out = Vec::with_capacity(24 + 8 * n * f);
        out.extend_from_slice(BINARY_MAGIC);
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&(f as u64).to_le_bytes());
        for r in 0..n {
            for c in 0..f {
                out.extend_from_slice(&self.data[(r, c)].to_le_bytes());
            }
        }
        let trailer = BinaryTrailer {
            column_groups: self.column_groups.clone(),
            fingerprint: self.recipe_fingerprint.clone(),
        };
        out.extend_from_slice(serde_json::to_string(&trailer).expect("trailer").as_bytes());
        out
    }

    pub fn from_binary(bytes: &[u8]) -> Result<FeatureMatrix> {
        let bad = |msg: &str| Error::Invalid(format!("feature matrix binary: {msg}"));
        if bytes.len() < 24 || &bytes[..8] != BINARY_MAGIC {
            return Err(bad("bad magic"));
        }
        let read_u64 = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()) as usize;
        let (n, f) = (read_u64(8), read_u64(16));
        let end = n
            .checked_mul(f)
            .and_then(|nf| nf.checked_mul(8))
            .and_then(|b| b.checked_add(24))
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("truncated data"))?;
        let data = DMatrix::from_fn(n, f, |r, c| {
            let at = 24 + 8 * (r * f + c);
            f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
        });
        let trailer: BinaryTrailer =
            serde_json::from_slice(&bytes[end..]).map_err(|e| bad(&format!("trailer: {e}")))?;
        Ok(FeatureMatrix {
            data,
            column_groups: trailer.column_groups,
            recipe_fingerprint: trailer.fingerprint,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>, format: ExportFormat) -> Result<()> {
        let bytes = match format {
            ExportFormat::Csv => self.to_csv().into_bytes(),
            ExportFormat::Bin => self.to_binary(),
        };
        write_file(path.as_ref(), &bytes)
    }
}

pub const BINARY_MAGIC: &[u8; 8] = b"GTABFM1\0";

#[derive(Serialize, Deserialize)]
struct BinaryTrailer {
    column_groups: Vec<ColumnGroup>,
    fingerprint: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Bin,
}

/// Content hash of the recipe together with the graph's structure and attributes.
/// Labels are excluded: features never depend on them.
pub fn fingerprint(g: &Graph, recipe: &FeatureRecipe) -> String {
    let mut h = Sha256::new();
    h.update(recipe.canonical_json().as_bytes());
    h.update((g.num_nodes() as u64).to_le_bytes());
    for (u, v) in g.edges() {
        h.update((u as u64).to_le_bytes());
        h.update((v as u64).to_le_bytes());
    }
    if let Some(x) = g.attributes() {
        h.update((x.ncols() as u64).to_le_bytes());
        for v in x.iter() {
            h.update(v.to_le_bytes());
        }
    }
    let digest = h.finalize();
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Wall-clock seconds spent per feature family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyTiming {
    pub family: String,
    pub seconds: f64,
}

fn column(values: impl IntoIterator<Item = f64>, n: usize) -> DMatrix<f64> {
    DMatrix::from_iterator(n, 1, values)
}

/// Concatenates the enabled feature families of `recipe` for every node.
pub fn assemble(g: &Graph, ops: &NormalizedOperators, recipe: &FeatureRecipe) -> Result<FeatureMatrix> {
    assemble_timed(g, ops, recipe).map(|(fm, _)| fm)
}

/// Like [`assemble`], also reporting the time spent on each family.
pub fn assemble_timed(
    g: &Graph,
    ops: &NormalizedOperators,
    recipe: &FeatureRecipe,
) -> Result<(FeatureMatrix, Vec<FamilyTiming>)> {
    recipe.validate()?;
    let n = g.num_nodes();
    let needs_attrs = recipe.svd_rank.is_some() || recipe.smooth_steps > 0;
    if needs_attrs && g.attributes().is_none() {
        return Err(Error::MissingAttributes);
    }
    let mut timings = Vec::new();
    let mut timed = |family: &str, start: Instant| {
        timings.push(FamilyTiming {
            family: family.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        })
    };
    let mut blocks: Vec<(String, DMatrix<f64>)> = Vec::new();

    let t = Instant::now();
    let attr_block = match (g.attributes(), recipe.svd_rank) {
        (Some(x), Some(rank)) => Some(truncated_svd(x, rank, recipe.seed, SvdOptions::default())?.matrix),
        (Some(x), None) => Some(x.clone()),
        (None, _) => None,
    };
    if recipe.attributes {
        if let Some(a) = &attr_block {
            blocks.push(("attr".into(), a.clone()));
            timed("attr", t);
        }
    }

    if recipe.local_structural {
        let t = Instant::now();
        let local = local_features(g);
        let mut m = DMatrix::zeros(n, 3);
        m.set_column(0, &column(local.degree.iter().map(|&d| d as f64), n).column(0));
        m.set_column(1, &column(local.clustering.iter().copied(), n).column(0));
        m.set_column(2, &column(local.triangles.iter().map(|&t| t as f64), n).column(0));
        blocks.push(("local".into(), m));
        timed("local", t);
    }

    if !recipe.global_structural.is_empty() {
        let t = Instant::now();
        let mut cols = Vec::new();
        for feature in &recipe.global_structural {
            let values = match feature {
                GlobalFeature::Betweenness => {
                    let samples = recipe.betweenness_samples.or(
                        (n > EXACT_BETWEENNESS_LIMIT).then_some(EXACT_BETWEENNESS_LIMIT),
                    );
                    betweenness(g, samples, recipe.seed)?
                }
                GlobalFeature::Closeness => closeness(g),
                GlobalFeature::Pagerank => pagerank(g, &PageRankParams::default())?,
            };
            cols.push(values);
        }
        let m = DMatrix::from_fn(n, cols.len(), |r, c| cols[c][r]);
        blocks.push(("global".into(), m));
        timed("global", t);
    }

    if matches!(recipe.pe_kind, PeKind::Lap | PeKind::Both) {
        let t = Instant::now();
        blocks.push(("lap".into(), lap_pe(ops, recipe.pe_dim, LAP_TRIVIAL_TOL)?.vectors));
        timed("lap", t);
    }
    if matches!(recipe.pe_kind, PeKind::Rwse | PeKind::Both) {
        let t = Instant::now();
        blocks.push(("rwse".into(), rwse(ops, recipe.pe_dim)?.probs));
        timed("rwse", t);
    }

    if recipe.smooth_steps > 0 {
        let t = Instant::now();
        // smoothing is linear, so smoothing the SVD embedding equals
        // projecting the smoothed raw attributes onto the same components
        let base = attr_block.as_ref().expect("attributes checked above");
        blocks.push(("smooth".into(), smooth(ops, base, recipe.smooth_steps).matrix));
        timed("smooth", t);
    }

    if blocks.is_empty() {
        return Err(Error::Invalid("recipe enables no feature families for this graph".into()));
    }
    let fm = FeatureMatrix::from_blocks(blocks, fingerprint(g, recipe))?;
    if fm.data.iter().any(|x| !x.is_finite()) {
        return Err(Error::Invalid("non-finite feature value".into()));
    }
    fm.check_groups();
    Ok((fm, timings))
}

/// Per-column z-normalization with statistics over all rows.
pub fn z_normalize(fm: &FeatureMatrix) -> FeatureMatrix {
    let rows: Vec<usize> = (0..fm.num_rows()).collect();
    z_normalize_on(fm, &rows)
}

/// Per-column z-normalization with mean and population standard deviation
/// taken over `stat_rows` and applied to every row. Columns whose deviation is
/// below `1e-12` become all zero.
pub fn z_normalize_on(fm: &FeatureMatrix, stat_rows: &[usize]) -> FeatureMatrix {
    let mut out = fm.clone();
    if stat_rows.is_empty() {
        return out;
    }
    let m = stat_rows.len() as f64;
    for mut col in out.data.column_iter_mut() {
        let mean = stat_rows.iter().map(|&r| col[r]).sum::<f64>() / m;
        let var = stat_rows.iter().map(|&r| (col[r] - mean).powi(2)).sum::<f64>() / m;
        let std = var.sqrt();
        if std < CONSTANT_COLUMN_STD {
            col.fill(0.0);
        } else {
            col.iter_mut().for_each(|x| *x = (*x - mean) / std);
        }
    }
    out
}

/// Record of a budget truncation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BudgetWarning {
    pub original_features: usize,
    pub max_features: usize,
    pub attr_removed: usize,
    pub smooth_removed: usize,
}

/// Caps the column count at `max_features` by trimming the tails of the
/// `attr` and `smooth` groups, taking from whichever is currently wider
/// (`smooth` on ties). Structural and positional groups are never touched.
pub fn enforce_budget(fm: &FeatureMatrix, max_features: usize) -> Result<(FeatureMatrix, Option<BudgetWarning>)> {
    if max_features == 0 {
        return Err(Error::Invalid("feature budget must be at least 1".into()));
    }
    let f = fm.num_features();
    if f <= max_features {
        return Ok((fm.clone(), None));
    }
    let width = |name: &str| fm.group(name).map_or(0, |g| g.len);
    let protected = f - width("attr") - width("smooth");
    if protected > max_features {
        return Err(Error::Budget {
            max: max_features,
            protected,
        });
    }
    let (mut attr, mut smooth) = (width("attr"), width("smooth"));
    let mut excess = f - max_features;
    while excess > 0 {
        if smooth >= attr {
            smooth -= 1;
        } else {
            attr -= 1;
        }
        excess -= 1;
    }
    let keep = |g: &ColumnGroup| match g.name.as_str() {
        "attr" => attr,
        "smooth" => smooth,
        _ => g.len,
    };
    let blocks = fm
        .column_groups
        .iter()
        .map(|g| (g.name.clone(), fm.data.columns(g.start, keep(g)).into_owned()))
        .collect();
    let out = FeatureMatrix::from_blocks(blocks, fm.recipe_fingerprint.clone())?;
    let warning = BudgetWarning {
        original_features: f,
        max_features,
        attr_removed: width("attr") - attr,
        smooth_removed: width("smooth") - smooth,
    };
    log::warn!(
        "feature budget {max_features}: trimmed {} attr and {} smooth columns",
        warning.attr_removed,
        warning.smooth_removed
    );
    Ok((out, Some(warning)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    #[default]
    Sum,
    Mean,
}

/// Column-wise sum or mean over the rows in `nodes`.
pub fn pool_graph(fm: &FeatureMatrix, nodes: &[usize], mode: PoolMode) -> Result<Vec<f64>> {
    pool_rows(&fm.data, nodes, mode)
}

pub(crate) fn pool_rows(data: &DMatrix<f64>, nodes: &[usize], mode: PoolMode) -> Result<Vec<f64>> {
    if nodes.is_empty() {
        return Err(Error::Invalid("cannot pool an empty node set".into()));
    }
    let mut out = vec![0.0; data.ncols()];
    for &v in nodes {
        if v >= data.nrows() {
            return Err(Error::IndexOutOfRange {
                index: v as i64,
                len: data.nrows(),
            });
        }
        for (o, x) in out.iter_mut().zip(data.row(v).iter()) {
            *o += x;
        }
    }
    if mode == PoolMode::Mean {
        out.iter_mut().for_each(|x| *x /= nodes.len() as f64);
    }
    Ok(out)
}
