//! The `gtab` command line: `featurize`, `classify`, `grid` and `pool`.
//!
//! Exit codes: 0 ok, 2 validation, 3 compute, 4 bridge transport.
//! One JSON log line per command goes to stdout; diagnostics go to stderr.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::classify::{bridge_timeout_from_env, evaluate_with_predictions, parse_backend, ClassifierBackend, MetricsReport};
use crate::error::{Error, Result};
use crate::graph::{build_operators, load_graph, load_split, save_graph, Graph, NormalizedOperators, SplitSpec};
use crate::tabularize::{
    assemble_timed, enforce_budget, pool_graph, z_normalize, z_normalize_on, ExportFormat, FeatureMatrix,
    FeatureRecipe, NormStats, PoolMode,
};

#[derive(Debug, Parser)]
#[command(name = "gtab", version, about = "Turn graphs into feature tables and classify their nodes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the feature matrix for a graph bundle.
    Featurize(FeaturizeArgs),
    /// Featurize, normalize, fit the budget and evaluate a backend on a split.
    Classify(ClassifyArgs),
    /// Evaluate every recipe in a search space and keep the best on validation.
    Grid(GridArgs),
    /// Pool per-graph feature rows into one labeled row per graph.
    Pool(PoolArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Csv,
    Bin,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub recipe: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub recipe: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    /// `builtin:logreg[?l2=..]`, `builtin:knn[?k=..]` or `bridge:<shell command>`.
    #[arg(long, default_value = "builtin:logreg")]
    pub backend: String,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write per-seed class probabilities for the val and test nodes.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// JSON object mapping recipe fields to lists of candidate values.
    #[arg(long)]
    pub space: PathBuf,
    #[arg(long, default_value = "builtin:logreg")]
    pub backend: String,
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PoolArgs {
    /// Directory of graph bundles plus `graph_labels.csv` (`name,label`).
    #[arg(long)]
    pub graphs: PathBuf,
    #[arg(long)]
    pub recipe: PathBuf,
    #[arg(long, value_enum, default_value = "sum")]
    pub mode: PoolModeArg,
    /// Output bundle directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PoolModeArg {
    Sum,
    Mean,
}

fn log_line(value: Value) {
    println!("{value}");
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    crate::graph::write_file(path, text.as_bytes())
}

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command) -> Result<()> {
    match command {
        Command::Featurize(a) => cmd_featurize(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Grid(a) => cmd_grid(a),
        Command::Pool(a) => cmd_pool(a),
    }
}

/// Replaces the generic missing-attributes error with the file that is absent.
fn name_missing_features(dir: &Path, e: Error) -> Error {
    match e {
        Error::MissingAttributes => Error::MissingFile(dir.join("features.csv")),
        e => e,
    }
}

fn featurize(dir: &Path, g: &Graph, ops: &NormalizedOperators, recipe: &FeatureRecipe) -> Result<(FeatureMatrix, Value)> {
    let (fm, timings) = assemble_timed(g, ops, recipe).map_err(|e| name_missing_features(dir, e))?;
    let summary = json!({
        "rows": fm.num_rows(),
        "features": fm.num_features(),
        "column_groups": fm.column_groups,
        "fingerprint": fm.recipe_fingerprint,
        "timings": timings,
    });
    Ok((fm, summary))
}

pub fn cmd_featurize(a: &FeaturizeArgs) -> Result<()> {
    let recipe = FeatureRecipe::load(&a.recipe)?;
    let g = load_graph(&a.graph)?;
    let ops = build_operators(&g);
    let (fm, mut summary) = featurize(&a.graph, &g, &ops, &recipe)?;
    let format = match a.format {
        Format::Csv => ExportFormat::Csv,
        Format::Bin => ExportFormat::Bin,
    };
    fm.write(&a.out, format)?;
    summary["event"] = json!("featurize");
    summary["out"] = json!(a.out);
    log_line(summary);
    Ok(())
}

/// Normalized, budget-fitted feature matrix ready for a backend.
fn prepare(fm: &FeatureMatrix, recipe: &FeatureRecipe, split: &SplitSpec, max_features: usize) -> Result<FeatureMatrix> {
    let normalized = match recipe.normalize_on {
        NormStats::All => z_normalize(fm),
        NormStats::Train => z_normalize_on(fm, &split.train),
    };
    let (fitted, warning) = enforce_budget(&normalized, max_features)?;
    if let Some(w) = warning {
        log::warn!(
            "feature budget {}: trimmed {} attr and {} smooth columns from {}",
            w.max_features,
            w.attr_removed,
            w.smooth_removed,
            w.original_features
        );
        log_line(json!({"event": "budget", "warning": w}));
    }
    Ok(fitted)
}

fn dataset_name(dir: &Path) -> String {
    dir.canonicalize()
        .ok()
        .as_deref()
        .unwrap_or(dir)
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn open_backend(spec: &str) -> Result<Box<dyn ClassifierBackend>> {
    parse_backend(spec, bridge_timeout_from_env()?)
}

#[derive(Serialize)]
struct PredictionDump<'a> {
    val: &'a [usize],
    test: &'a [usize],
    runs: &'a [crate::classify::PredictionResult],
}

pub fn cmd_classify(a: &ClassifyArgs) -> Result<()> {
    let recipe = FeatureRecipe::load(&a.recipe)?;
    let g = load_graph(&a.graph)?;
    let split = load_split(&a.split, g.num_nodes())?;
    let mut backend = open_backend(&a.backend)?;
    let ops = build_operators(&g);
    let (fm, summary) = featurize(&a.graph, &g, &ops, &recipe)?;
    let fm = prepare(&fm, &recipe, &split, backend.capabilities().max_features)?;
    let (report, predictions) =
        evaluate_with_predictions(&g, &fm, &split, backend.as_mut(), &a.seeds, &dataset_name(&a.graph))?;
    write_json(&a.out, &report)?;
    if let Some(path) = &a.predictions {
        write_json(
            path,
            &PredictionDump {
                val: &split.val,
                test: &split.test,
                runs: &predictions,
            },
        )?;
    }
    log_line(json!({
        "event": "classify",
        "features": fm.num_features(),
        "featurize": summary,
        "val_acc_mean": report.val_acc_mean,
        "test_acc_mean": report.test_acc_mean,
        "out": a.out,
    }));
    Ok(())
}

/// Expands a search space (field → candidate list) into recipes, in
/// lexicographic field order.
pub fn expand_space(space: &Value) -> Result<Vec<FeatureRecipe>> {
    let obj = space
        .as_object()
        .ok_or_else(|| Error::Invalid("search space must be a JSON object".into()))?;
    let axes: BTreeMap<&String, &Vec<Value>> = obj
        .iter()
        .map(|(k, v)| match v.as_array() {
            Some(list) if !list.is_empty() => Ok((k, list)),
            _ => Err(Error::Invalid(format!("search space field {k:?} must be a non-empty list"))),
        })
        .collect::<Result<_>>()?;
    let mut combos = vec![serde_json::Map::new()];
    for (key, values) in axes {
        combos = combos
            .into_iter()
            .flat_map(|base| {
                values.iter().map(move |v| {
                    let mut m = base.clone();
                    m.insert(key.clone(), v.clone());
                    m
                })
            })
            .collect();
    }
    combos
        .into_iter()
        .map(|m| {
            let recipe: FeatureRecipe = serde_json::from_value(Value::Object(m))
                .map_err(|e| Error::Invalid(format!("search space: {e}")))?;
            recipe.validate()?;
            Ok(recipe)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Trial {
    pub recipe: FeatureRecipe,
    pub num_features: usize,
    pub val_acc_mean: f64,
    pub val_acc_std: f64,
    pub test_acc_mean: Option<f64>,
    pub test_acc_std: Option<f64>,
}

/// Index of the winning trial: highest validation accuracy, then fewer
/// features, then the lexicographically smaller canonical recipe JSON.
pub fn select_best(trials: &[Trial]) -> Option<usize> {
    (0..trials.len()).min_by(|&i, &j| {
        let (a, b) = (&trials[i], &trials[j]);
        b.val_acc_mean
            .total_cmp(&a.val_acc_mean)
            .then(a.num_features.cmp(&b.num_features))
            .then_with(|| a.recipe.canonical_json().cmp(&b.recipe.canonical_json()))
    })
}

fn trial_from(recipe: FeatureRecipe, num_features: usize, report: &MetricsReport) -> Result<Trial> {
    let val_acc_mean = report
        .val_acc_mean
        .ok_or_else(|| Error::Invalid("grid search needs a non-empty validation split".into()))?;
    Ok(Trial {
        recipe,
        num_features,
        val_acc_mean,
        val_acc_std: report.val_acc_std.unwrap_or(0.0),
        test_acc_mean: report.test_acc_mean,
        test_acc_std: report.test_acc_std,
    })
}

pub fn cmd_grid(a: &GridArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.space).map_err(|e| Error::io(&a.space, e))?;
    let space: Value = serde_json::from_str(&text).map_err(|e| Error::parse(&a.space, e.line(), e.to_string()))?;
    let recipes = expand_space(&space)?;
    if recipes.is_empty() {
        return Err(Error::Invalid("empty search space".into()));
    }
    let g = load_graph(&a.graph)?;
    let split = load_split(&a.split, g.num_nodes())?;
    if split.val.is_empty() {
        return Err(Error::Invalid("grid search needs a non-empty validation split".into()));
    }
    let mut backend = open_backend(&a.backend)?;
    let ops = build_operators(&g);
    let dataset = dataset_name(&a.graph);
    let mut trials = Vec::with_capacity(recipes.len());
    for (i, recipe) in recipes.into_iter().enumerate() {
        let (fm, _) = featurize(&a.graph, &g, &ops, &recipe)?;
        let fm = prepare(&fm, &recipe, &split, backend.capabilities().max_features)?;
        let (report, _) = evaluate_with_predictions(&g, &fm, &split, backend.as_mut(), &a.seeds, &dataset)?;
        let trial = trial_from(recipe, fm.num_features(), &report)?;
        log_line(json!({"event": "trial", "index": i, "trial": trial}));
        trials.push(trial);
    }
    let best = select_best(&trials).expect("non-empty");
    write_json(
        &a.out,
        &json!({
            "dataset": dataset,
            "backend": backend.name(),
            "seeds": a.seeds,
            "best": trials[best].recipe,
            "best_index": best,
            "best_val_acc_mean": trials[best].val_acc_mean,
            "trials": trials,
        }),
    )?;
    log_line(json!({"event": "grid", "trials": trials.len(), "best_index": best, "out": a.out}));
    Ok(())
}

fn read_graph_labels(path: &Path) -> Result<BTreeMap<String, i64>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, label) = line
            .split_once(',')
            .ok_or_else(|| Error::parse(path, i + 1, "expected `name,label`"))?;
        let label = label.trim();
        if i == 0 && label == "label" {
            continue;
        }
        let label: i64 = label
            .parse()
            .map_err(|_| Error::parse(path, i + 1, format!("bad label {label:?}")))?;
        if label < 0 {
            return Err(Error::parse(path, i + 1, "graph labels must be nonnegative"));
        }
        if out.insert(name.trim().to_string(), label).is_some() {
            return Err(Error::parse(path, i + 1, format!("duplicate graph {name:?}")));
        }
    }
    Ok(out)
}

pub fn cmd_pool(a: &PoolArgs) -> Result<()> {
    let recipe = FeatureRecipe::load(&a.recipe)?;
    let labels = read_graph_labels(&a.graphs.join("graph_labels.csv"))?;
    let mut dirs: Vec<(String, PathBuf)> = std::fs::read_dir(&a.graphs)
        .map_err(|e| Error::io(&a.graphs, e))?
        .filter_map(|entry| entry.ok())
        .filter(|entry| entry.path().is_dir())
        .map(|entry| (entry.file_name().to_string_lossy().into_owned(), entry.path()))
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Invalid(format!("{} holds no graph bundles", a.graphs.display())));
    }
    let mode = match a.mode {
        PoolModeArg::Sum => PoolMode::Sum,
        PoolModeArg::Mean => PoolMode::Mean,
    };
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(dirs.len());
    let mut graph_labels = Vec::with_capacity(dirs.len());
    let mut groups = None;
    for (name, dir) in &dirs {
        let label = *labels
            .get(name)
            .ok_or_else(|| Error::Invalid(format!("graph_labels.csv has no entry for {name:?}")))?;
        let result = (|| {
            let g = load_graph(dir)?;
            let ops = build_operators(&g);
            let (fm, _) = featurize(dir, &g, &ops, &recipe)?;
            let all: Vec<usize> = (0..fm.num_rows()).collect();
            Ok((pool_graph(&fm, &all, mode)?, fm.column_groups))
        })();
        let (row, cg) = result.inspect_err(|_| eprintln!("while pooling bundle {}", dir.display()))?;
        match &groups {
            None => groups = Some(cg),
            Some(first) if *first != cg => {
                return Err(Error::Invalid(format!(
                    "bundle {name} yields columns {cg:?}, expected {first:?}"
                )))
            }
            Some(_) => {}
        }
        rows.push(row);
        graph_labels.push(label);
    }
    let f = rows[0].len();
    let data = nalgebra::DMatrix::from_fn(rows.len(), f, |r, c| rows[r][c]);
    let num_classes = graph_labels.iter().max().map(|&m| m as usize + 1);
    let pooled = Graph::from_edges(rows.len(), std::iter::empty())?
        .0
        .with_num_classes(num_classes)
        .with_attributes(data)?
        .with_labels(graph_labels)?;
    save_graph(&pooled, &a.out)?;
    let names: Vec<&String> = dirs.iter().map(|(n, _)| n).collect();
    write_json(
        &a.out.join("pool.json"),
        &json!({"graphs": names, "mode": mode, "column_groups": groups}),
    )?;
    log_line(json!({"event": "pool", "graphs": rows.len(), "features": f, "out": a.out}));
    Ok(())
}
