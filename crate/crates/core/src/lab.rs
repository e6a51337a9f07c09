//! Experiment plumbing: π-digit key streams, figure data, convergence
//! reports, experiment configs and the on-disk report bundle.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::chain::{simulate_replicate, ChainKind, ChainSpec, ChainState, RelabeledGraph, SimulateOptions};
use crate::error::{capability, domain, Error, Result};
use crate::graph::{sampling_density, Graph, EMBEDDING_GUARD};
use crate::martin::er_limit_value;
use crate::rng::{open01, stream};
use crate::silhouette::{
    boundary_function, harmonic, silhouette_mass, BinaryTree, End, LabeledTree, SmoothedSilhouette, Word,
};

const PI_DECIMALS: &str = include_str!("../data/pi_decimals.txt");

/// Largest number of keys per π stream.
pub const PI_STREAM_CAP: usize = 10_000;

/// Largest end-grid depth for figure data.
pub const GRID_DEPTH_CAP: usize = 16;

/// Blocks of ten decimals of π - 3: the left stream takes blocks 0, 2, 4, ...,
/// the right stream blocks 1, 3, 5, ....
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PiStream {
    Left,
    Right,
}

fn pi_blocks() -> &'static [u64] {
    static BLOCKS: OnceLock<Vec<u64>> = OnceLock::new();
    BLOCKS.get_or_init(|| {
        let digits: Vec<u8> = PI_DECIMALS.bytes().filter(u8::is_ascii_digit).map(|b| b - b'0').collect();
        digits
            .chunks_exact(10)
            .map(|c| c.iter().fold(0u64, |acc, &d| acc * 10 + u64::from(d)))
            .collect()
    })
}

/// The first `count` keys of a π stream, each a ten-digit decimal in (0, 1).
pub fn pi_stream(which: PiStream, count: usize) -> Result<Vec<f64>> {
    if count > PI_STREAM_CAP {
        return capability(format!("{count} keys requested; the digit table supports {PI_STREAM_CAP} per stream"));
    }
    let offset = match which {
        PiStream::Left => 0,
        PiStream::Right => 1,
    };
    let blocks: Vec<u64> = pi_blocks().iter().skip(offset).step_by(2).take(count).copied().collect();
    if blocks.len() < count {
        return capability("digit table exhausted");
    }
    let mut sorted = blocks.clone();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) || sorted.first() == Some(&0) {
        return domain("π stream keys are not distinct and positive");
    }
    Ok(blocks.into_iter().map(|b| b as f64 / 1e10).collect())
}

/// One cell of a report table.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Missing,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => v.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => json!(v),
            Cell::Float(v) => json!(v),
            Cell::Text(s) => json!(s),
            Cell::Missing => Value::Null,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::Float(v) => Some(*v),
            _ => None,
        }
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<Option<usize>> for Cell {
    fn from(v: Option<usize>) -> Self {
        v.map_or(Cell::Missing, Cell::from)
    }
}

/// Rows under named columns. Floats print in shortest round-trip form.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for row in &self.rows {
            let obj: Map<String, Value> = self.columns.iter().cloned().zip(row.iter().map(Cell::json)).collect();
            let _ = writeln!(s, "{}", Value::Object(obj));
        }
        s
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Jsonl => self.to_jsonl(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Jsonl,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Jsonl => "jsonl",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "jsonl" | "json" => Ok(OutputFormat::Jsonl),
            other => domain(format!("unknown format `{other}` (csv or jsonl)")),
        }
    }
}

fn check_depth(depth: usize) -> Result<()> {
    if depth > GRID_DEPTH_CAP {
        return domain(format!("grid depth {depth} above {GRID_DEPTH_CAP}"));
    }
    Ok(())
}

fn sorted_checkpoints(n_list: &[usize]) -> Result<Vec<usize>> {
    let mut ns = n_list.to_vec();
    ns.sort_unstable();
    ns.dedup();
    if ns.is_empty() || ns[0] == 0 {
        return domain("checkpoints must be a non-empty list of positive times");
    }
    Ok(ns)
}

/// `B_{X_n}` over the depth-`depth` end grid `beta = i / 2^depth` for each
/// `n` in `n_list`, all read off one BST trajectory on stream `(seed, 0)`.
/// Columns `n, beta, B_value`.
pub fn figure1_data(n_list: &[usize], seed: u64, depth: usize) -> Result<Table> {
    check_depth(depth)?;
    let ns = sorted_checkpoints(n_list)?;
    let grid: Vec<End> = (0..1u64 << depth).map(|i| End::grid(depth, i)).collect();
    let mut rng = stream(seed, 0);
    let mut tree = BinaryTree::root_only();
    let mut table = Table::new(&["n", "beta", "B_value"]);
    for &n in &ns {
        while tree.len() < n {
            tree.grow(&mut rng);
        }
        for u in &grid {
            table.push(vec![n.into(), u.beta().into(), boundary_function(&tree, u).into()]);
        }
    }
    Ok(table)
}

/// Where the BST keys of [`figure2_data`] come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KeySource {
    Pi(PiStream),
    /// Uniform keys from stream `(seed, 0)`.
    Seed(u64),
}

impl FromStr for KeySource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "pi-left" => Ok(KeySource::Pi(PiStream::Left)),
            "pi-right" => Ok(KeySource::Pi(PiStream::Right)),
            other => match other.strip_prefix("seed:").unwrap_or(other).parse::<u64>() {
                Ok(seed) => Ok(KeySource::Seed(seed)),
                Err(_) => domain(format!("key source `{other}` is not pi-left, pi-right or seed:N")),
            },
        }
    }
}

impl std::fmt::Display for KeySource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KeySource::Pi(PiStream::Left) => f.write_str("pi-left"),
            KeySource::Pi(PiStream::Right) => f.write_str("pi-right"),
            KeySource::Seed(s) => write!(f, "seed:{s}"),
        }
    }
}

/// The first `count` keys of `source`.
pub fn keys(source: KeySource, count: usize) -> Result<Vec<f64>> {
    match source {
        KeySource::Pi(which) => pi_stream(which, count),
        KeySource::Seed(seed) => {
            let mut rng = stream(seed, 0);
            Ok((0..count).map(|_| open01(&mut rng)).collect())
        }
    }
}

/// Smoothed silhouette curves plus the left-subtree fraction at each `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Figure2 {
    /// Columns `n, beta, Y_value`.
    pub table: Table,
    /// `(n, #x(0) / n)`.
    pub left_fraction: Vec<(usize, f64)>,
    /// The keys inserted, in order.
    pub keys: Vec<f64>,
}

/// `Y_n` over the grid `beta = i / 2^depth`, `i = 0, ..., 2^depth` (the last
/// point is the all-ones end), for BSTs built by inserting the keys of
/// `source` in order.
pub fn figure2_data(n_list: &[usize], source: KeySource, depth: usize) -> Result<Figure2> {
    check_depth(depth)?;
    let ns = sorted_checkpoints(n_list)?;
    let keys = keys(source, *ns.last().unwrap())?;
    let mut grid: Vec<End> = (0..1u64 << depth).map(|i| End::grid(depth, i)).collect();
    grid.push(End::ones());
    let mut tree = LabeledTree::new(keys[0])?;
    let mut table = Table::new(&["n", "beta", "Y_value"]);
    let mut left_fraction = Vec::new();
    for &n in &ns {
        while tree.len() < n {
            tree.insert(keys[tree.len()])?;
        }
        let y = SmoothedSilhouette::new(tree.shape());
        for u in &grid {
            table.push(vec![n.into(), u.beta().into(), y.eval(u).into()]);
        }
        left_fraction.push((n, left_subtree_fraction(tree.shape())));
    }
    Ok(Figure2 { table, left_fraction, keys })
}

/// `#x(0) / #x`.
pub fn left_subtree_fraction(x: &BinaryTree) -> f64 {
    x.subtree_size(&Word::from_bits([false])) as f64 / x.len() as f64
}

/// `sup_u |Y_{2n}(u) - Y_n(u)|` over the depth-`depth` grid (plus the
/// all-ones end) for each `n`, along one BST run on stream `(seed, 0)`.
pub fn y_cauchy_gaps(seed: u64, ns: &[usize], depth: usize) -> Result<Vec<f64>> {
    check_depth(depth)?;
    let ns = sorted_checkpoints(ns)?;
    let mut grid: Vec<End> = (0..1u64 << depth).map(|i| End::grid(depth, i)).collect();
    grid.push(End::ones());
    let mut times: Vec<usize> = ns.iter().flat_map(|&n| [n, 2 * n]).collect();
    times.sort_unstable();
    times.dedup();
    let mut rng = stream(seed, 0);
    let mut tree = BinaryTree::root_only();
    let mut curves: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for &t in &times {
        while tree.len() < t {
            tree.grow(&mut rng);
        }
        let y = SmoothedSilhouette::new(&tree);
        curves.insert(t, grid.iter().map(|u| y.eval(u)).collect());
    }
    Ok(ns
        .iter()
        .map(|n| {
            curves[n]
                .iter()
                .zip(&curves[&(2 * n)])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .collect())
}

/// How [`edge_freeze_report`] obtains entry times.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FreezeMode {
    /// Simulates only the pairs of the window. Pairs evolve independently
    /// under uniform attachment, so this is the exact law of the window
    /// marginal: pair `{i, j}` enters at step `n >= j` with probability `1/n`.
    Window,
    /// Runs the whole chain and reads entry times off the trajectory.
    FullChain,
}

/// Entry times of every pair inside `[window]` for `seeds` uniform attachment
/// runs to `horizon`; replicate `r` uses stream `(master_seed, r)`. Columns
/// `seed, stream, i, j, entry_time, terminal`, where `entry_time` is empty
/// and `terminal` is 0 for pairs still absent at the horizon.
pub fn edge_freeze_report(window: usize, horizon: usize, seeds: u64, master_seed: u64, mode: FreezeMode) -> Result<Table> {
    if !(2..=6).contains(&window) {
        return domain(format!("window {window} outside 2..=6"));
    }
    if horizon < window {
        return domain(format!("horizon {horizon} shorter than window {window}"));
    }
    let pairs: Vec<(usize, usize)> = (2..=window).flat_map(|j| (1..j).map(move |i| (i, j))).collect();
    let per_seed: Vec<Vec<Option<usize>>> = (0..seeds)
        .into_par_iter()
        .map(|r| -> Result<Vec<Option<usize>>> {
            match mode {
                FreezeMode::Window => {
                    let mut rng = stream(master_seed, r);
                    Ok(pairs
                        .iter()
                        .map(|&(_, j)| (j..=horizon).find(|&n| rng.random_range(0..n) == 0))
                        .collect())
                }
                FreezeMode::FullChain => {
                    let spec = ChainSpec::uniform_attachment();
                    let tr = simulate_replicate(&spec, horizon, master_seed, r, &SimulateOptions::default())?;
                    pairs.iter().map(|&(i, j)| crate::chain::entry_time(&tr, i, j)).collect()
                }
            }
        })
        .collect::<Result<_>>()?;
    let mut table = Table::new(&["seed", "stream", "i", "j", "entry_time", "terminal"]);
    for (r, times) in per_seed.iter().enumerate() {
        for (&(i, j), &t) in pairs.iter().zip(times) {
            table.push(vec![
                master_seed.into(),
                r.into(),
                i.into(),
                j.into(),
                t.into(),
                usize::from(t.is_some()).into(),
            ]);
        }
    }
    Ok(table)
}

/// Named small patterns: `K1`, `K2`, `K3`, `P3` (path 1-2-3), `E2` (two
/// isolated vertices), or `n:i-j,i-j,...`.
pub fn parse_pattern(s: &str) -> Result<Graph> {
    let s = s.trim();
    let g = match s {
        "K1" | "point" => Graph::point(),
        "K2" => Graph::complete(2),
        "K3" => Graph::complete(3),
        "P3" => Graph::from_edges(3, [(1, 2), (2, 3)])?,
        "E2" => Graph::empty(2),
        _ => {
            let (n, edges) = s.split_once(':').unwrap_or((s, ""));
            let n: usize = n.parse().map_err(|_| Error::Domain(format!("bad pattern `{s}`")))?;
            let mut pairs = Vec::new();
            for e in edges.split(',').filter(|e| !e.is_empty()) {
                let (a, b) = e.split_once('-').ok_or_else(|| Error::Domain(format!("bad pair `{e}`")))?;
                let a: usize = a.parse().map_err(|_| Error::Domain(format!("bad pair `{e}`")))?;
                let b: usize = b.parse().map_err(|_| Error::Domain(format!("bad pair `{e}`")))?;
                pairs.push((a.min(b), a.max(b)));
            }
            Graph::from_edges(n, pairs)?
        }
    };
    if g.n() == 0 || g.n() > EMBEDDING_GUARD {
        return capability(format!("pattern `{s}` outside 1..={EMBEDDING_GUARD} vertices"));
    }
    Ok(g)
}

/// `rho(H, X_n)` along `replicates` relabeled ER runs (stream
/// `(master_seed, r)`), averaged per checkpoint. Columns
/// `H_id, n, mean_rho, stderr, limit`; `limit` is the ER limit value of `H`.
pub fn rho_convergence_report(
    theta: f64,
    patterns: &[(String, Graph)],
    checkpoints: &[usize],
    replicates: u64,
    master_seed: u64,
    parallel: bool,
) -> Result<Table> {
    let spec = ChainSpec::er_relabel(theta)?;
    let theta = spec.theta().unwrap();
    let ns = sorted_checkpoints(checkpoints)?;
    if replicates == 0 {
        return domain("replicates must be at least 1");
    }
    for (id, h) in patterns {
        if h.n() > EMBEDDING_GUARD {
            return capability(format!("pattern {id} exceeds the embedding guard"));
        }
    }
    let run = |r: u64| -> Result<Vec<Vec<f64>>> {
        let mut rng = stream(master_seed, r);
        let mut x = RelabeledGraph::start();
        let mut out = Vec::with_capacity(ns.len());
        for &n in &ns {
            while x.n() < n {
                x.step(theta, &mut rng);
            }
            // rho is invariant under relabeling the host graph
            let g = x.unlabeled();
            out.push(
                patterns
                    .iter()
                    .map(|(_, h)| if h.n() > g.n() { Ok(0.0) } else { sampling_density(h, g) })
                    .collect::<Result<_>>()?,
            );
        }
        Ok(out)
    };
    let per_rep: Vec<Vec<Vec<f64>>> = if parallel {
        (0..replicates).into_par_iter().map(run).collect::<Result<_>>()?
    } else {
        (0..replicates).map(run).collect::<Result<_>>()?
    };
    let mut table = Table::new(&["H_id", "n", "mean_rho", "stderr", "limit"]);
    for (pi, (id, h)) in patterns.iter().enumerate() {
        let limit = er_limit_value(h, theta)?;
        for (ci, &n) in ns.iter().enumerate() {
            let vals: Vec<f64> = per_rep.iter().map(|r| r[ci][pi]).collect();
            let (mean, se) = mean_and_stderr(&vals);
            table.push(vec![id.as_str().into(), n.into(), mean.into(), se.into(), limit.into()]);
        }
    }
    Ok(table)
}

/// Sample mean and its standard error.
pub fn mean_and_stderr(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    if vals.len() < 2 {
        return (mean, 0.0);
    }
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Reports [`run_experiment`] can write.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ReportKind {
    Trajectory,
    Summary,
    Figure1,
    Figure2,
    EdgeFreeze,
    Rho,
}

impl ReportKind {
    pub const ALL: [ReportKind; 6] = [
        ReportKind::Trajectory,
        ReportKind::Summary,
        ReportKind::Figure1,
        ReportKind::Figure2,
        ReportKind::EdgeFreeze,
        ReportKind::Rho,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReportKind::Trajectory => "trajectory",
            ReportKind::Summary => "summary",
            ReportKind::Figure1 => "figure1",
            ReportKind::Figure2 => "figure2",
            ReportKind::EdgeFreeze => "edge-freeze",
            ReportKind::Rho => "rho",
        }
    }
}

impl FromStr for ReportKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        ReportKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown report `{s}`")))
    }
}

/// A validated experiment description.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub chain: ChainSpec,
    pub horizon: usize,
    pub replicates: u64,
    pub master_seed: u64,
    pub outputs: Vec<ReportKind>,
    pub format: OutputFormat,
    /// End-grid depth for the figure reports.
    pub depth: usize,
    /// Run replicates on the thread pool; results do not depend on it.
    pub parallel: bool,
    /// Pair window of the edge-freeze report.
    pub window: usize,
    /// Times at which the figure and rho reports are read; defaults to the horizon.
    pub checkpoints: Vec<usize>,
    /// Patterns for the rho report.
    pub patterns: Vec<String>,
    /// Keys for the figure2 report.
    pub source: KeySource,
}

/// Keys accepted by [`ExperimentConfig::from_pairs`].
pub const CONFIG_KEYS: [&str; 14] = [
    "chain",
    "theta",
    "horizon",
    "replicates",
    "seed",
    "outputs",
    "format",
    "depth",
    "parallel",
    "window",
    "checkpoints",
    "patterns",
    "source",
    "out",
];

/// Raw `key -> value` pairs from a config file: JSON object or `key=value`
/// lines (`#` comments). JSON arrays become comma-separated lists.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    if text.trim_start().starts_with('{') {
        let v: Value = serde_json::from_str(text)?;
        let obj = v.as_object().ok_or_else(|| Error::Validation(vec!["config must be an object".into()]))?;
        for (k, v) in obj {
            let s = match v {
                Value::String(s) => s.clone(),
                Value::Array(items) => items
                    .iter()
                    .map(|i| i.as_str().map_or_else(|| i.to_string(), str::to_string))
                    .collect::<Vec<_>>()
                    .join(","),
                other => other.to_string(),
            };
            out.insert(k.clone(), s);
        }
    } else {
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: k + 1,
                msg: format!("expected key=value, got `{line}`"),
            })?;
            out.insert(key.trim().to_string(), value.trim().to_string());
        }
    }
    Ok(out)
}

fn list<T: FromStr>(s: &str) -> std::result::Result<Vec<T>, ()> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(|x| x.parse().map_err(|_| ())).collect()
}

impl ExperimentConfig {
    /// Builds and validates a config; every violation is listed. The `out`
    /// key is accepted and ignored (it belongs to the caller).
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        let mut errs = Vec::new();
        for k in pairs.keys() {
            if !CONFIG_KEYS.contains(&k.as_str()) {
                errs.push(format!("unknown key `{k}`"));
            }
        }
        let get = |k: &str| pairs.get(k).map(String::as_str);
        let num = |k: &str, default: Option<u64>, errs: &mut Vec<String>| -> u64 {
            match get(k) {
                None => default.unwrap_or_else(|| {
                    errs.push(format!("`{k}` is required"));
                    0
                }),
                Some(v) => v.parse().unwrap_or_else(|_| {
                    errs.push(format!("`{k}` must be a nonnegative integer, got `{v}`"));
                    0
                }),
            }
        };
        let horizon = num("horizon", None, &mut errs) as usize;
        let replicates = num("replicates", Some(1), &mut errs);
        let master_seed = num("seed", Some(0), &mut errs);
        let depth = num("depth", Some(10), &mut errs) as usize;
        let window = num("window", Some(3), &mut errs) as usize;
        let theta = match get("theta").map(str::parse::<f64>) {
            None => None,
            Some(Ok(t)) => Some(t),
            Some(Err(_)) => {
                errs.push("`theta` must be a number".into());
                None
            }
        };
        let chain = match get("chain").map(str::parse::<ChainKind>) {
            None => {
                errs.push("`chain` is required".into());
                None
            }
            Some(Err(e)) => {
                errs.push(e.to_string());
                None
            }
            Some(Ok(kind)) => ChainSpec::new(kind, theta).map_err(|e| errs.push(e.to_string())).ok(),
        };
        let outputs: Vec<ReportKind> = match get("outputs").map(list::<ReportKind>) {
            None => vec![ReportKind::Summary],
            Some(Ok(v)) if !v.is_empty() => v,
            _ => {
                errs.push("`outputs` must list reports from trajectory, summary, figure1, figure2, edge-freeze, rho".into());
                Vec::new()
            }
        };
        let format = get("format").map_or(Ok(OutputFormat::Csv), str::parse).unwrap_or_else(|e: Error| {
            errs.push(e.to_string());
            OutputFormat::Csv
        });
        let parallel = match get("parallel") {
            None | Some("true") | Some("1") => true,
            Some("false") | Some("0") => false,
            Some(v) => {
                errs.push(format!("`parallel` must be true or false, got `{v}`"));
                true
            }
        };
        let checkpoints = match get("checkpoints").map(list::<usize>) {
            None => vec![horizon],
            Some(Ok(v)) if !v.is_empty() => v,
            _ => {
                errs.push("`checkpoints` must be a comma-separated list of times".into());
                Vec::new()
            }
        };
        let patterns: Vec<String> = get("patterns").map_or_else(
            || vec!["K1".into(), "K2".into(), "K3".into()],
            |s| s.split(';').flat_map(|p| p.split(' ')).map(str::trim).filter(|p| !p.is_empty()).map(String::from).collect(),
        );
        let source = get("source").map_or(Ok(KeySource::Seed(master_seed)), str::parse).unwrap_or_else(|e: Error| {
            errs.push(e.to_string());
            KeySource::Seed(master_seed)
        });

        if horizon == 0 {
            errs.push("`horizon` must be at least 1".into());
        }
        if replicates == 0 {
            errs.push("`replicates` must be at least 1".into());
        }
        if depth > GRID_DEPTH_CAP {
            errs.push(format!("`depth` must be at most {GRID_DEPTH_CAP}"));
        }
        if horizon > 0 && checkpoints.iter().any(|&c| c == 0 || c > horizon) {
            errs.push("every checkpoint must lie in 1..=horizon".into());
        }
        for p in &patterns {
            if let Err(e) = parse_pattern(p) {
                errs.push(e.to_string());
            }
        }
        if let Some(spec) = chain {
            for out in &outputs {
                let needs = match out {
                    ReportKind::Figure1 | ReportKind::Figure2 => Some(ChainKind::Bst),
                    ReportKind::EdgeFreeze => Some(ChainKind::UniformAttachment),
                    ReportKind::Rho => Some(ChainKind::ErRelabel),
                    _ => None,
                };
                if let Some(kind) = needs {
                    if spec.kind() != kind {
                        errs.push(format!("report `{}` needs chain {kind}", out.name()));
                    }
                }
            }
        }
        if outputs.contains(&ReportKind::EdgeFreeze) && !(2..=6).contains(&window) {
            errs.push("`window` must lie in 2..=6".into());
        }
        if outputs.contains(&ReportKind::EdgeFreeze) && horizon < window {
            errs.push("`horizon` must be at least `window`".into());
        }
        if outputs.contains(&ReportKind::Figure2) {
            if let KeySource::Pi(_) = source {
                if horizon > PI_STREAM_CAP {
                    errs.push(format!("π streams hold {PI_STREAM_CAP} keys"));
                }
            }
        }
        if !errs.is_empty() {
            return Err(Error::Validation(errs));
        }
        let mut outputs = outputs;
        outputs.sort();
        outputs.dedup();
        Ok(ExperimentConfig {
            chain: chain.unwrap(),
            horizon,
            replicates,
            master_seed,
            outputs,
            format,
            depth,
            parallel,
            window,
            checkpoints,
            patterns,
            source,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_pairs(&parse_config_text(text)?)
    }

    /// Every field, as written to the manifest.
    pub fn to_json(&self) -> Value {
        json!({
            "chain": self.chain.kind().name(),
            "theta": self.chain.theta().map(|t| t.get()),
            "horizon": self.horizon,
            "replicates": self.replicates,
            "seed": self.master_seed,
            "outputs": self.outputs.iter().map(|o| o.name()).collect::<Vec<_>>(),
            "format": self.format.extension(),
            "depth": self.depth,
            "parallel": self.parallel,
            "window": self.window,
            "checkpoints": self.checkpoints,
            "patterns": self.patterns,
            "source": self.source.to_string(),
        })
    }
}

/// Closed-form expectation of the summary statistic at time `n`, with the
/// name of its source.
fn summary_expectation(spec: &ChainSpec, n: usize) -> (f64, &'static str) {
    let nf = n as f64;
    match spec.kind() {
        ChainKind::Polya => (0.5, "symmetry of the urn: E proportion = 1/2"),
        ChainKind::Records => (harmonic(n as u64), "records mean H(n)"),
        ChainKind::UniformAttachment => (
            (2..=n).map(|j| (j - 1) as f64 * (1.0 - (j - 1) as f64 / nf)).sum(),
            "sum over pairs of P(edge in X_n) = 1 - (j-1)/n",
        ),
        ChainKind::ErMemory | ChainKind::ErRelabel => {
            (spec.theta().unwrap().get() * nf * (nf - 1.0) / 2.0, "theta * C(n, 2)")
        }
        ChainKind::Bst => (harmonic(n as u64), "martingale L_n - H(n) started at 0: E L_n = H(n)"),
    }
}

fn summary_statistic(state: &ChainState) -> (&'static str, f64) {
    match state {
        ChainState::Urn(s) => ("red_proportion", s.red_proportion()),
        ChainState::Records(s) => ("record_count", s.k() as f64),
        ChainState::Graph(g) => ("edge_count", g.edge_count() as f64),
        ChainState::Tree(t) => ("silhouette_mass", silhouette_mass(t)),
    }
}

/// Written reports and the manifest of one [`run_experiment`] call.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub files: Vec<String>,
    pub json: Value,
}

fn map_par<T: Send, F>(parallel: bool, replicates: u64, f: F) -> Result<Vec<T>>
where
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    if parallel {
        (0..replicates).into_par_iter().map(f).collect()
    } else {
        (0..replicates).map(f).collect()
    }
}

/// Computes every requested report in memory, keyed by file name.
pub fn experiment_reports(cfg: &ExperimentConfig) -> Result<(BTreeMap<String, String>, BTreeMap<String, String>)> {
    let mut files = BTreeMap::new();
    let mut oracles = BTreeMap::new();
    let ext = cfg.format.extension();
    let opts = SimulateOptions::default();
    for out in &cfg.outputs {
        match out {
            ReportKind::Trajectory => {
                let runs = map_par(cfg.parallel, cfg.replicates, |r| {
                    Ok(simulate_replicate(&cfg.chain, cfg.horizon, cfg.master_seed, r, &opts)?.to_jsonl())
                })?;
                files.insert("trajectory.jsonl".to_string(), runs.concat());
            }
            ReportKind::Summary => {
                let finals = map_par(cfg.parallel, cfg.replicates, |r| {
                    Ok(summary_statistic(simulate_replicate(&cfg.chain, cfg.horizon, cfg.master_seed, r, &opts)?.last()))
                })?;
                let (expected, oracle) = summary_expectation(&cfg.chain, cfg.horizon);
                let mut t = Table::new(&["replicate", "n", "statistic", "value", "expected"]);
                for (r, (name, v)) in finals.into_iter().enumerate() {
                    t.push(vec![r.into(), cfg.horizon.into(), name.into(), v.into(), expected.into()]);
                }
                oracles.insert(format!("summary.{ext}:expected"), oracle.to_string());
                files.insert(format!("summary.{ext}"), t.render(cfg.format));
            }
            ReportKind::Figure1 => {
                let t = figure1_data(&cfg.checkpoints, cfg.master_seed, cfg.depth)?;
                files.insert(format!("figure1.{ext}"), t.render(cfg.format));
            }
            ReportKind::Figure2 => {
                let f = figure2_data(&cfg.checkpoints, cfg.source, cfg.depth)?;
                files.insert(format!("figure2.{ext}"), f.table.render(cfg.format));
            }
            ReportKind::EdgeFreeze => {
                let t = edge_freeze_report(cfg.window, cfg.horizon, cfg.replicates, cfg.master_seed, FreezeMode::Window)?;
                files.insert(format!("edge-freeze.{ext}"), t.render(cfg.format));
            }
            ReportKind::Rho => {
                let patterns: Vec<(String, Graph)> =
                    cfg.patterns.iter().map(|p| Ok((p.clone(), parse_pattern(p)?))).collect::<Result<_>>()?;
                let theta = cfg.chain.theta().unwrap().get();
                let t = rho_convergence_report(theta, &patterns, &cfg.checkpoints, cfg.replicates, cfg.master_seed, cfg.parallel)?;
                oracles.insert(
                    format!("rho.{ext}:limit"),
                    "er_limit_value: theta^e(H) (1 - theta)^(C(v(H), 2) - e(H))".to_string(),
                );
                files.insert(format!("rho.{ext}"), t.render(cfg.format));
            }
        }
    }
    Ok((files, oracles))
}

/// Writes the requested reports and `manifest.json` into `out_dir`.
/// Reports are byte-identical across reruns of the same config; only the
/// manifest's `wall_time_seconds` varies.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Manifest> {
    let started = Instant::now();
    let (files, oracles) = experiment_reports(cfg)?;
    std::fs::create_dir_all(out_dir)?;
    for (name, body) in &files {
        std::fs::write(out_dir.join(name), body)?;
    }
    let json = json!({
        "config": cfg.to_json(),
        "seeds": {
            "master": cfg.master_seed,
            "streams": format!("0..{}", cfg.replicates),
            "generator": "ChaCha8, key from seed_from_u64(master), stream id = replicate",
        },
        "version": env!("CARGO_PKG_VERSION"),
        "wall_time_seconds": started.elapsed().as_secs_f64(),
        "reports": files.keys().collect::<Vec<_>>(),
        "oracles": oracles,
    });
    std::fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&json)? + "\n")?;
    Ok(Manifest {
        files: files.into_keys().collect(),
        json,
    })
}
