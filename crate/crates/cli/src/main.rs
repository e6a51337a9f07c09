//! `persist`: simulate the chains, evaluate kernels, run conditioned chains,
//! emit silhouette curves and run experiment bundles.
//!
//! Every flag may also come from `--config FILE` (JSON object or `key=value`
//! lines) under the flag's long name with dashes; flags given on the command
//! line win.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num::ToPrimitive;
use persist_core::chain::{simulate_replicate, RecordsState, SimulateOptions};
use persist_core::lab::{self, keys, parse_config_text, KeySource, Table};
use persist_core::martin::{
    er_kernel, exact_conditional_oracle, pm_kernel, records_kernel_ratio, ua_extended_kernel, ua_kernel,
    ORACLE_GRAPH_CAP, ORACLE_OTHER_CAP,
};
use persist_core::silhouette::{boundary_function, SmoothedSilhouette};
use persist_core::transforms::{simulate_conditioned, ConditionedChain};
use persist_core::{
    AdjacencyLimit, BinaryTree, ChainKind, ChainSpec, ChainState, End, Error, ExperimentConfig, Graph, LabeledTree,
    OutputFormat, Result,
};

#[derive(Parser, Debug)]
#[command(name = "persist", version, about = "Growing Markov chains: simulation, kernels, conditioned runs, silhouettes")]
struct Cli {
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (directory for `experiment`); stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Table format.
    #[arg(long, global = true)]
    format: Option<String>,
    /// Config file supplying defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one chain and print its trajectory as JSONL.
    Simulate(SimulateArgs),
    /// Evaluate a Martin kernel between two states.
    Kernel(KernelArgs),
    /// Run the uniform attachment chain conditioned on a boundary point.
    Transform(TransformArgs),
    /// Emit the boundary function or smoothed silhouette of a tree over an end grid.
    Silhouette(SilhouetteArgs),
    /// Write a report bundle with a manifest.
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    chain: Option<String>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    horizon: Option<u64>,
    /// Replicate index; selects the random stream.
    #[arg(long)]
    replicate: Option<u64>,
}

#[derive(Args, Debug)]
struct KernelArgs {
    #[arg(long)]
    chain: Option<String>,
    #[arg(long)]
    theta: Option<f64>,
    /// Earlier state: graph file, or "n k" for records.
    #[arg(long)]
    from: Option<PathBuf>,
    /// Later state, same format.
    #[arg(long)]
    to: Option<PathBuf>,
    /// Boundary point file; evaluates the extended uniform attachment kernel instead of `--to`.
    #[arg(long)]
    limit: Option<PathBuf>,
    /// Also report the brute-force enumeration value when the states are small.
    #[arg(long)]
    oracle: Option<bool>,
}

#[derive(Args, Debug)]
struct TransformArgs {
    /// Boundary point file ("i j b" lines).
    #[arg(long)]
    target_file: Option<PathBuf>,
    /// Condition on this vertex being isolated forever.
    #[arg(long)]
    isolate: Option<usize>,
    /// Window of the isolating boundary point; defaults to the horizon.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    horizon: Option<u64>,
}

#[derive(Args, Debug)]
struct SilhouetteArgs {
    /// Tree file, one word per line ("-" for the root).
    #[arg(long)]
    tree: Option<PathBuf>,
    /// Grow a tree of this size (default 100) instead of reading one.
    #[arg(long)]
    size: Option<u64>,
    /// Keys for a grown tree: pi-left, pi-right or seed:N (default: seed:<--seed>).
    #[arg(long)]
    keys: Option<String>,
    /// boundary or smoothed.
    #[arg(long)]
    curve: Option<String>,
    /// End grid of 2^depth points.
    #[arg(long)]
    depth: Option<u64>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(long)]
    chain: Option<String>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    replicates: Option<u64>,
    /// Comma-separated: trajectory, summary, figure1, figure2, edge-freeze, rho.
    #[arg(long)]
    outputs: Option<String>,
    #[arg(long)]
    depth: Option<u64>,
    #[arg(long)]
    parallel: Option<bool>,
    #[arg(long)]
    window: Option<u64>,
    /// Comma-separated times.
    #[arg(long)]
    checkpoints: Option<String>,
    /// Semicolon-separated patterns (K1, K2, K3, P3, E2 or n:i-j,...).
    #[arg(long)]
    patterns: Option<String>,
    /// Figure 2 keys: pi-left, pi-right or seed:N.
    #[arg(long)]
    source: Option<String>,
}

/// Flag values keyed by long name, layered over the config file.
struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    fn load(config: Option<&Path>, allowed: &[&str]) -> Result<Self> {
        let values = match config {
            Some(p) => parse_config_text(&std::fs::read_to_string(p)?)?,
            None => BTreeMap::new(),
        };
        let unknown: Vec<String> = values
            .keys()
            .filter(|k| !allowed.contains(&k.as_str()) && !["seed", "out", "format"].contains(&k.as_str()))
            .map(|k| format!("unknown config key `{k}`"))
            .collect();
        if !unknown.is_empty() {
            return Err(Error::Validation(unknown));
        }
        Ok(Settings { values })
    }

    fn set<T: ToString>(&mut self, key: &str, v: Option<T>) {
        if let Some(v) = v {
            self.values.insert(key.to_string(), v.to_string());
        }
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Validation(vec![format!("`{key}`: cannot parse `{v}`")])),
        }
    }

    fn required<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.parsed(key)?.ok_or_else(|| Error::Validation(vec![format!("`--{key}` is required")]))
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }

    fn spec(&self) -> Result<ChainSpec> {
        let kind: ChainKind = self
            .get("chain")
            .ok_or_else(|| Error::Validation(vec!["`--chain` is required".into()]))?
            .parse()?;
        ChainSpec::new(kind, self.parsed("theta")?)
    }

    fn format(&self) -> Result<OutputFormat> {
        self.get("format").map_or(Ok(OutputFormat::Csv), str::parse)
    }
}

fn emit(out: Option<&Path>, body: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, body)?,
        None => print!("{body}"),
    }
    Ok(())
}

fn global(cli: &Cli, s: &mut Settings) {
    s.set("seed", cli.seed);
    s.set("out", cli.out.as_ref().map(|p| p.display().to_string()));
    s.set("format", cli.format.as_ref());
}

fn read_state(spec: &ChainSpec, path: &Path) -> Result<ChainState> {
    let text = std::fs::read_to_string(path)?;
    match spec.kind() {
        k if k.is_graph() => Ok(ChainState::Graph(Graph::parse(&text)?)),
        ChainKind::Records => {
            let nums: Vec<u64> = text
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| Error::Parse { line: 1, msg: format!("bad number `{t}`") }))
                .collect::<Result<_>>()?;
            match nums[..] {
                [n, k] => Ok(ChainState::Records(RecordsState::new(n, k)?)),
                _ => Err(Error::Parse { line: 1, msg: "expected `n k`".into() }),
            }
        }
        ChainKind::Bst => Ok(ChainState::Tree(BinaryTree::parse(&text)?)),
        ChainKind::Polya => Err(Error::Domain("kernel states for the urn are not read from files".into())),
        _ => unreachable!(),
    }
}

fn run_simulate(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    let mut s = Settings::load(cli.config.as_deref(), &["chain", "theta", "horizon", "replicate"])?;
    s.set("chain", a.chain.as_ref());
    s.set("theta", a.theta);
    s.set("horizon", a.horizon);
    s.set("replicate", a.replicate);
    global(cli, &mut s);
    let spec = s.spec()?;
    let horizon: usize = s.required("horizon")?;
    let seed: u64 = s.parsed("seed")?.unwrap_or(0);
    let replicate: u64 = s.parsed("replicate")?.unwrap_or(0);
    let tr = simulate_replicate(&spec, horizon, seed, replicate, &SimulateOptions::default())?;
    emit(s.path("out").as_deref(), &tr.to_jsonl())
}

fn run_kernel(cli: &Cli, a: &KernelArgs) -> Result<()> {
    let mut s = Settings::load(cli.config.as_deref(), &["chain", "theta", "from", "to", "limit", "oracle"])?;
    s.set("chain", a.chain.as_ref());
    s.set("theta", a.theta);
    s.set("from", a.from.as_ref().map(|p| p.display().to_string()));
    s.set("to", a.to.as_ref().map(|p| p.display().to_string()));
    s.set("limit", a.limit.as_ref().map(|p| p.display().to_string()));
    s.set("oracle", a.oracle);
    global(cli, &mut s);
    let spec = s.spec()?;
    let from_path = s.path("from").ok_or_else(|| Error::Validation(vec!["`--from` is required".into()]))?;
    let x = read_state(&spec, &from_path)?;
    let want_oracle: bool = s.parsed("oracle")?.unwrap_or(false);

    if let Some(limit_path) = s.path("limit") {
        if spec.kind() != ChainKind::UniformAttachment {
            return Err(Error::Domain("boundary points are defined for uniform attachment only".into()));
        }
        let limit = AdjacencyLimit::parse(&std::fs::read_to_string(limit_path)?)?;
        let value = ua_extended_kernel(x.as_graph().unwrap(), &limit)?;
        let out = serde_json::json!({
            "kind": "uniform-attachment-extended",
            "m": x.time(),
            "n": null,
            "value": value,
            "log_value": value.ln(),
            "oracle": null,
        });
        return emit(s.path("out").as_deref(), &format!("{out}\n"));
    }

    let to_path = s.path("to").ok_or_else(|| Error::Validation(vec!["`--to` or `--limit` is required".into()]))?;
    let y = read_state(&spec, &to_path)?;
    let value = match (&x, &y) {
        (ChainState::Graph(gm), ChainState::Graph(gn)) => match spec.kind() {
            ChainKind::UniformAttachment => ua_kernel(gm, gn)?,
            ChainKind::ErRelabel => er_kernel(gm, gn, spec.theta().unwrap())?,
            ChainKind::ErMemory => pm_kernel(gm, gn, spec.theta().unwrap())?,
            _ => unreachable!(),
        },
        (ChainState::Records(p), ChainState::Records(q)) => records_kernel_ratio(p.n(), p.k(), q.n(), q.k())?,
        _ => return Err(Error::Capability(format!("no closed-form kernel for the {} chain", spec.kind()))),
    };
    let cap = if spec.kind().is_graph() { ORACLE_GRAPH_CAP } else { ORACLE_OTHER_CAP };
    let oracle = if want_oracle && y.time() <= cap {
        let cond = exact_conditional_oracle(&spec, &x, &y)?;
        let marg = exact_conditional_oracle(&spec, &spec.start(), &y)?;
        if marg == num::zero() {
            serde_json::Value::Null
        } else {
            serde_json::json!((cond / marg).to_f64())
        }
    } else {
        serde_json::Value::Null
    };
    let out = serde_json::json!({
        "kind": spec.kind().name(),
        "m": x.time(),
        "n": y.time(),
        "value": value,
        "log_value": value.ln(),
        "oracle": oracle,
    });
    emit(s.path("out").as_deref(), &format!("{out}\n"))
}

fn run_transform(cli: &Cli, a: &TransformArgs) -> Result<()> {
    let mut s = Settings::load(cli.config.as_deref(), &["target-file", "isolate", "window", "horizon"])?;
    s.set("target-file", a.target_file.as_ref().map(|p| p.display().to_string()));
    s.set("isolate", a.isolate);
    s.set("window", a.window);
    s.set("horizon", a.horizon);
    global(cli, &mut s);
    let horizon: usize = s.required("horizon")?;
    let seed: u64 = s.parsed("seed")?.unwrap_or(0);
    let chain = match (s.path("target-file"), s.parsed::<usize>("isolate")?) {
        (Some(p), None) => ConditionedChain::new(AdjacencyLimit::parse(&std::fs::read_to_string(p)?)?),
        (None, Some(xi)) => ConditionedChain::isolating(xi, s.parsed("window")?.unwrap_or(horizon))?,
        _ => {
            return Err(Error::Validation(vec![
                "exactly one of `--target-file` and `--isolate` is required".into(),
            ]))
        }
    };
    let run = simulate_conditioned(&chain, horizon, seed)?;
    emit(s.path("out").as_deref(), &run.to_jsonl())
}

fn run_silhouette(cli: &Cli, a: &SilhouetteArgs) -> Result<()> {
    let mut s = Settings::load(cli.config.as_deref(), &["tree", "size", "keys", "curve", "depth"])?;
    s.set("tree", a.tree.as_ref().map(|p| p.display().to_string()));
    s.set("size", a.size);
    s.set("keys", a.keys.as_ref());
    s.set("curve", a.curve.as_ref());
    s.set("depth", a.depth);
    global(cli, &mut s);
    let depth: usize = s.parsed("depth")?.unwrap_or(8);
    if depth > lab::GRID_DEPTH_CAP {
        return Err(Error::Domain(format!("depth above {}", lab::GRID_DEPTH_CAP)));
    }
    let seed: u64 = s.parsed("seed")?.unwrap_or(0);
    let tree = match (s.path("tree"), s.parsed::<usize>("size")?) {
        (Some(p), None) => BinaryTree::parse(&std::fs::read_to_string(p)?)?,
        (None, n) => {
            let n = n.unwrap_or(100);
            if n == 0 {
                return Err(Error::Domain("`--size` must be at least 1".into()));
            }
            let source: KeySource = s.get("keys").map_or(Ok(KeySource::Seed(seed)), str::parse)?;
            LabeledTree::from_keys(&keys(source, n)?)?.shape().clone()
        }
        (Some(_), Some(_)) => return Err(Error::Validation(vec!["`--tree` and `--size` exclude each other".into()])),
    };
    let mut grid: Vec<End> = (0..1u64 << depth).map(|i| End::grid(depth, i)).collect();
    let mut table = Table::new(&["beta", "value"]);
    match s.get("curve").unwrap_or("boundary") {
        "boundary" => {
            for u in &grid {
                table.push(vec![u.beta().into(), boundary_function(&tree, u).into()]);
            }
        }
        "smoothed" => {
            grid.push(End::ones());
            let y = SmoothedSilhouette::new(&tree);
            for u in &grid {
                table.push(vec![u.beta().into(), y.eval(u).into()]);
            }
        }
        other => return Err(Error::Validation(vec![format!("`--curve` must be boundary or smoothed, got `{other}`")])),
    }
    emit(s.path("out").as_deref(), &table.render(s.format()?))
}

fn run_experiment(cli: &Cli, a: &ExperimentArgs) -> Result<()> {
    let mut s = Settings::load(cli.config.as_deref(), &lab::CONFIG_KEYS)?;
    s.set("chain", a.chain.as_ref());
    s.set("theta", a.theta);
    s.set("horizon", a.horizon);
    s.set("replicates", a.replicates);
    s.set("outputs", a.outputs.as_ref());
    s.set("depth", a.depth);
    s.set("parallel", a.parallel);
    s.set("window", a.window);
    s.set("checkpoints", a.checkpoints.as_ref());
    s.set("patterns", a.patterns.as_ref());
    s.set("source", a.source.as_ref());
    global(cli, &mut s);
    let cfg = ExperimentConfig::from_pairs(&s.values)?;
    let out = s.path("out").unwrap_or_else(|| PathBuf::from("persist-out"));
    let manifest = lab::run_experiment(&cfg, &out)?;
    for f in &manifest.files {
        println!("{}", out.join(f).display());
    }
    println!("{}", out.join("manifest.json").display());
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Domain(_) | Error::Parse { .. } | Error::Validation(_) | Error::Json(_) => 2,
        Error::Capability(_) => 3,
        Error::Io(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => run_simulate(&cli, a),
        Command::Kernel(a) => run_kernel(&cli, a),
        Command::Transform(a) => run_transform(&cli, a),
        Command::Silhouette(a) => run_silhouette(&cli, a),
        Command::Experiment(a) => run_experiment(&cli, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("persist: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
