//! Doob h-transforms: the kernel-reweighted one-step law of any chain, and
//! the uniform attachment chain conditioned on a boundary point.

use std::collections::BTreeMap;

use num::{BigRational, One, ToPrimitive, Zero};
use rand::Rng;
use serde_json::Value;

use crate::chain::{exact_step_distribution, ua_grow, ua_step_law, ChainSpec, ChainState, Delta, ExactLaw, Trajectory};
use crate::error::{capability, domain, Result};
use crate::graph::Graph;
use crate::martin::AdjacencyLimit;
use crate::rng::stream;

/// Largest graph size from which [`doob_step_distribution`] enumerates.
pub const DOOB_GRAPH_GUARD: usize = 12;

/// Reweighted law `p(x, y) K(y) / K(x)` with its row sum, which is exactly 1
/// when `K` is harmonic at `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct DoobLaw {
    pub law: ExactLaw,
    pub row_sum: BigRational,
}

/// Floating counterpart of [`DoobLaw`].
#[derive(Clone, Debug, PartialEq)]
pub struct DoobLawF64 {
    pub law: Vec<(ChainState, f64)>,
    pub row_sum: f64,
}

fn check_support(x: &ChainState) -> Result<()> {
    if let Some(g) = x.as_graph() {
        if g.n() > DOOB_GRAPH_GUARD {
            return capability(format!("h-transform enumeration from a graph on [{}] (guard {DOOB_GRAPH_GUARD})", g.n()));
        }
    }
    Ok(())
}

/// One step of the h-transform of `spec` with `h = kernel`.
///
/// The row sum is reported rather than forced to 1; a value other than 1
/// means `kernel` is not harmonic at `x`.
pub fn doob_step_distribution<K>(spec: &ChainSpec, x: &ChainState, kernel: K) -> Result<DoobLaw>
where
    K: Fn(&ChainState) -> Result<BigRational>,
{
    check_support(x)?;
    let hx = kernel(x)?;
    if hx.is_zero() {
        return domain("conditioning on a null history: the kernel vanishes at the current state");
    }
    let mut law = ExactLaw::new();
    let mut row_sum = BigRational::zero();
    for (y, p) in exact_step_distribution(spec, x)? {
        let w = p * kernel(&y)? / &hx;
        if !w.is_zero() {
            row_sum += &w;
            law.insert(y, w);
        }
    }
    Ok(DoobLaw { law, row_sum })
}

pub fn doob_step_distribution_f64<K>(spec: &ChainSpec, x: &ChainState, kernel: K) -> Result<DoobLawF64>
where
    K: Fn(&ChainState) -> Result<f64>,
{
    check_support(x)?;
    let hx = kernel(x)?;
    if hx == 0.0 {
        return domain("conditioning on a null history: the kernel vanishes at the current state");
    }
    let mut law = Vec::new();
    let mut row_sum = 0.0;
    for (y, p) in exact_step_distribution(spec, x)? {
        let w = p.to_f64().unwrap_or(0.0) * kernel(&y)? / hx;
        if w != 0.0 {
            row_sum += w;
            law.push((y, w));
        }
    }
    Ok(DoobLawF64 { law, row_sum })
}

/// `M(i, j) = 0` exactly on the pairs touching `xi`, inside `[window]`.
///
/// Both the pairs `{i, xi}` with `i < xi` and `{xi, j}` with `j > xi` are
/// zero, so `xi` stays isolated for ever.
pub fn isolated_node_limit(xi: usize, window: usize) -> Result<AdjacencyLimit> {
    if xi == 0 {
        return domain("node index must be at least 1");
    }
    let mut m = AdjacencyLimit::all_ones(window)?;
    if xi <= window {
        for v in (1..=window).filter(|&v| v != xi) {
            m.set(v.min(xi), v.max(xi), false)?;
        }
    }
    Ok(m)
}

/// Uniform attachment conditioned to converge to a boundary point.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionedChain {
    target: AdjacencyLimit,
    isolated: Option<usize>,
}

impl ConditionedChain {
    pub fn new(target: AdjacencyLimit) -> Self {
        ConditionedChain { target, isolated: None }
    }

    /// Conditioning on node `xi` never receiving an edge.
    pub fn isolating(xi: usize, window: usize) -> Result<Self> {
        Ok(ConditionedChain {
            target: isolated_node_limit(xi, window)?,
            isolated: Some(xi),
        })
    }

    pub fn base(&self) -> ChainSpec {
        ChainSpec::uniform_attachment()
    }

    pub fn target(&self) -> &AdjacencyLimit {
        &self.target
    }

    pub fn isolated_node(&self) -> Option<usize> {
        self.isolated
    }
}

fn check_conditioned(g: &Graph, target: &AdjacencyLimit) -> Result<()> {
    if g.n() + 1 > target.window() {
        return domain(format!("target window {} does not cover the next time {}", target.window(), g.n() + 1));
    }
    if !target.admits(g)? {
        return domain("graph has an edge where the target is 0");
    }
    Ok(())
}

/// Uniform attachment step in which only pairs with `M = 1` may enter, each
/// with probability `1 / (n + 1)`. With `M = 1` everywhere it consumes the
/// random stream exactly as [`crate::chain::ua_step`] does.
pub fn ua_conditioned_step<R: Rng + ?Sized>(g: &Graph, target: &AdjacencyLimit, rng: &mut R) -> Result<Graph> {
    check_conditioned(g, target)?;
    let mut next = g.clone();
    ua_grow(&mut next, Some(target.zero_pairs()), rng);
    Ok(next)
}

/// Exact one-step law of [`ua_conditioned_step`].
pub fn ua_conditioned_step_law(g: &Graph, target: &AdjacencyLimit) -> Result<ExactLaw> {
    check_conditioned(g, target)?;
    Ok(ua_step_law(g, Some(target.zero_pairs()))?
        .into_iter()
        .map(|(h, p)| (ChainState::Graph(h), p))
        .collect())
}

/// Total variation distance between two exact laws.
pub fn total_variation(a: &ExactLaw, b: &ExactLaw) -> BigRational {
    let mut diff: BTreeMap<&ChainState, BigRational> = BTreeMap::new();
    for (s, p) in a {
        *diff.entry(s).or_insert_with(BigRational::zero) += p;
    }
    for (s, p) in b {
        *diff.entry(s).or_insert_with(BigRational::zero) -= p;
    }
    let total: BigRational = diff.into_values().map(|d| if d < BigRational::zero() { -d } else { d }).sum();
    total / BigRational::from_integer(2.into())
}

/// A conditioned run with the per-step check that no pair with `M = 0`
/// entered.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionedRun {
    pub trajectory: Trajectory,
    /// `forbidden_free[k]` covers the step into time `k + 2`.
    pub forbidden_free: Vec<bool>,
}

impl ConditionedRun {
    pub fn all_clear(&self) -> bool {
        self.forbidden_free.iter().all(|&b| b)
    }

    /// The trajectory lines with a `forbidden_edge_free` field on each step.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (k, line) in self.trajectory.to_jsonl().lines().enumerate() {
            let mut rec: Value = serde_json::from_str(line).expect("own output is JSON");
            let ok = if k == 0 { true } else { self.forbidden_free[k - 1] };
            rec["forbidden_edge_free"] = Value::Bool(ok);
            out.push_str(&rec.to_string());
            out.push('\n');
        }
        out
    }
}

/// Runs the conditioned chain to time `n_final` on stream `(seed, 0)`.
pub fn simulate_conditioned(chain: &ConditionedChain, n_final: usize, seed: u64) -> Result<ConditionedRun> {
    if n_final == 0 {
        return domain("n_final must be at least 1");
    }
    if n_final > chain.target.window() {
        return domain(format!("target window {} is shorter than the horizon {n_final}", chain.target.window()));
    }
    let mut rng = stream(seed, 0);
    let mut g = Graph::point();
    let mut deltas = Vec::with_capacity(n_final - 1);
    let mut checks = Vec::with_capacity(n_final - 1);
    let zeros = chain.target.zero_pairs();
    for _ in 1..n_final {
        let added = ua_grow(&mut g, Some(zeros), &mut rng);
        checks.push(added.iter().all(|&(i, j)| !zeros.has_edge(i, j)));
        deltas.push(Delta::Edges(added));
    }
    Ok(ConditionedRun {
        trajectory: Trajectory::from_parts(chain.base(), seed, deltas, ChainState::Graph(g)),
        forbidden_free: checks,
    })
}

/// The kernel `K(., M)` as an exact closure over chain states.
pub fn extended_kernel_fn(target: &AdjacencyLimit) -> impl Fn(&ChainState) -> Result<BigRational> + '_ {
    move |s| match s.as_graph() {
        Some(g) => crate::martin::ua_extended_kernel_exact(g, target),
        None => domain("the extended kernel is defined on graphs"),
    }
}

/// The constant kernel `h = 1`.
pub fn unit_kernel(_: &ChainState) -> Result<BigRational> {
    Ok(BigRational::one())
}
