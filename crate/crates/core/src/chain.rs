//! The six growing chains, their seeded samplers, exact one-step laws and
//! recorded trajectories.
//!
//! Every chain is graded by time: the state at time `n` is an urn with
//! `red + blue + 1 = n`, a records pair `(n, k)`, a graph on `[n]` or a tree
//! with `n` nodes. Time starts at 1 in the canonical start state.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num::{BigInt, BigRational, One, Zero};
use rand::Rng;
use serde_json::{json, Value};

use crate::error::{capability, domain, parse_err, Error, Result};
use crate::graph::{Graph, Permutation};
use crate::rng::{open01, stream};
use crate::silhouette::{BinaryTree, Word};

/// Largest number of enumerated outcomes for an exact one-step law.
pub const EXACT_OUTCOME_CAP: u64 = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ChainKind {
    Polya,
    Records,
    UniformAttachment,
    ErMemory,
    ErRelabel,
    Bst,
}

impl ChainKind {
    pub const ALL: [ChainKind; 6] = [
        ChainKind::Polya,
        ChainKind::Records,
        ChainKind::UniformAttachment,
        ChainKind::ErMemory,
        ChainKind::ErRelabel,
        ChainKind::Bst,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ChainKind::Polya => "polya",
            ChainKind::Records => "records",
            ChainKind::UniformAttachment => "uniform-attachment",
            ChainKind::ErMemory => "er-memory",
            ChainKind::ErRelabel => "er-relabel",
            ChainKind::Bst => "bst",
        }
    }

    pub fn is_er(self) -> bool {
        matches!(self, ChainKind::ErMemory | ChainKind::ErRelabel)
    }

    pub fn is_graph(self) -> bool {
        matches!(self, ChainKind::UniformAttachment | ChainKind::ErMemory | ChainKind::ErRelabel)
    }
}

impl fmt::Display for ChainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChainKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('_', "-");
        let alias = match s.as_str() {
            "ua" => "uniform-attachment",
            "urn" => "polya",
            other => other,
        };
        ChainKind::ALL
            .into_iter()
            .find(|k| k.name() == alias)
            .ok_or_else(|| Error::Domain(format!("unknown chain kind `{s}`")))
    }
}

/// Edge probability of the Erdős–Rényi chains, in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Theta(f64);

impl Theta {
    pub fn new(value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return domain(format!("theta = {value} outside [0, 1]"));
        }
        Ok(Theta(value))
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// The binary value of `theta` as an exact rational.
    pub fn exact(self) -> BigRational {
        BigRational::from_float(self.0).expect("theta is finite")
    }
}

/// Which chain to run; `theta` is present exactly for the two ER kinds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainSpec {
    kind: ChainKind,
    theta: Option<Theta>,
}

impl ChainSpec {
    pub fn new(kind: ChainKind, theta: Option<f64>) -> Result<Self> {
        let theta = match (kind.is_er(), theta) {
            (true, None) => return domain(format!("{kind} needs theta")),
            (false, Some(_)) => return domain(format!("{kind} takes no theta")),
            (_, t) => t.map(Theta::new).transpose()?,
        };
        if kind == ChainKind::ErRelabel {
            let t = theta.unwrap().get();
            if t <= 0.0 || t >= 1.0 {
                return domain(format!("er-relabel needs 0 < theta < 1, got {t}"));
            }
        }
        Ok(ChainSpec { kind, theta })
    }

    pub fn polya() -> Self {
        ChainSpec { kind: ChainKind::Polya, theta: None }
    }

    pub fn records() -> Self {
        ChainSpec { kind: ChainKind::Records, theta: None }
    }

    pub fn uniform_attachment() -> Self {
        ChainSpec { kind: ChainKind::UniformAttachment, theta: None }
    }

    pub fn bst() -> Self {
        ChainSpec { kind: ChainKind::Bst, theta: None }
    }

    pub fn er_memory(theta: f64) -> Result<Self> {
        Self::new(ChainKind::ErMemory, Some(theta))
    }

    pub fn er_relabel(theta: f64) -> Result<Self> {
        Self::new(ChainKind::ErRelabel, Some(theta))
    }

    pub fn kind(&self) -> ChainKind {
        self.kind
    }

    pub fn theta(&self) -> Option<Theta> {
        self.theta
    }

    /// The canonical start state `e`.
    pub fn start(&self) -> ChainState {
        match self.kind {
            ChainKind::Polya => ChainState::Urn(UrnState::default()),
            ChainKind::Records => ChainState::Records(RecordsState::start()),
            ChainKind::Bst => ChainState::Tree(BinaryTree::root_only()),
            _ => ChainState::Graph(Graph::point()),
        }
    }
}

/// Pólya urn after `red + blue` draws, starting from one ball of each colour.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UrnState {
    pub red: u64,
    pub blue: u64,
}

impl UrnState {
    pub fn time(&self) -> u64 {
        self.red + self.blue + 1
    }

    /// `(red + 1) / (red + blue + 2)`, the current proportion of red balls.
    pub fn red_proportion(&self) -> f64 {
        (self.red + 1) as f64 / (self.red + self.blue + 2) as f64
    }
}

/// `(n, S_n)` with `1 <= S_n <= n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RecordsState {
    n: u64,
    k: u64,
}

impl RecordsState {
    pub fn new(n: u64, k: u64) -> Result<Self> {
        if k == 0 || k > n {
            return domain(format!("records state ({n}, {k}) needs 1 <= k <= n"));
        }
        Ok(RecordsState { n, k })
    }

    pub fn start() -> Self {
        RecordsState { n: 1, k: 1 }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn k(&self) -> u64 {
        self.k
    }
}

/// State of any of the six chains.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ChainState {
    Urn(UrnState),
    Records(RecordsState),
    Graph(Graph),
    Tree(BinaryTree),
}

impl ChainState {
    pub fn time(&self) -> u64 {
        match self {
            ChainState::Urn(s) => s.time(),
            ChainState::Records(s) => s.n,
            ChainState::Graph(g) => g.n() as u64,
            ChainState::Tree(t) => t.len() as u64,
        }
    }

    pub fn as_graph(&self) -> Option<&Graph> {
        match self {
            ChainState::Graph(g) => Some(g),
            _ => None,
        }
    }

    pub fn as_tree(&self) -> Option<&BinaryTree> {
        match self {
            ChainState::Tree(t) => Some(t),
            _ => None,
        }
    }

    pub fn as_urn(&self) -> Option<UrnState> {
        match self {
            ChainState::Urn(s) => Some(*s),
            _ => None,
        }
    }

    pub fn as_records(&self) -> Option<RecordsState> {
        match self {
            ChainState::Records(s) => Some(*s),
            _ => None,
        }
    }

    /// Whether the state has the shape used by `kind`.
    pub fn fits(&self, kind: ChainKind) -> bool {
        match self {
            ChainState::Urn(_) => kind == ChainKind::Polya,
            ChainState::Records(_) => kind == ChainKind::Records,
            ChainState::Graph(_) => kind.is_graph(),
            ChainState::Tree(_) => kind == ChainKind::Bst,
        }
    }
}

fn polya_draw<R: Rng + ?Sized>(s: UrnState, rng: &mut R) -> bool {
    rng.random_range(0..s.red + s.blue + 2) < s.red + 1
}

/// One urn draw: red with probability `(red + 1) / (red + blue + 2)`.
pub fn polya_step<R: Rng + ?Sized>(s: UrnState, rng: &mut R) -> UrnState {
    if polya_draw(s, rng) {
        UrnState { red: s.red + 1, ..s }
    } else {
        UrnState { blue: s.blue + 1, ..s }
    }
}

fn records_draw<R: Rng + ?Sized>(s: RecordsState, rng: &mut R) -> bool {
    rng.random_range(0..s.n + 1) == 0
}

/// `(n, k) -> (n + 1, k + 1)` with probability `1 / (n + 1)`, else `(n + 1, k)`.
pub fn records_step<R: Rng + ?Sized>(s: RecordsState, rng: &mut R) -> RecordsState {
    let up = records_draw(s, rng);
    RecordsState { n: s.n + 1, k: s.k + up as u64 }
}

/// Number of failures before the first success, success probability
/// `1 - exp(log_fail)`.
fn geometric<R: Rng + ?Sized>(log_fail: f64, rng: &mut R) -> u64 {
    let g = (open01(rng).ln() / log_fail).floor();
    if g >= u64::MAX as f64 {
        u64::MAX
    } else {
        g as u64
    }
}

/// Adds vertex `n + 1` and lets every absent pair of `[n + 1]` that is not
/// in `forbid` enter independently with probability `1 / (n + 1)`.
///
/// Pairs are visited column by column (`j = 2, ..., n + 1`, then `i`
/// increasing) and the gaps between entering pairs are geometric, so the
/// cost is one pass over the bitset words plus one draw per added edge.
/// Returns the added pairs in visiting order.
pub(crate) fn ua_grow<R: Rng + ?Sized>(
    g: &mut Graph,
    forbid: Option<&Graph>,
    rng: &mut R,
) -> Vec<(usize, usize)> {
    let v = g.add_vertex();
    let log_fail = (-1.0 / v as f64).ln_1p();
    let mut skip = geometric(log_fail, rng);
    let mut added = Vec::new();
    for j in 2..=v {
        for (wi, mut mask) in g.absent_words(j) {
            if let Some(f) = forbid {
                mask &= !f.row_word(j, wi);
            }
            let mut count = u64::from(mask.count_ones());
            while skip < count {
                for _ in 0..skip {
                    mask &= mask - 1;
                }
                let b = mask.trailing_zeros() as usize;
                mask &= mask - 1;
                added.push((wi * 64 + b + 1, j));
                count = u64::from(mask.count_ones());
                skip = geometric(log_fail, rng);
            }
            skip -= count;
        }
    }
    for &(i, j) in &added {
        g.insert_unchecked(i, j);
    }
    added
}

/// Uniform attachment step from a graph on `[n]` to a graph on `[n + 1]`.
pub fn ua_step<R: Rng + ?Sized>(g: &Graph, rng: &mut R) -> Graph {
    let mut next = g.clone();
    ua_grow(&mut next, None, rng);
    next
}

/// Adds vertex `n + 1` joined to each old vertex with probability `theta`;
/// returns the new pairs.
pub(crate) fn er_grow<R: Rng + ?Sized>(g: &mut Graph, theta: Theta, rng: &mut R) -> Vec<(usize, usize)> {
    let v = g.add_vertex();
    let added: Vec<(usize, usize)> = (1..v)
        .filter(|_| rng.random_bool(theta.get()))
        .map(|i| (i, v))
        .collect();
    for &(i, j) in &added {
        g.insert_unchecked(i, j);
    }
    added
}

/// Erdős–Rényi step without relabeling; the old graph is the induced prefix
/// of the new one.
pub fn er_memory_step<R: Rng + ?Sized>(g: &Graph, theta: Theta, rng: &mut R) -> Graph {
    let mut next = g.clone();
    er_grow(&mut next, theta, rng);
    next
}

/// [`er_memory_step`] followed by an independent uniform relabeling.
pub fn er_relabel_step<R: Rng + ?Sized>(g: &Graph, theta: Theta, rng: &mut R) -> Graph {
    let mut next = g.clone();
    er_grow(&mut next, theta, rng);
    let perm = Permutation::random(next.n(), rng);
    next.permute(&perm).expect("sizes agree")
}

/// BST chain step: one of the `#x + 1` external nodes, chosen uniformly,
/// joins the tree.
pub fn bst_chain_step<R: Rng + ?Sized>(x: &BinaryTree, rng: &mut R) -> BinaryTree {
    let mut next = x.clone();
    next.grow(rng);
    next
}

/// State of the relabeled ER chain kept as the unrelabeled graph plus the
/// accumulated relabeling, so a step costs O(n) instead of rebuilding the
/// graph. Draws from the random stream in the same order as
/// [`er_relabel_step`], so [`RelabeledGraph::graph`] reproduces it exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct RelabeledGraph {
    base: Graph,
    /// `label[v - 1]`: current label of base vertex `v`.
    label: Vec<usize>,
    /// `base_of[c - 1]`: base vertex carrying current label `c`.
    base_of: Vec<usize>,
}

impl RelabeledGraph {
    pub fn start() -> Self {
        RelabeledGraph {
            base: Graph::point(),
            label: vec![1],
            base_of: vec![1],
        }
    }

    pub fn n(&self) -> usize {
        self.base.n()
    }

    /// A graph isomorphic to the current state; relabeling-invariant
    /// statistics can be read from it directly.
    pub fn unlabeled(&self) -> &Graph {
        &self.base
    }

    /// The current state.
    pub fn graph(&self) -> Graph {
        let perm = Permutation::new(self.label.clone()).expect("labels form a permutation");
        self.base.permute(&perm).expect("sizes agree")
    }

    pub fn step<R: Rng + ?Sized>(&mut self, theta: Theta, rng: &mut R) {
        let v = self.base.add_vertex();
        for c in 1..v {
            if rng.random_bool(theta.get()) {
                self.base.insert_unchecked(self.base_of[c - 1], v);
            }
        }
        self.label.push(v);
        self.base_of.push(v);
        let perm = Permutation::random(v, rng);
        let old = std::mem::take(&mut self.base_of);
        self.base_of = vec![0; v];
        for (c, &b) in old.iter().enumerate() {
            let to = perm.apply(c + 1);
            self.label[b - 1] = to;
            self.base_of[to - 1] = b;
        }
    }
}

/// What changed in one step; enough to replay the step exactly.
#[derive(Clone, Debug, PartialEq)]
pub enum Delta {
    Draw { red: bool },
    Record { up: bool },
    /// Pairs added together with the new vertex.
    Edges(Vec<(usize, usize)>),
    /// Pairs added to the new vertex, then the relabeling applied to all.
    Relabel { edges: Vec<(usize, usize)>, perm: Permutation },
    /// The external node that joined the tree.
    Word(Word),
}

/// Advances `state` by one step of `spec` in place and reports the change.
pub fn advance<R: Rng + ?Sized>(spec: &ChainSpec, state: &mut ChainState, rng: &mut R) -> Result<Delta> {
    if !state.fits(spec.kind) {
        return domain(format!("state does not belong to the {} chain", spec.kind));
    }
    Ok(match state {
        ChainState::Urn(s) => {
            let red = polya_draw(*s, rng);
            *s = if red { UrnState { red: s.red + 1, ..*s } } else { UrnState { blue: s.blue + 1, ..*s } };
            Delta::Draw { red }
        }
        ChainState::Records(s) => {
            let up = records_draw(*s, rng);
            *s = RecordsState { n: s.n + 1, k: s.k + up as u64 };
            Delta::Record { up }
        }
        ChainState::Graph(g) => match spec.kind {
            ChainKind::UniformAttachment => Delta::Edges(ua_grow(g, None, rng)),
            ChainKind::ErMemory => Delta::Edges(er_grow(g, spec.theta.unwrap(), rng)),
            _ => {
                let edges = er_grow(g, spec.theta.unwrap(), rng);
                let perm = Permutation::random(g.n(), rng);
                *g = g.permute(&perm)?;
                Delta::Relabel { edges, perm }
            }
        },
        ChainState::Tree(t) => Delta::Word(t.grow(rng)),
    })
}

/// Replays a recorded step.
pub fn apply_delta(state: &mut ChainState, delta: &Delta) -> Result<()> {
    match (state, delta) {
        (ChainState::Urn(s), Delta::Draw { red }) => {
            if *red {
                s.red += 1;
            } else {
                s.blue += 1;
            }
        }
        (ChainState::Records(s), Delta::Record { up }) => {
            s.n += 1;
            s.k += *up as u64;
        }
        (ChainState::Graph(g), Delta::Edges(edges)) => {
            let v = g.add_vertex();
            for &(i, j) in edges {
                if j > v || !g.add_edge(i, j)? {
                    return domain(format!("replayed pair ({i}, {j}) is invalid or already present"));
                }
            }
        }
        (ChainState::Graph(g), Delta::Relabel { edges, perm }) => {
            let v = g.add_vertex();
            for &(i, j) in edges {
                if j != v || !g.add_edge(i, j)? {
                    return domain(format!("replayed pair ({i}, {j}) does not touch the new vertex"));
                }
            }
            *g = g.permute(perm)?;
        }
        (ChainState::Tree(t), Delta::Word(w)) => t.insert_external(w)?,
        _ => return domain("delta does not match the state type"),
    }
    Ok(())
}

/// Exact one-step law: successor states with their probabilities.
pub type ExactLaw = BTreeMap<ChainState, BigRational>;

fn ratio(a: u64, b: u64) -> BigRational {
    BigRational::new(BigInt::from(a), BigInt::from(b))
}

fn check_cap(outcomes: u64, what: &str) -> Result<()> {
    if outcomes > EXACT_OUTCOME_CAP {
        return capability(format!("{what}: {outcomes} outcomes exceed the cap {EXACT_OUTCOME_CAP}"));
    }
    Ok(())
}

/// Exact uniform attachment step law from `g`, optionally with the pairs of
/// `forbid` barred from entering.
pub(crate) fn ua_step_law(g: &Graph, forbid: Option<&Graph>) -> Result<BTreeMap<Graph, BigRational>> {
    let mut base = g.clone();
    let v = base.add_vertex();
    let open: Vec<(usize, usize)> = (2..=v)
        .flat_map(|j| (1..j).map(move |i| (i, j)))
        .filter(|&(i, j)| !base.has_edge(i, j) && !forbid.is_some_and(|f| f.has_edge(i, j)))
        .collect();
    if open.len() >= 64 {
        return capability(format!("uniform attachment support of 2^{} graphs", open.len()));
    }
    check_cap(1u64 << open.len(), "uniform attachment step")?;
    let p = ratio(1, v as u64);
    let q = BigRational::one() - &p;
    let p_pows = powers(&p, open.len());
    let q_pows = powers(&q, open.len());
    let mut law = BTreeMap::new();
    for mask in 0u64..1 << open.len() {
        let mut next = base.clone();
        for (b, &(i, j)) in open.iter().enumerate() {
            if mask >> b & 1 == 1 {
                next.insert_unchecked(i, j);
            }
        }
        let k = mask.count_ones() as usize;
        law.insert(next, &p_pows[k] * &q_pows[open.len() - k]);
    }
    Ok(law)
}

fn powers(x: &BigRational, n: usize) -> Vec<BigRational> {
    let mut out = vec![BigRational::one()];
    for k in 0..n {
        let next = &out[k] * x;
        out.push(next);
    }
    out
}

/// Law of the pairs joining vertex `n + 1` under edge probability `theta`.
fn er_memory_law(g: &Graph, theta: Theta) -> Result<Vec<(Graph, BigRational)>> {
    let n = g.n();
    if n >= 64 {
        return capability(format!("er step support of 2^{n} graphs"));
    }
    check_cap(1u64 << n, "er step")?;
    let t = theta.exact();
    let s = BigRational::one() - &t;
    let (tp, sp) = (powers(&t, n), powers(&s, n));
    let mut base = g.clone();
    let v = base.add_vertex();
    Ok((0u64..1 << n)
        .map(|mask| {
            let mut next = base.clone();
            for i in 1..v {
                if mask >> (i - 1) & 1 == 1 {
                    next.insert_unchecked(i, v);
                }
            }
            let k = mask.count_ones() as usize;
            (next, &tp[k] * &sp[n - k])
        })
        .collect())
}

/// Exact one-step law of `spec` from `x`, by enumerating all randomness.
pub fn exact_step_distribution(spec: &ChainSpec, x: &ChainState) -> Result<ExactLaw> {
    if !x.fits(spec.kind) {
        return domain(format!("state does not belong to the {} chain", spec.kind));
    }
    let mut law = ExactLaw::new();
    match x {
        ChainState::Urn(s) => {
            let total = s.red + s.blue + 2;
            law.insert(ChainState::Urn(UrnState { red: s.red + 1, ..*s }), ratio(s.red + 1, total));
            law.insert(ChainState::Urn(UrnState { blue: s.blue + 1, ..*s }), ratio(s.blue + 1, total));
        }
        ChainState::Records(s) => {
            law.insert(ChainState::Records(RecordsState { n: s.n + 1, k: s.k + 1 }), ratio(1, s.n + 1));
            law.insert(ChainState::Records(RecordsState { n: s.n + 1, k: s.k }), ratio(s.n, s.n + 1));
        }
        ChainState::Tree(t) => {
            let p = ratio(1, t.external_count() as u64);
            for w in t.external_nodes() {
                let mut next = t.clone();
                next.insert_external(&w)?;
                law.insert(ChainState::Tree(next), p.clone());
            }
        }
        ChainState::Graph(g) => match spec.kind {
            ChainKind::UniformAttachment => {
                for (h, p) in ua_step_law(g, None)? {
                    law.insert(ChainState::Graph(h), p);
                }
            }
            ChainKind::ErMemory => {
                for (h, p) in er_memory_law(g, spec.theta.unwrap())? {
                    law.insert(ChainState::Graph(h), p);
                }
            }
            _ => {
                let v = g.n() + 1;
                let perms = Permutation::all(v)?;
                check_cap((1u64 << g.n()) * perms.len() as u64, "er-relabel step")?;
                let share = ratio(1, perms.len() as u64);
                for (h, p) in er_memory_law(g, spec.theta.unwrap())? {
                    let p = p * &share;
                    for perm in &perms {
                        *law.entry(ChainState::Graph(h.permute(perm)?)).or_insert_with(BigRational::zero) += &p;
                    }
                }
            }
        },
    }
    Ok(law)
}

/// Options for [`simulate_with`].
#[derive(Clone, Copy, Debug)]
pub struct SimulateOptions {
    /// Refuse runs whose projected trajectory storage exceeds this many bytes.
    pub memory_cap_bytes: u64,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        SimulateOptions { memory_cap_bytes: 1 << 30 }
    }
}

/// Projected bytes of a trajectory with `n_final` states.
pub fn projected_bytes(spec: &ChainSpec, n_final: usize) -> u64 {
    let n = n_final as u64;
    let pair = std::mem::size_of::<(usize, usize)>() as u64;
    let square = n.saturating_mul(n);
    match spec.kind {
        // about n^2 / 6 edges are present at time n
        ChainKind::UniformAttachment => square / 6 * pair + square / 8,
        ChainKind::ErMemory => (square as f64 / 2.0 * spec.theta.unwrap().get()) as u64 * pair + square / 8,
        ChainKind::ErRelabel => {
            (square as f64 / 2.0 * spec.theta.unwrap().get()) as u64 * pair + square / 2 * 8 + square / 8
        }
        ChainKind::Bst => n * 64,
        ChainKind::Polya | ChainKind::Records => n * 8,
    }
}

/// A seeded run: the start state plus one delta per step.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    spec: ChainSpec,
    seed: u64,
    stream: u64,
    deltas: Vec<Delta>,
    last: ChainState,
}

/// Runs `spec` from its start state to time `n_final` on stream `(seed, 0)`.
pub fn simulate(spec: &ChainSpec, n_final: usize, seed: u64) -> Result<Trajectory> {
    simulate_with(spec, n_final, seed, &SimulateOptions::default())
}

pub fn simulate_with(spec: &ChainSpec, n_final: usize, seed: u64, opts: &SimulateOptions) -> Result<Trajectory> {
    simulate_replicate(spec, n_final, seed, 0, opts)
}

/// Replicate `replicate` of an experiment: stream `(master_seed, replicate)`.
pub fn simulate_replicate(
    spec: &ChainSpec,
    n_final: usize,
    master_seed: u64,
    replicate: u64,
    opts: &SimulateOptions,
) -> Result<Trajectory> {
    if n_final == 0 {
        return domain("n_final must be at least 1");
    }
    let bytes = projected_bytes(spec, n_final);
    if bytes > opts.memory_cap_bytes {
        return capability(format!(
            "trajectory of {n_final} steps needs about {bytes} bytes (cap {})",
            opts.memory_cap_bytes
        ));
    }
    let mut rng = stream(master_seed, replicate);
    let mut state = spec.start();
    let mut deltas = Vec::with_capacity(n_final - 1);
    for _ in 1..n_final {
        deltas.push(advance(spec, &mut state, &mut rng)?);
    }
    Ok(Trajectory {
        spec: *spec,
        seed: master_seed,
        stream: replicate,
        deltas,
        last: state,
    })
}

impl Trajectory {
    pub(crate) fn from_parts(spec: ChainSpec, seed: u64, deltas: Vec<Delta>, last: ChainState) -> Self {
        Trajectory { spec, seed, stream: 0, deltas, last }
    }

    pub fn spec(&self) -> &ChainSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Stream id within the seed; 0 for single runs.
    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Time of the last recorded state.
    pub fn horizon(&self) -> usize {
        self.deltas.len() + 1
    }

    /// `deltas()[k]` leads from time `k + 1` to time `k + 2`.
    pub fn deltas(&self) -> &[Delta] {
        &self.deltas
    }

    pub fn last(&self) -> &ChainState {
        &self.last
    }

    /// Every state from time 1 to the horizon, rebuilt from the deltas.
    pub fn states(&self) -> impl Iterator<Item = ChainState> + '_ {
        let mut state = self.spec.start();
        let mut k = 0;
        std::iter::from_fn(move || {
            if k > self.deltas.len() {
                return None;
            }
            if k > 0 {
                apply_delta(&mut state, &self.deltas[k - 1]).expect("recorded deltas replay");
            }
            k += 1;
            Some(state.clone())
        })
    }

    /// The state at time `n`.
    pub fn state_at(&self, n: usize) -> Result<ChainState> {
        if n == 0 || n > self.horizon() {
            return domain(format!("time {n} outside 1..={}", self.horizon()));
        }
        if n == self.horizon() {
            return Ok(self.last.clone());
        }
        let mut state = self.spec.start();
        for d in &self.deltas[..n - 1] {
            apply_delta(&mut state, d)?;
        }
        Ok(state)
    }

    /// JSON lines, one per time step. Line `n = 1` carries the chain, theta,
    /// seed and stream with an empty delta.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let first = json!({
            "n": 1,
            "chain": self.spec.kind.name(),
            "theta": self.spec.theta.map(Theta::get),
            "seed": self.seed,
            "stream": self.stream,
            "delta": [],
        });
        out.push_str(&first.to_string());
        out.push('\n');
        for (k, d) in self.deltas.iter().enumerate() {
            out.push_str(&delta_json(k + 2, d).to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let Some((_, first)) = lines.next() else {
            return parse_err(1, "empty trajectory");
        };
        let head: Value = serde_json::from_str(first)?;
        let kind: ChainKind = head["chain"]
            .as_str()
            .ok_or_else(|| Error::Parse { line: 1, msg: "missing chain".into() })?
            .parse()?;
        let spec = ChainSpec::new(kind, head["theta"].as_f64())?;
        let seed = head["seed"]
            .as_u64()
            .ok_or_else(|| Error::Parse { line: 1, msg: "missing seed".into() })?;
        let stream = head["stream"].as_u64().unwrap_or(0);
        let mut state = spec.start();
        let mut deltas = Vec::new();
        for (ln, line) in lines {
            let rec: Value = serde_json::from_str(line)?;
            let n = rec["n"].as_u64().unwrap_or(0) as usize;
            if n != deltas.len() + 2 {
                return parse_err(ln + 1, format!("expected n = {}, got {n}", deltas.len() + 2));
            }
            let d = delta_from_json(kind, &rec).map_err(|msg| Error::Parse { line: ln + 1, msg })?;
            apply_delta(&mut state, &d).map_err(|e| Error::Parse { line: ln + 1, msg: e.to_string() })?;
            deltas.push(d);
        }
        Ok(Trajectory {
            spec,
            seed,
            stream,
            deltas,
            last: state,
        })
    }
}

fn pairs_json(edges: &[(usize, usize)]) -> Value {
    Value::Array(edges.iter().map(|&(i, j)| json!([i, j])).collect())
}

fn delta_json(n: usize, d: &Delta) -> Value {
    match d {
        Delta::Draw { red } => json!({"n": n, "delta": [if *red { "red" } else { "blue" }]}),
        Delta::Record { up } => json!({"n": n, "delta": [u8::from(*up)]}),
        Delta::Edges(edges) => json!({"n": n, "delta": pairs_json(edges)}),
        Delta::Relabel { edges, perm } => json!({"n": n, "delta": pairs_json(edges), "perm": perm.image()}),
        Delta::Word(w) => json!({"n": n, "delta": [w.to_string()]}),
    }
}

fn pairs_from(v: &Value) -> std::result::Result<Vec<(usize, usize)>, String> {
    v.as_array()
        .ok_or("delta must be an array")?
        .iter()
        .map(|p| match p.as_array().map(|a| a.as_slice()) {
            Some([i, j]) => match (i.as_u64(), j.as_u64()) {
                (Some(i), Some(j)) => Ok((i as usize, j as usize)),
                _ => Err(format!("bad pair {p}")),
            },
            _ => Err(format!("bad pair {p}")),
        })
        .collect()
}

fn delta_from_json(kind: ChainKind, rec: &Value) -> std::result::Result<Delta, String> {
    let d = &rec["delta"];
    let single = || d.as_array().filter(|a| a.len() == 1).map(|a| &a[0]).ok_or("delta must hold one item");
    Ok(match kind {
        ChainKind::Polya => match single()?.as_str() {
            Some("red") => Delta::Draw { red: true },
            Some("blue") => Delta::Draw { red: false },
            _ => return Err("urn delta must be red or blue".into()),
        },
        ChainKind::Records => match single()?.as_u64() {
            Some(b @ (0 | 1)) => Delta::Record { up: b == 1 },
            _ => return Err("records delta must be 0 or 1".into()),
        },
        ChainKind::UniformAttachment | ChainKind::ErMemory => Delta::Edges(pairs_from(d)?),
        ChainKind::ErRelabel => {
            let image: Vec<usize> = rec["perm"]
                .as_array()
                .ok_or("missing perm")?
                .iter()
                .map(|v| v.as_u64().map(|x| x as usize).ok_or("bad perm entry"))
                .collect::<std::result::Result<_, _>>()?;
            let perm = Permutation::new(image).map_err(|e| e.to_string())?;
            Delta::Relabel { edges: pairs_from(d)?, perm }
        }
        ChainKind::Bst => {
            let w: Word = single()?
                .as_str()
                .ok_or("word delta must be a string")?
                .parse()
                .map_err(|e: Error| e.to_string())?;
            Delta::Word(w)
        }
    })
}

/// `tau_ij`: the first time the pair `{i, j}` is an edge, `None` if it never
/// is within the recorded horizon.
pub fn entry_time(tr: &Trajectory, i: usize, j: usize) -> Result<Option<usize>> {
    if i == 0 || i >= j {
        return domain(format!("pair ({i}, {j}) needs 1 <= i < j"));
    }
    match tr.spec.kind {
        ChainKind::UniformAttachment | ChainKind::ErMemory => {
            // edges are never removed, so the delta that adds the pair is the entry
            Ok(tr.deltas.iter().enumerate().find_map(|(k, d)| match d {
                Delta::Edges(e) if e.contains(&(i, j)) => Some(k + 2),
                _ => None,
            }))
        }
        ChainKind::ErRelabel => Ok(tr
            .states()
            .enumerate()
            .find_map(|(k, s)| s.as_graph().is_some_and(|g| g.has_edge(i, j)).then_some(k + 1))),
        kind => domain(format!("entry times need a graph chain, not {kind}")),
    }
}

/// Legal-transition checks, used by tests and diagnostics rather than on the
/// simulation path.
pub mod legal {
    use super::*;

    /// Whether `to` is in the one-step support of `spec` from `from`.
    pub fn is_legal_transition(spec: &ChainSpec, from: &ChainState, to: &ChainState) -> bool {
        if !from.fits(spec.kind) || !to.fits(spec.kind) || to.time() != from.time() + 1 {
            return false;
        }
        match (from, to) {
            (ChainState::Urn(a), ChainState::Urn(b)) => {
                (b.red == a.red + 1 && b.blue == a.blue) || (b.red == a.red && b.blue == a.blue + 1)
            }
            (ChainState::Records(a), ChainState::Records(b)) => b.k == a.k || b.k == a.k + 1,
            (ChainState::Tree(a), ChainState::Tree(b)) => a.words().iter().all(|w| b.contains(w)),
            (ChainState::Graph(a), ChainState::Graph(b)) => match spec.kind {
                ChainKind::UniformAttachment => a.edges().all(|(i, j)| b.has_edge(i, j)),
                ChainKind::ErMemory => b.induced_prefix(a.n()).is_ok_and(|p| &p == a),
                _ => relabel_legal(a, b),
            },
            _ => false,
        }
    }

    /// Some relabeling of `b` has `a` as its prefix on `[n]`; exhaustive for
    /// small graphs, edge counts only beyond the permutation guard.
    fn relabel_legal(a: &Graph, b: &Graph) -> bool {
        let extra = b.edge_count() as i64 - a.edge_count() as i64;
        if extra < 0 || extra > a.n() as i64 {
            return false;
        }
        match Permutation::all(b.n()) {
            Ok(perms) => perms
                .iter()
                .any(|p| b.permute(p).and_then(|h| h.induced_prefix(a.n())).is_ok_and(|h| &h == a)),
            Err(_) => true,
        }
    }

    /// Checks every consecutive pair of states and the time grading.
    pub fn check_trajectory(tr: &Trajectory) -> Result<()> {
        let mut prev: Option<ChainState> = None;
        for (k, s) in tr.states().enumerate() {
            if s.time() != k as u64 + 1 {
                return domain(format!("state {} has time {}", k + 1, s.time()));
            }
            if let Some(p) = &prev {
                if !is_legal_transition(tr.spec(), p, &s) {
                    return domain(format!("illegal transition into time {}", k + 1));
                }
            }
            prev = Some(s);
        }
        Ok(())
    }
}
