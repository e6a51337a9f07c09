//! Transition probabilities, marginals and Martin kernels of the graph
//! chains, in log space and as exact rationals, together with the brute-force
//! and Monte Carlo oracles that check them.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Div, Mul};

use num::{BigInt, BigRational, One, ToPrimitive, Zero};
use rayon::prelude::*;

use crate::chain::{advance, exact_step_distribution, ChainSpec, ChainState, ExactLaw, Theta};
use crate::error::{capability, domain, parse_err, Error, Result};
use crate::graph::{sampling_density, sampling_density_exact, Graph};
use crate::rng::stream;
use crate::silhouette::{records_distribution, records_from};

/// Natural-log probability; `-inf` encodes an impossible event.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct LogProb(f64);

impl LogProb {
    pub const IMPOSSIBLE: LogProb = LogProb(f64::NEG_INFINITY);
    pub const CERTAIN: LogProb = LogProb(0.0);

    pub fn from_ln(value: f64) -> Result<Self> {
        if value.is_nan() || value > 1e-12 {
            return domain(format!("log probability {value} is not <= 0"));
        }
        Ok(LogProb(value.min(0.0)))
    }

    pub fn from_prob(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return domain(format!("probability {p} outside [0, 1]"));
        }
        Ok(LogProb(p.ln()))
    }

    pub fn ln(self) -> f64 {
        self.0
    }

    pub fn prob(self) -> f64 {
        self.0.exp()
    }

    pub fn is_impossible(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }
}

impl Mul for LogProb {
    type Output = LogProb;

    fn mul(self, rhs: LogProb) -> LogProb {
        LogProb(self.0 + rhs.0)
    }
}

/// Ratio of two probabilities as a plain nonnegative real.
impl Div for LogProb {
    type Output = f64;

    fn div(self, rhs: LogProb) -> f64 {
        if self.is_impossible() {
            0.0
        } else {
            (self.0 - rhs.0).exp()
        }
    }
}

impl fmt::Display for LogProb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Boundary point of the uniform attachment chain: a 0/1 value `M(i, j)` for
/// every pair inside `[window]`. Pairs with value 0 are stored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdjacencyLimit {
    zeros: Graph,
}

impl AdjacencyLimit {
    /// `M = 1` on every pair of `[window]`.
    pub fn all_ones(window: usize) -> Result<Self> {
        if window < 2 {
            return domain(format!("window {window} must be at least 2"));
        }
        Ok(AdjacencyLimit { zeros: Graph::empty(window) })
    }

    /// Starts from `M = 1` and applies the listed values.
    pub fn from_bits<I>(window: usize, bits: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, bool)>,
    {
        let mut m = Self::all_ones(window)?;
        for (i, j, b) in bits {
            m.set(i, j, b)?;
        }
        Ok(m)
    }

    pub fn window(&self) -> usize {
        self.zeros.n()
    }

    fn check(&self, i: usize, j: usize) -> Result<()> {
        if i == 0 || i >= j {
            return domain(format!("pair ({i}, {j}) needs 1 <= i < j"));
        }
        if j > self.window() {
            return domain(format!("pair ({i}, {j}) outside window {}", self.window()));
        }
        Ok(())
    }

    /// `M(i, j)`.
    pub fn get(&self, i: usize, j: usize) -> Result<bool> {
        self.check(i, j)?;
        Ok(!self.zeros.has_edge(i, j))
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) -> Result<()> {
        self.check(i, j)?;
        if value {
            if self.zeros.has_edge(i, j) {
                let kept: Vec<_> = self.zeros.edges().filter(|&e| e != (i, j)).collect();
                self.zeros = Graph::from_edges(self.window(), kept)?;
            }
        } else {
            self.zeros.add_edge(i, j)?;
        }
        Ok(())
    }

    /// Pairs with `M = 0`, as a graph on `[window]`.
    pub fn zero_pairs(&self) -> &Graph {
        &self.zeros
    }

    /// `e_j(M)`: the number of `i < j` with `M(i, j) = 1`.
    pub fn ones_into(&self, j: usize) -> Result<usize> {
        if j < 2 || j > self.window() {
            return domain(format!("column {j} outside 2..={}", self.window()));
        }
        Ok(j - 1 - self.zeros.edges_into(j)?)
    }

    /// Whether `g` has no edge where `M = 0`.
    pub fn admits(&self, g: &Graph) -> Result<bool> {
        if g.n() > self.window() {
            return domain(format!("graph on [{}] exceeds window {}", g.n(), self.window()));
        }
        Ok(g.edges().all(|(i, j)| !self.zeros.has_edge(i, j)))
    }

    /// Lines `i j b`. The window is the largest `j` mentioned (at least 2)
    /// unless a `window N` line sets it; unlisted pairs default to 1.
    pub fn parse(text: &str) -> Result<Self> {
        let mut window = None;
        let mut bits = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks.as_slice() {
                ["window", w] => {
                    window = Some(w.parse::<usize>().or_else(|_| parse_err(k + 1, format!("bad window `{w}`")))?)
                }
                [i, j, b] => {
                    let num = |s: &str| s.parse::<usize>().or_else(|_| parse_err(k + 1, format!("bad number `{s}`")));
                    let (i, j) = (num(i)?, num(j)?);
                    let b = match *b {
                        "0" => false,
                        "1" => true,
                        other => return parse_err(k + 1, format!("bit must be 0 or 1, got `{other}`")),
                    };
                    if i == 0 || i >= j {
                        return parse_err(k + 1, format!("pair ({i}, {j}) needs 1 <= i < j"));
                    }
                    bits.push((k + 1, i, j, b));
                }
                _ => return parse_err(k + 1, format!("expected `i j b`, got `{line}`")),
            }
        }
        let window = window.unwrap_or_else(|| bits.iter().map(|b| b.2).max().unwrap_or(2).max(2));
        let mut m = Self::all_ones(window).map_err(|e| Error::Parse { line: 0, msg: e.to_string() })?;
        for (line, i, j, b) in bits {
            m.set(i, j, b).map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        }
        Ok(m)
    }

    /// `window N` followed by the zero pairs as `i j 0`.
    pub fn to_text(&self) -> String {
        let mut s = format!("window {}\n", self.window());
        for (i, j) in self.zeros.edges() {
            s.push_str(&format!("{i} {j} 0\n"));
        }
        s
    }
}

fn ratio(a: u64, b: u64) -> BigRational {
    BigRational::new(BigInt::from(a), BigInt::from(b))
}

fn pow(x: &BigRational, e: i64) -> BigRational {
    if e >= 0 {
        num::pow(x.clone(), e as usize)
    } else {
        num::pow(x.recip(), (-e) as usize)
    }
}

/// Whether every edge of `gm` is still an edge of `gn`.
fn ua_reachable(gm: &Graph, gn: &Graph) -> bool {
    gm.edges().all(|(i, j)| gn.has_edge(i, j))
}

fn check_times(gm: &Graph, gn: &Graph) -> Result<(usize, usize)> {
    let (m, n) = (gm.n(), gn.n());
    if m == 0 || m >= n {
        return domain(format!("need 1 <= m < n, got m = {m}, n = {n}"));
    }
    Ok((m, n))
}

/// Factors `(base, exponent)` of the transition probability; the product of
/// `base^exponent` over the list is `P(X_n = gn | X_m = gm)`.
fn ua_transition_factors(gm: &Graph, gn: &Graph) -> Vec<((u64, u64), u64)> {
    let (m, n) = (gm.n(), gn.n());
    let mut out = Vec::with_capacity(2 * n);
    for j in 2..=m {
        let (em, en) = (gm.column_count(j) as u64, gn.column_count(j) as u64);
        // absent at m, entered later; absent at n
        out.push(((n as u64 - m as u64, n as u64), en - em));
        out.push(((m as u64, n as u64), j as u64 - 1 - en));
    }
    for j in m + 1..=n {
        let en = gn.column_count(j) as u64;
        out.push(((n as u64 + 1 - j as u64, n as u64), en));
        out.push(((j as u64 - 1, n as u64), j as u64 - 1 - en));
    }
    out
}

/// `P(X_n = gn | X_m = gm)` for the uniform attachment chain.
pub fn ua_transition_prob(gm: &Graph, gn: &Graph) -> Result<LogProb> {
    check_times(gm, gn)?;
    if !ua_reachable(gm, gn) {
        return Ok(LogProb::IMPOSSIBLE);
    }
    let ln: f64 = ua_transition_factors(gm, gn)
        .into_iter()
        .filter(|&(_, e)| e > 0)
        .map(|((a, b), e)| e as f64 * (a as f64 / b as f64).ln())
        .sum();
    Ok(LogProb(ln.min(0.0)))
}

pub fn ua_transition_prob_exact(gm: &Graph, gn: &Graph) -> Result<BigRational> {
    check_times(gm, gn)?;
    if !ua_reachable(gm, gn) {
        return Ok(BigRational::zero());
    }
    Ok(ua_transition_factors(gm, gn)
        .into_iter()
        .map(|((a, b), e)| pow(&ratio(a, b), e as i64))
        .product())
}

/// `P(X_n = gn)`.
pub fn ua_marginal_prob(gn: &Graph) -> Result<LogProb> {
    match gn.n() {
        0 => domain("graphs start at one vertex"),
        1 => Ok(LogProb::CERTAIN),
        _ => ua_transition_prob(&Graph::point(), gn),
    }
}

pub fn ua_marginal_prob_exact(gn: &Graph) -> Result<BigRational> {
    match gn.n() {
        0 => domain("graphs start at one vertex"),
        1 => Ok(BigRational::one()),
        _ => ua_transition_prob_exact(&Graph::point(), gn),
    }
}

/// The three factors of the uniform attachment Martin kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct UaKernelFactors {
    /// `prod_j (1 - m/n)^(-e_j(gm))`.
    pub history: BigRational,
    /// `prod_j ((n - m) / (n + 1 - j))^(e_j(gn))`.
    pub spread: BigRational,
    /// `prod_j ((j - 1) / m)^(e_j(gn) + 1 - j)`, at least 1.
    pub fill: BigRational,
}

impl UaKernelFactors {
    pub fn value(&self) -> BigRational {
        &self.history * &self.spread * &self.fill
    }
}

/// Kernel factors for a reachable pair; `None` if `gn` lost an edge of `gm`.
pub fn ua_kernel_factors(gm: &Graph, gn: &Graph) -> Result<Option<UaKernelFactors>> {
    let (m, n) = check_times(gm, gn)?;
    if !ua_reachable(gm, gn) {
        return Ok(None);
    }
    let mut f = UaKernelFactors {
        history: BigRational::one(),
        spread: BigRational::one(),
        fill: BigRational::one(),
    };
    for j in 2..=m {
        let (em, en) = (gm.column_count(j) as i64, gn.column_count(j) as i64);
        f.history *= pow(&ratio((n - m) as u64, n as u64), -em);
        f.spread *= pow(&ratio((n - m) as u64, (n + 1 - j) as u64), en);
        f.fill *= pow(&ratio(j as u64 - 1, m as u64), en + 1 - j as i64);
    }
    Ok(Some(f))
}

/// `K(gm, gn) = P(X_n = gn | X_m = gm) / P(X_n = gn)` in closed form.
pub fn ua_kernel(gm: &Graph, gn: &Graph) -> Result<f64> {
    let (m, n) = check_times(gm, gn)?;
    if !ua_reachable(gm, gn) {
        return Ok(0.0);
    }
    let (mf, nf) = (m as f64, n as f64);
    let mut ln = 0.0;
    for j in 2..=m {
        let (em, en) = (gm.column_count(j) as f64, gn.column_count(j) as f64);
        let jf = j as f64;
        ln -= em * (1.0 - mf / nf).ln();
        ln += en * ((nf - mf) / (nf + 1.0 - jf)).ln();
        ln += (en + 1.0 - jf) * ((jf - 1.0) / mf).ln();
    }
    Ok(ln.exp())
}

pub fn ua_kernel_exact(gm: &Graph, gn: &Graph) -> Result<BigRational> {
    Ok(ua_kernel_factors(gm, gn)?.map_or_else(BigRational::zero, |f| f.value()))
}

fn check_window(gm: &Graph, limit: &AdjacencyLimit) -> Result<()> {
    if gm.n() > limit.window() {
        return domain(format!("window {} does not cover [{}]", limit.window(), gm.n()));
    }
    Ok(())
}

/// `K(gm, M) = prod_{j=2}^m ((j - 1)/m)^(e_j(M) + 1 - j)`, or 0 if `gm` has an
/// edge where `M = 0`.
pub fn ua_extended_kernel(gm: &Graph, limit: &AdjacencyLimit) -> Result<f64> {
    check_window(gm, limit)?;
    if !limit.admits(gm)? {
        return Ok(0.0);
    }
    let m = gm.n() as f64;
    let mut ln = 0.0;
    for j in 2..=gm.n() {
        let missing = (j - 1 - limit.ones_into(j)?) as f64;
        ln -= missing * ((j as f64 - 1.0) / m).ln();
    }
    Ok(ln.exp())
}

pub fn ua_extended_kernel_exact(gm: &Graph, limit: &AdjacencyLimit) -> Result<BigRational> {
    check_window(gm, limit)?;
    if !limit.admits(gm)? {
        return Ok(BigRational::zero());
    }
    let m = gm.n() as u64;
    let mut k = BigRational::one();
    for j in 2..=gm.n() {
        let e = limit.ones_into(j)? as i64;
        k *= pow(&ratio(j as u64 - 1, m), e + 1 - j as i64);
    }
    Ok(k)
}

/// `P(tau_ij > n)` for the uniform attachment chain: the pair is still absent
/// at time `n`. Pair `{i, j}` first becomes possible at time `j` and stays
/// out of `X_k` with probability `1 - 1/k` at each step `k = j, ..., n`, so
/// the tail is `(j - 1) / n`.
pub fn entry_tail_prob(i: usize, j: usize, n: usize) -> Result<BigRational> {
    if i == 0 || i >= j {
        return domain(format!("pair ({i}, {j}) needs 1 <= i < j"));
    }
    if n + 1 < j {
        return domain(format!("time {n} precedes vertex {j} minus one"));
    }
    if n < j {
        return Ok(BigRational::one());
    }
    Ok(ratio(j as u64 - 1, n as u64))
}

fn check_open_theta(theta: Theta) -> Result<()> {
    let t = theta.get();
    if t <= 0.0 || t >= 1.0 {
        return domain(format!("need 0 < theta < 1, got {t}"));
    }
    Ok(())
}

/// `theta^e(G) (1 - theta)^(C(n, 2) - e(G))`.
pub fn er_marginal_prob(g: &Graph, theta: Theta) -> Result<LogProb> {
    check_open_theta(theta)?;
    let e = g.edge_count() as f64;
    let non = (g.pair_count() - g.edge_count()) as f64;
    let t = theta.get();
    Ok(LogProb(e * t.ln() + non * (-t).ln_1p()))
}

pub fn er_marginal_prob_exact(g: &Graph, theta: Theta) -> Result<BigRational> {
    check_open_theta(theta)?;
    let t = theta.exact();
    let s = BigRational::one() - &t;
    Ok(pow(&t, g.edge_count() as i64) * pow(&s, (g.pair_count() - g.edge_count()) as i64))
}

/// Limit of the relabeled kernel along a sequence with `rho(H, X_n) -> ...`:
/// equal to the ER marginal of `h`.
pub fn er_limit_value(h: &Graph, theta: Theta) -> Result<f64> {
    Ok(er_marginal_prob(h, theta)?.prob())
}

fn check_er_times(gm: &Graph, gn: &Graph) -> Result<()> {
    if gm.n() == 0 || gm.n() > gn.n() {
        return domain(format!("need 1 <= m <= n, got m = {}, n = {}", gm.n(), gn.n()));
    }
    Ok(())
}

/// Relabeled ER kernel `rho(gm, gn) / P(X_m = gm)`.
pub fn er_kernel(gm: &Graph, gn: &Graph, theta: Theta) -> Result<f64> {
    check_er_times(gm, gn)?;
    let marginal = er_marginal_prob(gm, theta)?;
    Ok(sampling_density(gm, gn)? / marginal.prob())
}

pub fn er_kernel_exact(gm: &Graph, gn: &Graph, theta: Theta) -> Result<BigRational> {
    check_er_times(gm, gn)?;
    let marginal = er_marginal_prob_exact(gm, theta)?;
    Ok(sampling_density_exact(gm, gn)? / marginal)
}

/// Kernel of the ER chain without relabeling: `1 / P(Y_m = gm)` when `gm`
/// is the prefix of `gn`, else 0.
pub fn pm_kernel(gm: &Graph, gn: &Graph, theta: Theta) -> Result<f64> {
    if gm.n() == 0 || gm.n() >= gn.n() {
        return domain(format!("need 1 <= m < n, got m = {}, n = {}", gm.n(), gn.n()));
    }
    let marginal = er_marginal_prob(gm, theta)?;
    if gn.induced_prefix(gm.n())? == *gm {
        Ok(1.0 / marginal.prob())
    } else {
        Ok(0.0)
    }
}

/// Largest target time for the brute-force oracle on graph chains.
pub const ORACLE_GRAPH_CAP: u64 = 4;
/// Largest target time for the brute-force oracle on the other chains.
pub const ORACLE_OTHER_CAP: u64 = 8;

/// Exact law of `X_n` given `X_m = x`, by repeated one-step enumeration.
pub fn exact_forward_law(spec: &ChainSpec, x: &ChainState, n: u64) -> Result<ExactLaw> {
    let cap = if spec.kind().is_graph() { ORACLE_GRAPH_CAP } else { ORACLE_OTHER_CAP };
    if n > cap {
        return capability(format!("exact enumeration to time {n} (cap {cap} for {})", spec.kind()));
    }
    if n < x.time() {
        return domain(format!("target time {n} precedes the state's time {}", x.time()));
    }
    let mut law = ExactLaw::new();
    law.insert(x.clone(), BigRational::one());
    for _ in x.time()..n {
        let mut next = ExactLaw::new();
        for (s, p) in &law {
            for (t, q) in exact_step_distribution(spec, s)? {
                *next.entry(t).or_insert_with(BigRational::zero) += p * q;
            }
        }
        law = next;
    }
    Ok(law)
}

/// `P(X_n = y | X_m = x)` by exhaustive enumeration of all randomness.
pub fn exact_conditional_oracle(spec: &ChainSpec, x: &ChainState, y: &ChainState) -> Result<BigRational> {
    if !x.fits(spec.kind()) || !y.fits(spec.kind()) {
        return domain(format!("states do not belong to the {} chain", spec.kind()));
    }
    Ok(exact_forward_law(spec, x, y.time())?
        .remove(y)
        .unwrap_or_else(BigRational::zero))
}

/// Monte Carlo estimate of a Martin kernel with its standard error.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelEstimate {
    /// `None` when the unconditioned run never hit the target.
    pub value: Option<f64>,
    pub std_error: Option<f64>,
    pub conditional_hits: u64,
    pub marginal_hits: u64,
    pub reps: u64,
}

fn run_to<R: rand::Rng + ?Sized>(spec: &ChainSpec, from: &ChainState, n: u64, rng: &mut R) -> Result<ChainState> {
    let mut s = from.clone();
    while s.time() < n {
        advance(spec, &mut s, rng)?;
    }
    Ok(s)
}

/// Estimates `P(X_n = y | X_m = x) / P(X_n = y)` from two batches of `reps`
/// runs: conditioned runs use streams `(seed, 2r)`, unconditioned runs from
/// the start state use `(seed, 2r + 1)`.
pub fn empirical_kernel(spec: &ChainSpec, x: &ChainState, y: &ChainState, reps: u64, seed: u64) -> Result<KernelEstimate> {
    if reps == 0 {
        return domain("reps must be at least 1");
    }
    if !x.fits(spec.kind()) || !y.fits(spec.kind()) || y.time() < x.time() {
        return domain("states do not form a forward pair of this chain");
    }
    let start = spec.start();
    let n = y.time();
    let counts: Vec<(u64, u64)> = (0..reps)
        .into_par_iter()
        .map(|r| -> Result<(u64, u64)> {
            let a = run_to(spec, x, n, &mut stream(seed, 2 * r))? == *y;
            let b = run_to(spec, &start, n, &mut stream(seed, 2 * r + 1))? == *y;
            Ok((a as u64, b as u64))
        })
        .collect::<Result<_>>()?;
    let (a, b) = counts.iter().fold((0, 0), |(x, y), &(p, q)| (x + p, y + q));
    let (value, std_error) = if b == 0 {
        (None, None)
    } else {
        let r = reps as f64;
        let (p1, p2) = (a as f64 / r, b as f64 / r);
        let est = p1 / p2;
        let rel = if a == 0 { 0.0 } else { (1.0 - p1) / (r * p1) } + (1.0 - p2) / (r * p2);
        (Some(est), Some(est * rel.sqrt()))
    };
    Ok(KernelEstimate {
        value,
        std_error,
        conditional_hits: a,
        marginal_hits: b,
        reps,
    })
}

fn check_records(m: u64, k: u64, n: u64) -> Result<()> {
    if k == 0 || k > m || m >= n {
        return domain(format!("records kernel needs 1 <= k <= m < n, got k = {k}, m = {m}, n = {n}"));
    }
    Ok(())
}

/// `P(S_n = l | S_m = k) / P(S_n = l)` for the records chain; 0 when `l` is
/// unreachable from `(m, k)`.
pub fn records_kernel_ratio_exact(m: u64, k: u64, n: u64, l: u64) -> Result<BigRational> {
    check_records(m, k, n)?;
    if l < k || l > k + (n - m) || l > n {
        return Ok(BigRational::zero());
    }
    let cond = records_from(m as usize, k as usize, n as usize)?.prob(l as usize);
    let marg = records_distribution(n as usize)?.prob(l as usize);
    Ok(cond / marg)
}

pub fn records_kernel_ratio(m: u64, k: u64, n: u64, l: u64) -> Result<f64> {
    Ok(records_kernel_ratio_exact(m, k, n, l)?.to_f64().unwrap_or(f64::INFINITY))
}

/// Table of `records_kernel_ratio(m, k, n, l)` over all feasible `k`, keyed
/// by `k`, for inspecting how the kernel moves with the record count.
pub fn records_kernel_profile(m: u64, n: u64, l: u64) -> Result<BTreeMap<u64, BigRational>> {
    (1..=m).map(|k| Ok((k, records_kernel_ratio_exact(m, k, n, l)?))).collect()
}
