//! Labeled simple graphs on `[n] = {1, ..., n}`.
//!
//! Vertices are 1-based everywhere. Adjacency is stored as one bitset row per
//! vertex, so edge indicator queries are O(1) and column counts `e_j(G)` are a
//! masked popcount.

use std::fmt;

use num::{BigInt, BigRational, One, Zero};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{capability, domain, parse_err, Result};

/// Largest pattern size accepted by [`embedding_count`].
pub const EMBEDDING_GUARD: usize = 8;

/// Largest vertex count accepted by [`Graph::all_graphs`].
pub const ENUMERATION_GUARD: usize = 6;

const WORD: usize = 64;

fn words_for(n: usize) -> usize {
    n.div_ceil(WORD)
}

/// Simple graph on the vertex set `[n]`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Graph {
    n: usize,
    edges: usize,
    rows: Vec<Vec<u64>>,
}

impl Graph {
    /// Edgeless graph on `[n]`.
    pub fn empty(n: usize) -> Self {
        let w = words_for(n);
        Graph {
            n,
            edges: 0,
            rows: vec![vec![0; w]; n],
        }
    }

    /// The single-vertex graph, start state of every graph chain.
    pub fn point() -> Self {
        Self::empty(1)
    }

    pub fn complete(n: usize) -> Self {
        let mut g = Self::empty(n);
        for j in 2..=n {
            for i in 1..j {
                g.insert_unchecked(i, j);
            }
        }
        g
    }

    /// Builds a graph from a list of edges. Every pair must satisfy
    /// `1 <= i < j <= n` (either orientation is accepted) and appear once.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Self::empty(n);
        for (a, b) in edges {
            if !g.add_edge(a, b)? {
                return domain(format!("duplicate edge {{{a},{b}}}"));
            }
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    /// `C(n, 2)`, the number of vertex pairs.
    pub fn pair_count(&self) -> usize {
        self.n * self.n.saturating_sub(1) / 2
    }

    /// Adjacency test; false for loops and out-of-range vertices.
    #[inline]
    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        if a == b || a == 0 || b == 0 || a > self.n || b > self.n {
            return false;
        }
        let bit = b - 1;
        self.rows[a - 1][bit / WORD] >> (bit % WORD) & 1 == 1
    }

    /// Edge indicator `1_{i,j}(G)` for a pair with `i < j`. Pairs reaching
    /// beyond `[n]` are absent.
    pub fn edge_indicator(&self, i: usize, j: usize) -> Result<bool> {
        if i == 0 || i >= j {
            return domain(format!("pair ({i},{j}) must satisfy 1 <= i < j"));
        }
        Ok(self.has_edge(i, j))
    }

    /// `e_j(G)`: the number of `i < j` with `{i, j}` an edge.
    pub fn edges_into(&self, j: usize) -> Result<usize> {
        if j < 2 || j > self.n {
            return domain(format!("vertex {j} outside 2..={}", self.n));
        }
        Ok(self.column_count(j))
    }

    /// `e_j(G)` without range checks; 0 for `j < 2`.
    #[inline]
    pub(crate) fn column_count(&self, j: usize) -> usize {
        if j < 2 {
            return 0;
        }
        let row = &self.rows[j - 1];
        let below = j - 1; // bits 0..below are the vertices 1..j-1
        let full = below / WORD;
        let mut c: u32 = row[..full].iter().map(|w| w.count_ones()).sum();
        let rem = below % WORD;
        if rem > 0 {
            c += (row[full] & ((1u64 << rem) - 1)).count_ones();
        }
        c as usize
    }

    pub fn degree(&self, v: usize) -> usize {
        if v == 0 || v > self.n {
            return 0;
        }
        self.rows[v - 1].iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Neighbours of `v` in increasing order.
    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        let row: &[u64] = if v == 0 || v > self.n {
            &[]
        } else {
            &self.rows[v - 1]
        };
        row.iter().enumerate().flat_map(|(wi, &w)| BitIter(w).map(move |b| wi * WORD + b + 1))
    }

    /// Edges `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (1..=self.n).flat_map(move |i| self.neighbors(i).filter(move |&j| j > i).map(move |j| (i, j)))
    }

    /// Inserts `{a, b}`; returns whether the edge was new.
    pub fn add_edge(&mut self, a: usize, b: usize) -> Result<bool> {
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        if i == 0 || i == j || j > self.n {
            return domain(format!("edge {{{a},{b}}} is not a pair in [{}]", self.n));
        }
        if self.has_edge(i, j) {
            return Ok(false);
        }
        self.insert_unchecked(i, j);
        Ok(true)
    }

    /// Sets the bits for a pair known to be absent and in range.
    #[inline]
    pub(crate) fn insert_unchecked(&mut self, i: usize, j: usize) {
        debug_assert!(i != j && !self.has_edge(i, j));
        self.rows[i - 1][(j - 1) / WORD] |= 1 << ((j - 1) % WORD);
        self.rows[j - 1][(i - 1) / WORD] |= 1 << ((i - 1) % WORD);
        self.edges += 1;
    }

    /// Appends the isolated vertex `n + 1` and returns its label.
    pub fn add_vertex(&mut self) -> usize {
        self.n += 1;
        let w = words_for(self.n);
        if w > self.rows.first().map_or(0, Vec::len) {
            for row in &mut self.rows {
                row.resize(w, 0);
            }
        }
        self.rows.push(vec![0; w]);
        self.n
    }

    /// Words of the complement of row `j` restricted to the vertices `< j`:
    /// bit `b` of word `wi` is set iff `{wi * 64 + b + 1, j}` is absent.
    pub(crate) fn absent_words(&self, j: usize) -> impl Iterator<Item = (usize, u64)> + '_ {
        let row = &self.rows[j - 1];
        let below = j - 1;
        (0..below.div_ceil(WORD)).map(move |wi| {
            let mut mask = !row[wi];
            let hi = (wi + 1) * WORD;
            if hi > below {
                let keep = below - wi * WORD;
                mask &= if keep == WORD { u64::MAX } else { (1u64 << keep) - 1 };
            }
            (wi, mask)
        })
    }

    /// Word `wi` of the adjacency row of vertex `v`.
    #[inline]
    pub(crate) fn row_word(&self, v: usize, wi: usize) -> u64 {
        self.rows.get(v - 1).and_then(|r| r.get(wi)).copied().unwrap_or(0)
    }

    /// `Psi^n_m`: the graph induced on `[m]`.
    pub fn induced_prefix(&self, m: usize) -> Result<Graph> {
        if m == 0 || m > self.n {
            return domain(format!("prefix size {m} outside 1..={}", self.n));
        }
        let mut g = Graph::empty(m);
        for j in 2..=m {
            for i in self.neighbors(j).take_while(|&i| i < j) {
                g.insert_unchecked(i, j);
            }
        }
        Ok(g)
    }

    /// Relabels vertices: `{i, j}` becomes `{pi(i), pi(j)}`.
    pub fn permute(&self, pi: &Permutation) -> Result<Graph> {
        if pi.n() != self.n {
            return domain(format!(
                "permutation of [{}] applied to graph on [{}]",
                pi.n(),
                self.n
            ));
        }
        let mut g = Graph::empty(self.n);
        for (i, j) in self.edges() {
            g.insert_unchecked(pi.apply(i), pi.apply(j));
        }
        Ok(g)
    }

    /// Every labeled graph on `[n]`, ordered by the bitmask over pairs
    /// `(1,2), (1,3), (2,3), (1,4), ...`.
    pub fn all_graphs(n: usize) -> Result<impl Iterator<Item = Graph>> {
        if n == 0 || n > ENUMERATION_GUARD {
            return capability(format!(
                "enumerating graphs on [{n}] (supported: 1..={ENUMERATION_GUARD})"
            ));
        }
        let pairs: Vec<(usize, usize)> = (2..=n).flat_map(|j| (1..j).map(move |i| (i, j))).collect();
        Ok((0u64..1 << pairs.len()).map(move |mask| {
            let mut g = Graph::empty(n);
            for (b, &(i, j)) in pairs.iter().enumerate() {
                if mask >> b & 1 == 1 {
                    g.insert_unchecked(i, j);
                }
            }
            g
        }))
    }

    /// Parses the text format: a header `n m` followed by `m` lines `i j`
    /// with `1 <= i < j <= n`. Duplicates and out-of-range pairs are rejected.
    pub fn parse(text: &str) -> Result<Graph> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let Some((ln, header)) = lines.next() else {
            return parse_err(1, "missing header line `n m`");
        };
        let (n, m) = parse_pair(ln, header)?;
        let mut g = Graph::empty(n);
        let mut seen = 0;
        for (ln, line) in lines {
            let (i, j) = parse_pair(ln, line)?;
            if !(1 <= i && i < j && j <= n) {
                return parse_err(ln, format!("edge ({i},{j}) violates 1 <= i < j <= {n}"));
            }
            if g.has_edge(i, j) {
                return parse_err(ln, format!("duplicate edge ({i},{j})"));
            }
            g.insert_unchecked(i, j);
            seen += 1;
        }
        if seen != m {
            return parse_err(ln, format!("header announces {m} edges, found {seen}"));
        }
        Ok(g)
    }

    /// Inverse of [`Graph::parse`]; edges in lexicographic order.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.n, self.edges);
        for (i, j) in self.edges() {
            s.push_str(&format!("{i} {j}\n"));
        }
        s
    }
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Graph[{}]{{", self.n)?;
        for (k, (i, j)) in self.edges().enumerate() {
            if k > 0 {
                write!(f, " ")?;
            }
            write!(f, "{i}-{j}")?;
        }
        write!(f, "}}")
    }
}

fn parse_pair(ln: usize, line: &str) -> Result<(usize, usize)> {
    let mut it = line.split_whitespace();
    let mut next = || -> Result<usize> {
        match it.next().map(str::parse::<usize>) {
            Some(Ok(v)) => Ok(v),
            _ => parse_err(ln, format!("expected two unsigned integers, got `{line}`")),
        }
    };
    let a = next()?;
    let b = next()?;
    if it.next().is_some() {
        return parse_err(ln, format!("trailing tokens in `{line}`"));
    }
    Ok((a, b))
}

/// Iterator over the set bit positions of a word.
pub(crate) struct BitIter(pub u64);

impl Iterator for BitIter {
    type Item = usize;

    #[inline]
    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let b = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(b)
    }
}

/// Bijection of `[n]`, stored 1-based.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Permutation {
    image: Vec<usize>,
}

impl Permutation {
    /// `image[k]` is the image of `k + 1`.
    pub fn new(image: Vec<usize>) -> Result<Self> {
        let n = image.len();
        let mut seen = vec![false; n];
        for &v in &image {
            if v == 0 || v > n || seen[v - 1] {
                return domain(format!("{image:?} is not a permutation of [{n}]"));
            }
            seen[v - 1] = true;
        }
        Ok(Permutation { image })
    }

    pub fn identity(n: usize) -> Self {
        Permutation {
            image: (1..=n).collect(),
        }
    }

    /// Uniform permutation of `[n]` (Fisher-Yates).
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut image: Vec<usize> = (1..=n).collect();
        image.shuffle(rng);
        Permutation { image }
    }

    pub fn n(&self) -> usize {
        self.image.len()
    }

    #[inline]
    pub fn apply(&self, i: usize) -> usize {
        self.image[i - 1]
    }

    pub fn image(&self) -> &[usize] {
        &self.image
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.n()];
        for (k, &v) in self.image.iter().enumerate() {
            inv[v - 1] = k + 1;
        }
        Permutation { image: inv }
    }

    /// All `n!` permutations of `[n]` in lexicographic order.
    pub fn all(n: usize) -> Result<Vec<Permutation>> {
        if n > EMBEDDING_GUARD {
            return capability(format!("enumerating {n}! permutations"));
        }
        let mut out = Vec::new();
        let mut cur = Vec::with_capacity(n);
        let mut used = vec![false; n];
        fn rec(n: usize, cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Permutation>) {
            if cur.len() == n {
                out.push(Permutation { image: cur.clone() });
                return;
            }
            for v in 1..=n {
                if !used[v - 1] {
                    used[v - 1] = true;
                    cur.push(v);
                    rec(n, cur, used, out);
                    cur.pop();
                    used[v - 1] = false;
                }
            }
        }
        rec(n, &mut cur, &mut used, &mut out);
        Ok(out)
    }
}

/// `t(H, G)`: the number of injections `V(H) -> V(G)` that map edges to edges
/// and non-edges to non-edges (induced embeddings).
pub fn embedding_count(h: &Graph, g: &Graph) -> Result<u64> {
    let k = h.n();
    if k == 0 || g.n() == 0 {
        return domain("embedding_count needs non-empty vertex sets");
    }
    if k > EMBEDDING_GUARD {
        return capability(format!(
            "pattern with {k} vertices exceeds the embedding guard of {EMBEDDING_GUARD}"
        ));
    }
    if k > g.n() {
        return Ok(0);
    }
    let w = words_for(g.n());
    let mut all = vec![u64::MAX; w];
    if g.n() % WORD != 0 {
        all[w - 1] = (1u64 << (g.n() % WORD)) - 1;
    }
    let mut assigned = Vec::with_capacity(k);
    Ok(extend(h, g, &all, &mut assigned))
}

/// Counts completions of a partial embedding. The candidates for the next
/// pattern vertex are the unused host vertices whose adjacency to every
/// assigned vertex matches the pattern, kept as a bitset; the last vertex is
/// counted by popcount.
fn extend(h: &Graph, g: &Graph, all: &[u64], assigned: &mut Vec<usize>) -> u64 {
    let next = assigned.len() + 1;
    let mut cand = all.to_vec();
    for (a, &v) in assigned.iter().enumerate() {
        let row = &g.rows[v - 1];
        if h.has_edge(a + 1, next) {
            cand.iter_mut().zip(row).for_each(|(c, r)| *c &= r);
        } else {
            cand.iter_mut().zip(row).for_each(|(c, r)| *c &= !r);
        }
        let (wi, b) = ((v - 1) / WORD, (v - 1) % WORD);
        cand[wi] &= !(1u64 << b);
    }
    if next == h.n() {
        return cand.iter().map(|c| u64::from(c.count_ones())).sum();
    }
    let mut total = 0;
    for (wi, &word) in cand.iter().enumerate() {
        for b in BitIter(word) {
            assigned.push(wi * WORD + b + 1);
            total += extend(h, g, all, assigned);
            assigned.pop();
        }
    }
    total
}

/// `rho(H, G) = (v(G) - v(H))! / v(G)! * t(H, G)`: the probability that an
/// ordered uniform sample of `v(H)` distinct vertices of `G` induces `H`.
pub fn sampling_density(h: &Graph, g: &Graph) -> Result<f64> {
    check_density_sizes(h, g)?;
    let t = embedding_count(h, g)? as f64;
    let falling: f64 = (0..h.n()).map(|k| (g.n() - k) as f64).product();
    Ok(t / falling)
}

/// Exact rational version of [`sampling_density`].
pub fn sampling_density_exact(h: &Graph, g: &Graph) -> Result<BigRational> {
    check_density_sizes(h, g)?;
    let t = BigInt::from(embedding_count(h, g)?);
    let falling = (0..h.n()).fold(BigInt::one(), |acc, k| acc * BigInt::from(g.n() - k));
    if t.is_zero() {
        return Ok(BigRational::zero());
    }
    Ok(BigRational::new(t, falling))
}

fn check_density_sizes(h: &Graph, g: &Graph) -> Result<()> {
    if h.n() > g.n() {
        return domain(format!(
            "pattern on [{}] larger than host on [{}]",
            h.n(),
            g.n()
        ));
    }
    Ok(())
}
