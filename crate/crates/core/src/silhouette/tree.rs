//! Words, ends and binary trees over the complete binary tree `{0,1}*`.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use rand::Rng;

use crate::error::{domain, parse_err, Error, Result};

/// Finite 0-1 word; the empty word is the root.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word(Vec<bool>);

impl Word {
    pub fn root() -> Self {
        Word(Vec::new())
    }

    pub fn from_bits(bits: impl IntoIterator<Item = bool>) -> Self {
        Word(bits.into_iter().collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    /// `u0` for `false`, `u1` for `true`.
    pub fn child(&self, bit: bool) -> Word {
        let mut w = self.0.clone();
        w.push(bit);
        Word(w)
    }

    /// Direct ancestor; `None` at the root.
    pub fn parent(&self) -> Option<Word> {
        if self.0.is_empty() {
            None
        } else {
            Some(Word(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    /// Prefix order: `self <= other`.
    pub fn is_prefix_of(&self, other: &Word) -> bool {
        other.0.starts_with(&self.0)
    }

    pub fn concat(&self, other: &Word) -> Word {
        Word(self.0.iter().chain(&other.0).copied().collect())
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("-");
        }
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Word({self})")
    }
}

impl FromStr for Word {
    type Err = Error;

    /// `-` (or the empty string) is the root; otherwise a string over `{0,1}`.
    fn from_str(s: &str) -> Result<Word> {
        let s = s.trim();
        if s == "-" || s.is_empty() {
            return Ok(Word::root());
        }
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => domain(format!("`{s}` is not a 0-1 word")),
            })
            .collect::<Result<Vec<_>>>()
            .map(Word)
    }
}

/// End of the complete binary tree: an infinite 0-1 sequence that is
/// eventually constant, stored as a prefix followed by a repeating tail bit.
///
/// The prefix is kept normalized (it never ends with the tail bit), so equal
/// sequences have equal representations. Ends that are not eventually
/// constant form a Haar-null set and are approximated by truncation.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct End {
    prefix: Vec<bool>,
    tail: bool,
}

impl End {
    pub fn new(prefix: impl IntoIterator<Item = bool>, tail: bool) -> Self {
        let mut prefix: Vec<bool> = prefix.into_iter().collect();
        while prefix.last() == Some(&tail) {
            prefix.pop();
        }
        End { prefix, tail }
    }

    pub fn zeros() -> Self {
        End::new([], false)
    }

    pub fn ones() -> Self {
        End::new([], true)
    }

    /// Grid point `index` of the depth-`depth` grid: the binary expansion of
    /// `index` followed by zeros, so `beta` of the result is `index / 2^depth`.
    pub fn grid(depth: usize, index: u64) -> Self {
        End::new((0..depth).map(|k| index >> (depth - 1 - k) & 1 == 1), false)
    }

    /// Uniform random end truncated to `depth` bits (zeros afterwards).
    pub fn random<R: Rng + ?Sized>(depth: usize, rng: &mut R) -> Self {
        End::new((0..depth).map(|_| rng.random_bool(0.5)), false)
    }

    pub fn prefix(&self) -> &[bool] {
        &self.prefix
    }

    pub fn tail(&self) -> bool {
        self.tail
    }

    /// Coordinate `u_k`, 1-based.
    pub fn bit(&self, k: usize) -> bool {
        assert!(k >= 1, "end coordinates are 1-based");
        self.prefix.get(k - 1).copied().unwrap_or(self.tail)
    }

    /// `(u_1, ..., u_k)`.
    pub fn word(&self, k: usize) -> Word {
        Word::from_bits((1..=k).map(|i| self.bit(i)))
    }

    /// `u(k) = (u_1, ..., u_{k-1}, 0)`.
    pub fn u_of(&self, k: usize) -> Word {
        self.word(k - 1).child(false)
    }

    /// `K(u) = {k : u_k = 1}` if finite.
    pub fn one_positions(&self) -> Option<Vec<usize>> {
        if self.tail {
            return None;
        }
        Some(self.one_positions_upto(self.prefix.len()))
    }

    /// `K(u) ∩ [1, m]`.
    pub fn one_positions_upto(&self, m: usize) -> Vec<usize> {
        (1..=m).filter(|&k| self.bit(k)).collect()
    }

    /// First coordinate where the ends differ, or `None` if equal.
    pub fn first_difference(&self, other: &End) -> Option<usize> {
        let span = self.prefix.len().max(other.prefix.len()) + 1;
        (1..=span).find(|&k| self.bit(k) != other.bit(k))
    }

    /// The total order `u ≺ v`: at the first difference `u` has 0, `v` has 1.
    pub fn precedes(&self, other: &End) -> bool {
        match self.first_difference(other) {
            Some(l) => !self.bit(l),
            None => false,
        }
    }

    /// `beta(u) = 1/2 + sum_k (2 u_k - 1) / 2^(k+1)`, i.e. the binary number `0.u_1 u_2 ...`.
    pub fn beta(&self) -> f64 {
        let l = self.prefix.len();
        let mut x = if self.tail { 0.5f64.powi(l as i32) } else { 0.0 };
        for (k, &b) in self.prefix.iter().enumerate().rev() {
            if b {
                x += 0.5f64.powi(k as i32 + 1);
            }
        }
        x
    }
}

impl Ord for End {
    fn cmp(&self, other: &Self) -> Ordering {
        match self.first_difference(other) {
            None => Ordering::Equal,
            Some(l) if self.bit(l) => Ordering::Greater,
            Some(_) => Ordering::Less,
        }
    }
}

impl PartialOrd for End {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// `d(u, v) = 2^(1 - l)` with `l` the first differing coordinate; 0 if equal.
pub fn end_distance(u: &End, v: &End) -> f64 {
    match u.first_difference(v) {
        None => 0.0,
        Some(l) => 0.5f64.powi(l as i32 - 1),
    }
}

impl fmt::Display for End {
    /// `0110(0)`: prefix, then the repeating tail bit in parentheses.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.prefix {
            f.write_str(if b { "1" } else { "0" })?;
        }
        write!(f, "({})", u8::from(self.tail))
    }
}

impl fmt::Debug for End {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "End({self})")
    }
}

impl FromStr for End {
    type Err = Error;

    /// Accepts `0110(0)`, `(1)`, or a bare word (tail 0).
    fn from_str(s: &str) -> Result<End> {
        let s = s.trim();
        let (body, tail) = match s.strip_suffix(')').and_then(|t| t.rsplit_once('(')) {
            Some((body, "0")) => (body, false),
            Some((body, "1")) => (body, true),
            Some(_) => return domain(format!("bad tail in end `{s}`")),
            None => (s, false),
        };
        let w: Word = body.parse()?;
        Ok(End::new(w.0, tail))
    }
}

const NONE: u32 = u32::MAX;

#[derive(Clone, Debug)]
struct Node {
    depth: u32,
    parent: u32,
    children: [u32; 2],
    /// Index into `BinaryTree::slots` for each missing child.
    slot: [u32; 2],
}

/// Finite prefix-stable set of words containing the root.
///
/// Nodes live in an arena (parents before children); the external nodes are
/// kept in a slot list so that a uniform external node can be drawn in O(1).
/// Equality, ordering and hashing depend on the word set only.
#[derive(Clone)]
pub struct BinaryTree {
    nodes: Vec<Node>,
    /// External nodes as (parent node, side).
    slots: Vec<(u32, u8)>,
}

impl BinaryTree {
    /// `{∅}`, the start state of the BST chain.
    pub fn root_only() -> Self {
        BinaryTree {
            nodes: vec![Node {
                depth: 0,
                parent: NONE,
                children: [NONE; 2],
                slot: [0, 1],
            }],
            slots: vec![(0, 0), (0, 1)],
        }
    }

    /// Builds a tree from its word set; fails unless the set contains the
    /// root and is prefix-stable.
    pub fn from_words<I>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = Word>,
    {
        let mut ws: Vec<Word> = words.into_iter().collect();
        ws.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
        ws.dedup();
        if ws.first().map(Word::is_root) != Some(true) {
            return domain("a binary tree must contain the root");
        }
        let mut t = BinaryTree::root_only();
        for w in &ws[1..] {
            t.insert_external(w)
                .map_err(|_| Error::Domain(format!("word {w} has no parent in the set")))?;
        }
        Ok(t)
    }

    /// `#x`, the number of nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Largest word length.
    pub fn height(&self) -> usize {
        self.nodes.iter().map(|n| n.depth as usize).max().unwrap_or(0)
    }

    pub fn external_count(&self) -> usize {
        self.slots.len()
    }

    pub(crate) fn child(&self, node: usize, bit: bool) -> Option<usize> {
        let c = self.nodes[node].children[bit as usize];
        (c != NONE).then_some(c as usize)
    }

    /// Arena index of `w`, if present.
    pub(crate) fn locate(&self, w: &Word) -> Option<usize> {
        let mut node = 0;
        for &b in w.bits() {
            node = self.child(node, b)?;
        }
        Some(node)
    }

    pub fn contains(&self, w: &Word) -> bool {
        self.locate(w).is_some()
    }

    fn word_of(&self, mut node: usize) -> Word {
        let mut bits = Vec::with_capacity(self.nodes[node].depth as usize);
        while self.nodes[node].parent != NONE {
            let p = self.nodes[node].parent as usize;
            bits.push(self.nodes[p].children[1] == node as u32);
            node = p;
        }
        bits.reverse();
        Word(bits)
    }

    /// Adds the external node `w`; errors if `w` is not external.
    pub fn insert_external(&mut self, w: &Word) -> Result<()> {
        let Some(parent_word) = w.parent() else {
            return domain("the root is never external");
        };
        let Some(p) = self.locate(&parent_word) else {
            return domain(format!("{w} is not an external node (parent missing)"));
        };
        let side = *w.bits().last().unwrap();
        if self.child(p, side).is_some() {
            return domain(format!("{w} is already in the tree"));
        }
        let slot = self.nodes[p].slot[side as usize] as usize;
        self.fill_slot(slot);
        Ok(())
    }

    /// Fills external slot `slot` (an index below `external_count()`) and
    /// returns the arena index of the new node.
    pub(crate) fn fill_slot(&mut self, slot: usize) -> usize {
        let (p, side) = self.slots[slot];
        let idx = self.nodes.len() as u32;
        let base = self.slots.len() as u32 - 1;
        self.slots.swap_remove(slot);
        if slot < self.slots.len() {
            let (mp, ms) = self.slots[slot];
            self.nodes[mp as usize].slot[ms as usize] = slot as u32;
        }
        let depth = self.nodes[p as usize].depth + 1;
        self.nodes[p as usize].children[side as usize] = idx;
        self.nodes[p as usize].slot[side as usize] = NONE;
        self.nodes.push(Node {
            depth,
            parent: p,
            children: [NONE; 2],
            slot: [base, base + 1],
        });
        self.slots.push((idx, 0));
        self.slots.push((idx, 1));
        idx as usize
    }

    /// Word of the external node in slot `slot`.
    pub(crate) fn slot_word(&self, slot: usize) -> Word {
        let (p, side) = self.slots[slot];
        self.word_of(p as usize).child(side == 1)
    }

    /// Fills a uniformly chosen external node and returns its word.
    pub fn grow<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Word {
        let slot = rng.random_range(0..self.slots.len());
        let node = self.fill_slot(slot);
        self.word_of(node)
    }

    /// All words in depth-first order (node, left subtree, right subtree).
    pub fn words(&self) -> Vec<Word> {
        let mut out = Vec::with_capacity(self.len());
        let mut stack = vec![(0usize, Word::root())];
        while let Some((node, w)) = stack.pop() {
            for b in [true, false] {
                if let Some(c) = self.child(node, b) {
                    stack.push((c, w.child(b)));
                }
            }
            out.push(w);
        }
        out
    }

    /// `∂x`, the external nodes, sorted.
    pub fn external_nodes(&self) -> Vec<Word> {
        let mut out: Vec<Word> = (0..self.slots.len()).map(|s| self.slot_word(s)).collect();
        out.sort();
        out
    }

    /// `#x(u)`: size of the fringe subtree rooted at `u` (0 if `u` is absent).
    pub fn subtree_size(&self, u: &Word) -> usize {
        match self.locate(u) {
            None => 0,
            Some(node) => self.subtree_sizes()[node],
        }
    }

    /// Fringe subtree sizes indexed by arena position.
    pub(crate) fn subtree_sizes(&self) -> Vec<usize> {
        let mut size = vec![1usize; self.nodes.len()];
        for k in (1..self.nodes.len()).rev() {
            let p = self.nodes[k].parent as usize;
            size[p] += size[k];
        }
        size
    }

    /// Node counts per depth.
    pub fn depth_profile(&self) -> Vec<u64> {
        let mut h = vec![0u64; self.height() + 1];
        for n in &self.nodes {
            h[n.depth as usize] += 1;
        }
        h
    }

    /// External node counts per depth.
    pub fn external_profile(&self) -> Vec<u64> {
        let mut h = vec![0u64; self.height() + 2];
        for &(p, _) in &self.slots {
            h[self.nodes[p as usize].depth as usize + 1] += 1;
        }
        h
    }

    /// Per-node `2^-|v|` summed over the fringe subtree, indexed by arena
    /// position: `sum_{v in x, v >= u} 2^-|v|`.
    pub(crate) fn subtree_masses(&self) -> Vec<f64> {
        let mut mass: Vec<f64> = self.nodes.iter().map(|n| 0.5f64.powi(n.depth as i32)).collect();
        for k in (1..self.nodes.len()).rev() {
            let p = self.nodes[k].parent as usize;
            mass[p] += mass[k];
        }
        mass
    }

    /// Preorder shape code: 1 for a node, 0 for a missing child.
    fn shape_code(&self) -> Vec<u8> {
        let mut code = Vec::with_capacity(2 * self.len() + 1);
        let mut stack = vec![Some(0usize)];
        while let Some(item) = stack.pop() {
            match item {
                None => code.push(0),
                Some(node) => {
                    code.push(1);
                    stack.push(self.child(node, true));
                    stack.push(self.child(node, false));
                }
            }
        }
        code
    }

    /// Parses one word per line (`-` for the root); blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut words = Vec::new();
        for (k, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match line.parse::<Word>() {
                Ok(w) => words.push(w),
                Err(e) => return parse_err(k + 1, e.to_string()),
            }
        }
        let mut sorted = words.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != words.len() {
            return parse_err(0, "duplicate word");
        }
        BinaryTree::from_words(words).map_err(|e| Error::Parse {
            line: 0,
            msg: e.to_string(),
        })
    }

    /// One word per line in depth-first order.
    pub fn to_text(&self) -> String {
        self.words().iter().map(|w| format!("{w}\n")).collect()
    }
}

impl PartialEq for BinaryTree {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len() && self.shape_code() == other.shape_code()
    }
}

impl Eq for BinaryTree {}

impl Hash for BinaryTree {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.shape_code().hash(state);
    }
}

impl Ord for BinaryTree {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len()
            .cmp(&other.len())
            .then_with(|| self.shape_code().cmp(&other.shape_code()))
    }
}

impl PartialOrd for BinaryTree {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for BinaryTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut ws = self.words();
        ws.sort();
        f.debug_set().entries(ws.iter().map(|w| w.to_string())).finish()
    }
}

/// Binary search tree carrying its keys.
#[derive(Clone, Debug)]
pub struct LabeledTree {
    tree: BinaryTree,
    keys: Vec<f64>,
}

impl LabeledTree {
    /// Tree holding the single key `first` at the root.
    pub fn new(first: f64) -> Result<Self> {
        if first.is_nan() {
            return domain("NaN key");
        }
        Ok(LabeledTree {
            tree: BinaryTree::root_only(),
            keys: vec![first],
        })
    }

    /// Builds the tree by inserting `keys` in order.
    pub fn from_keys(keys: &[f64]) -> Result<Self> {
        let Some((&first, rest)) = keys.split_first() else {
            return domain("at least one key is needed");
        };
        let mut t = LabeledTree::new(first)?;
        for &k in rest {
            t.insert(k)?;
        }
        Ok(t)
    }

    pub fn shape(&self) -> &BinaryTree {
        &self.tree
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Standard BST insertion: left when smaller than the stored key, right
    /// otherwise. Returns the word of the new node.
    pub fn insert(&mut self, key: f64) -> Result<Word> {
        if key.is_nan() {
            return domain("NaN key");
        }
        let mut node = 0;
        loop {
            let stored = self.keys[node];
            if key == stored {
                return domain(format!("duplicate key {key}"));
            }
            let bit = key > stored;
            match self.tree.child(node, bit) {
                Some(c) => node = c,
                None => {
                    let slot = self.tree.nodes[node].slot[bit as usize] as usize;
                    let new = self.tree.fill_slot(slot);
                    debug_assert_eq!(new, self.keys.len());
                    self.keys.push(key);
                    return Ok(self.tree.word_of(new));
                }
            }
        }
    }
}

/// `bst_insert_key`: inserts `key` into a labeled tree.
pub fn bst_insert_key(t: &mut LabeledTree, key: f64) -> Result<Word> {
    t.insert(key)
}
