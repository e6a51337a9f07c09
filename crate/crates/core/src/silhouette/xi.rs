//! Tables of the independent uniform splits `xi_u` that determine the limit
//! measure of the BST chain, and the functionals built from them.

use rand::Rng;

use super::tree::{End, Word};
use super::c_func;
use crate::error::{capability, domain, parse_err, Error, Result};
use crate::rng::open01;

/// Largest table depth accepted by [`XiTable::sample`] (`2^24 - 1` entries).
pub const XI_DEPTH_GUARD: usize = 24;

/// Split values `xi_u` for every word `u` with `|u| < depth`.
///
/// The limit measure assigns `X(A_u0) = xi_u X(A_u)` and
/// `X(A_u1) = (1 - xi_u) X(A_u)`; the table with every entry `1/2` is the
/// Haar measure `lambda(A_u) = 2^-|u|`.
#[derive(Clone, Debug, PartialEq)]
pub struct XiTable {
    depth: usize,
    /// Heap order: word of length `l` with binary value `b` sits at `2^l - 1 + b`.
    xi: Vec<f64>,
}

fn index_of(w: &Word) -> usize {
    let b = w.bits().iter().fold(0usize, |acc, &bit| acc << 1 | bit as usize);
    (1usize << w.len()) - 1 + b
}

impl XiTable {
    /// Builds a table from heap-ordered values.
    pub fn from_values(depth: usize, xi: Vec<f64>) -> Result<Self> {
        if depth == 0 || depth > XI_DEPTH_GUARD {
            return capability(format!("xi table depth {depth} outside 1..={XI_DEPTH_GUARD}"));
        }
        if xi.len() != (1 << depth) - 1 {
            return domain(format!("depth {depth} needs {} values, got {}", (1 << depth) - 1, xi.len()));
        }
        if let Some(v) = xi.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return domain(format!("xi value {v} outside (0, 1)"));
        }
        Ok(XiTable { depth, xi })
    }

    /// I.i.d. uniform(0, 1) entries.
    pub fn sample<R: Rng + ?Sized>(depth: usize, rng: &mut R) -> Result<Self> {
        if depth == 0 || depth > XI_DEPTH_GUARD {
            return capability(format!("xi table depth {depth} outside 1..={XI_DEPTH_GUARD}"));
        }
        let xi = (0..(1usize << depth) - 1).map(|_| open01(rng)).collect();
        Ok(XiTable { depth, xi })
    }

    /// Every entry equal to `1/2`.
    pub fn haar(depth: usize) -> Result<Self> {
        Self::from_values(depth, vec![0.5; (1usize << depth.min(XI_DEPTH_GUARD + 1)) - 1])
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn values(&self) -> &[f64] {
        &self.xi
    }

    /// `xi_u` for `|u| < depth`.
    pub fn get(&self, u: &Word) -> Option<f64> {
        (u.len() < self.depth).then(|| self.xi[index_of(u)])
    }

    /// Overwrites `xi_u`.
    pub fn set(&mut self, u: &Word, value: f64) -> Result<()> {
        if u.len() >= self.depth {
            return domain(format!("word {u} below table depth {}", self.depth));
        }
        if !(value > 0.0 && value < 1.0) {
            return domain(format!("xi value {value} outside (0, 1)"));
        }
        self.xi[index_of(u)] = value;
        Ok(())
    }

    fn split(&self, prefix: &[bool], bit: bool) -> f64 {
        let b = prefix.iter().fold(0usize, |acc, &x| acc << 1 | x as usize);
        let xi = self.xi[(1usize << prefix.len()) - 1 + b];
        if bit {
            1.0 - xi
        } else {
            xi
        }
    }

    fn check_word(&self, u: &Word) -> Result<()> {
        if u.len() > self.depth {
            return domain(format!("word {u} deeper than table depth {}", self.depth));
        }
        Ok(())
    }

    /// `X(A_u)`: product of `xi` or `1 - xi` along the path to `u`.
    pub fn cylinder_mass(&self, u: &Word) -> Result<f64> {
        self.check_word(u)?;
        let bits = u.bits();
        Ok((0..bits.len()).map(|k| self.split(&bits[..k], bits[k])).product())
    }

    /// `Z_|u|(u) = X(A_u) / 2^-|u|`, the density of `X` against Haar measure
    /// on the level of `u`.
    pub fn density_path(&self, u: &Word) -> Result<f64> {
        self.check_word(u)?;
        let bits = u.bits();
        Ok((0..bits.len()).map(|k| 2.0 * self.split(&bits[..k], bits[k])).product())
    }

    /// `sum_{|u| < k} 2^-|u| C(xi_u)`.
    pub fn l_infty_partial(&self, k: usize) -> Result<f64> {
        if k > self.depth {
            return domain(format!("level {k} beyond table depth {}", self.depth));
        }
        Ok((0..k)
            .map(|level| {
                let start = (1usize << level) - 1;
                let sum: f64 = self.xi[start..start + (1 << level)].iter().map(|&x| c_unchecked(x)).sum();
                sum * 0.5f64.powi(level as i32)
            })
            .sum())
    }

    /// `k + sum_{|u| = k} 2^-k ln X(A_u)`: the level-`k` relative entropy
    /// expression, equal to [`XiTable::l_infty_partial`] by telescoping.
    pub fn kl_identity_rhs(&self, k: usize) -> Result<f64> {
        if k > self.depth {
            return domain(format!("level {k} beyond table depth {}", self.depth));
        }
        let mut logs = vec![0.0f64];
        for level in 0..k {
            let start = (1usize << level) - 1;
            logs = logs
                .iter()
                .enumerate()
                .flat_map(|(b, &l)| {
                    let x = self.xi[start + b];
                    [l + x.ln(), l + (1.0 - x).ln()]
                })
                .collect();
        }
        let mean_log: f64 = logs.iter().sum::<f64>() * 0.5f64.powi(k as i32);
        Ok(k as f64 + mean_log)
    }

    /// `L_infty(w) = sum_{v >= w, |v| < d} 2^-|v| C(xi_v)` truncated at
    /// `d = truncation` (at most the table depth).
    pub fn l_infty_at(&self, w: &Word, truncation: usize) -> Result<f64> {
        if truncation > self.depth {
            return domain(format!("truncation {truncation} beyond table depth {}", self.depth));
        }
        let base = w.bits().iter().fold(0usize, |acc, &x| acc << 1 | x as usize);
        let mut total = 0.0;
        for level in w.len()..truncation {
            let extra = level - w.len();
            let start = (1usize << level) - 1 + (base << extra);
            let sum: f64 = self.xi[start..start + (1 << extra)].iter().map(|&x| c_unchecked(x)).sum();
            total += sum * 0.5f64.powi(level as i32);
        }
        Ok(total)
    }

    /// `Y'_{infty,m}(u) = sum_{k in K(u), k <= m} L_infty(u(k))`, each term
    /// truncated at the table depth.
    pub fn y_prime_partial(&self, u: &End, m: usize) -> Result<f64> {
        if m > self.depth {
            return domain(format!("m = {m} beyond table depth {}", self.depth));
        }
        u.one_positions_upto(m)
            .into_iter()
            .map(|k| self.l_infty_at(&u.u_of(k), self.depth))
            .sum()
    }

    /// `Y''_{infty,m}(u) = sum_{k in K(u), k <= m} 2^-k ln(2^k X(A_{u(k)}))`.
    pub fn y_doubleprime_partial(&self, u: &End, m: usize) -> Result<f64> {
        if m > self.depth {
            return domain(format!("m = {m} beyond table depth {}", self.depth));
        }
        u.one_positions_upto(m)
            .into_iter()
            .map(|k| Ok(0.5f64.powi(k as i32) * self.density_path(&u.u_of(k))?.ln()))
            .sum()
    }

    /// Parses lines `word value`; the depth is one more than the longest word
    /// and every word above it must be present exactly once.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let (Some(ws), Some(vs), None) = (it.next(), it.next(), it.next()) else {
                return parse_err(k + 1, format!("expected `word value`, got `{line}`"));
            };
            let word: Word = ws.parse().or_else(|e: Error| parse_err(k + 1, e.to_string()))?;
            let value: f64 = vs
                .parse()
                .or_else(|_| parse_err(k + 1, format!("bad value `{vs}`")))?;
            entries.push((k + 1, word, value));
        }
        let depth = entries.iter().map(|(_, w, _)| w.len() + 1).max().unwrap_or(0);
        if depth == 0 || depth > XI_DEPTH_GUARD {
            return parse_err(0, format!("table depth {depth} outside 1..={XI_DEPTH_GUARD}"));
        }
        let mut xi = vec![f64::NAN; (1 << depth) - 1];
        for (line, word, value) in entries {
            let slot = &mut xi[index_of(&word)];
            if !slot.is_nan() {
                return parse_err(line, format!("duplicate word {word}"));
            }
            *slot = value;
        }
        if xi.iter().any(|v| v.is_nan()) {
            return parse_err(0, format!("table incomplete for depth {depth}"));
        }
        XiTable::from_values(depth, xi).map_err(|e| Error::Parse {
            line: 0,
            msg: e.to_string(),
        })
    }

    /// Lines `word value` in heap order, shortest round-trip formatting.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for level in 0..self.depth {
            for b in 0..1usize << level {
                let w = Word::from_bits((0..level).map(|k| b >> (level - 1 - k) & 1 == 1));
                s.push_str(&format!("{w} {:?}\n", self.xi[(1 << level) - 1 + b]));
            }
        }
        s
    }
}

fn c_unchecked(t: f64) -> f64 {
    c_func(t).expect("table values lie in (0, 1)")
}

/// `sample_xi_table`: i.i.d. uniform table of the given depth.
pub fn sample_xi_table<R: Rng + ?Sized>(depth: usize, rng: &mut R) -> Result<XiTable> {
    XiTable::sample(depth, rng)
}
