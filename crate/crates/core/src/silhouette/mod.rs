//! Binary search trees, their boundary functions and the silhouette
//! functionals `L_n` and `Y_n`, plus split tables for the limit measure.

mod records;
pub mod tree;
mod xi;

use num::{BigInt, BigRational, Zero};

pub use records::{harmonic, harmonic_exact, records_distribution, RecordsLaw, HARMONIC_EXACT_CAP, RECORDS_CAP};
pub(crate) use records::records_from;
pub use tree::{bst_insert_key, end_distance, BinaryTree, End, LabeledTree, Word};
pub use xi::{sample_xi_table, XiTable, XI_DEPTH_GUARD};

use crate::error::{domain, Result};

/// Default truncation depth for the limit functionals.
pub const DEFAULT_TRUNCATION: usize = 20;

/// `B_x(u)`: the first `k` with `(u_1, ..., u_k)` outside `x`.
pub fn boundary_function(x: &BinaryTree, u: &End) -> usize {
    let mut node = 0;
    let mut k = 1;
    while let Some(c) = x.child(node, u.bit(k)) {
        node = c;
        k += 1;
    }
    k
}

/// `L_n = sum_{u in x} 2^-|u|`, summed per depth.
pub fn silhouette_mass(x: &BinaryTree) -> f64 {
    weighted_profile(&x.depth_profile(), |_| 1.0)
}

/// `L_n = sum_{u in ∂x} |u| 2^-|u|`, the integral of `B_x` against Haar measure.
pub fn silhouette_mass_external(x: &BinaryTree) -> f64 {
    weighted_profile(&x.external_profile(), |d| d as f64)
}

fn weighted_profile(profile: &[u64], weight: impl Fn(usize) -> f64) -> f64 {
    profile
        .iter()
        .enumerate()
        .rev()
        .map(|(d, &c)| c as f64 * weight(d) * 0.5f64.powi(d as i32))
        .sum()
}

/// Exact `L_n`.
pub fn silhouette_mass_exact(x: &BinaryTree) -> BigRational {
    x.depth_profile()
        .iter()
        .enumerate()
        .map(|(d, &c)| BigRational::new(BigInt::from(c), BigInt::from(2).pow(d as u32)))
        .fold(BigRational::zero(), |a, b| a + b)
}

/// Both routes to `L_n`; errors if they disagree beyond `tol`.
pub fn silhouette_mass_checked(x: &BinaryTree, tol: f64) -> Result<f64> {
    let (a, b) = (silhouette_mass(x), silhouette_mass_external(x));
    if (a - b).abs() > tol {
        return domain(format!("silhouette routes disagree: {a} vs {b}"));
    }
    Ok(a)
}

/// `C(t) = 1 + (ln t + ln(1 - t)) / 2` on `(0, 1)`.
pub fn c_func(t: f64) -> Result<f64> {
    if !(t > 0.0 && t < 1.0) {
        return domain(format!("C(t) needs 0 < t < 1, got {t}"));
    }
    Ok(c_split(t, 1.0 - t))
}

/// `∫_0^1 C(t)^power dt` by tanh-sinh quadrature.
pub fn c_moment(power: i32, tol: f64) -> crate::quad::Quadrature {
    crate::quad::tanh_sinh(|t, s| c_split(t, s).powi(power), tol)
}

/// `C` from `t` and `1 - t` supplied separately, for arguments near 1.
pub(crate) fn c_split(t: f64, one_minus_t: f64) -> f64 {
    1.0 + 0.5 * (t.ln() + one_minus_t.ln())
}

/// Evaluator for the smoothed silhouette
/// `Y_n(u) = ∫_{v ≺ u} (B_x(v) - H(n)) dλ(v)` of one tree.
///
/// The integration range splits into the cylinders `A_{u(k)}`, `k ∈ K(u)`;
/// each cylinder integral is `j 2^-k + sum_{v in x, v >= u(k)} 2^-|v|` with
/// `j` the number of proper prefixes of `u(k)` in `x`. Ends are eventually
/// constant, so the sum is exact, including ends with infinitely many ones.
pub struct SmoothedSilhouette<'a> {
    tree: &'a BinaryTree,
    masses: Vec<f64>,
    harmonic_n: f64,
}

impl<'a> SmoothedSilhouette<'a> {
    pub fn new(tree: &'a BinaryTree) -> Self {
        SmoothedSilhouette {
            tree,
            masses: tree.subtree_masses(),
            harmonic_n: harmonic(tree.len() as u64),
        }
    }

    pub fn eval(&self, u: &End) -> f64 {
        let h = self.harmonic_n;
        let mut total = 0.0;
        let mut node = 0;
        let mut k = 1;
        // walk while the parent of u(k) is a tree node
        let exit = loop {
            let scale = 0.5f64.powi(k as i32);
            let bit = u.bit(k);
            if bit {
                let mass = self.tree.child(node, false).map_or(0.0, |c| self.masses[c]);
                total += (k as f64 - h) * scale + mass;
            }
            match self.tree.child(node, bit) {
                Some(c) => node = c,
                None => break k,
            }
            k += 1;
        };
        // beyond the exit depth every cylinder sees B = exit
        let prefix = u.prefix().len();
        let mut ones_mass: f64 = (exit + 1..=prefix)
            .filter(|&k| u.bit(k))
            .map(|k| 0.5f64.powi(k as i32))
            .sum();
        if u.tail() {
            ones_mass += 0.5f64.powi(exit.max(prefix) as i32);
        }
        total + (exit as f64 - h) * ones_mass
    }
}

/// `Y_n(u)` for the tree `x` with `n = #x`.
pub fn smoothed_silhouette(x: &BinaryTree, u: &End) -> f64 {
    SmoothedSilhouette::new(x).eval(u)
}

/// Bound on the part of a cylinder sum beyond depth `depth`:
/// `(depth + height + H(n)) 2^-depth`.
pub fn truncation_bound(depth: usize, height: usize, n: u64) -> f64 {
    (depth as f64 + height as f64 + harmonic(n)) * 0.5f64.powi(depth as i32)
}
