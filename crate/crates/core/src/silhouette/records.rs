//! Harmonic numbers and the exact law of the record count.

use num::{BigInt, BigRational, One, Zero};

use crate::error::{capability, Result};

/// Largest `n` for which [`harmonic_exact`] builds the rational.
pub const HARMONIC_EXACT_CAP: u64 = 10_000;

/// Largest `n` accepted by [`records_distribution`].
pub const RECORDS_CAP: usize = 500;

/// `H(n) = sum_{k=1}^n 1/k` in floating point, summed smallest term first.
pub fn harmonic(n: u64) -> f64 {
    (1..=n).rev().map(|k| 1.0 / k as f64).sum()
}

/// `H(n)` as an exact rational, `n <= 10^4`.
pub fn harmonic_exact(n: u64) -> Result<BigRational> {
    if n > HARMONIC_EXACT_CAP {
        return capability(format!(
            "exact H({n}) above cap {HARMONIC_EXACT_CAP}; use the floating version"
        ));
    }
    Ok((1..=n).fold(BigRational::zero(), |acc, k| {
        acc + BigRational::new(BigInt::one(), BigInt::from(k))
    }))
}

/// Exact probability mass function on `{1, ..., n}`.
#[derive(Clone, Debug, PartialEq)]
pub struct RecordsLaw {
    /// `probs[k]` is `P(S_n = k)`; index 0 is unused and zero.
    probs: Vec<BigRational>,
}

impl RecordsLaw {
    pub fn n(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn prob(&self, k: usize) -> BigRational {
        self.probs.get(k).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn probs(&self) -> &[BigRational] {
        &self.probs
    }

    pub fn mean(&self) -> BigRational {
        self.probs
            .iter()
            .enumerate()
            .map(|(k, p)| p * BigInt::from(k))
            .sum()
    }

    pub fn total(&self) -> BigRational {
        self.probs.iter().sum()
    }
}

/// Law of `S_n = zeta_1 + ... + zeta_n` with independent
/// `P(zeta_k = 1) = 1/k`, by dynamic programming over `k`.
pub fn records_distribution(n: usize) -> Result<RecordsLaw> {
    records_from(1, 1, n)
}

/// Law of `S_n` given `S_m = k`, as a vector indexed by the value.
pub(crate) fn records_from(m: usize, k: usize, n: usize) -> Result<RecordsLaw> {
    if n == 0 || n > RECORDS_CAP {
        return capability(format!("records law for n = {n} (supported: 1..={RECORDS_CAP})"));
    }
    // numerators over the common denominator t! / m!
    let mut counts = vec![BigInt::zero(); n.max(k) + 2];
    counts[k] = BigInt::one();
    let mut denom = BigInt::one();
    for t in m + 1..=n {
        for s in (1..=t.min(counts.len() - 1)).rev() {
            let below = counts[s - 1].clone();
            counts[s] *= t - 1;
            counts[s] += below;
        }
        denom *= t;
    }
    let mut probs: Vec<BigRational> = counts.into_iter().map(|c| BigRational::new(c, denom.clone())).collect();
    probs.truncate(n + 1);
    Ok(RecordsLaw { probs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    #[test]
    fn harmonic_examples() {
        assert_eq!(harmonic_exact(0).unwrap(), q(0, 1));
        assert_eq!(harmonic_exact(1).unwrap(), q(1, 1));
        assert_eq!(harmonic_exact(4).unwrap(), q(25, 12));
        assert_eq!(harmonic(0), 0.0);
        assert!((harmonic(4) - 25.0 / 12.0).abs() < 1e-15);
        assert!(harmonic_exact(10_001).is_err());
    }

    /// Unsigned Stirling numbers of the first kind, `c(n, k)`.
    fn stirling1(n: usize) -> Vec<BigInt> {
        let mut row = vec![BigInt::one()];
        for m in 0..n {
            let mut next = vec![BigInt::zero(); row.len() + 1];
            for (k, c) in row.iter().enumerate() {
                next[k + 1] += c;
                next[k] += c * BigInt::from(m);
            }
            row = next;
        }
        row
    }

    #[test]
    fn records_examples() {
        let one = records_distribution(1).unwrap();
        assert_eq!(one.probs()[1..], [q(1, 1)]);
        let three = records_distribution(3).unwrap();
        assert_eq!(three.probs()[1..], [q(1, 3), q(1, 2), q(1, 6)]);
        assert!(records_distribution(501).is_err());
        assert!(records_distribution(0).is_err());
    }

    #[test]
    fn records_match_stirling_numbers() {
        for n in 1..=12 {
            let law = records_distribution(n).unwrap();
            let c = stirling1(n);
            let fact: BigInt = (1..=n).map(BigInt::from).product();
            for k in 1..=n {
                assert_eq!(law.prob(k), BigRational::new(c[k].clone(), fact.clone()));
            }
            assert_eq!(law.total(), q(1, 1));
            assert_eq!(law.mean(), harmonic_exact(n as u64).unwrap());
        }
    }

    #[test]
    fn conditional_law_shifts() {
        // from (2, 2) the next step goes up with probability 1/3
        let law = records_from(2, 2, 3).unwrap();
        assert_eq!(law.prob(3), q(1, 3));
        assert_eq!(law.prob(2), q(2, 3));
        assert_eq!(law.prob(1), q(0, 1));
    }
}
