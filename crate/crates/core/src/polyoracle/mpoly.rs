use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{invalid, Result};

/// Coefficients with magnitude below this are dropped.
pub const PRUNE: f64 = 1e-12;

/// Sparse polynomial in `n` variables `x_0..x_{n-1}`, keyed by exponent vector.
#[derive(Clone, PartialEq)]
pub struct MPoly {
    n: usize,
    terms: BTreeMap<Vec<u32>, f64>,
}

impl MPoly {
    pub fn zero(n: usize) -> Self {
        Self { n, terms: BTreeMap::new() }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        let mut p = Self::zero(n);
        p.insert(vec![0; n], c);
        p
    }

    /// The polynomial `x_i`.
    pub fn var(n: usize, i: usize) -> Self {
        let mut e = vec![0; n];
        e[i] = 1;
        let mut p = Self::zero(n);
        p.insert(e, 1.0);
        p
    }

    /// Single term `c · Π x_k^{exps[k]}`.
    pub fn monomial(exps: Vec<u32>, c: f64) -> Self {
        let mut p = Self::zero(exps.len());
        p.insert(exps, c);
        p
    }

    fn insert(&mut self, exps: Vec<u32>, c: f64) {
        let slot = self.terms.entry(exps).or_insert(0.0);
        *slot += c;
        if slot.abs() < PRUNE {
            self.terms.retain(|_, v| v.abs() >= PRUNE);
        }
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.n != other.n {
            return Err(invalid(format!("variable counts differ: {} vs {}", self.n, other.n)));
        }
        Ok(())
    }

    pub fn n_vars(&self) -> usize {
        self.n
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], f64)> + '_ {
        self.terms.iter().map(|(e, &c)| (e.as_slice(), c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient(&self, exps: &[u32]) -> f64 {
        self.terms.get(exps).copied().unwrap_or(0.0)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let mut out = self.clone();
        for (e, &c) in &other.terms {
            out.insert(e.clone(), c);
        }
        Ok(out)
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = Self::zero(self.n);
        for (e, &v) in &self.terms {
            out.insert(e.clone(), v * c);
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let mut out = Self::zero(self.n);
        for (ea, &ca) in &self.terms {
            for (eb, &cb) in &other.terms {
                let e = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                *out.terms.entry(e).or_insert(0.0) += ca * cb;
            }
        }
        out.terms.retain(|_, v| v.abs() >= PRUNE);
        Ok(out)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n {
            return Err(invalid(format!("point has {} coordinates for {} variables", x.len(), self.n)));
        }
        Ok(self
            .terms
            .iter()
            .map(|(e, &c)| c * e.iter().zip(x).map(|(&k, &v)| v.powi(k as i32)).product::<f64>())
            .sum())
    }

    /// Renames variable `k` to `perm[k]`.
    pub fn relabel(&self, perm: &[usize]) -> Self {
        let mut out = Self::zero(self.n);
        for (e, &c) in &self.terms {
            let mut f = vec![0; self.n];
            for (k, &p) in e.iter().enumerate() {
                f[perm[k]] = p;
            }
            out.insert(f, c);
        }
        out
    }

    /// Largest coefficient difference over the union of both supports.
    pub fn max_coeff_diff(&self, other: &Self) -> f64 {
        let keys: BTreeSet<&Vec<u32>> = self.terms.keys().chain(other.terms.keys()).collect();
        keys.into_iter()
            .map(|e| (self.coefficient(e) - other.coefficient(e)).abs())
            .fold(0.0, f64::max)
    }
}

impl fmt::Debug for MPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        let mut first = true;
        for (e, c) in &self.terms {
            if !first {
                f.write_str(" + ")?;
            }
            first = false;
            write!(f, "{c}")?;
            for (k, &p) in e.iter().enumerate() {
                match p {
                    0 => {}
                    1 => write!(f, "·x{k}")?,
                    _ => write!(f, "·x{k}^{p}")?,
                }
            }
        }
        Ok(())
    }
}

/// Total degrees present across all terms of all polynomials.
pub fn degree_spectrum(polys: &[MPoly]) -> BTreeSet<u32> {
    polys
        .iter()
        .flat_map(|p| p.terms.keys().map(|e| e.iter().sum()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_of_variables() {
        let p = MPoly::var(2, 0).mul(&MPoly::var(2, 1)).unwrap();
        assert_eq!(p.coefficient(&[1, 1]), 1.0);
        assert_eq!(p.num_terms(), 1);
    }

    #[test]
    fn cancellation_leaves_no_terms() {
        let p = MPoly::var(3, 0).add(&MPoly::var(3, 2)).unwrap();
        assert!(p.add(&p.scale(-1.0)).unwrap().is_zero());
    }

    #[test]
    fn binomial_square() {
        let s = MPoly::var(2, 0).add(&MPoly::var(2, 1)).unwrap();
        let sq = s.mul(&s).unwrap();
        assert_eq!(sq.coefficient(&[2, 0]), 1.0);
        assert_eq!(sq.coefficient(&[1, 1]), 2.0);
        assert_eq!(sq.coefficient(&[0, 2]), 1.0);
        assert_eq!(sq.num_terms(), 3);
        assert_eq!(sq.evaluate(&[2.0, 3.0]).unwrap(), 25.0);
    }

    #[test]
    fn mismatched_variable_counts() {
        assert!(MPoly::var(2, 0).add(&MPoly::var(3, 0)).is_err());
        assert!(MPoly::var(2, 0).mul(&MPoly::var(3, 0)).is_err());
    }

    #[test]
    fn spectrum_of_zero_is_empty() {
        assert!(degree_spectrum(&[MPoly::zero(3)]).is_empty());
        let p = MPoly::var(2, 0).add(&MPoly::monomial(vec![2, 1], 3.0)).unwrap();
        assert_eq!(degree_spectrum(&[p]).into_iter().collect::<Vec<_>>(), vec![1, 3]);
    }
}
