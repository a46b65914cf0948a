//! Multi-indices: d-tuples of non-negative integers that index mixed partial
//! derivatives `D^α` and monomials `x^α`.

use std::fmt;
use std::ops::Add;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default upper bound on the number of indices a single enumeration may produce.
pub const DEFAULT_ENUMERATION_CAP: usize = 1_000_000;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    /// Builds an index from its components. The dimension must be at least one.
    pub fn new(components: Vec<u32>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::usage("multi-index dimension must be at least 1"));
        }
        Ok(MultiIndex(components))
    }

    pub fn zero(dim: usize) -> Self {
        assert!(dim >= 1, "multi-index dimension must be at least 1");
        MultiIndex(vec![0; dim])
    }

    /// The unit index `e_i` (0-based coordinate).
    pub fn unit(dim: usize, i: usize) -> Self {
        let mut m = Self::zero(dim);
        m.0[i] = 1;
        m
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[u32] {
        &self.0
    }

    /// `|α| = α_1 + … + α_d`.
    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    /// `α! = α_1!·…·α_d!`, exact.
    pub fn factorial(&self) -> Result<u128> {
        self.0.iter().try_fold(1u128, |acc, &a| {
            acc.checked_mul(factorial(a)?)
                .ok_or_else(|| Error::Overflow(format!("{self}! exceeds u128")))
        })
    }

    /// `x^α` with the convention `0^0 = 1`.
    pub fn monomial(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::usage(format!(
                "point has dimension {} but multi-index has dimension {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(self
            .0
            .iter()
            .zip(x)
            .map(|(&a, &xi)| xi.powi(a as i32))
            .product())
    }

    pub fn all_even(&self) -> bool {
        self.0.iter().all(|a| a % 2 == 0)
    }

    pub fn any_odd(&self) -> bool {
        !self.all_even()
    }

    /// Componentwise half of an all-even index.
    pub fn halved(&self) -> Option<MultiIndex> {
        self.all_even()
            .then(|| MultiIndex(self.0.iter().map(|a| a / 2).collect()))
    }

    /// Componentwise double.
    pub fn doubled(&self) -> MultiIndex {
        MultiIndex(self.0.iter().map(|a| 2 * a).collect())
    }

    /// `α + e_i`.
    pub fn shifted(&self, i: usize) -> MultiIndex {
        let mut m = self.clone();
        m.0[i] += 1;
        m
    }

    pub fn checked_add(&self, other: &MultiIndex) -> Result<MultiIndex> {
        if self.dim() != other.dim() {
            return Err(Error::usage("multi-index dimensions differ"));
        }
        Ok(MultiIndex(
            self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect(),
        ))
    }

    /// `α - β` when `β ≤ α` componentwise.
    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        if self.dim() != other.dim() {
            return None;
        }
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.checked_sub(*b))
            .collect::<Option<Vec<_>>>()
            .map(MultiIndex)
    }
}

impl Add for &MultiIndex {
    type Output = MultiIndex;

    fn add(self, rhs: &MultiIndex) -> MultiIndex {
        self.checked_add(rhs).expect("multi-index dimensions differ")
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, a) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

pub fn factorial(n: u32) -> Result<u128> {
    (1..=n as u128).try_fold(1u128, |acc, k| {
        acc.checked_mul(k)
            .ok_or_else(|| Error::Overflow(format!("{n}! exceeds u128")))
    })
}

/// Binomial coefficient `C(n, k)`.
pub fn binomial(n: u64, k: u64) -> Result<u128> {
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    let mut acc = 1u128;
    for j in 0..k {
        // acc * (n - j) is divisible by (j + 1) at every step
        acc = acc
            .checked_mul((n - j) as u128)
            .ok_or_else(|| Error::Overflow(format!("C({n},{k}) exceeds u128")))?
            / (j as u128 + 1);
    }
    Ok(acc)
}

/// Number of multi-indices of dimension `d` and order exactly `k`: `C(k+d-1, d-1)`.
pub fn count(d: usize, k: u32) -> Result<u128> {
    binomial(k as u64 + d as u64 - 1, d as u64 - 1)
}

/// All multi-indices of dimension `d` with order exactly `k`, in lexicographically
/// descending order (largest first coordinate first).
pub fn enumerate(d: usize, k: u32) -> Result<Vec<MultiIndex>> {
    enumerate_with_cap(d, k, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_with_cap(d: usize, k: u32, cap: usize) -> Result<Vec<MultiIndex>> {
    if d == 0 {
        return Err(Error::usage("dimension must be at least 1"));
    }
    let total = count(d, k)?;
    if total > cap as u128 {
        return Err(Error::Resource(format!(
            "{total} multi-indices of dimension {d} and order {k} exceed the cap of {cap}"
        )));
    }
    let mut out = Vec::with_capacity(total as usize);
    let mut current = vec![0u32; d];
    fill(&mut current, 0, k, &mut out);
    Ok(out)
}

fn fill(current: &mut [u32], pos: usize, remaining: u32, out: &mut Vec<MultiIndex>) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(MultiIndex(current.to_vec()));
        return;
    }
    for a in (0..=remaining).rev() {
        current[pos] = a;
        fill(current, pos + 1, remaining - a, out);
    }
}

/// All multi-indices of dimension `d` with order at most `max_order`, grouped by
/// ascending order and lexicographically descending within each order.
pub fn enumerate_up_to(d: usize, max_order: u32, cap: usize) -> Result<Vec<MultiIndex>> {
    let total = binomial(max_order as u64 + d as u64, d as u64)?;
    if total > cap as u128 {
        return Err(Error::Resource(format!(
            "{total} multi-indices of dimension {d} and order ≤ {max_order} exceed the cap of {cap}"
        )));
    }
    let mut out = Vec::with_capacity(total as usize);
    for k in 0..=max_order {
        out.extend(enumerate_with_cap(d, k, cap)?);
    }
    Ok(out)
}
