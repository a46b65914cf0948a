//! Closed-form series for SmoothGrad and VarGrad in terms of higher-order
//! partials of the saliency map, with remainder bounds.
//!
//! Each output coordinate `i` is handled separately with
//! `D^s M_i(x) = D^{s+e_i} S(x)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Degree, ScoreFunction};
use crate::gauss::{abs_moment, jensen_bracket, product_moment, smoothgrad_coeff, upsilon, Sigma};
use crate::highdiff::{derivative_table, saliency_partial, DerivativeTable};
use crate::multiindex::{enumerate, MultiIndex};
use crate::stats::CompensatedSum;

/// Default truncation order.
pub const DEFAULT_TRUNCATION: u32 = 6;
/// Factor applied to the sampled supremum when estimating `C`.
pub const SUP_SAFETY_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermFamily {
    /// SmoothGrad: even order, every component even.
    SmoothingMoment,
    /// VarGrad: odd order, `{D^s M/s!}² Υ(s, σ)`.
    OddOrder,
    /// VarGrad: even order, all components even, `{D^s M/s!}² [Υ(s,σ) − Υ(s/2,σ)²]`.
    EvenAllEven,
    /// VarGrad: even order with an odd component, `{D^s M/s!}² Υ(s, σ)`.
    EvenWithOdd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesTerm {
    pub index: MultiIndex,
    pub family: TermFamily,
    pub contribution: f64,
}

/// `2·(D^α M/α!)(D^β M/β!)·Cov(ε^α, ε^β)` for a pair `α ≠ β` of equal order
/// parity. The three-family VarGrad series leaves these out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossTerm {
    pub left: MultiIndex,
    pub right: MultiIndex,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesEvaluation {
    pub coordinate: usize,
    pub value: f64,
    /// Saliency `M_i(x)` for SmoothGrad; absent for VarGrad.
    pub head: Option<f64>,
    pub terms: Vec<SeriesTerm>,
    /// VarGrad only; see [`CrossTerm`].
    pub cross_terms: Vec<CrossTerm>,
    pub truncation_order: u32,
    pub remainder_bound: Option<f64>,
}

impl SeriesEvaluation {
    pub fn terms_sum(&self) -> f64 {
        compensated(self.terms.iter().map(|t| t.contribution))
    }

    pub fn cross_sum(&self) -> f64 {
        compensated(self.cross_terms.iter().map(|t| t.contribution))
    }

    /// The series value plus the omitted same-parity covariances.
    pub fn value_with_cross_terms(&self) -> f64 {
        compensated(
            self.head
                .into_iter()
                .chain(self.terms.iter().map(|t| t.contribution))
                .chain(self.cross_terms.iter().map(|t| t.contribution)),
        )
    }
}

fn compensated(values: impl Iterator<Item = f64>) -> f64 {
    let mut s = CompensatedSum::default();
    values.for_each(|v| s.add(v));
    s.value()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupEstimate {
    /// All partials of the relevant order vanish identically.
    ExactZeroPolynomial,
    /// Sampled maximum times [`SUP_SAFETY_FACTOR`]; a heuristic, not a certificate.
    SampledSup,
    /// Given by the caller.
    Supplied,
}

/// The ball around `x` that the remainder bounds refer to, and the supremum
/// `C = max_{|α|=l+1, y∈B} |D^α M_i(y)|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallSpec {
    pub center: Vec<f64>,
    pub radius: f64,
    pub sup_estimate_c: Option<f64>,
    pub estimation_method: Option<SupEstimate>,
}

impl BallSpec {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::usage(format!("ball radius must be positive, got {radius}")));
        }
        Ok(BallSpec {
            center,
            radius,
            sup_estimate_c: None,
            estimation_method: None,
        })
    }

    pub fn with_c(mut self, c: f64) -> Result<Self> {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::usage(format!("C must be finite and non-negative, got {c}")));
        }
        self.sup_estimate_c = Some(c);
        self.estimation_method = Some(SupEstimate::Supplied);
        Ok(self)
    }

    fn c(&self) -> Result<f64> {
        self.sup_estimate_c
            .ok_or_else(|| Error::usage("ball has no estimate of C"))
    }
}

fn check_coordinate(table: &DerivativeTable, i: usize) -> Result<()> {
    if i >= table.dim() {
        return Err(Error::usage(format!(
            "coordinate {} is outside a {}-dimensional table",
            i + 1,
            table.dim()
        )));
    }
    Ok(())
}

fn check_table_order(table: &DerivativeTable, l: u32) -> Result<()> {
    if table.max_order() < l + 1 {
        return Err(Error::usage(format!(
            "truncation {l} needs partials of order {} but the table stops at {}",
            l + 1,
            table.max_order()
        )));
    }
    Ok(())
}

/// `D^s M_i(x)/s!`.
fn taylor_coefficient(table: &DerivativeTable, i: usize, s: &MultiIndex) -> Result<f64> {
    Ok(saliency_partial(table, i, s)? / s.factorial()? as f64)
}

/// SmoothGrad as `M_i(x)` plus the all-even, even-order moment terms up to order `l`.
/// Odd-order terms are absent because their Gaussian moments vanish.
pub fn smoothgrad_series(
    table: &DerivativeTable,
    i: usize,
    sigma: Sigma,
    l: u32,
) -> Result<SeriesEvaluation> {
    if l < 2 {
        return Err(Error::usage(format!("truncation must be at least 2, got {l}")));
    }
    check_coordinate(table, i)?;
    check_table_order(table, l)?;
    let d = table.dim();
    let head = saliency_partial(table, i, &MultiIndex::zero(d))?;
    let mut terms = Vec::new();
    for p in 1..=l / 2 {
        for s in enumerate(d, 2 * p)? {
            if !s.all_even() {
                continue;
            }
            let contribution = taylor_coefficient(table, i, &s)? * smoothgrad_coeff(&s, sigma)?;
            terms.push(SeriesTerm {
                index: s,
                family: TermFamily::SmoothingMoment,
                contribution,
            });
        }
    }
    let value = compensated(std::iter::once(head).chain(terms.iter().map(|t| t.contribution)));
    Ok(SeriesEvaluation {
        coordinate: i,
        value,
        head: Some(head),
        terms,
        cross_terms: Vec::new(),
        truncation_order: l,
        remainder_bound: None,
    })
}

/// `Σ_{|s|=l+1} (C/s!) Π E|ε_m|^{s_m}`.
pub fn smoothgrad_remainder_bound(ball: &BallSpec, sigma: Sigma, l: u32, d: usize) -> Result<f64> {
    let c = ball.c()?;
    if c == 0.0 {
        return Ok(0.0);
    }
    let mut acc = CompensatedSum::default();
    for s in enumerate(d, l + 1)? {
        let moments: f64 = s.components().iter().map(|&sm| abs_moment(sm, sigma)).product();
        acc.add(c / s.factorial()? as f64 * moments);
    }
    Ok(acc.value())
}

/// VarGrad as the three families of squared-coefficient terms up to order `l`
/// (`l` even). No gradient term appears: every coefficient has `|s| ≥ 1`.
pub fn vargrad_series(
    table: &DerivativeTable,
    i: usize,
    sigma: Sigma,
    l: u32,
) -> Result<SeriesEvaluation> {
    if l < 2 || l % 2 == 1 {
        return Err(Error::usage(format!(
            "VarGrad truncation must be even and at least 2, got {l}"
        )));
    }
    check_coordinate(table, i)?;
    check_table_order(table, l)?;
    let d = table.dim();
    let mut coefficients = Vec::new();
    let mut terms = Vec::new();
    for k in 1..=l {
        for s in enumerate(d, k)? {
            let a = taylor_coefficient(table, i, &s)?;
            let (family, moment) = if k % 2 == 1 {
                (TermFamily::OddOrder, upsilon(&s, sigma)?)
            } else if s.all_even() {
                (TermFamily::EvenAllEven, jensen_bracket(&s, sigma)?)
            } else {
                (TermFamily::EvenWithOdd, upsilon(&s, sigma)?)
            };
            terms.push(SeriesTerm {
                index: s.clone(),
                family,
                contribution: a * a * moment,
            });
            coefficients.push((s, a));
        }
    }
    let cross_terms = cross_covariances(&coefficients, sigma)?;
    let value = compensated(terms.iter().map(|t| t.contribution));
    Ok(SeriesEvaluation {
        coordinate: i,
        value,
        head: None,
        terms,
        cross_terms,
        truncation_order: l,
        remainder_bound: None,
    })
}

fn cross_covariances(coefficients: &[(MultiIndex, f64)], sigma: Sigma) -> Result<Vec<CrossTerm>> {
    let per_left: Vec<Result<Vec<CrossTerm>>> = (0..coefficients.len())
        .into_par_iter()
        .map(|p| {
            let (alpha, a) = &coefficients[p];
            let mut out = Vec::new();
            if *a == 0.0 {
                return Ok(out);
            }
            for (beta, b) in &coefficients[p + 1..] {
                if *b == 0.0 || (alpha.order() + beta.order()) % 2 == 1 {
                    continue;
                }
                let cov = product_moment(&(alpha + beta), sigma)?
                    - product_moment(alpha, sigma)? * product_moment(beta, sigma)?;
                if cov != 0.0 {
                    out.push(CrossTerm {
                        left: alpha.clone(),
                        right: beta.clone(),
                        contribution: 2.0 * a * b * cov,
                    });
                }
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::new();
    for part in per_left {
        all.extend(part?);
    }
    Ok(all)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VargradBounds {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
}

impl VargradBounds {
    /// `R1 + 2·R2 + 2·R3`.
    pub fn total(&self) -> f64 {
        self.r1 + 2.0 * self.r2 + 2.0 * self.r3
    }
}

/// Bounds on the three VarGrad remainder terms:
///
/// * `R1 ≤ Σ_{|β|=l+1} (C/β!)² Υ(β)`
/// * `R2 ≤ Σ_{|α| odd ≤ l−1} Σ_{|β|=l+1} (|D^α M|/α!)(C/β!) √(Υ(α)Υ(β))`
/// * `R3 ≤ Σ_{|α| even ≤ l} Σ_{|β|=l+1} (|D^α M|/α!)(C/β!) √(V(α)Υ(β))`, where
///   `V(α)` is the Jensen bracket for all-even `α` and `Υ(α)` otherwise.
pub fn vargrad_remainder_bounds(
    table: &DerivativeTable,
    i: usize,
    ball: &BallSpec,
    sigma: Sigma,
    l: u32,
) -> Result<VargradBounds> {
    if l < 2 || l % 2 == 1 {
        return Err(Error::usage(format!(
            "VarGrad truncation must be even and at least 2, got {l}"
        )));
    }
    check_coordinate(table, i)?;
    check_table_order(table, l)?;
    let c = ball.c()?;
    let d = table.dim();
    let mut r1 = CompensatedSum::default();
    let mut beta_factor = CompensatedSum::default();
    for beta in enumerate(d, l + 1)? {
        let inv = 1.0 / beta.factorial()? as f64;
        let u = upsilon(&beta, sigma)?;
        r1.add((c * inv).powi(2) * u);
        beta_factor.add(inv * u.sqrt());
    }
    // the β-sum factors out of R2 and R3
    let cb = c * beta_factor.value();
    let (mut r2, mut r3) = (CompensatedSum::default(), CompensatedSum::default());
    for k in 1..=l {
        for alpha in enumerate(d, k)? {
            let a = taylor_coefficient(table, i, &alpha)?.abs();
            if a == 0.0 {
                continue;
            }
            if k % 2 == 1 {
                r2.add(a * cb * upsilon(&alpha, sigma)?.sqrt());
            } else {
                let v = if alpha.all_even() {
                    jensen_bracket(&alpha, sigma)?
                } else {
                    upsilon(&alpha, sigma)?
                };
                r3.add(a * cb * v.sqrt());
            }
        }
    }
    Ok(VargradBounds {
        r1: r1.value(),
        r2: r2.value(),
        r3: r3.value(),
    })
}

/// Quasi-uniform points in the ball: the center, then Halton points of
/// `[-1,1]^d` that fall inside the unit ball, scaled and shifted.
pub fn ball_points(ball: &BallSpec, count: usize) -> Vec<Vec<f64>> {
    const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];
    let d = ball.center.len();
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return out;
    }
    out.push(ball.center.clone());
    let mut k = 1u64;
    while out.len() < count {
        let v: Vec<f64> = (0..d)
            .map(|m| 2.0 * radical_inverse(k, PRIMES[m % PRIMES.len()]) - 1.0)
            .collect();
        k += 1;
        if v.iter().map(|c| c * c).sum::<f64>() <= 1.0 {
            out.push(
                ball.center
                    .iter()
                    .zip(&v)
                    .map(|(c, u)| c + ball.radius * u)
                    .collect(),
            );
        }
    }
    out
}

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut r = 0.0;
    while k > 0 {
        r += (k % base) as f64 * inv;
        k /= base;
        inv /= base as f64;
    }
    r
}

/// Fills in `C = max_{|α|=order, y∈B} |D^α M_i(y)|`.
///
/// Exact zero for a polynomial of degree ≤ `order`; otherwise the largest value
/// over `samples` quasi-uniform points, times [`SUP_SAFETY_FACTOR`].
pub fn estimate_c(
    f: &ScoreFunction,
    i: usize,
    ball: &BallSpec,
    order: u32,
    samples: usize,
) -> Result<BallSpec> {
    let mut out = ball.clone();
    if let Degree::Finite(deg) = f.degree() {
        if deg <= order {
            out.sup_estimate_c = Some(0.0);
            out.estimation_method = Some(SupEstimate::ExactZeroPolynomial);
            return Ok(out);
        }
    }
    let d = ball.center.len();
    if i >= d {
        return Err(Error::usage(format!("coordinate {} outside dimension {d}", i + 1)));
    }
    let alphas = enumerate(d, order)?;
    let mut sup = 0.0f64;
    for y in ball_points(ball, samples.max(1)) {
        let table = derivative_table(f, &y, order + 1)?;
        for alpha in &alphas {
            sup = sup.max(saliency_partial(&table, i, alpha)?.abs());
        }
    }
    out.sup_estimate_c = Some(SUP_SAFETY_FACTOR * sup);
    out.estimation_method = Some(SupEstimate::SampledSup);
    Ok(out)
}
