//! Exact expectations and variances of `M_i(x+ε)` for polynomial score
//! functions, plus sample-level checks of two covariance inequalities.
//!
//! Nothing here filters terms by parity: every term is expanded and the
//! Gaussian product moments zero out whatever vanishes.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::expr::{Degree, ScoreFunction};
use crate::gauss::{product_moment, Sigma};
use crate::highdiff::derivative_table;
use crate::multiindex::{enumerate_up_to, MultiIndex, DEFAULT_ENUMERATION_CAP};
use crate::stats::{covariance, mean_and_variance, CompensatedSum};

/// Relative slack used by the sample checks.
pub const SAMPLE_SLACK: f64 = 1e-12;

/// Coefficients `c_s` of `M_i(x+ε) = Σ_s c_s ε^s`, keyed by `s`.
pub fn noise_polynomial(
    f: &ScoreFunction,
    x: &[f64],
    i: usize,
) -> Result<BTreeMap<MultiIndex, f64>> {
    let deg = match f.degree() {
        Degree::Finite(k) => k,
        Degree::Unbounded => {
            return Err(Error::usage(format!(
                "exact moments need a polynomial score function, got {f}"
            )))
        }
    };
    let d = x.len();
    if i >= d {
        return Err(Error::usage(format!("coordinate {} outside dimension {d}", i + 1)));
    }
    let table = derivative_table(f, x, deg.max(1))?;
    let mut out = BTreeMap::new();
    for s in enumerate_up_to(d, deg.saturating_sub(1), DEFAULT_ENUMERATION_CAP)? {
        let partial = table
            .get(&s.shifted(i))
            .ok_or_else(|| Error::numeric(format!("missing partial {}", s.shifted(i))))?;
        if partial != 0.0 {
            let c = partial / s.factorial()? as f64;
            out.insert(s, c);
        }
    }
    Ok(out)
}

fn expectation(poly: &BTreeMap<MultiIndex, f64>, sigma: Sigma) -> Result<f64> {
    let mut acc = CompensatedSum::default();
    for (s, c) in poly {
        acc.add(c * product_moment(s, sigma)?);
    }
    Ok(acc.value())
}

fn square(poly: &BTreeMap<MultiIndex, f64>) -> Result<BTreeMap<MultiIndex, f64>> {
    let mut sums: BTreeMap<MultiIndex, CompensatedSum> = BTreeMap::new();
    for (a, ca) in poly {
        for (b, cb) in poly {
            sums.entry(a.checked_add(b)?).or_default().add(ca * cb);
        }
    }
    Ok(sums.into_iter().map(|(k, v)| (k, v.value())).collect())
}

/// `E[M_i(x+ε)]`.
pub fn exact_smoothgrad(f: &ScoreFunction, x: &[f64], i: usize, sigma: Sigma) -> Result<f64> {
    expectation(&noise_polynomial(f, x, i)?, sigma)
}

/// `Var[M_i(x+ε)] = E[P²] − E[P]²` with `P = M_i(x+ε) − M_i(x)`.
///
/// Dropping the constant term first keeps the subtraction well conditioned.
pub fn exact_vargrad(f: &ScoreFunction, x: &[f64], i: usize, sigma: Sigma) -> Result<f64> {
    let mut poly = noise_polynomial(f, x, i)?;
    poly.remove(&MultiIndex::zero(x.len()));
    let mean = expectation(&poly, sigma)?;
    let second = expectation(&square(&poly)?, sigma)?;
    Ok((second - mean * mean).max(0.0))
}

/// `Cov(odd-order part, even-order part)` of `M_i(x+ε)`.
pub fn exact_parity_covariance(
    f: &ScoreFunction,
    x: &[f64],
    i: usize,
    sigma: Sigma,
) -> Result<f64> {
    let poly = noise_polynomial(f, x, i)?;
    let mut acc = CompensatedSum::default();
    for (a, ca) in poly.iter().filter(|(s, _)| s.order() % 2 == 1) {
        for (b, cb) in poly.iter().filter(|(s, _)| s.order() % 2 == 0) {
            let cov = product_moment(&a.checked_add(b)?, sigma)?
                - product_moment(a, sigma)? * product_moment(b, sigma)?;
            acc.add(ca * cb * cov);
        }
    }
    Ok(acc.value())
}

/// `Var(XY) ≤ C²·Var(Y)` for `|X| < C` and centered `Y`, with population variances.
///
/// `ys` is centered here before the check.
pub fn check_variance_bound(c: f64, xs: &[f64], ys: &[f64]) -> Result<bool> {
    if xs.len() != ys.len() {
        return Err(Error::usage(format!(
            "sample lengths differ: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.is_empty() {
        return Err(Error::usage("no samples"));
    }
    if let Some(x) = xs.iter().find(|x| !(x.abs() < c)) {
        return Err(Error::usage(format!("sample {x} violates |X| < {c}")));
    }
    let (ybar, _) = mean_and_variance(ys);
    let centered: Vec<f64> = ys.iter().map(|y| y - ybar).collect();
    let product: Vec<f64> = xs.iter().zip(&centered).map(|(x, y)| x * y).collect();
    let (_, var_xy) = mean_and_variance(&product);
    let (_, var_y) = mean_and_variance(&centered);
    let rhs = c * c * var_y;
    Ok(var_xy <= rhs + SAMPLE_SLACK * rhs.max(1.0))
}

/// `|Cov(X,Y)| ≤ √(Var X · Var Y)`.
pub fn check_cov_bound(xs: &[f64], ys: &[f64]) -> Result<bool> {
    if xs.len() != ys.len() {
        return Err(Error::usage(format!(
            "sample lengths differ: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::usage("need at least two samples"));
    }
    let (_, vx) = mean_and_variance(xs);
    let (_, vy) = mean_and_variance(ys);
    let rhs = (vx * vy).sqrt();
    Ok(covariance(xs, ys).abs() <= rhs + SAMPLE_SLACK * rhs.max(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn f(s: &str) -> ScoreFunction {
        ScoreFunction::parse(s).unwrap()
    }

    fn sig(v: f64) -> Sigma {
        Sigma::new(v).unwrap()
    }

    #[test]
    fn smoothgrad_examples() {
        assert_relative_eq!(exact_smoothgrad(&f("x1^3"), &[1.0], 0, sig(0.5)).unwrap(), 3.75);
        assert_eq!(exact_smoothgrad(&f("x1^2"), &[0.7], 0, sig(1.3)).unwrap(), 1.4);
        assert_relative_eq!(exact_smoothgrad(&f("x1^4"), &[1.0], 0, sig(0.5)).unwrap(), 7.0);
        assert!(matches!(
            exact_smoothgrad(&f("tanh(x1)"), &[0.0], 0, sig(0.1)),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn vargrad_examples() {
        assert_eq!(exact_vargrad(&f("2*x1 - x2 + 3"), &[0.2, 0.1], 1, sig(0.5)).unwrap(), 0.0);
        assert_relative_eq!(
            exact_vargrad(&f("x1^3"), &[1.0], 0, sig(0.5)).unwrap(),
            10.125,
            max_relative = 1e-15
        );
        assert_relative_eq!(exact_vargrad(&f("x1^2"), &[3.0], 0, sig(1.0)).unwrap(), 4.0);
        let s2: f64 = 0.25;
        // P = 12ε + 12ε² + 4ε³; E[P] = 12σ², E[P²] = 144σ² + 144·3σ⁴ + 16·15σ⁶ + 2·12·4·3σ⁴
        let e_p = 12.0 * s2;
        let e_p2 = 144.0 * s2 + 432.0 * s2 * s2 + 240.0 * s2.powi(3) + 288.0 * s2 * s2;
        let expected = e_p2 - e_p * e_p;
        assert_relative_eq!(expected, 75.75, max_relative = 1e-15);
        assert_relative_eq!(
            exact_vargrad(&f("x1^4"), &[1.0], 0, sig(0.5)).unwrap(),
            75.75,
            max_relative = 1e-15
        );
    }

    #[test]
    fn parity_covariance_vanishes() {
        for src in ["x1^4", "x1^3*x2^2 - x2^5", "x1*x2*x3 + x3^4"] {
            let g = f(src);
            let x = vec![0.7, -1.1, 0.4][..g.dimension()].to_vec();
            for i in 0..x.len() {
                assert_eq!(exact_parity_covariance(&g, &x, i, sig(0.8)).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn variance_bound_examples() {
        let ys: Vec<f64> = (0..1000).map(|k| ((k * 37) % 101) as f64 - 50.0).collect();
        let half = vec![1.0; ys.len()];
        assert!(check_variance_bound(2.0, &half, &ys).unwrap());
        let flips: Vec<f64> = (0..ys.len()).map(|k| if k % 3 == 0 { -0.99 } else { 0.99 }).collect();
        assert!(check_variance_bound(1.0, &flips, &ys).unwrap());
        assert!(check_variance_bound(1.0, &flips, &vec![0.0; ys.len()]).unwrap());
        assert!(matches!(check_variance_bound(0.5, &flips, &ys), Err(Error::Usage(_))));
        assert!(check_variance_bound(1.0, &flips, &ys[1..]).is_err());
    }

    #[test]
    fn cov_bound_examples() {
        let xs: Vec<f64> = (0..200).map(|k| (k as f64 * 0.37).sin()).collect();
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!(check_cov_bound(&xs, &xs).unwrap());
        assert!(check_cov_bound(&xs, &neg).unwrap());
        assert!(check_cov_bound(&xs, &xs[1..]).is_err());
        assert!(check_cov_bound(&xs[..1], &xs[..1]).is_err());
    }

    proptest! {
        #[test]
        fn cov_bound_always_holds(
            pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 2..64),
            tie in 0.0f64..1.0,
        ) {
            let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pairs.iter().map(|p| tie * p.0 + (1.0 - tie) * p.1).collect();
            prop_assert!(check_cov_bound(&xs, &ys).unwrap());
        }

        #[test]
        fn variance_bound_always_holds(
            pairs in prop::collection::vec((-0.999f64..0.999, -50.0f64..50.0), 1..64),
            c in 1.0f64..4.0,
        ) {
            let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            prop_assert!(check_variance_bound(c, &xs, &ys).unwrap());
        }
    }
}
