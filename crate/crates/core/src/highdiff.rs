//! Higher-order partial derivatives by Taylor-jet propagation, with a
//! finite-difference cross-check.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::ScoreFunction;
use crate::jet::{expand, JetSpace};
use crate::multiindex::{MultiIndex, DEFAULT_ENUMERATION_CAP};

/// Every partial `D^α f(x)` with `|α| ≤ L` at a fixed point.
#[derive(Debug, Clone)]
pub struct DerivativeTable {
    point: Vec<f64>,
    space: Arc<JetSpace>,
    entries: Vec<f64>,
}

impl DerivativeTable {
    pub fn point(&self) -> &[f64] {
        &self.point
    }

    pub fn dim(&self) -> usize {
        self.point.len()
    }

    pub fn max_order(&self) -> u32 {
        self.space.max_order()
    }

    pub fn get(&self, alpha: &MultiIndex) -> Option<f64> {
        self.space.position(alpha).map(|k| self.entries[k])
    }

    /// `(α, D^α f(x))` pairs by ascending order.
    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, f64)> + '_ {
        self.space.indices().iter().zip(self.entries.iter().copied())
    }

    /// The Taylor polynomial `Σ D^α f(x)/α!·v^α` evaluated at offset `v`.
    pub fn taylor_eval(&self, v: &[f64]) -> Result<f64> {
        let mut acc = 0.0;
        for (alpha, d) in self.iter() {
            if d != 0.0 {
                acc += d / alpha.factorial()? as f64 * alpha.monomial(v)?;
            }
        }
        Ok(acc)
    }

    /// Entrywise `a·self + b·other` for tables on the same point and order.
    pub fn combine(&self, a: f64, other: &DerivativeTable, b: f64) -> Result<DerivativeTable> {
        if self.point != other.point || self.max_order() != other.max_order() {
            return Err(Error::usage("tables differ in point or order"));
        }
        Ok(DerivativeTable {
            point: self.point.clone(),
            space: self.space.clone(),
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        })
    }
}

/// All partials of `f` at `x` up to total order `max_order`.
///
/// The jet coefficient `c_α` of the expansion satisfies `D^α f = α!·c_α`.
pub fn derivative_table(f: &ScoreFunction, x: &[f64], max_order: u32) -> Result<DerivativeTable> {
    derivative_table_with_cap(f, x, max_order, DEFAULT_ENUMERATION_CAP)
}

pub fn derivative_table_with_cap(
    f: &ScoreFunction,
    x: &[f64],
    max_order: u32,
    cap: usize,
) -> Result<DerivativeTable> {
    f.check_point(x)?;
    let space = JetSpace::new(x.len(), max_order, cap)?;
    let jet = expand(f.root(), &space, x);
    let mut entries = jet.into_coeffs();
    for (alpha, e) in space.indices().iter().zip(entries.iter_mut()) {
        *e *= alpha.factorial()? as f64;
        if !e.is_finite() {
            return Err(Error::numeric(format!(
                "partial D^{alpha} of {f} at {x:?} is not finite"
            )));
        }
    }
    Ok(DerivativeTable {
        point: x.to_vec(),
        space,
        entries,
    })
}

/// The saliency map: the gradient of `f` at `x`.
pub fn saliency(f: &ScoreFunction, x: &[f64]) -> Result<Vec<f64>> {
    let table = derivative_table(f, x, 1)?;
    Ok(gradient_slice(&table))
}

/// The order-1 slice of a table.
pub fn gradient_slice(table: &DerivativeTable) -> Vec<f64> {
    let d = table.dim();
    (0..d)
        .map(|i| table.get(&MultiIndex::unit(d, i)).expect("order ≥ 1 table"))
        .collect()
}

/// `D^s M_i(x) = D^{s + e_i} f(x)`, where `M_i = ∂f/∂x_i` is coordinate `i`
/// (0-based) of the saliency map.
pub fn saliency_partial(table: &DerivativeTable, i: usize, s: &MultiIndex) -> Result<f64> {
    if i >= table.dim() || s.dim() != table.dim() {
        return Err(Error::usage(format!(
            "coordinate {i} or index {s} does not fit a {}-dimensional table",
            table.dim()
        )));
    }
    if s.order() + 1 > table.max_order() {
        return Err(Error::usage(format!(
            "D^{s} M needs order {} but the table stops at {}",
            s.order() + 1,
            table.max_order()
        )));
    }
    Ok(table.get(&s.shifted(i)).expect("index within table order"))
}

/// Step used by [`fd_partial`] callers that have no better choice.
pub fn default_step(order: u32) -> f64 {
    if order <= 2 {
        1e-5
    } else {
        1e-3
    }
}

/// Nested central differences: one symmetric difference per unit of `α`.
/// Truncation error is `O(h²)`; roundoff grows like `ε/h^{|α|}`.
pub fn fd_partial(f: &ScoreFunction, x: &[f64], alpha: &MultiIndex, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::usage(format!("step must be positive, got {h}")));
    }
    if alpha.dim() != x.len() {
        return Err(Error::usage("multi-index and point dimensions differ"));
    }
    f.check_point(x)?;
    let mut y = x.to_vec();
    let mut remaining = alpha.components().to_vec();
    nested_difference(f, &mut y, &mut remaining, h)
}

fn nested_difference(f: &ScoreFunction, y: &mut [f64], remaining: &mut [u32], h: f64) -> Result<f64> {
    let Some(m) = remaining.iter().position(|&a| a > 0) else {
        return f.evaluate(y);
    };
    remaining[m] -= 1;
    let base = y[m];
    y[m] = base + h;
    let plus = nested_difference(f, y, remaining, h)?;
    y[m] = base - h;
    let minus = nested_difference(f, y, remaining, h)?;
    y[m] = base;
    remaining[m] += 1;
    Ok((plus - minus) / (2.0 * h))
}

/// One Richardson step on [`fd_partial`]: `(4·D(h/2) − D(h))/3`, which cancels
/// the `h²` error term and leaves `O(h⁴)`.
pub fn fd_partial_extrapolated(
    f: &ScoreFunction,
    x: &[f64],
    alpha: &MultiIndex,
    h: f64,
) -> Result<f64> {
    let coarse = fd_partial(f, x, alpha, h)?;
    let fine = fd_partial(f, x, alpha, h / 2.0)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn f(s: &str) -> ScoreFunction {
        ScoreFunction::parse(s).unwrap()
    }

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex::new(v.to_vec()).unwrap()
    }

    #[test]
    fn cubic_table() {
        let t = derivative_table(&f("x1^3"), &[2.0], 3).unwrap();
        assert_eq!(t.get(&mi(&[0])), Some(8.0));
        assert_eq!(t.get(&mi(&[1])), Some(12.0));
        assert_eq!(t.get(&mi(&[2])), Some(12.0));
        assert_eq!(t.get(&mi(&[3])), Some(6.0));
        assert_eq!(t.get(&mi(&[4])), None);
    }

    #[test]
    fn mixed_and_transcendental() {
        let t = derivative_table(&f("x1*x2"), &[3.0, 5.0], 2).unwrap();
        assert_eq!(t.get(&mi(&[1, 1])), Some(1.0));
        let t = derivative_table(&f("tanh(x1)"), &[0.0], 1).unwrap();
        assert_eq!(t.get(&mi(&[1])), Some(1.0));
    }

    #[test]
    fn zero_entry_is_value() {
        let g = f("sin(x1)*exp(x2) + softplus(x1 - x2)");
        let x = [0.4, -0.3];
        let t = derivative_table(&g, &x, 4).unwrap();
        assert_relative_eq!(t.get(&mi(&[0, 0])).unwrap(), g.evaluate(&x).unwrap(), max_relative = 1e-15);
    }

    #[test]
    fn saliency_examples() {
        assert_eq!(saliency(&f("x1^2 + 2*x2"), &[1.0, 1.0]).unwrap(), vec![2.0, 2.0]);
        assert_eq!(saliency(&f("7"), &[1.0, 2.0, 3.0]).unwrap(), vec![0.0; 3]);
        assert_eq!(saliency(&f("x1^3"), &[1.0]).unwrap(), vec![3.0]);
    }

    #[test]
    fn saliency_partial_examples() {
        let t = derivative_table(&f("x1^3"), &[1.0], 3).unwrap();
        assert_eq!(saliency_partial(&t, 0, &mi(&[2])).unwrap(), 6.0);
        assert_eq!(saliency_partial(&t, 0, &mi(&[0])).unwrap(), 3.0);
        assert!(matches!(saliency_partial(&t, 0, &mi(&[3])), Err(Error::Usage(_))));

        let t = derivative_table(&f("x1*x2"), &[0.0, 0.0], 2).unwrap();
        assert_eq!(saliency_partial(&t, 0, &mi(&[0, 1])).unwrap(), 1.0);
    }

    #[test]
    fn fd_examples() {
        let v = fd_partial(&f("x1^2"), &[3.0], &mi(&[1]), 1e-4).unwrap();
        assert!((v - 6.0).abs() < 1e-7);
        let v = fd_partial(&f("x1^3"), &[2.0], &mi(&[2]), 1e-3).unwrap();
        assert!((v - 12.0).abs() < 1e-4);
        let g = f("x1*x2 + 1");
        assert_eq!(fd_partial(&g, &[2.0, 3.0], &mi(&[0, 0]), 0.1).unwrap(), 7.0);
        assert!(fd_partial(&g, &[2.0, 3.0], &mi(&[1, 0]), 0.0).is_err());
        assert!(fd_partial(&g, &[2.0, 3.0], &mi(&[1, 0]), -1.0).is_err());
    }

    #[test]
    fn polynomial_tail_vanishes() {
        let g = f("3*x1^2*x2 - x2^3 + 0.5*x1 - 2");
        let t = derivative_table(&g, &[0.7, -1.1], 6).unwrap();
        for (alpha, d) in t.iter() {
            if alpha.order() > 3 {
                assert_eq!(d, 0.0, "{alpha}");
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        assert!(derivative_table(&f("x1 + x3"), &[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn non_finite_partial_is_an_error() {
        assert!(matches!(
            derivative_table(&f("exp(exp(exp(x1)))"), &[3.0], 3),
            Err(Error::Numeric(_))
        ));
    }
}
