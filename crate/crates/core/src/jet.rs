//! Truncated multivariate Taylor series ("jets") in `d` variables up to total
//! order `L`, stored densely by multi-index.
//!
//! Transcendental functions are propagated with the homogeneous-degree form of
//! their ODEs: if `g = h(f)` with `h' = q(h)`, then for every index `γ` with
//! `|γ| = k > 0`
//!
//! ```text
//! k·g_γ = Σ_{α+β=γ, |α|≥1} |α|·f_α·(q∘g)_β
//! ```
//!
//! which only needs coefficients of `q∘g` of order below `k`.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{sigmoid, Expr, Func};
use crate::multiindex::{enumerate_up_to, MultiIndex};

/// Index layout and convolution tables shared by all jets of one `(d, L)`.
#[derive(Debug)]
pub struct JetSpace {
    dim: usize,
    max_order: u32,
    indices: Vec<MultiIndex>,
    orders: Vec<u32>,
    position: HashMap<MultiIndex, usize>,
    /// `order_start[k]..order_start[k+1]` are the positions of order `k`.
    order_start: Vec<usize>,
    /// For each target position, every `(α, β)` position pair with `α + β = γ`.
    pairs: Vec<Vec<(u32, u32)>>,
}

impl JetSpace {
    pub fn new(dim: usize, max_order: u32, cap: usize) -> Result<Arc<Self>> {
        if dim == 0 {
            return Err(Error::usage("jet dimension must be at least 1"));
        }
        let indices = enumerate_up_to(dim, max_order, cap)?;
        let orders: Vec<u32> = indices.iter().map(MultiIndex::order).collect();
        let position: HashMap<MultiIndex, usize> = indices
            .iter()
            .enumerate()
            .map(|(k, m)| (m.clone(), k))
            .collect();
        let mut order_start = vec![0usize; max_order as usize + 2];
        for &o in &orders {
            order_start[o as usize + 1] += 1;
        }
        for k in 1..order_start.len() {
            order_start[k] += order_start[k - 1];
        }
        let mut pairs = vec![Vec::new(); indices.len()];
        let mut total_pairs = 0usize;
        for (a, alpha) in indices.iter().enumerate() {
            for (b, beta) in indices.iter().enumerate() {
                if orders[a] + orders[b] > max_order {
                    continue;
                }
                let gamma = alpha + beta;
                pairs[position[&gamma]].push((a as u32, b as u32));
                total_pairs += 1;
                if total_pairs > cap.saturating_mul(16) {
                    return Err(Error::Resource(format!(
                        "jet product table for d={dim}, L={max_order} is too large"
                    )));
                }
            }
        }
        Ok(Arc::new(JetSpace {
            dim,
            max_order,
            indices,
            orders,
            position,
            order_start,
            pairs,
        }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_order(&self) -> u32 {
        self.max_order
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn position(&self, m: &MultiIndex) -> Option<usize> {
        self.position.get(m).copied()
    }

    fn order_range(&self, k: u32) -> std::ops::Range<usize> {
        self.order_start[k as usize]..self.order_start[k as usize + 1]
    }
}

#[derive(Debug, Clone)]
pub struct Jet {
    space: Arc<JetSpace>,
    coeffs: Vec<f64>,
}

impl Jet {
    pub fn constant(space: &Arc<JetSpace>, c: f64) -> Jet {
        let mut coeffs = vec![0.0; space.len()];
        coeffs[0] = c;
        Jet {
            space: space.clone(),
            coeffs,
        }
    }

    /// The jet of the coordinate function `x_i` expanded at `x_i = value`.
    pub fn variable(space: &Arc<JetSpace>, i: usize, value: f64) -> Jet {
        let mut j = Jet::constant(space, value);
        if space.max_order >= 1 {
            let e = MultiIndex::unit(space.dim, i);
            j.coeffs[space.position[&e]] = 1.0;
        }
        j
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Jet {
        Jet {
            space: self.space.clone(),
            coeffs: self.coeffs.iter().map(|&c| f(c)).collect(),
        }
    }

    fn zip(&self, other: &Jet, f: impl Fn(f64, f64) -> f64) -> Jet {
        Jet {
            space: self.space.clone(),
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn neg(&self) -> Jet {
        self.map(|c| -c)
    }

    pub fn add(&self, other: &Jet) -> Jet {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Jet) -> Jet {
        self.zip(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Jet {
        self.map(|c| c * s)
    }

    pub fn mul(&self, other: &Jet) -> Jet {
        let coeffs = self
            .space
            .pairs
            .iter()
            .map(|pairs| {
                pairs
                    .iter()
                    .map(|&(a, b)| self.coeffs[a as usize] * other.coeffs[b as usize])
                    .sum()
            })
            .collect();
        Jet {
            space: self.space.clone(),
            coeffs,
        }
    }

    pub fn powi(&self, n: u32) -> Jet {
        let mut result = Jet::constant(&self.space, 1.0);
        let mut base = self.clone();
        let mut n = n;
        while n > 0 {
            if n & 1 == 1 {
                result = result.mul(&base);
            }
            n >>= 1;
            if n > 0 {
                base = base.mul(&base);
            }
        }
        result
    }

    /// Coefficient `γ` of `Σ |α|·f_α·q_β` over `α + β = γ`, `|α| ≥ 1`, divided by `|γ|`.
    fn ode_step(&self, q: &[f64], gamma: usize) -> f64 {
        let space = &self.space;
        let k = space.orders[gamma] as f64;
        let s: f64 = space.pairs[gamma]
            .iter()
            .filter(|&&(a, _)| space.orders[a as usize] >= 1)
            .map(|&(a, b)| space.orders[a as usize] as f64 * self.coeffs[a as usize] * q[b as usize])
            .sum();
        s / k
    }

    /// Coefficient `γ` of `u·v`.
    fn product_coeff(space: &JetSpace, u: &[f64], v: &[f64], gamma: usize) -> f64 {
        space.pairs[gamma]
            .iter()
            .map(|&(a, b)| u[a as usize] * v[b as usize])
            .sum()
    }

    /// `h(f)` where `h' = q(h)` and `q(h)` is polynomial in `h`, computed
    /// order by order. `q_coeff` receives the series of `g` (filled up to and
    /// including order `k`) and returns coefficient `γ` of `q(g)`.
    fn compose_autonomous(
        &self,
        g0: f64,
        q0: f64,
        q_coeff: impl Fn(&JetSpace, &[f64], usize) -> f64,
    ) -> Jet {
        let space = &self.space;
        let n = space.len();
        let mut g = vec![0.0; n];
        let mut q = vec![0.0; n];
        g[0] = g0;
        q[0] = q0;
        for k in 1..=space.max_order {
            let range = space.order_range(k);
            for gamma in range.clone() {
                g[gamma] = self.ode_step(&q, gamma);
            }
            for gamma in range {
                q[gamma] = q_coeff(space, &g, gamma);
            }
        }
        Jet {
            space: space.clone(),
            coeffs: g,
        }
    }

    pub fn exp(&self) -> Jet {
        let g0 = self.value().exp();
        // exp' = exp
        self.compose_autonomous(g0, g0, |_, g, gamma| g[gamma])
    }

    pub fn tanh(&self) -> Jet {
        let t0 = self.value().tanh();
        // tanh' = 1 - tanh²
        self.compose_autonomous(t0, 1.0 - t0 * t0, |space, g, gamma| {
            -Self::product_coeff(space, g, g, gamma)
        })
    }

    pub fn sigmoid(&self) -> Jet {
        let s0 = sigmoid(self.value());
        // σ' = σ - σ²
        self.compose_autonomous(s0, s0 * (1.0 - s0), |space, g, gamma| {
            g[gamma] - Self::product_coeff(space, g, g, gamma)
        })
    }

    /// `sin(f)` and `cos(f)` together: `sin' = cos`, `cos' = -sin`.
    pub fn sin_cos(&self) -> (Jet, Jet) {
        let space = &self.space;
        let n = space.len();
        let mut s = vec![0.0; n];
        let mut c = vec![0.0; n];
        s[0] = self.value().sin();
        c[0] = self.value().cos();
        for k in 1..=space.max_order {
            for gamma in space.order_range(k) {
                s[gamma] = self.ode_step(&c, gamma);
                c[gamma] = -self.ode_step(&s, gamma);
            }
        }
        (
            Jet {
                space: space.clone(),
                coeffs: s,
            },
            Jet {
                space: space.clone(),
                coeffs: c,
            },
        )
    }

    pub fn softplus(&self) -> Jet {
        // softplus' = sigmoid
        let q = self.sigmoid();
        let space = &self.space;
        let mut g = vec![0.0; space.len()];
        g[0] = Func::Softplus.apply(self.value());
        for gamma in 1..space.len() {
            g[gamma] = self.ode_step(&q.coeffs, gamma);
        }
        Jet {
            space: space.clone(),
            coeffs: g,
        }
    }

    pub fn apply(&self, func: Func) -> Jet {
        match func {
            Func::Exp => self.exp(),
            Func::Tanh => self.tanh(),
            Func::Sin => self.sin_cos().0,
            Func::Cos => self.sin_cos().1,
            Func::Sigmoid => self.sigmoid(),
            Func::Softplus => self.softplus(),
        }
    }
}

/// Propagates jets through an expression tree expanded at `point`.
pub fn expand(expr: &Expr, space: &Arc<JetSpace>, point: &[f64]) -> Jet {
    match expr {
        Expr::Const(c) => Jet::constant(space, *c),
        Expr::Var(i) => Jet::variable(space, *i, point[*i]),
        Expr::Neg(a) => expand(a, space, point).neg(),
        Expr::Add(a, b) => expand(a, space, point).add(&expand(b, space, point)),
        Expr::Sub(a, b) => expand(a, space, point).sub(&expand(b, space, point)),
        Expr::Mul(a, b) => match (a.as_ref(), b.as_ref()) {
            (Expr::Const(c), other) | (other, Expr::Const(c)) => {
                expand(other, space, point).scale(*c)
            }
            _ => expand(a, space, point).mul(&expand(b, space, point)),
        },
        Expr::Pow(a, n) => expand(a, space, point).powi(*n),
        Expr::Call(f, a) => expand(a, space, point).apply(*f),
    }
}
