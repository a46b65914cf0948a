//! Flattened expression graph for repeated gradient evaluation.
//!
//! Besides the gradient `M(x) = ∇f(x)` at a base point, the tape propagates
//! *differences* `M(x+ε) − M(x)` directly, node by node, using product rules
//! such as `Δ(ab) = Δa·b(x+ε) + a(x)·Δb`. Affine subgraphs have a constant
//! gradient, so their gradient difference is an exact zero and adding an affine
//! function to `f` leaves every sampled difference bit-for-bit unchanged.

use crate::error::{Error, Result};
use crate::expr::{Expr, Func, ScoreFunction};

#[derive(Debug, Clone, Copy)]
enum Op {
    Const(f64),
    Var(usize),
    Neg(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Pow(usize, u32),
    Call(Func, usize),
}

#[derive(Debug, Clone)]
pub struct GradientTape {
    ops: Vec<Op>,
    dim: usize,
}

/// Values, gradients and `h'(a)` of every node at the base point.
#[derive(Debug, Clone)]
pub struct BasePoint {
    point: Vec<f64>,
    values: Vec<f64>,
    grads: Vec<f64>,
    slopes: Vec<f64>,
}

impl BasePoint {
    pub fn gradient(&self) -> &[f64] {
        let d = self.point.len();
        &self.grads[self.grads.len() - d..]
    }

    pub fn value(&self) -> f64 {
        *self.values.last().expect("non-empty tape")
    }
}

/// Per-thread buffers for [`GradientTape::gradient_difference`].
#[derive(Debug, Clone)]
pub struct Scratch {
    dv: Vec<f64>,
    dg: Vec<f64>,
}

impl GradientTape {
    /// Compiles `f` for points of dimension `dim ≥ f.dimension()`.
    pub fn compile(f: &ScoreFunction, dim: usize) -> Result<Self> {
        if dim < f.dimension() || dim == 0 {
            return Err(Error::usage(format!(
                "tape dimension {dim} cannot hold a function of x1..x{}",
                f.dimension()
            )));
        }
        let mut ops = Vec::new();
        push(f.root(), &mut ops);
        Ok(GradientTape { ops, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scratch(&self) -> Scratch {
        Scratch {
            dv: vec![0.0; self.ops.len()],
            dg: vec![0.0; self.ops.len() * self.dim],
        }
    }

    pub fn base(&self, x: &[f64]) -> Result<BasePoint> {
        let d = self.dim;
        if x.len() != d {
            return Err(Error::usage(format!(
                "point has dimension {} but the tape expects {d}",
                x.len()
            )));
        }
        let n = self.ops.len();
        let mut values = vec![0.0; n];
        let mut grads = vec![0.0; n * d];
        let mut slopes = vec![0.0; n];
        for (k, op) in self.ops.iter().enumerate() {
            let (head, tail) = grads.split_at_mut(k * d);
            let g = &mut tail[..d];
            values[k] = match *op {
                Op::Const(c) => c,
                Op::Var(j) => {
                    g[j] = 1.0;
                    x[j]
                }
                Op::Neg(a) => {
                    for j in 0..d {
                        g[j] = -head[a * d + j];
                    }
                    -values[a]
                }
                Op::Add(a, b) => {
                    for j in 0..d {
                        g[j] = head[a * d + j] + head[b * d + j];
                    }
                    values[a] + values[b]
                }
                Op::Sub(a, b) => {
                    for j in 0..d {
                        g[j] = head[a * d + j] - head[b * d + j];
                    }
                    values[a] - values[b]
                }
                Op::Mul(a, b) => {
                    for j in 0..d {
                        g[j] = head[a * d + j] * values[b] + values[a] * head[b * d + j];
                    }
                    values[a] * values[b]
                }
                Op::Pow(a, e) => {
                    let slope = if e == 0 {
                        0.0
                    } else {
                        e as f64 * values[a].powi(e as i32 - 1)
                    };
                    for j in 0..d {
                        g[j] = slope * head[a * d + j];
                    }
                    values[a].powi(e as i32)
                }
                Op::Call(h, a) => {
                    let slope = h.derivative(values[a]);
                    slopes[k] = slope;
                    for j in 0..d {
                        g[j] = slope * head[a * d + j];
                    }
                    h.apply(values[a])
                }
            };
        }
        if let Some(v) = values.iter().chain(&grads).find(|v| !v.is_finite()) {
            return Err(Error::numeric(format!(
                "non-finite intermediate {v} while differentiating at {x:?}"
            )));
        }
        Ok(BasePoint {
            point: x.to_vec(),
            values,
            grads,
            slopes,
        })
    }

    /// Writes `M(x+ε) − M(x)` into `out`, where `x` is the base point.
    pub fn gradient_difference(
        &self,
        base: &BasePoint,
        eps: &[f64],
        scratch: &mut Scratch,
        out: &mut [f64],
    ) {
        let d = self.dim;
        let Scratch { dv, dg } = scratch;
        let (v0, g0) = (&base.values, &base.grads);
        for (k, op) in self.ops.iter().enumerate() {
            let (head, tail) = dg.split_at_mut(k * d);
            let g = &mut tail[..d];
            dv[k] = match *op {
                Op::Const(_) => {
                    g.fill(0.0);
                    0.0
                }
                Op::Var(j) => {
                    g.fill(0.0);
                    eps[j]
                }
                Op::Neg(a) => {
                    for j in 0..d {
                        g[j] = -head[a * d + j];
                    }
                    -dv[a]
                }
                Op::Add(a, b) => {
                    for j in 0..d {
                        g[j] = head[a * d + j] + head[b * d + j];
                    }
                    dv[a] + dv[b]
                }
                Op::Sub(a, b) => {
                    for j in 0..d {
                        g[j] = head[a * d + j] - head[b * d + j];
                    }
                    dv[a] - dv[b]
                }
                Op::Mul(a, b) => {
                    let b1 = v0[b] + dv[b];
                    for j in 0..d {
                        let (da, db) = (head[a * d + j], head[b * d + j]);
                        let gb1 = g0[b * d + j] + db;
                        g[j] = (da * b1 + g0[a * d + j] * dv[b]) + (dv[a] * gb1 + v0[a] * db);
                    }
                    dv[a] * b1 + v0[a] * dv[b]
                }
                Op::Pow(a, e) => {
                    if e == 0 {
                        g.fill(0.0);
                        0.0
                    } else {
                        let (a0, a1) = (v0[a], v0[a] + dv[a]);
                        // s_m = Σ_{j<m} a1^j a0^{m-1-j}, so a1^m − a0^m = Δa·s_m
                        let mut s_prev = 0.0;
                        let mut s = 1.0;
                        let mut a0_pow = 1.0;
                        for _ in 1..e {
                            a0_pow *= a0;
                            s_prev = s;
                            s = s * a1 + a0_pow;
                        }
                        let a0_pow_em1 = a0_pow;
                        let d_pow_em1 = dv[a] * s_prev;
                        let ef = e as f64;
                        for j in 0..d {
                            let ga1 = g0[a * d + j] + head[a * d + j];
                            g[j] = ef * (d_pow_em1 * ga1 + a0_pow_em1 * head[a * d + j]);
                        }
                        dv[a] * s
                    }
                }
                Op::Call(h, a) => {
                    let (a0, a1) = (v0[a], v0[a] + dv[a]);
                    let d_slope = h.derivative(a1) - base.slopes[k];
                    for j in 0..d {
                        let ga1 = g0[a * d + j] + head[a * d + j];
                        g[j] = d_slope * ga1 + base.slopes[k] * head[a * d + j];
                    }
                    h.apply(a1) - h.apply(a0)
                }
            };
        }
        let root = (self.ops.len() - 1) * d;
        out.copy_from_slice(&dg[root..root + d]);
    }
}

fn push(e: &Expr, ops: &mut Vec<Op>) -> usize {
    let op = match e {
        Expr::Const(c) => Op::Const(*c),
        Expr::Var(i) => Op::Var(*i),
        Expr::Neg(a) => Op::Neg(push(a, ops)),
        Expr::Add(a, b) => {
            let (a, b) = (push(a, ops), push(b, ops));
            Op::Add(a, b)
        }
        Expr::Sub(a, b) => {
            let (a, b) = (push(a, ops), push(b, ops));
            Op::Sub(a, b)
        }
        Expr::Mul(a, b) => {
            let (a, b) = (push(a, ops), push(b, ops));
            Op::Mul(a, b)
        }
        Expr::Pow(a, n) => Op::Pow(push(a, ops), *n),
        Expr::Call(f, a) => Op::Call(*f, push(a, ops)),
    };
    ops.push(op);
    ops.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::highdiff::saliency;

    fn tape(s: &str, d: usize) -> (ScoreFunction, GradientTape) {
        let f = ScoreFunction::parse(s).unwrap();
        let t = GradientTape::compile(&f, d).unwrap();
        (f, t)
    }

    #[test]
    fn base_gradient_matches_jets() {
        for src in [
            "x1^3 - 2*x1*x2 + 4",
            "tanh(x1 + 0.5*x2)*x2",
            "exp(sin(x1))*cos(x2)^2 + sigmoid(x1*x2) - softplus(-x2)",
            "7",
        ] {
            let (f, t) = tape(src, 2);
            let x = [0.3, -0.7];
            let b = t.base(&x).unwrap();
            let s = saliency(&f, &x).unwrap();
            for (a, e) in b.gradient().iter().zip(&s) {
                assert!((a - e).abs() <= 1e-14 * e.abs().max(1.0), "{src}: {a} vs {e}");
            }
            assert!((b.value() - f.evaluate(&x).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn differences_match_direct_gradients() {
        for src in [
            "x1^3 - 2*x1*x2 + 4",
            "tanh(x1 + 0.5*x2)*x2",
            "(x1 - x2)^5 + x2^0",
            "exp(sin(x1))*cos(x2)^2 + sigmoid(x1*x2) - softplus(-x2)",
        ] {
            let (f, t) = tape(src, 2);
            let x = [0.3, -0.7];
            let eps = [0.11, -0.05];
            let y = [x[0] + eps[0], x[1] + eps[1]];
            let b = t.base(&x).unwrap();
            let mut sc = t.scratch();
            let mut out = [0.0; 2];
            t.gradient_difference(&b, &eps, &mut sc, &mut out);
            let gx = saliency(&f, &x).unwrap();
            let gy = saliency(&f, &y).unwrap();
            for j in 0..2 {
                let want = gy[j] - gx[j];
                assert!((out[j] - want).abs() < 1e-13, "{src}: {} vs {want}", out[j]);
            }
        }
    }

    #[test]
    fn affine_addend_leaves_differences_bitwise_unchanged() {
        let (_, tf) = tape("sin(x1*x2)^3 + x1^4", 2);
        let (_, tg) = tape("(sin(x1*x2)^3 + x1^4) + (0.37*x1 - 2.1*x2 + 9.5)", 2);
        let x = [0.81, -1.3];
        let (bf, bg) = (tf.base(&x).unwrap(), tg.base(&x).unwrap());
        let (mut sf, mut sg) = (tf.scratch(), tg.scratch());
        let (mut of, mut og) = ([0.0; 2], [0.0; 2]);
        for k in 0..200 {
            let eps = [(k as f64 * 0.37).sin() * 0.3, (k as f64 * 1.1).cos() * 0.2];
            tf.gradient_difference(&bf, &eps, &mut sf, &mut of);
            tg.gradient_difference(&bg, &eps, &mut sg, &mut og);
            // bitwise up to the sign of an exact zero
            for j in 0..2 {
                assert!(of[j].to_bits() == og[j].to_bits() || (of[j] == 0.0 && og[j] == 0.0));
            }
        }
    }

    #[test]
    fn compile_rejects_small_dimension() {
        let f = ScoreFunction::parse("x3").unwrap();
        assert!(GradientTape::compile(&f, 2).is_err());
    }
}
