//! A small expression language for smooth score functions `S: R^d → R`.
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor ('*' factor)*
//! factor := ('-')? atom ('^' INT)?
//! atom   := NUMBER | VAR | FUNC '(' expr ')' | '(' expr ')'
//! VAR    := 'x' [1-9][0-9]*
//! FUNC   := exp | tanh | sin | cos | sigmoid | softplus
//! ```
//!
//! Only entire functions are expressible, so every parsed function is `C^∞`.

mod parse;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use parse::{ParseError, ParseErrorKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Func {
    Exp,
    Tanh,
    Sin,
    Cos,
    Sigmoid,
    Softplus,
}

impl Func {
    pub const ALL: [Func; 6] = [
        Func::Exp,
        Func::Tanh,
        Func::Sin,
        Func::Cos,
        Func::Sigmoid,
        Func::Softplus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Tanh => "tanh",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sigmoid => "sigmoid",
            Func::Softplus => "softplus",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn apply(self, z: f64) -> f64 {
        match self {
            Func::Exp => z.exp(),
            Func::Tanh => z.tanh(),
            Func::Sin => z.sin(),
            Func::Cos => z.cos(),
            Func::Sigmoid => sigmoid(z),
            Func::Softplus => z.max(0.0) + (-z.abs()).exp().ln_1p(),
        }
    }

    /// First derivative.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Func::Exp => z.exp(),
            Func::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Func::Sin => z.cos(),
            Func::Cos => -z.sin(),
            Func::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Func::Softplus => sigmoid(z),
        }
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Expression graph node. Variables are stored 0-based (`x1` is `Var(0)`).
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Smoothness {
    Polynomial,
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Degree {
    Finite(u32),
    Unbounded,
}

impl Degree {
    pub fn finite(self) -> Option<u32> {
        match self {
            Degree::Finite(d) => Some(d),
            Degree::Unbounded => None,
        }
    }
}

impl fmt::Display for Degree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Degree::Finite(d) => write!(f, "{d}"),
            Degree::Unbounded => f.write_str("unbounded"),
        }
    }
}

impl Expr {
    /// Highest 1-based variable index referenced, 0 for constants.
    pub fn dimension(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.dimension(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => a.dimension().max(b.dimension()),
        }
    }

    pub fn is_polynomial(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Var(_) => true,
            Expr::Neg(a) | Expr::Pow(a, _) => a.is_polynomial(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.is_polynomial() && b.is_polynomial()
            }
            Expr::Call(..) => false,
        }
    }

    /// Syntactic total degree: sums for products, maxima for sums.
    pub fn degree(&self) -> Degree {
        use Degree::*;
        match self {
            Expr::Const(_) => Finite(0),
            Expr::Var(_) => Finite(1),
            Expr::Neg(a) => a.degree(),
            Expr::Add(a, b) | Expr::Sub(a, b) => a.degree().max(b.degree()),
            Expr::Mul(a, b) => match (a.degree(), b.degree()) {
                (Finite(p), Finite(q)) => Finite(p + q),
                _ => Unbounded,
            },
            Expr::Pow(a, n) => match a.degree() {
                Finite(p) => Finite(p * n),
                Unbounded => Unbounded,
            },
            Expr::Call(..) => Unbounded,
        }
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => x[*i],
            Expr::Neg(a) => -a.eval(x)?,
            Expr::Add(a, b) => a.eval(x)? + b.eval(x)?,
            Expr::Sub(a, b) => a.eval(x)? - b.eval(x)?,
            Expr::Mul(a, b) => a.eval(x)? * b.eval(x)?,
            Expr::Pow(a, n) => a.eval(x)?.powi(*n as i32),
            Expr::Call(f, a) => f.apply(a.eval(x)?),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::numeric(format!("non-finite value while evaluating {self}")))
        }
    }
}

impl fmt::Display for Expr {
    /// Fully parenthesized form that parses back to the same graph.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) if *c < 0.0 || c.is_sign_negative() => write!(f, "(0 - {:?})", -c),
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(a) => write!(f, "-({a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Pow(a, n) => write!(f, "({a})^{n}"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

/// A parsed, immutable smooth score function.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreFunction {
    root: Expr,
    dimension: usize,
    smoothness: Smoothness,
}

impl ScoreFunction {
    pub fn parse(source: &str) -> Result<Self> {
        Ok(Self::from_expr(parse::parse(source)?))
    }

    pub fn from_expr(root: Expr) -> Self {
        let dimension = root.dimension();
        let smoothness = if root.is_polynomial() {
            Smoothness::Polynomial
        } else {
            Smoothness::Analytic
        };
        ScoreFunction {
            root,
            dimension,
            smoothness,
        }
    }

    pub fn root(&self) -> &Expr {
        &self.root
    }

    /// Smallest `d` such that every referenced variable is among `x1…xd`.
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn is_polynomial(&self) -> bool {
        self.smoothness == Smoothness::Polynomial
    }

    pub fn degree(&self) -> Degree {
        self.root.degree()
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() < self.dimension {
            return Err(Error::usage(format!(
                "point has dimension {} but the function references x{}",
                x.len(),
                self.dimension
            )));
        }
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::usage(format!("point has a non-finite coordinate {v}")));
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        self.root.eval(x)
    }
}

impl fmt::Display for ScoreFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

impl std::str::FromStr for ScoreFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScoreFunction::parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> ScoreFunction {
        ScoreFunction::parse(s).unwrap()
    }

    #[test]
    fn parse_examples() {
        let f = parse("x1^3");
        assert_eq!(f.smoothness(), Smoothness::Polynomial);
        assert_eq!(f.dimension(), 1);
        assert_eq!(f.degree(), Degree::Finite(3));

        let g = parse("tanh(x1)*x2 + 0.5*x1^2");
        assert_eq!(g.smoothness(), Smoothness::Analytic);
        assert_eq!(g.dimension(), 2);
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(parse("x1^2 + 2*x2").evaluate(&[1.0, 1.0]).unwrap(), 3.0);
        assert_eq!(parse("tanh(x1)").evaluate(&[0.0]).unwrap(), 0.0);
        assert_eq!(parse("exp(x1)*x2").evaluate(&[0.0, 5.0]).unwrap(), 5.0);
        assert_eq!(parse("7").evaluate(&[]).unwrap(), 7.0);
    }

    #[test]
    fn evaluate_errors() {
        assert!(matches!(
            parse("x1 + x3").evaluate(&[1.0, 2.0]),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            parse("exp(exp(x1))").evaluate(&[10.0]),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn degree_examples() {
        assert_eq!(parse("x1^3").degree(), Degree::Finite(3));
        assert_eq!(parse("x1*x2^2 + x1").degree(), Degree::Finite(3));
        assert_eq!(parse("tanh(x1)").degree(), Degree::Unbounded);
        assert_eq!(parse("(x1 + x2)^0").degree(), Degree::Finite(0));
    }

    #[test]
    fn precedence() {
        // ^ binds tighter than unary minus, which binds tighter than *.
        assert_eq!(parse("-x1^2").evaluate(&[3.0]).unwrap(), -9.0);
        assert_eq!(parse("2*-x1").evaluate(&[3.0]).unwrap(), -6.0);
        assert_eq!(parse("1 - 2 - 3").evaluate(&[]).unwrap(), -4.0);
        assert_eq!(parse("2 + 3*4").evaluate(&[]).unwrap(), 14.0);
        assert_eq!(parse("(2 + 3)*4").evaluate(&[]).unwrap(), 20.0);
    }

    #[test]
    fn smooth_functions() {
        let x = [0.3];
        let close = |s: &str, v: f64| (parse(s).evaluate(&x).unwrap() - v).abs() < 1e-15;
        assert!(close("sigmoid(x1)", 1.0 / (1.0 + (-0.3f64).exp())));
        assert!(close("softplus(x1)", (1.0 + 0.3f64.exp()).ln()));
        assert!(close("sin(x1) + cos(x1)", 0.3f64.sin() + 0.3f64.cos()));
        assert_eq!(Func::Softplus.apply(800.0), 800.0);
        assert_eq!(Func::Sigmoid.apply(-800.0), 0.0);
    }

    #[test]
    fn display_round_trips() {
        for src in [
            "x1^3",
            "tanh(x1)*x2 + 0.5*x1^2",
            "-x1^2 - -(x2)",
            "sigmoid(softplus(x3 * 1e-7)) * 2.5e10",
            "((x1))",
        ] {
            let f = parse(src);
            let again = parse(&f.to_string());
            assert_eq!(f, again, "{src} → {f}");
        }
    }
}
