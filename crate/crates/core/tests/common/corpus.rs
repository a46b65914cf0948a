//! Seeded generators for random score functions and points.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const FUNCS: [&str; 6] = ["exp", "tanh", "sin", "cos", "sigmoid", "softplus"];

/// A polynomial in `d` variables with total degree at most `max_degree` and
/// coefficients in `[-2, 2]`.
pub fn random_polynomial(rng: &mut ChaCha8Rng, d: usize, max_degree: u32) -> String {
    let terms = rng.gen_range(1..=6);
    let mut parts = Vec::with_capacity(terms);
    for t in 0..terms {
        // the first term pins the top degree so the corpus covers it
        let total = if t == 0 { max_degree } else { rng.gen_range(0..=max_degree) };
        let mut exps = vec![0u32; d];
        for _ in 0..total {
            exps[rng.gen_range(0..d)] += 1;
        }
        let c: f64 = rng.gen_range(-2.0..=2.0);
        let mut s = format!("{c:?}");
        for (m, &e) in exps.iter().enumerate() {
            match e {
                0 => {}
                1 => s.push_str(&format!("*x{}", m + 1)),
                _ => s.push_str(&format!("*x{}^{e}", m + 1)),
            }
        }
        parts.push(s);
    }
    parts.join(" + ")
}

fn leaf(rng: &mut ChaCha8Rng, d: usize) -> String {
    if rng.gen_bool(0.7) {
        format!("x{}", rng.gen_range(1..=d))
    } else {
        format!("{:.3}", rng.gen_range(0.1..1.5))
    }
}

/// A smooth expression in `d` variables containing at least one transcendental call.
/// Arguments are scaled down so values stay moderate on `[-1, 1]^d`.
pub fn random_analytic(rng: &mut ChaCha8Rng, d: usize) -> String {
    let inner = analytic_node(rng, d, 2);
    let f = FUNCS.choose(rng).unwrap();
    let outer = format!("{f}(0.5*({inner}))");
    match rng.gen_range(0..3) {
        0 => outer,
        1 => format!("{outer}*{}", leaf(rng, d)),
        _ => format!("{outer} + {}", analytic_node(rng, d, 1)),
    }
}

fn analytic_node(rng: &mut ChaCha8Rng, d: usize, depth: u32) -> String {
    if depth == 0 {
        return leaf(rng, d);
    }
    let a = analytic_node(rng, d, depth - 1);
    match rng.gen_range(0..6) {
        0 => format!("{a} + {}", analytic_node(rng, d, depth - 1)),
        1 => format!("{a} - {}", analytic_node(rng, d, depth - 1)),
        2 => format!("({a})*({})", analytic_node(rng, d, depth - 1)),
        3 => format!("({a})^2"),
        4 => format!("-({a})"),
        _ => format!("{}(0.5*({a}))", FUNCS.choose(rng).unwrap()),
    }
}

/// Arbitrary grammar-valid text, including unary minus, nested powers and
/// exponent-notation literals. Values may overflow.
pub fn random_expression(rng: &mut ChaCha8Rng, d: usize, depth: u32) -> String {
    if depth == 0 {
        return match rng.gen_range(0..4) {
            0 => format!("{:.4}", rng.gen_range(0.0..3.0)),
            1 => format!("{}e-{}", rng.gen_range(1..9), rng.gen_range(0..3)),
            _ => format!("x{}", rng.gen_range(1..=d)),
        };
    }
    let a = random_expression(rng, d, depth - 1);
    let b = random_expression(rng, d, depth - 1);
    match rng.gen_range(0..8) {
        0 => format!("{a} + {b}"),
        1 => format!("{a} - {b}"),
        2 => format!("{a} * {b}"),
        3 => format!("({a}) * -({b})"),
        4 => format!("-({a})^{}", rng.gen_range(0..4)),
        5 => format!("({a})^{} - {b}", rng.gen_range(0..3)),
        6 => format!("{}({a})", FUNCS.choose(rng).unwrap()),
        _ => format!("({a} + {b})"),
    }
}

pub fn random_point(rng: &mut ChaCha8Rng, d: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(lo..=hi)).collect()
}
