//! Monte Carlo SmoothGrad and VarGrad.
//!
//! For `n` iid draws `ε_k ~ N(0, σ²I)`:
//!
//! * SmoothGrad: `(1/n) Σ M(x + ε_k)`
//! * VarGrad: `(1/n) Σ M(x + ε_k)² − SmoothGrad²` (divisor `n`)
//!
//! both per coordinate, with `M = ∇f`. Samples are processed in fixed blocks
//! whose partial sums are merged in block order, so results do not depend on
//! the rayon schedule or thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::ScoreFunction;
use crate::gauss::Sigma;
use crate::rng::NoiseStream;
use crate::stats::PowerSums;
use crate::tape::GradientTape;

const BLOCK: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma: Sigma,
    pub n: u64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma: f64, n: u64, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::usage("sample count must be at least 1"));
        }
        Ok(NoiseSpec {
            sigma: Sigma::new(sigma)?,
            n,
            seed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Saliency,
    SmoothgradMc,
    VargradMc,
    Series,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionVector {
    pub values: Vec<f64>,
    /// Absent for deterministic results.
    pub standard_error: Option<Vec<f64>>,
    pub method: Method,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VarianceDivisor {
    /// Divide by `n`, as VarGrad is defined.
    #[default]
    Population,
    /// Divide by `n − 1`.
    Bessel,
}

/// Per-coordinate power sums of `δ_k = M(x+ε_k) − M(x)` plus the base gradient.
#[derive(Debug, Clone)]
pub struct NoiseRun {
    pub saliency: Vec<f64>,
    pub sums: Vec<PowerSums>,
}

impl NoiseRun {
    pub fn smoothgrad(&self) -> AttributionVector {
        let n = self.sums.first().map_or(0, |s| s.count);
        let values = self
            .saliency
            .iter()
            .zip(&self.sums)
            .map(|(m0, s)| m0 + s.mean())
            .collect();
        let standard_error = self
            .sums
            .iter()
            .map(|s| {
                if n < 2 {
                    0.0
                } else {
                    (s.population_variance() / (n - 1) as f64).sqrt()
                }
            })
            .collect();
        AttributionVector {
            values,
            standard_error: Some(standard_error),
            method: Method::SmoothgradMc,
        }
    }

    pub fn vargrad(&self) -> AttributionVector {
        self.vargrad_with(VarianceDivisor::Population)
    }

    pub fn vargrad_with(&self, divisor: VarianceDivisor) -> AttributionVector {
        let values = self
            .sums
            .iter()
            .map(|s| {
                let v = s.population_variance();
                match divisor {
                    VarianceDivisor::Population => v,
                    VarianceDivisor::Bessel if s.count > 1 => {
                        v * s.count as f64 / (s.count - 1) as f64
                    }
                    VarianceDivisor::Bessel => 0.0,
                }
            })
            .collect();
        // delta-method standard error of the sample variance: √((μ₄ − σ⁴)/n)
        let standard_error = self
            .sums
            .iter()
            .map(|s| {
                let v = s.population_variance();
                ((s.fourth_central_moment() - v * v).max(0.0) / s.count as f64).sqrt()
            })
            .collect();
        AttributionVector {
            values,
            standard_error: Some(standard_error),
            method: Method::VargradMc,
        }
    }
}

/// Draws the noise once per sample index and accumulates gradient differences.
pub fn noise_run(f: &ScoreFunction, x: &[f64], noise: &NoiseSpec) -> Result<NoiseRun> {
    f.check_point(x)?;
    let d = x.len();
    if d == 0 {
        return Err(Error::usage("point must have at least one coordinate"));
    }
    let tape = GradientTape::compile(f, d)?;
    let base = tape.base(x)?;
    let saliency = base.gradient().to_vec();
    let sigma = noise.sigma.value();
    if noise.sigma.is_zero() {
        let mut sums = vec![PowerSums::default(); d];
        for s in &mut sums {
            for _ in 0..noise.n {
                s.push(0.0);
            }
        }
        return Ok(NoiseRun { saliency, sums });
    }
    let stream = NoiseStream::new(noise.seed);
    let blocks = noise.n.div_ceil(BLOCK);
    let partials: Vec<Result<Vec<PowerSums>>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut sums = vec![PowerSums::default(); d];
            let mut scratch = tape.scratch();
            let mut eps = vec![0.0; d];
            let mut delta = vec![0.0; d];
            for k in b * BLOCK..((b + 1) * BLOCK).min(noise.n) {
                stream.standard_normals(k, &mut eps);
                eps.iter_mut().for_each(|e| *e *= sigma);
                tape.gradient_difference(&base, &eps, &mut scratch, &mut delta);
                if let Some(j) = delta.iter().position(|v| !v.is_finite()) {
                    return Err(Error::numeric(format!(
                        "gradient sample {k} is not finite in coordinate {}",
                        j + 1
                    )));
                }
                for (s, &v) in sums.iter_mut().zip(&delta) {
                    s.push(v);
                }
            }
            Ok(sums)
        })
        .collect();
    let mut sums = vec![PowerSums::default(); d];
    for block in partials {
        for (acc, part) in sums.iter_mut().zip(block?) {
            acc.merge(&part);
        }
    }
    Ok(NoiseRun { saliency, sums })
}

pub fn smoothgrad_mc(f: &ScoreFunction, x: &[f64], noise: &NoiseSpec) -> Result<AttributionVector> {
    Ok(noise_run(f, x, noise)?.smoothgrad())
}

pub fn vargrad_mc(f: &ScoreFunction, x: &[f64], noise: &NoiseSpec) -> Result<AttributionVector> {
    Ok(noise_run(f, x, noise)?.vargrad())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedResult {
    pub smoothgrad: (AttributionVector, AttributionVector),
    pub vargrad: (AttributionVector, AttributionVector),
}

/// Runs both estimators for `f` and `g` on the same noise realizations.
/// Both must be defined on the point's space.
pub fn paired_run(
    f: &ScoreFunction,
    g: &ScoreFunction,
    x: &[f64],
    noise: &NoiseSpec,
) -> Result<PairedResult> {
    let needed = f.dimension().max(g.dimension());
    if x.len() < needed {
        return Err(Error::usage(format!(
            "paired functions need {needed} coordinates, point has {}",
            x.len()
        )));
    }
    let rf = noise_run(f, x, noise)?;
    let rg = noise_run(g, x, noise)?;
    Ok(PairedResult {
        smoothgrad: (rf.smoothgrad(), rg.smoothgrad()),
        vargrad: (rf.vargrad(), rg.vargrad()),
    })
}
