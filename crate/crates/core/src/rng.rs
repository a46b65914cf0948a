//! Counter-based Gaussian noise.
//!
//! Sample `k` of a run with master seed `s` is a pure function of `(s, k)`:
//! Philox4x32-10 is keyed with `s`, and block `b` of sample `k` is the
//! encryption of the counter `(k, b)`. Each block yields two 53-bit uniforms
//! `u1 ∈ (0, 1]`, `u2 ∈ [0, 1)`, turned into two standard normals by
//! Box–Muller: `√(−2 ln u1)·cos(2π u2)` and `√(−2 ln u1)·sin(2π u2)`.

use std::f64::consts::TAU;

const MUL0: u32 = 0xD251_1F53;
const MUL1: u32 = 0xCD9E_8D57;
const WEYL0: u32 = 0x9E37_79B9;
const WEYL1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = a as u64 * b as u64;
    ((p >> 32) as u32, p as u32)
}

/// The Philox4x32 bijection with 10 rounds.
pub fn philox4x32_10(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for _ in 0..10 {
        let (hi0, lo0) = mulhilo(MUL0, c[0]);
        let (hi1, lo1) = mulhilo(MUL1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
        k = [k[0].wrapping_add(WEYL0), k[1].wrapping_add(WEYL1)];
    }
    c
}

/// SplitMix64 finalizer, used to derive child seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic child seed for a labelled sub-experiment.
pub fn derive_seed(master: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(mix64(master), |acc, &l| mix64(acc ^ mix64(l)))
}

#[derive(Debug, Clone, Copy)]
pub struct NoiseStream {
    key: [u32; 2],
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        NoiseStream {
            key: [seed as u32, (seed >> 32) as u32],
        }
    }

    #[inline]
    fn block(&self, sample: u64, block: u64) -> (u64, u64) {
        let out = philox4x32_10(
            [sample as u32, (sample >> 32) as u32, block as u32, (block >> 32) as u32],
            self.key,
        );
        (
            (out[1] as u64) << 32 | out[0] as u64,
            (out[3] as u64) << 32 | out[2] as u64,
        )
    }

    /// Two uniforms `(u1, u2)` with `u1 ∈ (0,1]` and `u2 ∈ [0,1)`.
    #[inline]
    pub fn uniforms(&self, sample: u64, block: u64) -> (f64, f64) {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        let (a, b) = self.block(sample, block);
        (((a >> 11) + 1) as f64 * SCALE, (b >> 11) as f64 * SCALE)
    }

    /// Fills `out` with iid `N(0, 1)` draws belonging to `sample`.
    #[inline]
    pub fn standard_normals(&self, sample: u64, out: &mut [f64]) {
        for (b, pair) in out.chunks_mut(2).enumerate() {
            let (u1, u2) = self.uniforms(sample, b as u64);
            let r = (-2.0 * u1.ln()).sqrt();
            let (s, c) = (TAU * u2).sin_cos();
            pair[0] = r * c;
            if let Some(z) = pair.get_mut(1) {
                *z = r * s;
            }
        }
    }
}
