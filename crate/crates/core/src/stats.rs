//! Compensated accumulation.

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.compensation += (self.sum - t) + v;
        } else {
            self.compensation += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.compensation += other.compensation;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Power sums `Σδ, Σδ², Σδ³, Σδ⁴` of one coordinate's samples.
#[derive(Debug, Clone, Copy, Default)]
pub struct PowerSums {
    pub count: u64,
    pub s1: CompensatedSum,
    pub s2: CompensatedSum,
    pub s3: CompensatedSum,
    pub s4: CompensatedSum,
}

impl PowerSums {
    #[inline]
    pub fn push(&mut self, v: f64) {
        let v2 = v * v;
        self.count += 1;
        self.s1.add(v);
        self.s2.add(v2);
        self.s3.add(v2 * v);
        self.s4.add(v2 * v2);
    }

    pub fn merge(&mut self, other: &PowerSums) {
        self.count += other.count;
        self.s1.merge(&other.s1);
        self.s2.merge(&other.s2);
        self.s3.merge(&other.s3);
        self.s4.merge(&other.s4);
    }

    pub fn mean(&self) -> f64 {
        self.s1.value() / self.count as f64
    }

    /// Variance with divisor `n`, clamped at zero.
    pub fn population_variance(&self) -> f64 {
        let n = self.count as f64;
        let m = self.s1.value() / n;
        (self.s2.value() / n - m * m).max(0.0)
    }

    /// Fourth central moment with divisor `n`.
    pub fn fourth_central_moment(&self) -> f64 {
        let n = self.count as f64;
        let m = self.s1.value() / n;
        let (e2, e3, e4) = (self.s2.value() / n, self.s3.value() / n, self.s4.value() / n);
        (e4 - 4.0 * m * e3 + 6.0 * m * m * e2 - 3.0 * m.powi(4)).max(0.0)
    }
}

/// Population mean and variance (divisor `n`) computed in two passes.
pub fn mean_and_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mut s = CompensatedSum::default();
    xs.iter().for_each(|&x| s.add(x));
    let mean = s.value() / n;
    let mut q = CompensatedSum::default();
    xs.iter().for_each(|&x| q.add((x - mean) * (x - mean)));
    (mean, q.value() / n)
}

/// Population covariance (divisor `n`) computed in two passes.
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, _) = mean_and_variance(xs);
    let (my, _) = mean_and_variance(ys);
    let mut c = CompensatedSum::default();
    xs.iter()
        .zip(ys)
        .for_each(|(&x, &y)| c.add((x - mx) * (y - my)));
    c.value() / xs.len() as f64
}
