//! Small numerical helpers shared across modules.

/// `log(1 + e^t)` without overflow.
#[inline]
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Logistic function `1 / (1 + e^{-t})`.
#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 - e^{-t})` for `t > 0`, accurate both for tiny and large `t`.
#[inline]
pub fn log1mexp(t: f64) -> f64 {
    debug_assert!(t > 0.0);
    if t < std::f64::consts::LN_2 {
        (-(-t).exp_m1()).ln()
    } else {
        (-(-t).exp()).ln_1p()
    }
}

/// Composite trapezoid rule on a uniform grid.
pub fn trapezoid(values: &[f64], dx: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = values[1..n - 1].iter().sum();
            dx * (inner + 0.5 * (values[0] + values[n - 1]))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares `y ~ intercept + slope * x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    LinearFit { slope, intercept, r2 }
}

/// Mean and standard error from a set of batch means.
pub fn batch_stats(batch_means: &[f64]) -> (f64, f64) {
    let b = batch_means.len() as f64;
    let mut sum = CompensatedSum::default();
    batch_means.iter().for_each(|&m| sum.add(m));
    let mean = sum.value() / b;
    if batch_means.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = batch_means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (b - 1.0);
    (mean, (var / b).sqrt())
}

/// Splits `total` items into `parts` contiguous chunks whose sizes differ by at most one.
pub fn split_even(total: u64, parts: usize) -> Vec<u64> {
    let p = parts as u64;
    (0..p).map(|i| total / p + u64::from(i < total % p)).collect()
}

/// Neumaier compensated sum, for long runs of similar terms.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline(always)]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Accumulates a stream of values into contiguous batch means.
#[derive(Debug, Clone)]
pub struct BatchMeans {
    sizes: Vec<u64>,
    sums: Vec<f64>,
    current: usize,
    filled: u64,
}

impl BatchMeans {
    pub fn new(total: u64, batches: usize) -> Self {
        BatchMeans { sizes: split_even(total, batches), sums: vec![0.0; batches], current: 0, filled: 0 }
    }

    #[inline]
    pub fn push(&mut self, value: f64) {
        while self.current < self.sizes.len() && self.filled == self.sizes[self.current] {
            self.current += 1;
            self.filled = 0;
        }
        if let Some(s) = self.sums.get_mut(self.current) {
            *s += value;
            self.filled += 1;
        }
    }

    pub fn finish(&self) -> (f64, f64) {
        let means: Vec<f64> = self
            .sums
            .iter()
            .zip(&self.sizes)
            .filter(|(_, &n)| n > 0)
            .map(|(s, &n)| s / n as f64)
            .collect();
        batch_stats(&means)
    }
}

/// Four-point Lagrange interpolation on a uniform grid; returns value and derivative.
///
/// `t` is the fractional index. Callers must keep `t` within `[0, n-1]`.
pub fn cubic_interp(values: &[f64], t: f64) -> (f64, f64) {
    let n = values.len();
    debug_assert!(n >= 4);
    let i = (t.floor() as isize).clamp(1, n as isize - 3) as usize;
    let s = t - i as f64;
    let (p0, p1, p2, p3) = (values[i - 1], values[i], values[i + 1], values[i + 2]);
    // Lagrange basis on nodes -1, 0, 1, 2.
    let l0 = -s * (s - 1.0) * (s - 2.0) / 6.0;
    let l1 = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0;
    let l2 = -(s + 1.0) * s * (s - 2.0) / 2.0;
    let l3 = (s + 1.0) * s * (s - 1.0) / 6.0;
    let d0 = -(3.0 * s * s - 6.0 * s + 2.0) / 6.0;
    let d1 = (3.0 * s * s - 4.0 * s - 1.0) / 2.0;
    let d2 = -(3.0 * s * s - 2.0 * s - 2.0) / 2.0;
    let d3 = (3.0 * s * s - 1.0) / 6.0;
    (
        p0 * l0 + p1 * l1 + p2 * l2 + p3 * l3,
        p0 * d0 + p1 * d1 + p2 * d2 + p3 * d3,
    )
}

/// Central differences (one-sided at the ends) of samples with spacing `dx`.
pub fn derivative(values: &[f64], dx: f64) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| match i {
            0 => (values[1] - values[0]) / dx,
            _ if i == n - 1 => (values[n - 1] - values[n - 2]) / dx,
            _ => (values[i + 1] - values[i - 1]) / (2.0 * dx),
        })
        .collect()
}

/// Sup distance between an empirical CDF of `samples` and a reference CDF.
pub fn kolmogorov_distance(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(|a, b| a.total_cmp(b));
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    d
}

/// Fixed-width histogram on `[lo, hi)` with under/overflow counters.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        assert!(hi > lo && bins > 0);
        Histogram { lo, hi, counts: vec![0; bins], underflow: 0, overflow: 0 }
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        if x < self.lo {
            self.underflow += 1;
        } else if x >= self.hi {
            self.overflow += 1;
        } else {
            let n = self.counts.len();
            let i = ((x - self.lo) / self.width()) as usize;
            self.counts[i.min(n - 1)] += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }

    pub fn merge(&mut self, other: &Histogram) {
        assert_eq!(self.counts.len(), other.counts.len());
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        self.underflow += other.underflow;
        self.overflow += other.overflow;
    }

    pub fn edges(&self, i: usize) -> (f64, f64) {
        let w = self.width();
        (self.lo + i as f64 * w, self.lo + (i + 1) as f64 * w)
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.bins()).map(|i| self.lo + (i as f64 + 0.5) * self.width()).collect()
    }

    /// Counts divided by total count and bin width.
    pub fn density(&self) -> Vec<f64> {
        let norm = self.total() as f64 * self.width();
        self.counts.iter().map(|&c| c as f64 / norm).collect()
    }
}
