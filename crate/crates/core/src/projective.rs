//! Projective maps `h_k`, `h` and the chains they drive.
//!
//! In log-slope coordinates the action of `M(e^{-k}, e^z)` on the positive
//! cone is `x -> z + h_k(x)`. Its `k -> infinity` limit seen from the edge `-k`
//! is `y -> z + h(y)`.

use serde::Serialize;

use crate::disorder::DisorderModel;
use crate::error::{invalid, LyapError, Result};
use crate::exec::Exec;
use crate::matprod::LyapEstimate;
use crate::numeric::{log1mexp, sigmoid, softplus, split_even, BatchMeans, Histogram};
use crate::rng;

/// `log((e^{-k} + e^x) / (1 + e^{x-k}))`, odd and increasing with image `(-k, k)`.
#[inline]
pub fn hk(x: f64, k: f64) -> f64 {
    let a = x.abs();
    if a <= k {
        x + softplus(-k - x) - softplus(x - k)
    } else {
        let e = (-k - a).exp();
        let r = ((k - a).exp() - e) / (1.0 + e);
        // the exact value lies strictly below k; round down instead of onto k
        let v = (k - r.ln_1p()).min(f64::from_bits(k.to_bits() - 1));
        x.signum() * v
    }
}

/// `h_k'(x) = (1 - e^{-2k}) / ((1 + e^{-k-|x|}) (1 + e^{|x|-k}))`.
#[inline]
pub fn hk_derivative(x: f64, k: f64) -> f64 {
    let a = x.abs();
    -(-2.0 * k).exp_m1() / ((1.0 + (-k - a).exp()) * (1.0 + (a - k).exp()))
}

/// The unique `x` with `hk(x, k) = u`.
pub fn hk_inverse(u: f64, k: f64) -> Result<f64> {
    if !(u.abs() < k) {
        return Err(LyapError::OutsideImage { u, k });
    }
    Ok(u + log1mexp(k + u) - log1mexp(k - u))
}

/// `h(y) = y + log(1 + e^{-y})`.
#[inline]
pub fn h_edge(y: f64) -> f64 {
    softplus(y)
}

/// `h(y) - y = log(1 + e^{-y})`, without the cancellation of the difference.
#[inline]
pub fn h_edge_excess(y: f64) -> f64 {
    softplus(-y)
}

#[inline]
pub fn h_edge_derivative(y: f64) -> f64 {
    sigmoid(y)
}

/// A projective map: the bulk map `h_k` or the edge map `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProjectiveMap {
    Bulk { k: f64 },
    Edge,
}

impl ProjectiveMap {
    pub fn bulk(k: f64) -> Result<Self> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(invalid("k", "must be positive and finite"));
        }
        Ok(ProjectiveMap::Bulk { k })
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            ProjectiveMap::Bulk { k } => hk(x, k),
            ProjectiveMap::Edge => h_edge(x),
        }
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            ProjectiveMap::Bulk { k } => hk_derivative(x, k),
            ProjectiveMap::Edge => h_edge_derivative(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub k: f64,
    pub model: DisorderModel,
    pub burn_in: u64,
    pub steps: u64,
    pub seed: u64,
    pub x0: f64,
}

impl ChainConfig {
    pub fn new(k: f64, model: DisorderModel) -> Self {
        ChainConfig { k, model, burn_in: 100_000, steps: 1_000_000, seed: 0, x0: 0.0 }
    }

    pub fn steps(mut self, steps: u64) -> Self {
        self.steps = steps;
        self
    }

    pub fn burn_in(mut self, burn_in: u64) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn x0(mut self, x0: f64) -> Self {
        self.x0 = x0;
        self
    }

    fn validate(&self) -> Result<()> {
        ProjectiveMap::bulk(self.k)?;
        if self.steps == 0 {
            return Err(invalid("steps", "must be at least 1"));
        }
        if !self.x0.is_finite() {
            return Err(invalid("x0", "must be finite"));
        }
        Ok(())
    }

    /// Default histogram window: the image of `h_k` widened by the spread of `z`.
    pub fn default_histogram(&self) -> Histogram {
        let half = self.k + 6.0 * self.model.std_dev() + 1.0;
        let bins = (2.0 * half / 0.05).ceil() as usize;
        Histogram::new(-half, half, bins)
    }
}

/// Post-burn-in statistics of the chain `X_{n+1} = z_{n+1} + h_k(X_n)`.
#[derive(Debug, Clone)]
pub struct XSummary {
    pub histogram: Histogram,
    /// Time average of `X_n - h_k(X_n)`, which vanishes under the invariant law.
    pub drift_mean: f64,
    pub drift_stderr: f64,
    pub max_state: f64,
    /// `max_n (X_n - z_n)`; always below `k`.
    pub max_state_minus_z: f64,
    pub path: Option<Vec<f64>>,
}

/// Runs the bulk chain from `cfg.x0` and histograms the states after burn-in.
pub fn simulate_x(cfg: &ChainConfig, histogram: Option<Histogram>, keep_path: bool) -> Result<XSummary> {
    cfg.validate()?;
    let k = cfg.k;
    let mut r = rng::stream(cfg.seed, 0);
    let mut x = cfg.x0;
    for _ in 0..cfg.burn_in {
        x = cfg.model.draw(&mut r) + hk(x, k);
    }
    let mut hist = histogram.unwrap_or_else(|| cfg.default_histogram());
    let mut drift = BatchMeans::new(cfg.steps, 32.min(cfg.steps as usize));
    let mut path = keep_path.then(|| Vec::with_capacity(cfg.steps as usize));
    let (mut max_state, mut max_gap) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for _ in 0..cfg.steps {
        let z = cfg.model.draw(&mut r);
        let hx = hk(x, k);
        x = z + hx;
        hist.add(x);
        drift.push(x - hk(x, k));
        max_state = max_state.max(x);
        max_gap = max_gap.max(hx);
        if let Some(p) = path.as_mut() {
            p.push(x);
        }
    }
    let (drift_mean, drift_stderr) = drift.finish();
    Ok(XSummary { histogram: hist, drift_mean, drift_stderr, max_state, max_state_minus_z: max_gap, path })
}

/// Furstenberg time average `E[z] + <log(1 + e^{-k-X_n})>` over `batches` independent chains.
///
/// Each chain runs on stream `(seed, b)`, discards `burn_in` steps and
/// accumulates its share of `steps`.
pub fn ergodic_lyapunov(cfg: &ChainConfig, batches: usize, exec: Exec) -> Result<LyapEstimate> {
    cfg.validate()?;
    if batches < 2 || (batches as u64) > cfg.steps {
        return Err(invalid("batches", "need 2 <= batches <= steps"));
    }
    let k = cfg.k;
    let sizes = split_even(cfg.steps, batches);
    let means = exec.map(batches, |b| {
        let mut r = rng::stream(cfg.seed, b as u64);
        let mut x = cfg.x0;
        for _ in 0..cfg.burn_in {
            x = cfg.model.draw(&mut r) + hk(x, k);
        }
        let mut acc = 0.0;
        for _ in 0..sizes[b] {
            x = cfg.model.draw(&mut r) + hk(x, k);
            acc += softplus(-k - x);
        }
        acc / sizes[b] as f64
    });
    let mut est = LyapEstimate::from_batches(&means, cfg.steps, cfg.seed, Some((-k).exp()), Some(k));
    est.mean += cfg.model.mean();
    Ok(est)
}

/// Path statistics of the edge chain `Y_{n+1} = z_{n+1} + h(Y_n)`.
#[derive(Debug, Clone)]
pub struct YSummary {
    /// Occupation counts of `Y_1..Y_steps` on the requested window.
    pub histogram: Histogram,
    /// `(n, max_{m <= n} Y_m)` at `n = 10, 100, 1000, ...` and at the final step.
    pub running_max: Vec<(u64, f64)>,
    /// `min_n (Y_n - z_n)`; nonnegative because `h >= 0`.
    pub min_gap: f64,
    pub last: f64,
    pub path: Option<Vec<f64>>,
}

impl YSummary {
    pub fn max_after(&self, n: u64) -> Option<f64> {
        self.running_max.iter().find(|(m, _)| *m == n).map(|p| p.1)
    }
}

pub fn simulate_y(model: &DisorderModel, steps: u64, seed: u64, y0: f64, window: Histogram, keep_path: bool) -> Result<YSummary> {
    if steps == 0 {
        return Err(invalid("steps", "must be at least 1"));
    }
    if !y0.is_finite() {
        return Err(invalid("y0", "must be finite"));
    }
    let mut r = rng::stream(seed, 0);
    let mut hist = window;
    let mut y = y0;
    let mut max = f64::NEG_INFINITY;
    let mut min_gap = f64::INFINITY;
    let mut running_max = Vec::new();
    let mut next_mark = 10u64;
    let mut path = keep_path.then(|| Vec::with_capacity(steps as usize));
    for n in 1..=steps {
        let hy = h_edge(y);
        y = model.draw(&mut r) + hy;
        min_gap = min_gap.min(hy);
        max = max.max(y);
        hist.add(y);
        if let Some(p) = path.as_mut() {
            p.push(y);
        }
        if n == next_mark {
            running_max.push((n, max));
            next_mark = next_mark.saturating_mul(10);
        }
    }
    if running_max.last().map(|p| p.0) != Some(steps) {
        running_max.push((steps, max));
    }
    Ok(YSummary { histogram: hist, running_max, min_gap, last: y, path })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitStats {
    pub k: f64,
    pub mean: f64,
    pub stderr: f64,
    pub replicas: usize,
    pub max: u64,
    pub cap: u64,
}

/// Steps cap for an exit-time replica: `10^4 k^2`.
pub fn exit_cap(k: f64) -> u64 {
    (1e4 * k * k).ceil() as u64
}

fn exit_one(k: f64, model: &DisorderModel, x0: f64, seed: u64, replica: u64, cap: u64) -> Result<u64> {
    if x0.abs() >= k {
        return Ok(0);
    }
    let mut r = rng::stream(seed, replica);
    let mut x = x0;
    for n in 1..=cap {
        x = model.draw(&mut r) + hk(x, k);
        if x.abs() >= k {
            return Ok(n);
        }
    }
    Err(LyapError::NoExitWithinCap { k, cap })
}

/// Mean of `tau_k = min{n >= 0 : |X_n| >= k}` over `replicas` chains started at `x0`.
///
/// Replica `r` uses stream `(seed, r)`, so runs at different `k` with the same
/// seed share their driving noise.
pub fn exit_time(k: f64, model: &DisorderModel, x0: f64, seed: u64, replicas: usize, exec: Exec) -> Result<ExitStats> {
    ProjectiveMap::bulk(k)?;
    if replicas < 2 {
        return Err(invalid("replicas", "need at least 2 replicas"));
    }
    let cap = exit_cap(k);
    let taus = exec.try_map(replicas, |i| exit_one(k, model, x0, seed, i as u64, cap))?;
    let n = replicas as f64;
    let mean = taus.iter().sum::<u64>() as f64 / n;
    let var = taus.iter().map(|&t| (t as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(ExitStats { k, mean, stderr: (var / n).sqrt(), replicas, max: taus.iter().copied().max().unwrap_or(0), cap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn naive_hk(x: f64, k: f64) -> f64 {
        (((-k) as f64).exp() + x.exp()).ln() - (1.0 + (x - k).exp()).ln()
    }

    #[test]
    fn hk_values() {
        for &k in &[0.5, 3.0, 10.0] {
            assert_eq!(hk(0.0, k), 0.0);
        }
        let k = 10.0;
        let expect = k - std::f64::consts::LN_2 + (-2.0 * k as f64).exp().ln_1p();
        assert!((hk(k, k) - expect).abs() < 1e-14);
        assert_relative_eq!(hk(2.3, 4.0), naive_hk(2.3, 4.0), max_relative = 1e-14);
        assert!(hk(700.0, 5.0) < 5.0 && hk(-700.0, 5.0) > -5.0);
        assert!(hk(700.0, 5.0).is_finite());
    }

    #[test]
    fn hk_is_almost_identity_in_the_bulk() {
        for &k in &[4.0, 10.0, 20.0] {
            let x = k / 2.0;
            assert!((x - hk(x, k)).abs() <= (-(k - x)).exp() + (-(k + x)).exp());
        }
    }

    #[test]
    fn derivative_values() {
        for &k in &[1.0f64, 5.0, 12.0] {
            let edge = 0.5 - 1.0 / ((2.0 * k).exp() + 1.0);
            assert_relative_eq!(hk_derivative(k, k), edge, max_relative = 1e-14);
            assert_relative_eq!(hk_derivative(-k, k), edge, max_relative = 1e-14);
            // at the origin the slope is tanh(k/2), just below one
            assert_relative_eq!(hk_derivative(0.0, k), (k / 2.0).tanh(), max_relative = 1e-14);
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let k = 6.0;
        for i in 0..100 {
            let x = -15.0 + 0.3 * i as f64;
            let d = 1e-5;
            let num = (hk(x + d, k) - hk(x - d, k)) / (2.0 * d);
            assert!((num - hk_derivative(x, k)).abs() < 1e-6, "x = {x}");
        }
    }

    #[test]
    fn inverse_round_trip() {
        let k = 10.0;
        assert_eq!(hk_inverse(0.0, k).unwrap(), 0.0);
        for &x in &[-20.0, -1.0, 3.0, k - 0.1] {
            assert!((hk_inverse(hk(x, k), k).unwrap() - x).abs() < 1e-10, "x = {x}");
        }
        let e = hk_inverse(k, k).unwrap_err();
        assert!(e.to_string().contains("outside image"));
    }

    #[test]
    fn edge_map_limits() {
        let lo = h_edge(-40.0);
        assert!(lo > 0.0 && lo < 1e-15);
        let hi = h_edge_excess(40.0);
        assert_eq!(h_edge_excess(-3.0), h_edge(-3.0) + 3.0);
        assert!(hi > 0.0 && hi < 1e-15);
    }

    #[test]
    fn chain_containment_and_drift() {
        let cfg = ChainConfig::new(5.0, DisorderModel::gaussian(0.0, 1.0).unwrap()).steps(1_000_000).seed(3);
        let s = simulate_x(&cfg, None, false).unwrap();
        assert!(s.max_state_minus_z < cfg.k);
        assert!(s.drift_mean.abs() < 3.0 * s.drift_stderr, "{} +- {}", s.drift_mean, s.drift_stderr);
        assert_eq!(s.histogram.total(), 1_000_000);
        let again = simulate_x(&cfg, None, false).unwrap();
        assert_eq!(s.histogram, again.histogram);
    }

    #[test]
    fn constant_law_fixed_point() {
        let k = 2.0;
        let cfg = ChainConfig::new(k, DisorderModel::constant(0.0).unwrap()).steps(1000).burn_in(0);
        let e = ergodic_lyapunov(&cfg, 4, Exec::Sequential).unwrap();
        assert_relative_eq!(e.mean, (-k as f64).exp().ln_1p(), max_relative = 1e-14);
    }

    #[test]
    fn ergodic_is_positive() {
        let cfg = ChainConfig::new(15.0, DisorderModel::gaussian(0.0, 1.0).unwrap()).steps(200_000).burn_in(1000);
        assert!(ergodic_lyapunov(&cfg, 8, Exec::default()).unwrap().mean > 0.0);
    }

    #[test]
    fn edge_chain_properties() {
        let g = DisorderModel::gaussian(0.0, 1.0).unwrap();
        let s = simulate_y(&g, 1_000_000, 1, 0.0, Histogram::new(-5.0, 20.0, 250), false).unwrap();
        assert!(s.min_gap >= 0.0);
        assert!(s.max_after(1_000_000).unwrap() > s.max_after(10_000).unwrap());

        let c = DisorderModel::constant(0.0).unwrap();
        let s = simulate_y(&c, 50, 0, 0.0, Histogram::new(0.0, 1.0, 1), true).unwrap();
        let p = s.path.unwrap();
        assert!(p.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn exit_time_basics() {
        let g = DisorderModel::gaussian(0.0, 1.0).unwrap();
        let outside = exit_time(4.0, &g, 5.0, 0, 10, Exec::Sequential).unwrap();
        assert_eq!(outside.mean, 0.0);
        let a = exit_time(4.0, &g, 0.0, 1, 200, Exec::default()).unwrap();
        let b = exit_time(8.0, &g, 0.0, 1, 200, Exec::default()).unwrap();
        assert!(b.mean > a.mean);
        assert_eq!(a, exit_time(4.0, &g, 0.0, 1, 200, Exec::Sequential).unwrap());
    }

    #[test]
    fn exit_cap_is_reported() {
        // z = 0 keeps the chain at the fixed point 0 forever
        let c = DisorderModel::constant(0.0).unwrap();
        let e = exit_time(1.0, &c, 0.0, 0, 2, Exec::Sequential).unwrap_err();
        assert!(matches!(e, LyapError::NoExitWithinCap { cap: 10_000, .. }));
    }

    proptest! {
        #[test]
        fn hk_odd_increasing_bounded(x in -50.0..50.0f64, d in 1e-6..5.0f64, k in 0.1..30.0f64) {
            prop_assert!((hk(-x, k) + hk(x, k)).abs() < 1e-12);
            if x.abs() + d < k + 10.0 {
                prop_assert!(hk(x + d, k) > hk(x, k));
            } else {
                prop_assert!(hk(x + d, k) >= hk(x, k));
            }
            prop_assert!(hk(x, k).abs() < k);
            let dv = hk_derivative(x, k);
            prop_assert!(dv > 0.0 && dv <= 1.0);
        }

        #[test]
        fn inverse_inverts(u in -0.999..0.999f64, k in 0.5..20.0f64) {
            let u = u * k;
            let x = hk_inverse(u, k).unwrap();
            prop_assert!((hk(x, k) - u).abs() < 1e-12 * (1.0 + x.abs()));
        }

        #[test]
        fn edge_map_dominates(y in -50.0..50.0f64) {
            prop_assert!(h_edge(y) >= y.max(0.0));
        }

        #[test]
        fn monotone_coupling(a in -15.0..15.0f64, b in -15.0..15.0f64, seed in 0u64..1000) {
            let g = DisorderModel::gaussian(0.0, 1.0).unwrap();
            let k = 6.0;
            let (mut x, mut y) = (a.min(b), a.max(b));
            let mut r = rng::stream(seed, 0);
            for _ in 0..500 {
                let z = g.draw(&mut r);
                x = z + hk(x, k);
                y = z + hk(y, k);
                prop_assert!(x <= y);
            }
        }
    }

    #[test]
    fn sorted_abscissae_stay_sorted() {
        for &k in &[1.0, 6.0, 15.0] {
            let v: Vec<f64> = (0..1000).map(|i| hk(-30.0 + 0.06 * i as f64, k)).collect();
            assert!(v.windows(2).all(|w| w[1] > w[0]));
        }
    }
}
