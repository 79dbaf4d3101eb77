//! Laws of the log-disorder `z = log Z`.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use statrs::function::erf::erfc;

use crate::error::{invalid, LyapError, Result};
use crate::rng;

/// Built-in families. `Constant` is the degenerate law `z = const`, accepted only
/// by the Monte Carlo routines as a validation mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum Family {
    Gaussian { mu: f64, sigma: f64 },
    Laplace { mu: f64, scale: f64 },
    /// `z = a + b*eta` with probability `p`, otherwise `mu2 + sigma2*eta`.
    #[serde(alias = "bernoulligaussianmix")]
    Mixture { p: f64, a: f64, b: f64, mu2: f64, #[serde(default = "one")] sigma2: f64 },
    Table(Table),
    Constant { z: f64 },
}

fn one() -> f64 {
    1.0
}

/// Piecewise-linear density through `(x[i], pdf[i])`, zero outside `[x[0], x[n-1]]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawTable")]
pub struct Table {
    x: Vec<f64>,
    pdf: Vec<f64>,
    #[serde(skip)]
    cum: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTable {
    x: Vec<f64>,
    pdf: Vec<f64>,
}

impl PartialEq for Table {
    fn eq(&self, other: &Self) -> bool {
        self.x == other.x && self.pdf == other.pdf
    }
}

impl TryFrom<RawTable> for Table {
    type Error = LyapError;
    fn try_from(raw: RawTable) -> Result<Table> {
        Table::new(raw.x, raw.pdf)
    }
}

impl Table {
    /// Validates the nodes and renormalizes the density to unit mass.
    pub fn new(x: Vec<f64>, pdf: Vec<f64>) -> Result<Table> {
        if x.len() != pdf.len() {
            return Err(invalid("pdf", format!("length {} does not match x length {}", pdf.len(), x.len())));
        }
        if x.len() < 2 {
            return Err(invalid("x", "need at least 2 nodes"));
        }
        if x.iter().any(|v| !v.is_finite()) || x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("x", "nodes must be finite and strictly increasing"));
        }
        if pdf.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid("pdf", "values must be finite and nonnegative"));
        }
        let mut cum = vec![0.0; x.len()];
        for i in 1..x.len() {
            cum[i] = cum[i - 1] + 0.5 * (x[i] - x[i - 1]) * (pdf[i] + pdf[i - 1]);
        }
        let mass = cum[x.len() - 1];
        if mass <= 0.0 {
            return Err(invalid("pdf", "density has zero mass"));
        }
        let pdf = pdf.iter().map(|p| p / mass).collect();
        cum.iter_mut().for_each(|c| *c /= mass);
        Ok(Table { x, pdf, cum })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.pdf
    }

    fn segment(&self, x: f64) -> Option<usize> {
        let n = self.x.len();
        if x < self.x[0] || x > self.x[n - 1] {
            return None;
        }
        Some(self.x.partition_point(|&v| v <= x).clamp(1, n - 1) - 1)
    }

    fn pdf(&self, x: f64) -> f64 {
        match self.segment(x) {
            None => 0.0,
            Some(j) => {
                let t = (x - self.x[j]) / (self.x[j + 1] - self.x[j]);
                self.pdf[j] + t * (self.pdf[j + 1] - self.pdf[j])
            }
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        if x <= self.x[0] {
            return 0.0;
        }
        if x >= self.x[self.x.len() - 1] {
            return 1.0;
        }
        let j = self.segment(x).expect("inside support");
        let h = self.x[j + 1] - self.x[j];
        let t = x - self.x[j];
        let slope = (self.pdf[j + 1] - self.pdf[j]) / h;
        (self.cum[j] + self.pdf[j] * t + 0.5 * slope * t * t).min(1.0)
    }

    fn tail(&self, x: f64) -> f64 {
        if x <= self.x[0] {
            return 1.0;
        }
        if x >= self.x[self.x.len() - 1] {
            return 0.0;
        }
        let j = self.segment(x).expect("inside support");
        let h = self.x[j + 1] - self.x[j];
        let t = self.x[j + 1] - x;
        let slope = (self.pdf[j + 1] - self.pdf[j]) / h;
        // mass of [x, x[j+1]] plus everything to the right of x[j+1]
        let piece = self.pdf[j + 1] * t - 0.5 * slope * t * t;
        ((1.0 - self.cum[j + 1]) + piece).max(0.0)
    }

    /// Exact moments of a piecewise-linear density via Simpson's rule per segment.
    fn moment(&self, power: i32) -> f64 {
        self.x
            .windows(2)
            .zip(self.pdf.windows(2))
            .map(|(xs, ps)| {
                let m = 0.5 * (xs[0] + xs[1]);
                let pm = 0.5 * (ps[0] + ps[1]);
                (xs[1] - xs[0]) / 6.0 * (xs[0].powi(power) * ps[0] + 4.0 * m.powi(power) * pm + xs[1].powi(power) * ps[1])
            })
            .sum()
    }

    fn exp_moment(&self, u: f64) -> f64 {
        // 5-point Gauss-Legendre per segment
        const NODES: [f64; 5] = [0.0, -0.538_469_310_105_683, 0.538_469_310_105_683, -0.906_179_845_938_664, 0.906_179_845_938_664];
        const WEIGHTS: [f64; 5] = [
            0.568_888_888_888_889,
            0.478_628_670_499_366,
            0.478_628_670_499_366,
            0.236_926_885_056_189,
            0.236_926_885_056_189,
        ];
        self.x
            .windows(2)
            .zip(self.pdf.windows(2))
            .map(|(xs, ps)| {
                let half = 0.5 * (xs[1] - xs[0]);
                let mid = 0.5 * (xs[1] + xs[0]);
                NODES
                    .iter()
                    .zip(WEIGHTS)
                    .map(|(&t, w)| {
                        let p = 0.5 * (ps[0] + ps[1]) + 0.5 * t * (ps[1] - ps[0]);
                        w * p * (u * (mid + half * t)).exp()
                    })
                    .sum::<f64>()
                    * half
            })
            .sum()
    }

    fn quantile(&self, u: f64) -> f64 {
        let n = self.x.len();
        let j = (self.cum.partition_point(|&c| c <= u).clamp(1, n - 1)) - 1;
        let h = self.x[j + 1] - self.x[j];
        let r = u - self.cum[j];
        let p0 = self.pdf[j];
        let a = 0.5 * (self.pdf[j + 1] - p0) / h;
        let disc = (p0 * p0 + 4.0 * a * r).max(0.0);
        let denom = p0 + disc.sqrt();
        let t = if denom > 0.0 { 2.0 * r / denom } else { 0.0 };
        self.x[j] + t.clamp(0.0, h)
    }

    fn mirror(&self) -> Table {
        let x: Vec<f64> = self.x.iter().rev().map(|v| -v).collect();
        let pdf: Vec<f64> = self.pdf.iter().rev().copied().collect();
        let cum = self.cum.iter().rev().map(|c| 1.0 - c).collect();
        Table { x, pdf, cum }
    }
}

/// The law of `z`, optionally shifted by `shift` (the law of `z + shift`).
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderModel {
    family: Family,
    shift: f64,
}

fn normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let t = (x - mu) / sigma;
    (-0.5 * t * t).exp() / (sigma * (2.0 * PI).sqrt())
}

fn normal_cdf(x: f64, mu: f64, sigma: f64) -> f64 {
    0.5 * erfc(-(x - mu) / (sigma * SQRT_2))
}

fn normal_tail(x: f64, mu: f64, sigma: f64) -> f64 {
    0.5 * erfc((x - mu) / (sigma * SQRT_2))
}

impl DisorderModel {
    pub fn new(family: Family) -> Result<Self> {
        Self::with_shift(family, 0.0)
    }

    pub fn with_shift(family: Family, shift: f64) -> Result<Self> {
        let finite = |name: &'static str, v: f64| if v.is_finite() { Ok(()) } else { Err(invalid(name, "must be finite")) };
        finite("shift", shift)?;
        match &family {
            Family::Gaussian { mu, sigma } => {
                finite("mu", *mu)?;
                if !(*sigma > 0.0) || !sigma.is_finite() {
                    return Err(LyapError::DegenerateSigma("sigma"));
                }
            }
            Family::Laplace { mu, scale } => {
                finite("mu", *mu)?;
                if !(*scale > 0.0) || !scale.is_finite() {
                    return Err(LyapError::DegenerateSigma("scale"));
                }
            }
            Family::Mixture { p, a, b, mu2, sigma2 } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(invalid("p", "must lie in [0, 1]"));
                }
                finite("a", *a)?;
                finite("mu2", *mu2)?;
                if !(*b > 0.0) || !b.is_finite() {
                    return Err(LyapError::DegenerateSigma("b"));
                }
                if !(*sigma2 > 0.0) || !sigma2.is_finite() {
                    return Err(LyapError::DegenerateSigma("sigma2"));
                }
            }
            Family::Table(_) => {}
            Family::Constant { z } => finite("z", *z)?,
        }
        Ok(DisorderModel { family, shift })
    }

    pub fn gaussian(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(Family::Gaussian { mu, sigma })
    }

    pub fn laplace(mu: f64, scale: f64) -> Result<Self> {
        Self::new(Family::Laplace { mu, scale })
    }

    pub fn mixture(p: f64, a: f64, b: f64, mu2: f64, sigma2: f64) -> Result<Self> {
        Self::new(Family::Mixture { p, a, b, mu2, sigma2 })
    }

    /// The asymmetric bimodal balanced law `xi*(-1/2 + 3 eta/10) + (1-xi)*(eta + 1)`, `P(xi = 1) = 2/3`.
    pub fn bimodal_example() -> Self {
        Self::mixture(2.0 / 3.0, -0.5, 0.3, 1.0, 1.0).expect("valid parameters")
    }

    pub fn table(x: Vec<f64>, pdf: Vec<f64>) -> Result<Self> {
        Self::new(Family::Table(Table::new(x, pdf)?))
    }

    /// Degenerate law `Z = e^z` almost surely.
    pub fn constant(z: f64) -> Result<Self> {
        Self::new(Family::Constant { z })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn has_density(&self) -> bool {
        !matches!(self.family, Family::Constant { .. })
    }

    pub fn require_density(&self) -> Result<()> {
        if self.has_density() {
            Ok(())
        } else {
            Err(LyapError::NoDensity)
        }
    }

    /// Same family, shifted so that the mean is zero.
    pub fn centered(&self) -> Self {
        DisorderModel { family: self.family.clone(), shift: -self.family_mean() }
    }

    /// The law of `-z`.
    pub fn mirror(&self) -> Self {
        let family = match &self.family {
            Family::Gaussian { mu, sigma } => Family::Gaussian { mu: -mu, sigma: *sigma },
            Family::Laplace { mu, scale } => Family::Laplace { mu: -mu, scale: *scale },
            Family::Mixture { p, a, b, mu2, sigma2 } => Family::Mixture { p: *p, a: -a, b: *b, mu2: -mu2, sigma2: *sigma2 },
            Family::Table(t) => Family::Table(t.mirror()),
            Family::Constant { z } => Family::Constant { z: -z },
        };
        DisorderModel { family, shift: -self.shift }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let x = x - self.shift;
        match &self.family {
            Family::Gaussian { mu, sigma } => normal_pdf(x, *mu, *sigma),
            Family::Laplace { mu, scale } => (-(x - mu).abs() / scale).exp() / (2.0 * scale),
            Family::Mixture { p, a, b, mu2, sigma2 } => p * normal_pdf(x, *a, *b) + (1.0 - p) * normal_pdf(x, *mu2, *sigma2),
            Family::Table(t) => t.pdf(x),
            Family::Constant { .. } => 0.0,
        }
    }

    /// `P(z <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        let x = x - self.shift;
        match &self.family {
            Family::Gaussian { mu, sigma } => normal_cdf(x, *mu, *sigma),
            Family::Laplace { mu, scale } => {
                let t = (x - mu) / scale;
                if t < 0.0 {
                    0.5 * t.exp()
                } else {
                    1.0 - 0.5 * (-t).exp()
                }
            }
            Family::Mixture { p, a, b, mu2, sigma2 } => p * normal_cdf(x, *a, *b) + (1.0 - p) * normal_cdf(x, *mu2, *sigma2),
            Family::Table(t) => t.cdf(x),
            Family::Constant { z } => f64::from(u8::from(x >= *z)),
        }
    }

    /// `P(z > x)`, computed without cancellation.
    pub fn tail(&self, x: f64) -> f64 {
        let x = x - self.shift;
        match &self.family {
            Family::Gaussian { mu, sigma } => normal_tail(x, *mu, *sigma),
            Family::Laplace { mu, scale } => {
                let t = (x - mu) / scale;
                if t < 0.0 {
                    1.0 - 0.5 * t.exp()
                } else {
                    0.5 * (-t).exp()
                }
            }
            Family::Mixture { p, a, b, mu2, sigma2 } => p * normal_tail(x, *a, *b) + (1.0 - p) * normal_tail(x, *mu2, *sigma2),
            Family::Table(t) => t.tail(x),
            Family::Constant { z } => f64::from(u8::from(x < *z)),
        }
    }

    fn family_mean(&self) -> f64 {
        match &self.family {
            Family::Gaussian { mu, .. } | Family::Laplace { mu, .. } => *mu,
            Family::Mixture { p, a, mu2, .. } => p * a + (1.0 - p) * mu2,
            Family::Table(t) => t.moment(1),
            Family::Constant { z } => *z,
        }
    }

    pub fn mean(&self) -> f64 {
        self.family_mean() + self.shift
    }

    pub fn variance(&self) -> f64 {
        match &self.family {
            Family::Gaussian { sigma, .. } => sigma * sigma,
            Family::Laplace { scale, .. } => 2.0 * scale * scale,
            Family::Mixture { p, a, b, mu2, sigma2 } => {
                let m = p * a + (1.0 - p) * mu2;
                p * (b * b + a * a) + (1.0 - p) * (sigma2 * sigma2 + mu2 * mu2) - m * m
            }
            Family::Table(t) => {
                let m = t.moment(1);
                t.moment(2) - m * m
            }
            Family::Constant { .. } => 0.0,
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// The exponential-integrability rate: `E[e^{u z}]` is finite for `|u| < delta`.
    pub fn tail_rate_delta(&self) -> f64 {
        match &self.family {
            Family::Laplace { scale, .. } => 1.0 / scale,
            _ => f64::INFINITY,
        }
    }

    /// Hölder exponent of the density. Every built-in density is Lipschitz.
    pub fn holder_theta(&self) -> f64 {
        1.0
    }

    /// `E[e^{u z}] = E[Z^u]`.
    pub fn exp_moment(&self, u: f64) -> Result<f64> {
        let band = self.tail_rate_delta();
        if !u.is_finite() || u.abs() >= band {
            return Err(LyapError::MomentDiverges { u, band });
        }
        let base = match &self.family {
            Family::Gaussian { mu, sigma } => (u * mu + 0.5 * u * u * sigma * sigma).exp(),
            Family::Laplace { mu, scale } => (u * mu).exp() / (1.0 - scale * scale * u * u),
            Family::Mixture { p, a, b, mu2, sigma2 } => {
                p * (u * a + 0.5 * u * u * b * b).exp() + (1.0 - p) * (u * mu2 + 0.5 * u * u * sigma2 * sigma2).exp()
            }
            Family::Table(t) => t.exp_moment(u),
            Family::Constant { z } => (u * z).exp(),
        };
        Ok(base * (u * self.shift).exp())
    }

    /// The nonzero root of `E[Z^alpha] = 1`, or `None` for a balanced law.
    pub fn solve_alpha(&self) -> Result<Option<f64>> {
        let mean = self.mean();
        if mean.abs() < 1e-12 {
            return Ok(None);
        }
        if self.variance() == 0.0 {
            return Err(LyapError::NoRootInBand);
        }
        // f(u) = E[e^{u z}] - 1 dips below zero on the side opposite to the mean.
        let dir = -mean.signum();
        let band = self.tail_rate_delta();
        let f = |u: f64| self.exp_moment(dir * u).map(|m| m - 1.0);

        let mut lo = 1e-3;
        while f(lo)? >= 0.0 {
            lo *= 0.5;
            if lo < 1e-300 {
                return Err(LyapError::NoRootInBand);
            }
        }
        let mut hi = lo;
        loop {
            let mut next = 2.0 * hi;
            if next >= band {
                next = 0.5 * (hi + band);
            }
            if (band.is_finite() && next - hi <= 1e-14 * band) || next > 1e6 {
                return Err(LyapError::NoRootInBand);
            }
            let v = f(next)?;
            if v.is_infinite() {
                return Err(LyapError::NoRootInBand);
            }
            if v > 0.0 {
                hi = next;
                break;
            }
            lo = next;
            hi = next;
        }
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if f(mid)? < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Some(dir * 0.5 * (lo + hi)))
    }

    /// One draw of `z`.
    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z = match &self.family {
            Family::Gaussian { mu, sigma } => mu + sigma * rng.sample::<f64, _>(StandardNormal),
            Family::Laplace { mu, scale } => {
                let u: f64 = rng.random::<f64>() - 0.5;
                mu - scale * u.signum() * (-2.0 * u.abs()).ln_1p()
            }
            Family::Mixture { p, a, b, mu2, sigma2 } => {
                let first = rng.random::<f64>() < *p;
                let eta: f64 = rng.sample(StandardNormal);
                if first {
                    a + b * eta
                } else {
                    mu2 + sigma2 * eta
                }
            }
            Family::Table(t) => t.quantile(rng.random::<f64>()),
            Family::Constant { z } => *z,
        };
        z + self.shift
    }

    /// `n` IID draws from the stream `(seed, stream_id)`.
    pub fn sample(&self, seed: u64, stream_id: u64, n: usize) -> Vec<f64> {
        let mut r = rng::stream(seed, stream_id);
        (0..n).map(|_| self.draw(&mut r)).collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| LyapError::InvalidModel(e.to_string()))?;
        Self::from_value(value)
    }

    /// Accepts the family object plus optional `"shift"` (number) and `"center"` (bool) keys.
    pub fn from_value(mut value: Value) -> Result<Self> {
        let obj = value.as_object_mut().ok_or_else(|| LyapError::InvalidModel("expected a JSON object".into()))?;
        let shift = match obj.remove("shift") {
            None => 0.0,
            Some(v) => v.as_f64().ok_or_else(|| invalid("shift", "must be a number"))?,
        };
        let center = match obj.remove("center") {
            None => false,
            Some(v) => v.as_bool().ok_or_else(|| invalid("center", "must be a boolean"))?,
        };
        let family: Family = serde_json::from_value(value).map_err(|e| LyapError::InvalidModel(e.to_string()))?;
        let model = Self::with_shift(family, shift)?;
        Ok(if center { model.centered() } else { model })
    }

    pub fn to_value(&self) -> Value {
        let mut v = serde_json::to_value(&self.family).expect("family serializes");
        if self.shift != 0.0 {
            v.as_object_mut().expect("object").insert("shift".into(), self.shift.into());
        }
        v
    }
}

impl Serialize for DisorderModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_value().serialize(s)
    }
}

impl<'de> Deserialize<'de> for DisorderModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        DisorderModel::from_value(v).map_err(serde::de::Error::custom)
    }
}
