//! Direct Monte Carlo estimation of the top Lyapunov exponent of
//! `M(eps, Z) = [[1, eps], [eps Z, Z]]`.

use serde::{Deserialize, Serialize};

use crate::disorder::DisorderModel;
use crate::error::{invalid, LyapError, Result};
use crate::exec::Exec;
use crate::numeric::{batch_stats, CompensatedSum, linear_fit, split_even, LinearFit};
use crate::rng;

/// A Lyapunov exponent estimate in nats per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapEstimate {
    pub mean: f64,
    /// Standard deviation of the batch means divided by `sqrt(batches)`.
    pub stderr: f64,
    pub steps: u64,
    pub batches: usize,
    pub seed: u64,
    pub epsilon: Option<f64>,
    pub k: Option<f64>,
}

impl LyapEstimate {
    pub(crate) fn from_batches(batch_means: &[f64], steps: u64, seed: u64, epsilon: Option<f64>, k: Option<f64>) -> Self {
        let (mean, stderr) = batch_stats(batch_means);
        LyapEstimate { mean, stderr, steps, batches: batch_means.len(), seed, epsilon, k }
    }
}

/// Vector norm used for renormalization. Any norm gives the same exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VectorNorm {
    #[default]
    RowSum,
    MaxEntry,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McParams {
    pub steps: u64,
    pub batches: usize,
    /// Independent chains the steps and batches are spread over.
    pub chains: usize,
    pub seed: u64,
    pub norm: VectorNorm,
    pub exec: Exec,
}

impl McParams {
    pub fn new(steps: u64, seed: u64) -> Self {
        McParams { steps, batches: 32, chains: 1, seed, norm: VectorNorm::RowSum, exec: Exec::default() }
    }

    pub fn batches(mut self, batches: usize) -> Self {
        self.batches = batches;
        self
    }

    pub fn chains(mut self, chains: usize) -> Self {
        self.chains = chains;
        self
    }

    pub fn norm(mut self, norm: VectorNorm) -> Self {
        self.norm = norm;
        self
    }

    pub fn exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.batches < 2 {
            return Err(invalid("batches", "need at least 2 batches"));
        }
        if self.chains == 0 || self.chains > self.batches {
            return Err(invalid("chains", format!("need 1 <= chains <= batches, got {}", self.chains)));
        }
        if self.steps < self.batches as u64 {
            return Err(invalid("steps", format!("need steps >= batches ({} < {})", self.steps, self.batches)));
        }
        Ok(())
    }
}

fn check_epsilon(epsilon: f64) -> Result<f64> {
    let e = epsilon.abs();
    if !e.is_finite() || e >= 1.0 {
        return Err(LyapError::EpsilonOutOfRange(epsilon));
    }
    Ok(e)
}

/// Direction vector on the positive cone, renormalized after every step.
#[derive(Debug, Clone, Copy)]
struct Cone {
    v1: f64,
    v2: f64,
}

impl Cone {
    const START: Cone = Cone { v1: 0.5, v2: 0.5 };

    /// Multiplies by `M(eps, e^z)`, renormalizes, and returns the log of the norm.
    #[inline(always)]
    fn step(&mut self, eps: f64, z: f64, norm: VectorNorm) -> Result<f64> {
        let zz = z.exp();
        if !(zz > 0.0) || !zz.is_finite() {
            return Err(LyapError::NonpositiveZ(z));
        }
        let a = self.v1 + eps * self.v2;
        let b = zz * (eps * self.v1 + self.v2);
        let n = match norm {
            VectorNorm::RowSum => a + b,
            VectorNorm::MaxEntry => a.max(b),
        };
        self.v1 = a / n;
        self.v2 = b / n;
        Ok(n.ln())
    }
}

/// Log-norm of `M(eps, e^{z_n}) ... M(eps, e^{z_1}) v0` with `v0 = (1/2, 1/2)`,
/// accumulated with per-step renormalization.
pub fn log_norm_product(epsilon: f64, zs: &[f64], norm: VectorNorm) -> Result<f64> {
    let eps = check_epsilon(epsilon)?;
    let mut v = Cone::START;
    zs.iter().try_fold(0.0, |acc, &z| Ok(acc + v.step(eps, z, norm)?))
}

/// One chain: burn-in of 1% of its length, then consecutive batches of `sizes`.
fn run_chain(eps: f64, model: &DisorderModel, sizes: &[u64], seed: u64, stream: u64, norm: VectorNorm) -> Result<Vec<f64>> {
    let mut r = rng::stream(seed, stream);
    let mut v = Cone::START;
    for _ in 0..sizes.iter().sum::<u64>() / 100 {
        v.step(eps, model.draw(&mut r), norm)?;
    }
    sizes
        .iter()
        .map(|&n| {
            let mut acc = CompensatedSum::default();
            for _ in 0..n {
                acc.add(v.step(eps, model.draw(&mut r), norm)?);
            }
            Ok(acc.value() / n as f64)
        })
        .collect()
}

/// Monte Carlo estimate of `L_Z(eps)` by batch means.
///
/// The `steps` are split over `chains` independent chains on streams `(seed, c)`,
/// each discarding 1% of its length as burn-in and cut into consecutive batches.
/// Negative `epsilon` is mapped to `|epsilon|`.
pub fn lyapunov_mc(epsilon: f64, model: &DisorderModel, params: &McParams) -> Result<LyapEstimate> {
    let eps = check_epsilon(epsilon)?;
    params.validate()?;
    let chain_steps = split_even(params.steps, params.chains);
    let chain_batches: Vec<u64> = split_even(params.batches as u64, params.chains);
    let per_chain = params.exec.try_map(params.chains, |c| {
        let sizes = split_even(chain_steps[c], chain_batches[c] as usize);
        run_chain(eps, model, &sizes, params.seed, c as u64, params.norm)
    })?;
    let means: Vec<f64> = per_chain.into_iter().flatten().collect();
    let k = (eps > 0.0).then(|| -eps.ln());
    Ok(LyapEstimate::from_batches(&means, params.steps, params.seed, Some(eps), k))
}

/// One estimate per `epsilon`, the `i`-th on seed `derive_seed(seed, i)`.
pub fn epsilon_sweep(model: &DisorderModel, epsilons: &[f64], params: &McParams) -> Result<Vec<LyapEstimate>> {
    for &e in epsilons {
        if !(e > 0.0 && e < 1.0) {
            return Err(LyapError::EpsilonOutOfRange(e));
        }
    }
    params.exec.try_map(epsilons.len(), |i| {
        let p = McParams { seed: rng::derive_seed(params.seed, i as u64), ..*params };
        lyapunov_mc(epsilons[i], model, &p)
    })
}

/// Least-squares fit of `log L` against `log eps`.
pub fn power_law_fit(sweep: &[LyapEstimate]) -> Result<LinearFit> {
    let points: Vec<(f64, f64)> = sweep
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let eps = e.epsilon.or(e.k.map(|k| (-k).exp())).ok_or_else(|| invalid("sweep", format!("entry {i} records neither epsilon nor k")))?;
            Ok((eps, e.mean))
        })
        .collect::<Result<_>>()?;
    power_law_fit_points(&points)
}

/// Same as [`power_law_fit`] on raw `(eps, L)` pairs.
pub fn power_law_fit_points(points: &[(f64, f64)]) -> Result<LinearFit> {
    if points.len() < 3 {
        return Err(LyapError::TooFewPoints { need: 3, got: points.len() });
    }
    if let Some((index, &(_, value))) = points.iter().enumerate().find(|(_, p)| !(p.1 > 0.0)) {
        return Err(LyapError::NonpositiveEstimate { index, value });
    }
    let x: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    Ok(linear_fit(&x, &y))
}
