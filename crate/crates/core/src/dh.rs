//! The glued approximation of the invariant probability and the constants of the
//! small-`epsilon` asymptotic `L = kappa1 / (log(1/epsilon) + kappa2)`.

use serde::{Deserialize, Serialize};

use crate::disorder::DisorderModel;
use crate::edge::{solve_edge_with, EdgeMeasure, EdgeOptions, Side};
use crate::error::{invalid, LyapError, Result};
use crate::exec::Exec;
use crate::kernel::UniformGrid;
use crate::matprod::{lyapunov_mc, McParams};
use crate::numeric::derivative;
use crate::operator::{default_grid, lyap_first_form, GridTail, TransferOperator};
use crate::projective::{ergodic_lyapunov, ChainConfig};
use crate::rng::derive_seed;

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `-log 2 - gamma`: the weak-disorder formula is the asymptote with
/// `kappa1 = 1/4` and this `kappa2`.
pub const WEAK_DISORDER_KAPPA2: f64 = -std::f64::consts::LN_2 - EULER_GAMMA;

/// Edge margin kept between `k` and the top of each edge grid.
const EDGE_MARGIN: f64 = 10.0;

/// Constants extracted from the two edge measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DhConstants {
    pub kappa1: f64,
    pub kappa2: f64,
    pub c_left: f64,
    pub c_right: f64,
    pub rho_left: f64,
    pub rho_right: f64,
    /// `1/2 int F_left(y) / (1 + e^y) dy`
    pub kappa1_left: f64,
    /// `1/2 int F_right(y) / (1 + e^y) dy`
    pub kappa1_right: f64,
}

impl DhConstants {
    pub fn from_edges(left: &EdgeMeasure, right: &EdgeMeasure) -> Self {
        let kappa1_left = 0.5 * left.log_moment();
        let kappa1_right = 0.5 * right.log_moment();
        DhConstants {
            kappa1: 0.5 * (kappa1_left + kappa1_right),
            kappa2: 0.5 * (left.intercept + right.intercept),
            c_left: left.intercept,
            c_right: right.intercept,
            rho_left: left.rho_estimate,
            rho_right: right.rho_estimate,
            kappa1_left,
            kappa1_right,
        }
    }

    /// Difference of the two `kappa1` forms, a quadrature diagnostic.
    pub fn kappa1_discrepancy(&self) -> f64 {
        (self.kappa1_left - self.kappa1_right).abs()
    }

    /// `kappa1 / (k + kappa2)`.
    pub fn asymptotic_lyap(&self, k: f64) -> Result<f64> {
        asymptotic_lyap(self.kappa1, self.kappa2, k)
    }

    pub fn asymptotic_lyap_eps(&self, epsilon: f64) -> Result<f64> {
        self.asymptotic_lyap(k_of_epsilon(epsilon)?)
    }
}

/// Both edge measures of `model`.
#[derive(Debug, Clone)]
pub struct EdgePair {
    pub left: EdgeMeasure,
    pub right: EdgeMeasure,
}

impl EdgePair {
    pub fn solve(model: &DisorderModel, opts: &EdgeOptions, exec: Exec) -> Result<Self> {
        let mut sides = exec.try_map(2, |i| {
            let side = if i == 0 { Side::Left } else { Side::Right };
            solve_edge_with(model, side, opts, Exec::Sequential)
        })?;
        let right = sides.pop().expect("two sides");
        let left = sides.pop().expect("two sides");
        Ok(EdgePair { left, right })
    }

    pub fn constants(&self) -> DhConstants {
        DhConstants::from_edges(&self.left, &self.right)
    }
}

fn k_of_epsilon(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(LyapError::EpsilonOutOfRange(epsilon));
    }
    Ok(-epsilon.ln())
}

/// `kappa1 / (k + kappa2)`.
pub fn asymptotic_lyap(kappa1: f64, kappa2: f64, k: f64) -> Result<f64> {
    if !(k > 0.0) {
        return Err(invalid("k", "must be positive"));
    }
    if !(k + kappa2 > 0.0) {
        return Err(LyapError::AsymptoteUndefined { k, kappa2 });
    }
    Ok(kappa1 / (k + kappa2))
}

/// `1 / (4 (log(1/epsilon) - log 2 - gamma))`.
pub fn weak_disorder_formula(epsilon: f64) -> Result<f64> {
    weak_disorder_formula_k(k_of_epsilon(epsilon)?)
}

pub fn weak_disorder_formula_k(k: f64) -> Result<f64> {
    let d = k + WEAK_DISORDER_KAPPA2;
    if !(d > 0.0) {
        return Err(LyapError::DenominatorNonpositive(d));
    }
    Ok(0.25 / d)
}

/// Glued tail for one `k`.
#[derive(Debug, Clone)]
pub struct DhApprox {
    pub k: f64,
    /// `F_left(k) + F_right(k)`.
    pub ck: f64,
    pub gk: GridTail,
    pub kappa1: f64,
    pub kappa2: f64,
    pub constants: DhConstants,
    /// The two branch values at `x = 0`.
    pub branch_values: (f64, f64),
}

impl DhApprox {
    /// `|C_k - (2k + c_left + c_right)|`.
    pub fn ck_asymptote_gap(&self) -> f64 {
        (self.ck - (2.0 * self.k + self.constants.c_left + self.constants.c_right)).abs()
    }

    /// `L_k[G_k]`.
    pub fn lyap(&self) -> Result<f64> {
        lyap_first_form(&self.gk, self.k)
    }

    pub fn asymptotic_lyap(&self) -> Result<f64> {
        self.constants.asymptotic_lyap(self.k)
    }

    /// `-G_k'` at the nodes.
    pub fn density(&self) -> Vec<f64> {
        self.gk.density()
    }
}

/// Glues the edge measures on the default operator grid of `model`.
pub fn build_dh(k: f64, edges: &EdgePair, model: &DisorderModel) -> Result<DhApprox> {
    build_dh_on(k, edges, default_grid(k, model))
}

/// `G_k(x) = F_right(k - x) / C_k` for `x >= 0` and `1 - F_left(x + k) / C_k`
/// for `x <= 0`.
pub fn build_dh_on(k: f64, edges: &EdgePair, grid: UniformGrid) -> Result<DhApprox> {
    let (left, right) = (&edges.left, &edges.right);
    if !(k > 0.0) {
        return Err(invalid("k", "must be positive"));
    }
    let max_k = (left.grid.hi().min(right.grid.hi())) - EDGE_MARGIN;
    if k > max_k {
        return Err(LyapError::EdgeGridTooShort { k, max_k });
    }
    let ck = left.eval(k) + right.eval(k);
    let branch = |x: f64| {
        if x >= 0.0 {
            right.eval(k - x) / ck
        } else {
            1.0 - left.eval(x + k) / ck
        }
    };
    let values = (0..grid.n).map(|i| branch(grid.x(i)).clamp(0.0, 1.0)).collect();
    let gk = GridTail::new(grid, values, 1.0, 0.0)?;
    let constants = DhConstants::from_edges(left, right);
    Ok(DhApprox {
        k,
        ck,
        gk,
        kappa1: constants.kappa1,
        kappa2: constants.kappa2,
        constants,
        branch_values: (1.0 - left.eval(k) / ck, right.eval(k) / ck),
    })
}

/// `||T G_k - G_k||_1`.
pub fn one_step_residual(dh: &DhApprox, model: &DisorderModel, exec: Exec) -> Result<f64> {
    let op = TransferOperator::new(dh.k, model, dh.gk.grid, exec)?;
    op.apply(&dh.gk)?.l1_distance(&dh.gk)
}

/// Inputs of [`compare_all`].
#[derive(Debug, Clone)]
pub struct CompareParams {
    pub mc_steps: u64,
    pub chain_steps: u64,
    pub chain_burn_in: u64,
    pub batches: usize,
    pub seed: u64,
    pub operator_tol: f64,
    pub edge: EdgeOptions,
    pub exec: Exec,
}

impl Default for CompareParams {
    fn default() -> Self {
        CompareParams {
            mc_steps: 10_000_000,
            chain_steps: 10_000_000,
            chain_burn_in: 100_000,
            batches: 32,
            seed: 0,
            operator_tol: 1e-9,
            edge: EdgeOptions::default(),
            exec: Exec::default(),
        }
    }
}

/// One line of the route comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompareRow {
    pub k: f64,
    pub mc: f64,
    pub mc_stderr: f64,
    pub ergodic: f64,
    pub ergodic_stderr: f64,
    pub operator: f64,
    pub dh: f64,
    pub residual: f64,
}

impl CompareRow {
    pub const HEADER: [&'static str; 8] = ["k", "mc", "mc_stderr", "ergodic", "ergodic_stderr", "operator", "dh", "residual"];

    pub fn values(&self) -> [f64; 8] {
        [self.k, self.mc, self.mc_stderr, self.ergodic, self.ergodic_stderr, self.operator, self.dh, self.residual]
    }

    /// `|mc - dh| / mc`.
    pub fn relative_gap(&self) -> f64 {
        ((self.mc - self.dh) / self.mc).abs()
    }
}

/// Every route to the exponent at each `k`. Each `k` uses its own seeds, so rows
/// do not depend on the order or the set of `ks`.
pub fn compare_all(ks: &[f64], model: &DisorderModel, params: &CompareParams) -> Result<Vec<CompareRow>> {
    if ks.is_empty() {
        return Err(invalid("k", "empty list"));
    }
    if let Some(&k) = ks.iter().find(|&&k| !(k > 0.0 && k.is_finite())) {
        return Err(invalid("k", format!("must be positive, got {k}")));
    }
    let edges = EdgePair::solve(model, &params.edge, params.exec)?;
    let exec = params.exec;
    ks.iter()
        .map(|&k| {
            let key = k.to_bits();
            let mc_params = McParams::new(params.mc_steps, derive_seed(params.seed, key)).batches(params.batches).exec(exec);
            let mc = lyapunov_mc((-k).exp(), model, &mc_params)?;
            let cfg = ChainConfig::new(k, model.clone())
                .steps(params.chain_steps)
                .burn_in(params.chain_burn_in)
                .seed(derive_seed(params.seed ^ 0x5eed_c4a1, key));
            let erg = ergodic_lyapunov(&cfg, params.batches, exec)?;
            let op = TransferOperator::new(k, model, default_grid(k, model), exec)?;
            let sol = op.solve_invariant(params.operator_tol, crate::operator::default_max_iter(k))?;
            let operator = lyap_first_form(&sol.tail, k)?;
            let dh = build_dh(k, &edges, model)?;
            let residual = op.apply(&dh.gk)?.l1_distance(&dh.gk)?;
            Ok(CompareRow {
                k,
                mc: mc.mean,
                mc_stderr: mc.stderr,
                ergodic: erg.mean,
                ergodic_stderr: erg.stderr,
                operator,
                dh: dh.asymptotic_lyap()?,
                residual,
            })
        })
        .collect()
}

/// Density overlay: the invariant density and the two edge densities continued
/// across the whole window.
#[derive(Debug, Clone)]
pub struct Fig2Data {
    pub k: f64,
    pub x: Vec<f64>,
    pub invariant: Vec<f64>,
    /// `F_left'(x + k) / C_k`
    pub dh_left: Vec<f64>,
    /// `F_right'(k - x) / C_k`
    pub dh_right: Vec<f64>,
}

impl Fig2Data {
    pub const HEADER: [&'static str; 4] = ["x", "invariant", "dh_left", "dh_right"];
}

pub fn fig2_overlay(k: f64, model: &DisorderModel, edge: &EdgeOptions, window: (f64, f64), exec: Exec) -> Result<Fig2Data> {
    if !(window.1 > window.0) {
        return Err(invalid("window", "need lo < hi"));
    }
    let edges = EdgePair::solve(model, edge, exec)?;
    let grid = default_grid(k, model);
    if window.0 < grid.lo || window.1 > grid.hi() {
        return Err(LyapError::GridTooNarrow { need_lo: window.0, need_hi: window.1, have_lo: grid.lo, have_hi: grid.hi() });
    }
    let op = TransferOperator::new(k, model, grid, exec)?;
    let sol = op.solve_invariant_direct()?;
    let dens: Vec<f64> = derivative(&sol.tail.values, grid.dx).iter().map(|d| -d).collect();
    let dh = build_dh_on(k, &edges, grid)?;
    let idx: Vec<usize> = (0..grid.n).filter(|&i| grid.x(i) >= window.0 - 1e-9 && grid.x(i) <= window.1 + 1e-9).collect();
    Ok(Fig2Data {
        k,
        x: idx.iter().map(|&i| grid.x(i)).collect(),
        invariant: idx.iter().map(|&i| dens[i]).collect(),
        dh_left: idx.iter().map(|&i| edges.left.eval_with_derivative(grid.x(i) + k).1 / dh.ck).collect(),
        dh_right: idx.iter().map(|&i| edges.right.eval_with_derivative(k - grid.x(i)).1 / dh.ck).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weak_disorder_closed_form() {
        let v = weak_disorder_formula((-10.0f64).exp()).unwrap();
        assert!((v - 0.028_638_1).abs() < 1e-6, "{v}");
        assert!(weak_disorder_formula_k(1.0).is_err());
        assert!(weak_disorder_formula(1.5).is_err());
        let matched = asymptotic_lyap(0.25, WEAK_DISORDER_KAPPA2, 10.0).unwrap();
        assert_eq!(matched, weak_disorder_formula_k(10.0).unwrap());
    }

    #[test]
    fn asymptote_domain() {
        assert!(asymptotic_lyap(0.25, -3.0, 2.0).is_err());
        assert!(asymptotic_lyap(0.25, 0.0, -1.0).is_err());
        let a = asymptotic_lyap(0.25, -1.0, 5.0).unwrap();
        let b = asymptotic_lyap(0.25, -1.0, 6.0).unwrap();
        assert!(b < a);
    }
}
