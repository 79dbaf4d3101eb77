//! The sigma-finite invariant measure of the edge chain `Y_{n+1} = z_{n+1} + h(Y_n)`.
//!
//! Its distribution function `F(x) = nu((-inf, x])` solves
//!
//! ```text
//! F(x) = int F(y) h'(y) zeta(x - h(y)) dy
//! ```
//!
//! and grows like `m x + c` at `+inf`. On a grid we hold `F = 0` left of it and
//! `F = m y + b` right of it, with `(m, b)` refitted by least squares over the
//! top quarter of the grid. The discrete problem is then `F = B F` for a linear
//! map `B`, whose fixed direction is found by inverse iteration and checked
//! against one plain application of `B`.

use serde::{Deserialize, Serialize};

use crate::disorder::DisorderModel;
use crate::error::{invalid, LyapError, Result};
use crate::exec::Exec;
use crate::kernel::{build_kernel, BandedRows, ProfileLu, UniformGrid};
use crate::numeric::{cubic_interp, linear_fit, sigmoid, softplus, split_even, trapezoid, Histogram};
use crate::rng::derive_seed;
use crate::projective::{h_edge, h_edge_derivative, simulate_y, ProjectiveMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// Edge at `-k`, driven by `zeta`.
    Left,
    /// Edge at `+k`, driven by `x -> zeta(-x)`.
    Right,
}

impl Side {
    pub fn model(self, model: &DisorderModel) -> DisorderModel {
        match self {
            Side::Left => model.clone(),
            Side::Right => model.mirror(),
        }
    }
}

impl std::str::FromStr for Side {
    type Err = LyapError;
    fn from_str(s: &str) -> Result<Side> {
        match s {
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            _ => Err(invalid("side", format!("expected left or right, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeOptions {
    pub lo: f64,
    pub hi: f64,
    pub spacing: f64,
    /// Normalization point: `F(x0) = 1` during the solve.
    pub x0: f64,
    /// Fraction of the grid, from the top, used to fit the affine asymptote.
    pub fit_fraction: f64,
    /// Sup-norm tolerance between successive iterates.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EdgeOptions {
    fn default() -> Self {
        EdgeOptions { lo: -20.0, hi: 80.0, spacing: 0.02, x0: 1.0, fit_fraction: 0.25, tol: 1e-10, max_iter: 50 }
    }
}

impl EdgeOptions {
    fn validate(&self) -> Result<UniformGrid> {
        if self.lo > -20.0 || self.hi < 80.0 {
            return Err(invalid("grid", format!("must span at least [-20, 80], got [{}, {}]", self.lo, self.hi)));
        }
        if !(self.spacing > 0.0 && self.spacing <= 0.02 + 1e-12) {
            return Err(invalid("spacing", format!("must be in (0, 0.02], got {}", self.spacing)));
        }
        if !(self.fit_fraction > 0.0 && self.fit_fraction < 1.0) {
            return Err(invalid("fit_fraction", "must lie in (0, 1)"));
        }
        if !(self.tol > 0.0) {
            return Err(invalid("tol", "must be positive"));
        }
        let grid = UniformGrid::spanning(self.lo, self.hi, self.spacing)?;
        if !(self.x0 > self.lo && self.x0 < self.hi - self.fit_fraction * (self.hi - self.lo)) {
            return Err(invalid("x0", "must lie inside the grid, below the fit window"));
        }
        Ok(grid)
    }
}

/// Solved edge measure, normalized so that `F(x) = x + intercept + o(1)`.
#[derive(Debug, Clone, Serialize)]
pub struct EdgeMeasure {
    pub side: Side,
    #[serde(skip)]
    pub grid: UniformGrid,
    #[serde(skip)]
    pub f: Vec<f64>,
    /// Fitted slope while `F(x0) = 1`.
    pub slope_raw: f64,
    /// Fitted intercept while `F(x0) = 1`.
    pub intercept_raw: f64,
    pub intercept: f64,
    /// Decay rate of `F(x) - x - intercept`.
    pub rho_estimate: f64,
    /// True when the residual reaches the noise floor too early for a fit, in
    /// which case `rho_estimate` is only a lower bound.
    pub rho_is_lower_bound: bool,
    pub rho_fit_range: (f64, f64),
    pub fit_window: (f64, f64),
    pub x0: f64,
    pub iterations: usize,
    /// Sup change produced by one more plain iteration, in `F(x0) = 1` units.
    pub fixed_point_change: f64,
}

impl EdgeMeasure {
    /// `F(x)`: zero left of the grid, affine right of it.
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_with_derivative(x).0
    }

    /// `(F(x), F'(x))` by four-point interpolation.
    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        if x < self.grid.lo {
            return (0.0, 0.0);
        }
        if x > self.grid.hi() {
            return (x + self.intercept, 1.0);
        }
        let (v, d) = cubic_interp(&self.f, (x - self.grid.lo) / self.grid.dx);
        (v, d / self.grid.dx)
    }

    pub fn nodes(&self) -> Vec<f64> {
        self.grid.nodes()
    }

    /// `F(x) - x - intercept` at the nodes.
    pub fn residual(&self) -> Vec<f64> {
        (0..self.grid.n).map(|i| self.f[i] - self.grid.x(i) - self.intercept).collect()
    }

    /// Largest `|F(x) - x - intercept|` over the fit window.
    pub fn asymptote_error(&self) -> f64 {
        let (a, b) = self.fit_window;
        (0..self.grid.n)
            .filter(|&i| self.grid.x(i) >= a - 1e-9 && self.grid.x(i) <= b + 1e-9)
            .map(|i| (self.f[i] - self.grid.x(i) - self.intercept).abs())
            .fold(0.0, f64::max)
    }

    /// `int log(1 + e^{-y}) nu(dy)`, computed after integrating by parts as
    /// `int F(y) / (1 + e^y) dy`.
    pub fn log_moment(&self) -> f64 {
        let g: Vec<f64> = (0..self.grid.n).map(|i| self.f[i] * sigmoid(-self.grid.x(i))).collect();
        let hi = self.grid.hi();
        // affine closure beyond the grid: int_hi^inf (y + c) e^{-y} dy
        trapezoid(&g, self.grid.dx) + (hi + self.intercept + 1.0) * (-hi).exp()
    }
}

/// Least-squares functionals `m(F) = a.F` and `b(F) = c.F` over the fit window.
struct AffineFit {
    start: usize,
    a: Vec<f64>,
    c: Vec<f64>,
}

impl AffineFit {
    fn new(grid: &UniformGrid, fraction: f64) -> Self {
        let cut = grid.hi() - fraction * (grid.hi() - grid.lo);
        let start = (0..grid.n).find(|&i| grid.x(i) >= cut - 1e-9).expect("window is inside the grid");
        let xs: Vec<f64> = (start..grid.n).map(|i| grid.x(i)).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
        let a: Vec<f64> = xs.iter().map(|x| (x - mean) / sxx).collect();
        let c = a.iter().map(|ai| 1.0 / n - mean * ai).collect();
        AffineFit { start, a, c }
    }

    fn apply(&self, f: &[f64]) -> (f64, f64) {
        let tail = &f[self.start..];
        let m = self.a.iter().zip(tail).map(|(a, v)| a * v).sum();
        let b = self.c.iter().zip(tail).map(|(c, v)| c * v).sum();
        (m, b)
    }
}

struct EdgeSystem {
    grid: UniformGrid,
    kernel: BandedRows,
    /// Contributions of `F(y) = y` and `F(y) = 1` for `y` beyond the grid.
    p: Vec<f64>,
    q: Vec<f64>,
    fit: AffineFit,
    exec: Exec,
}

impl EdgeSystem {
    fn new(model: &DisorderModel, grid: UniformGrid, fit_fraction: f64, exec: Exec) -> Result<Self> {
        model.require_density()?;
        let kernel = build_kernel(ProjectiveMap::Edge, model, &grid, exec)?;
        let (zlo, _) = model.kernel_support();
        let hi = grid.hi();
        let extra = ((-zlo).max(0.0) / grid.dx).ceil() as usize + 2;
        let ext: Vec<(f64, f64)> = (0..extra)
            .map(|j| {
                let y = hi + j as f64 * grid.dx;
                let w = if j == 0 { 0.5 * grid.dx } else { grid.dx };
                (y, w * h_edge_derivative(y))
            })
            .collect();
        let mut p = vec![0.0; grid.n];
        let mut q = vec![0.0; grid.n];
        exec.fill(&mut p, |i| ext.iter().map(|&(y, w)| w * y * model.pdf(grid.x(i) - h_edge(y))).sum());
        exec.fill(&mut q, |i| ext.iter().map(|&(y, w)| w * model.pdf(grid.x(i) - h_edge(y))).sum());
        Ok(EdgeSystem { grid, kernel, p, q, fit: AffineFit::new(&grid, fit_fraction), exec })
    }

    /// `B F = K F + m(F) P + b(F) Q`.
    fn apply(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.n];
        self.kernel.apply(f, &mut out, self.exec);
        let (m, b) = self.fit.apply(f);
        for i in 0..self.grid.n {
            out[i] += m * self.p[i] + b * self.q[i];
        }
        out
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Solves the edge measure on `side` (the right side uses the mirrored law).
pub fn solve_edge(model: &DisorderModel, side: Side, opts: &EdgeOptions) -> Result<EdgeMeasure> {
    solve_edge_with(model, side, opts, Exec::default())
}

pub fn solve_edge_with(model: &DisorderModel, side: Side, opts: &EdgeOptions, exec: Exec) -> Result<EdgeMeasure> {
    let grid = opts.validate()?;
    let law = side.model(model);
    let sys = EdgeSystem::new(&law, grid, opts.fit_fraction, exec)?;
    let i0 = grid.nearest(opts.x0).expect("x0 validated");
    let n = grid.n;

    // Inverse iteration for (I - B) F = 0 via Woodbury on I - K.
    let lu = ProfileLu::identity_minus(&sys.kernel, &[])?;
    let yp = lu.solve(&sys.p);
    let yq = lu.solve(&sys.q);
    let (ap, bp) = sys.fit.apply(&yp);
    let (aq, bq) = sys.fit.apply(&yq);
    // S = I - V^T Y with V = [a c], Y = [yp yq]
    let s = [[1.0 - ap, -aq], [-bp, 1.0 - bq]];
    let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
    if !(det.abs() > 0.0) || !det.is_finite() {
        return Err(LyapError::SingularSystem(n));
    }

    let mut f: Vec<f64> = (0..n).map(|i| grid.x(i).max(0.0)).collect();
    let scale = f[i0];
    f.iter_mut().for_each(|v| *v /= scale);
    let mut iterations = 0;
    loop {
        if iterations >= opts.max_iter {
            let residual = sup_diff(&normalized(sys.apply(&f), i0), &f);
            return Err(LyapError::NoConvergence { iterations, residual });
        }
        iterations += 1;
        let mut w = lu.solve(&f);
        let (m, b) = sys.fit.apply(&w);
        let t0 = (s[1][1] * m - s[0][1] * b) / det;
        let t1 = (-s[1][0] * m + s[0][0] * b) / det;
        for i in 0..n {
            w[i] += yp[i] * t0 + yq[i] * t1;
        }
        let next = normalized(w, i0);
        let change = sup_diff(&next, &f);
        f = next;
        if change < opts.tol {
            break;
        }
    }
    let fixed_point_change = sup_diff(&normalized(sys.apply(&f), i0), &f);

    let (slope_raw, intercept_raw) = sys.fit.apply(&f);
    if !(slope_raw > 0.0) {
        return Err(LyapError::NoConvergence { iterations, residual: slope_raw });
    }
    f.iter_mut().for_each(|v| *v /= slope_raw);
    let intercept = intercept_raw / slope_raw;
    let fit_window = (grid.x(sys.fit.start), grid.hi());

    let mut measure = EdgeMeasure {
        side,
        grid,
        f,
        slope_raw,
        intercept_raw,
        intercept,
        rho_estimate: f64::NAN,
        rho_is_lower_bound: false,
        rho_fit_range: (f64::NAN, f64::NAN),
        fit_window,
        x0: grid.x(i0),
        iterations,
        fixed_point_change,
    };
    let (rho, lower, range) = estimate_rho(&measure)?;
    measure.rho_estimate = rho;
    measure.rho_is_lower_bound = lower;
    measure.rho_fit_range = range;
    Ok(measure)
}

fn normalized(mut f: Vec<f64>, i0: usize) -> Vec<f64> {
    let s = f[i0];
    f.iter_mut().for_each(|v| *v /= s);
    f
}

/// Noise floor for `|F(x) - x - c|`: roundoff relative to `F` itself.
const RHO_FLOOR: f64 = 1e-9;

/// Log-linear fit of `|F(x) - x - c|` from `x0` up to where it first reaches the floor.
fn estimate_rho(m: &EdgeMeasure) -> Result<(f64, bool, (f64, f64))> {
    let r = m.residual();
    let start = m.grid.nearest(m.x0.max(0.0)).unwrap_or(0);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in start..m.grid.n {
        let floor = RHO_FLOOR * (1.0 + m.f[i].abs());
        if r[i].abs() <= floor {
            break;
        }
        xs.push(m.grid.x(i));
        ys.push(r[i].abs().ln());
    }
    if xs.len() < 10 {
        // residual is below the floor almost immediately: bound the rate from
        // the drop between x0 and the first point at the floor
        let x_end = m.grid.x(start + xs.len());
        let r0 = r[start].abs().max(RHO_FLOOR);
        let bound = (r0 / RHO_FLOOR).ln().max(0.0) / (x_end - m.grid.x(start)).max(m.grid.dx);
        return Ok((bound, true, (m.grid.x(start), x_end)));
    }
    let fit = linear_fit(&xs, &ys);
    if !(fit.slope < 0.0) {
        return Err(LyapError::NegativeResidualFit { slope: fit.slope });
    }
    Ok((-fit.slope, false, (xs[0], xs[xs.len() - 1])))
}

/// Result of comparing the edge chain's occupation measure with a solved `F`.
#[derive(Debug, Clone, Serialize)]
pub struct OccupationCheck {
    /// `sup |O(x) - F(x)| / F(window_hi)` over the window, with `O` scaled so
    /// that `O(x0) = F(x0)`.
    pub discrepancy: f64,
    /// Visits inside the window.
    pub window_visits: u64,
    pub steps: u64,
}

/// Independent chains sharing the step budget of an occupation check.
pub const OCCUPATION_REPLICAS: usize = 32;

/// Runs the edge chain and compares its occupation distribution function with `F`
/// on `window` (default `[-5, 20]`). The `steps` are split evenly over
/// [`OCCUPATION_REPLICAS`] independent chains started at 0 whose visits are pooled.
pub fn edge_occupation_check(measure: &EdgeMeasure, model: &DisorderModel, steps: u64, seed: u64, window: Option<(f64, f64)>) -> Result<OccupationCheck> {
    edge_occupation_check_with(measure, model, steps, seed, window, OCCUPATION_REPLICAS, Exec::default())
}

pub fn edge_occupation_check_with(
    measure: &EdgeMeasure,
    model: &DisorderModel,
    steps: u64,
    seed: u64,
    window: Option<(f64, f64)>,
    replicas: usize,
    exec: Exec,
) -> Result<OccupationCheck> {
    let (a, b) = window.unwrap_or((-5.0, 20.0));
    if !(b > a) {
        return Err(invalid("window", "need lo < hi"));
    }
    if replicas == 0 || (steps as usize) < replicas {
        return Err(invalid("steps", "need at least one step per replica"));
    }
    let law = measure.side.model(model);
    let bins = ((b - a) / 0.02).round().max(1.0) as usize;
    let parts = split_even(steps, replicas);
    let runs = exec.try_map(replicas, |r| {
        simulate_y(&law, parts[r], derive_seed(seed, r as u64), 0.0, Histogram::new(a, b, bins), false).map(|s| s.histogram)
    })?;
    let mut pooled = Histogram::new(a, b, bins);
    runs.iter().for_each(|h| pooled.merge(h));
    let h = &pooled;
    let window_visits: u64 = h.counts.iter().sum();
    // occupation distribution function at the right bin edges
    let mut cum = Vec::with_capacity(bins);
    let mut acc = h.underflow as f64;
    for &c in &h.counts {
        acc += c as f64;
        cum.push(acc);
    }
    let edges: Vec<f64> = (0..bins).map(|i| h.edges(i).1).collect();
    let x0 = measure.x0;
    let discrepancy = if x0 > a && x0 < b {
        let t = (x0 - a) / h.width();
        let j = (t.floor() as usize).min(bins - 1);
        let left = if j == 0 { h.underflow as f64 } else { cum[j - 1] };
        let o_x0 = left + (t - j as f64) * (cum[j] - left);
        if o_x0 <= 0.0 {
            f64::INFINITY
        } else {
            let scale = measure.eval(x0) / o_x0;
            let top = measure.eval(b);
            edges.iter().zip(&cum).map(|(&x, &o)| (o * scale - measure.eval(x)).abs()).fold(0.0, f64::max) / top
        }
    } else {
        f64::NAN
    };
    Ok(OccupationCheck { discrepancy, window_visits, steps })
}

/// `int log(1 + e^{-y}) nu_s(dy)` for the left and right measures, by quadrature
/// against `dF`.
pub fn symmetry_identity_check(left: &EdgeMeasure, right: &EdgeMeasure) -> (f64, f64) {
    (log_moment_stieltjes(left), log_moment_stieltjes(right))
}

/// `int log(1 + e^{-y}) dF(y)`, with `dF = dy` beyond the grid.
pub fn log_moment_stieltjes(m: &EdgeMeasure) -> f64 {
    let d: Vec<f64> = (0..m.grid.n).map(|i| softplus(-m.grid.x(i)) * m.eval_with_derivative(m.grid.x(i)).1).collect();
    // int_hi^inf log(1 + e^{-y}) dy = -Li2(-e^{-hi}), first order suffices here
    trapezoid(&d, m.grid.dx) + (-m.grid.hi()).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::OnceLock;

    fn gauss_left() -> &'static EdgeMeasure {
        static M: OnceLock<EdgeMeasure> = OnceLock::new();
        M.get_or_init(|| solve_edge(&DisorderModel::gaussian(0.0, 1.0).unwrap(), Side::Left, &EdgeOptions::default()).unwrap())
    }

    #[test]
    fn solution_is_a_monotone_measure() {
        let m = gauss_left();
        assert!(m.f.iter().all(|&v| v >= -1e-12));
        assert!(m.f.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        assert!(m.eval(-15.0) < 1e-5);
        assert!(m.f[0] < 1e-6);
    }

    #[test]
    fn asymptote_is_affine_with_decaying_residual() {
        let m = gauss_left();
        assert!(m.asymptote_error() < 1e-3);
        assert!(m.rho_estimate > 0.0);
        assert!(m.fixed_point_change < 2.0 * EdgeOptions::default().tol, "{}", m.fixed_point_change);
        let fit = {
            let idx: Vec<usize> = (0..m.grid.n).filter(|&i| m.grid.x(i) >= m.fit_window.0 - 1e-9).collect();
            let xs: Vec<f64> = idx.iter().map(|&i| m.grid.x(i)).collect();
            let ys: Vec<f64> = idx.iter().map(|&i| m.f[i]).collect();
            linear_fit(&xs, &ys)
        };
        assert!((fit.slope - 1.0).abs() < 1e-8);
    }

    #[test]
    fn invalid_options_rejected() {
        let g = DisorderModel::gaussian(0.0, 1.0).unwrap();
        let narrow = EdgeOptions { hi: 50.0, ..Default::default() };
        assert!(solve_edge(&g, Side::Left, &narrow).is_err());
        let coarse = EdgeOptions { spacing: 0.05, ..Default::default() };
        assert!(solve_edge(&g, Side::Left, &coarse).is_err());
        assert!(solve_edge(&DisorderModel::constant(0.0).unwrap(), Side::Left, &EdgeOptions::default()).is_err());
    }

    #[test]
    fn far_left_window_is_empty() {
        let m = gauss_left();
        let g = DisorderModel::gaussian(0.0, 1.0).unwrap();
        let c = edge_occupation_check(m, &g, 100_000, 1, Some((-30.0, -10.0))).unwrap();
        assert_eq!(c.window_visits, 0);
    }

    #[test]
    fn log_moment_forms_agree() {
        let m = gauss_left();
        assert!((m.log_moment() - log_moment_stieltjes(m)).abs() < 1e-5);
        assert!(m.log_moment() > 0.0);
    }
}
