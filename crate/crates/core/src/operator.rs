//! Transfer operator of the bulk chain acting on tail functions `G(x) = mu((x, inf))`.
//!
//! For a law with tail `G`, one step of `X -> z + h_k(X)` gives
//!
//! ```text
//! (T G)(x) = G(-inf) G_zeta(x + k) + int G(y) h_k'(y) zeta(x - h_k(y)) dy
//! ```
//!
//! evaluated by the trapezoid rule on a uniform grid. Beyond the grid `G` is
//! held at its limits and the corresponding pieces of the integral are closed
//! analytically.

use crate::disorder::DisorderModel;
use crate::error::{invalid, LyapError, Result};
use crate::exec::Exec;
use crate::kernel::{build_kernel, BandedRows, ProfileLu, UniformGrid};
use crate::numeric::{derivative, sigmoid, softplus, trapezoid};
use crate::projective::{hk, ProjectiveMap};

/// Default grid for a given `k`: `[-k - H, k + H]` with `H = max(10, 10 sigma)`,
/// spacing 0.01, and the origin as a node.
pub fn default_grid(k: f64, model: &DisorderModel) -> UniformGrid {
    grid_with_spacing(k, model, 0.01)
}

pub fn grid_with_spacing(k: f64, model: &DisorderModel, spacing: f64) -> UniformGrid {
    let half = k + (10.0 * model.std_dev()).max(10.0);
    let cells = (half / spacing).ceil() as usize;
    UniformGrid { lo: -(cells as f64) * spacing, dx: spacing, n: 2 * cells + 1 }
}

/// Slack allowed for upward steps in a discretized tail; quadrature roundoff in
/// `T G` reaches about 1e-10 on values close to 1.
pub const MONOTONE_TOL: f64 = 1e-9;

/// Tail function sampled on a uniform grid, constant at its limits beyond it.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTail {
    pub grid: UniformGrid,
    pub values: Vec<f64>,
    pub left_limit: f64,
    pub right_limit: f64,
}

impl GridTail {
    pub fn new(grid: UniformGrid, values: Vec<f64>, left_limit: f64, right_limit: f64) -> Result<Self> {
        if values.len() != grid.n {
            return Err(LyapError::GridMismatch);
        }
        Ok(GridTail { grid, values, left_limit, right_limit })
    }

    /// Tail of the point mass at `a`. The node at `a`, if any, takes the value 1/2,
    /// which keeps the trapezoid rule second order across the jump.
    pub fn point_mass(grid: UniformGrid, a: f64) -> Self {
        let values = (0..grid.n)
            .map(|i| {
                let x = grid.x(i);
                if (x - a).abs() < 1e-9 * grid.dx {
                    0.5
                } else if x < a {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        GridTail { grid, values, left_limit: 1.0, right_limit: 0.0 }
    }

    pub fn zeros(grid: UniformGrid) -> Self {
        GridTail { grid, values: vec![0.0; grid.n], left_limit: 0.0, right_limit: 0.0 }
    }

    pub fn x_lo(&self) -> f64 {
        self.grid.lo
    }

    pub fn x_hi(&self) -> f64 {
        self.grid.hi()
    }

    pub fn n_bins(&self) -> usize {
        self.grid.n
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x < self.grid.lo {
            self.left_limit
        } else if x > self.grid.hi() {
            self.right_limit
        } else {
            self.grid.interp(&self.values, x)
        }
    }

    fn same_grid(&self, other: &GridTail) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(LyapError::GridMismatch)
        }
    }

    /// `G1 - G2`, with limits subtracted as well.
    pub fn difference(&self, other: &GridTail) -> Result<GridTail> {
        self.same_grid(other)?;
        Ok(GridTail {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
            left_limit: self.left_limit - other.left_limit,
            right_limit: self.right_limit - other.right_limit,
        })
    }

    /// `int |G|` over the grid. Infinite if the limits do not vanish.
    pub fn l1_norm(&self) -> f64 {
        if self.left_limit != 0.0 || self.right_limit != 0.0 {
            return f64::INFINITY;
        }
        let abs: Vec<f64> = self.values.iter().map(|v| v.abs()).collect();
        trapezoid(&abs, self.grid.dx)
    }

    pub fn l1_distance(&self, other: &GridTail) -> Result<f64> {
        Ok(self.difference(other)?.l1_norm())
    }

    /// `-G'` by central differences.
    pub fn density(&self) -> Vec<f64> {
        derivative(&self.values, self.grid.dx).into_iter().map(|d| -d).collect()
    }

    /// Checks limits 1 and 0, monotonicity, and range `[0, 1]`.
    pub fn check_probability(&self) -> Result<()> {
        let bad = |why: String| Err(LyapError::NotProbabilityTail(why));
        if (self.left_limit - 1.0).abs() > 1e-12 || self.right_limit.abs() > 1e-12 {
            return bad(format!("limits are ({}, {})", self.left_limit, self.right_limit));
        }
        let n = self.values.len();
        if (self.values[0] - 1.0).abs() > 1e-6 || self.values[n - 1].abs() > 1e-6 {
            return bad(format!("end values are ({}, {})", self.values[0], self.values[n - 1]));
        }
        if let Some(i) = (1..n).find(|&i| self.values[i] > self.values[i - 1] + MONOTONE_TOL) {
            return bad(format!("increases at node {i}"));
        }
        if self.values.iter().any(|v| !(-1e-12..=1.0 + 1e-12).contains(v)) {
            return bad("values outside [0, 1]".into());
        }
        Ok(())
    }
}

/// The operator `T` for a fixed `k`, model and grid.
#[derive(Debug, Clone)]
pub struct TransferOperator {
    pub k: f64,
    pub grid: UniformGrid,
    kernel: BandedRows,
    /// `G_zeta(x - h_k(x_lo))`: image of the mass held left of the grid.
    left_closure: Vec<f64>,
    exec: Exec,
}

/// Fixed point of `T` with its convergence record.
#[derive(Debug, Clone)]
pub struct InvariantSolution {
    pub tail: GridTail,
    pub iterations: usize,
    pub residual: f64,
}

impl TransferOperator {
    pub fn new(k: f64, model: &DisorderModel, grid: UniformGrid, exec: Exec) -> Result<Self> {
        let map = ProjectiveMap::bulk(k)?;
        model.require_density()?;
        let s = model.std_dev();
        let (need_lo, need_hi) = (-k - 8.0 * s, k + 8.0 * s);
        if grid.lo > need_lo || grid.hi() < need_hi {
            return Err(LyapError::GridTooNarrow { need_lo, need_hi, have_lo: grid.lo, have_hi: grid.hi() });
        }
        let kernel = build_kernel(map, model, &grid, exec)?;
        let edge = hk(grid.lo, k);
        let left_closure = (0..grid.n).map(|i| model.tail(grid.x(i) - edge)).collect();
        Ok(TransferOperator { k, grid, kernel, left_closure, exec })
    }

    pub fn with_default_grid(k: f64, model: &DisorderModel) -> Result<Self> {
        Self::new(k, model, default_grid(k, model), Exec::default())
    }

    pub fn kernel(&self) -> &BandedRows {
        &self.kernel
    }

    /// `T G`. Limits are carried through: constants are fixed by `T`.
    pub fn apply(&self, g: &GridTail) -> Result<GridTail> {
        if g.grid != self.grid {
            return Err(LyapError::GridMismatch);
        }
        let (l, r) = (g.left_limit, g.right_limit);
        let shifted: Vec<f64> = g.values.iter().map(|v| v - r).collect();
        let mut out = vec![0.0; self.grid.n];
        self.kernel.apply(&shifted, &mut out, self.exec);
        for (o, c) in out.iter_mut().zip(&self.left_closure) {
            *o += r + (l - r) * c;
        }
        Ok(GridTail { grid: self.grid, values: out, left_limit: l, right_limit: r })
    }

    /// The homogeneous part `T0`, defined on differences of tails.
    pub fn apply_t0(&self, g: &GridTail) -> Result<GridTail> {
        if g.grid != self.grid {
            return Err(LyapError::GridMismatch);
        }
        if g.left_limit != 0.0 || g.right_limit != 0.0 {
            return Err(LyapError::NonzeroLimits { left: g.left_limit, right: g.right_limit });
        }
        let mut out = vec![0.0; self.grid.n];
        self.kernel.apply(&g.values, &mut out, self.exec);
        Ok(GridTail { grid: self.grid, values: out, left_limit: 0.0, right_limit: 0.0 })
    }

    /// Iterates `T` from the point mass at 0 until `||T G - G||_1 < tol`.
    ///
    /// Switches to damping `G <- (G + T G) / 2` once the residual stops decreasing.
    pub fn solve_invariant(&self, tol: f64, max_iter: usize) -> Result<InvariantSolution> {
        if !(tol > 0.0) {
            return Err(invalid("tol", "must be positive"));
        }
        let mut g = GridTail::point_mass(self.grid, 0.0);
        let mut prev = f64::INFINITY;
        let mut damped = false;
        for it in 0..max_iter {
            let tg = self.apply(&g)?;
            let residual = tg.l1_distance(&g)?;
            if residual < tol {
                return Ok(InvariantSolution { tail: g, iterations: it, residual });
            }
            damped |= residual > prev;
            prev = residual;
            g = if damped {
                GridTail { values: g.values.iter().zip(&tg.values).map(|(a, b)| 0.5 * (a + b)).collect(), ..tg }
            } else {
                tg
            };
        }
        let residual = self.apply(&g)?.l1_distance(&g)?;
        Err(LyapError::NoConvergence { iterations: max_iter, residual })
    }

    /// Solves `G = T G` with `G(-inf) = 1, G(inf) = 0` as the linear system
    /// `(I - T0) G = G_zeta(. - h_k(x_lo))`.
    pub fn solve_invariant_direct(&self) -> Result<InvariantSolution> {
        let lu = ProfileLu::identity_minus(&self.kernel, &[])?;
        let values = lu.solve(&self.left_closure);
        let tail = GridTail { grid: self.grid, values, left_limit: 1.0, right_limit: 0.0 };
        let residual = self.apply(&tail)?.l1_distance(&tail)?;
        Ok(InvariantSolution { tail, iterations: 1, residual })
    }

    /// Partial sums `sum_{n<=N} ||T0^n G||_1` for `N = 0 .. terms-1`.
    pub fn t0_series(&self, g: &GridTail, terms: usize) -> Result<Vec<f64>> {
        let mut cur = g.clone();
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(terms);
        for _ in 0..terms {
            acc += cur.l1_norm();
            out.push(acc);
            cur = self.apply_t0(&cur)?;
        }
        Ok(out)
    }
}

/// The exponent `C` for which `sum ||T0^n G||_1 = k^2 (log k)^C ||G||_1`.
pub fn calibrate_series_exponent(series_sum: f64, g_norm: f64, k: f64) -> f64 {
    (series_sum / (k * k * g_norm)).ln() / k.ln().ln()
}

/// Both integral forms of the Lyapunov functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapForms {
    /// `int G(x) / (1 + e^{k-x}) dx`
    pub first: f64,
    /// `int (1 - G(x)) / (1 + e^{k+x}) dx`
    pub second: f64,
}

/// `int G(x) sigma(x - k) dx`, closed with `G = G(-inf)` left of the grid.
pub fn lyap_first_form(g: &GridTail, k: f64) -> Result<f64> {
    if g.right_limit != 0.0 {
        return Err(LyapError::NotProbabilityTail(format!("right limit {} makes the functional diverge", g.right_limit)));
    }
    let f: Vec<f64> = (0..g.grid.n).map(|i| g.values[i] * sigmoid(g.grid.x(i) - k)).collect();
    Ok(trapezoid(&f, g.grid.dx) + g.left_limit * softplus(g.grid.lo - k))
}

/// `int (1 - G(x)) sigma(-k - x) dx`, closed with `G = G(inf)` right of the grid.
pub fn lyap_second_form(g: &GridTail, k: f64) -> Result<f64> {
    if g.left_limit != 1.0 {
        return Err(LyapError::NotProbabilityTail(format!("left limit {} makes the functional diverge", g.left_limit)));
    }
    let f: Vec<f64> = (0..g.grid.n).map(|i| (1.0 - g.values[i]) * sigmoid(-k - g.grid.x(i))).collect();
    Ok(trapezoid(&f, g.grid.dx) + (1.0 - g.right_limit) * softplus(-k - g.grid.hi()))
}

pub fn lyap_forms(g: &GridTail, k: f64) -> Result<LyapForms> {
    Ok(LyapForms { first: lyap_first_form(g, k)?, second: lyap_second_form(g, k)? })
}

/// `L_k[G]` for an invariant probability tail.
///
/// The two forms differ by `int (x - h_k(x)) dnu`, which vanishes only under
/// the invariant law of a balanced model, so a mismatch beyond `tol` signals an
/// unresolved grid or a tail that is not invariant.
pub fn lyap_functional(g: &GridTail, k: f64, tol: f64) -> Result<f64> {
    g.check_probability()?;
    let forms = lyap_forms(g, k)?;
    if (forms.first - forms.second).abs() > tol {
        return Err(LyapError::FormMismatch { first: forms.first, second: forms.second });
    }
    Ok(0.5 * (forms.first + forms.second))
}

/// `int (x - h_k(x)) nu(dx)` against the finite-difference density of `G`.
pub fn drift_integral(g: &GridTail, k: f64) -> f64 {
    let d = g.density();
    let f: Vec<f64> = (0..g.grid.n).map(|i| {
        let x = g.grid.x(i);
        (x - hk(x, k)) * d[i]
    }).collect();
    trapezoid(&f, g.grid.dx)
}

pub fn apply_t(g: &GridTail, k: f64, model: &DisorderModel) -> Result<GridTail> {
    TransferOperator::new(k, model, g.grid, Exec::default())?.apply(g)
}

pub fn apply_t0(g: &GridTail, k: f64, model: &DisorderModel) -> Result<GridTail> {
    TransferOperator::new(k, model, g.grid, Exec::default())?.apply_t0(g)
}

/// Default iteration budget `50 k^2`.
pub fn default_max_iter(k: f64) -> usize {
    (50.0 * k * k).ceil().max(100.0) as usize
}

pub fn solve_invariant(k: f64, model: &DisorderModel, tol: f64, max_iter: usize) -> Result<InvariantSolution> {
    TransferOperator::with_default_grid(k, model)?.solve_invariant(tol, max_iter)
}
