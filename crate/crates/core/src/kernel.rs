//! Discretized integral kernels `K(x, y) = g'(y) zeta(x - g(y))` on uniform grids.
//!
//! Because `g` is increasing and `zeta` is effectively compactly supported,
//! each row of `K` is nonzero only on one contiguous range of columns. Rows are
//! stored as such ranges, which also bounds the envelope of the LU factors.

use crate::disorder::{DisorderModel, Family};
use crate::error::{invalid, LyapError, Result};
use crate::exec::Exec;
use crate::projective::ProjectiveMap;

/// `n` equally spaced nodes starting at `lo`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    pub lo: f64,
    pub dx: f64,
    pub n: usize,
}

impl UniformGrid {
    /// Grid on `[lo, hi]` with spacing at most `max_dx`.
    pub fn spanning(lo: f64, hi: f64, max_dx: f64) -> Result<Self> {
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(invalid("grid", format!("need finite lo < hi, got [{lo}, {hi}]")));
        }
        if !(max_dx > 0.0) {
            return Err(invalid("spacing", "must be positive"));
        }
        let cells = ((hi - lo) / max_dx - 1e-9).ceil().max(1.0) as usize;
        Ok(UniformGrid { lo, dx: (hi - lo) / cells as f64, n: cells + 1 })
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.dx
    }

    pub fn hi(&self) -> f64 {
        self.x(self.n - 1)
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// Trapezoid weight of node `i`.
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.n - 1 {
            0.5 * self.dx
        } else {
            self.dx
        }
    }

    /// Index of the node nearest to `x`, if `x` is within half a cell of the grid.
    pub fn nearest(&self, x: f64) -> Option<usize> {
        let t = ((x - self.lo) / self.dx).round();
        (t >= 0.0 && t < self.n as f64).then_some(t as usize)
    }

    /// Piecewise-linear interpolation of nodal `values`, constant beyond the ends.
    pub fn interp(&self, values: &[f64], x: f64) -> f64 {
        let t = (x - self.lo) / self.dx;
        if t <= 0.0 {
            return values[0];
        }
        if t >= (self.n - 1) as f64 {
            return values[self.n - 1];
        }
        let i = t.floor() as usize;
        let s = t - i as f64;
        values[i] + s * (values[i + 1] - values[i])
    }
}

impl DisorderModel {
    /// An interval outside which the density is below `1e-16` of its scale.
    pub fn kernel_support(&self) -> (f64, f64) {
        const GAUSS: f64 = 8.6;
        const EXP: f64 = 36.9;
        let (lo, hi) = match self.family() {
            Family::Gaussian { mu, sigma } => (mu - GAUSS * sigma, mu + GAUSS * sigma),
            Family::Laplace { mu, scale } => (mu - EXP * scale, mu + EXP * scale),
            Family::Mixture { a, b, mu2, sigma2, .. } => (
                (a - GAUSS * b).min(mu2 - GAUSS * sigma2),
                (a + GAUSS * b).max(mu2 + GAUSS * sigma2),
            ),
            Family::Table(t) => (t.nodes()[0], t.nodes()[t.nodes().len() - 1]),
            Family::Constant { z } => (*z, *z),
        };
        (lo + self.shift(), hi + self.shift())
    }
}

/// Row-banded matrix: row `i` holds columns `start[i] .. start[i] + len(i)`.
#[derive(Debug, Clone)]
pub struct BandedRows {
    pub n: usize,
    start: Vec<usize>,
    offset: Vec<usize>,
    values: Vec<f64>,
}

impl BandedRows {
    pub fn row(&self, i: usize) -> (usize, &[f64]) {
        (self.start[i], &self.values[self.offset[i]..self.offset[i + 1]])
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `out = K g`.
    pub fn apply(&self, g: &[f64], out: &mut [f64], exec: Exec) {
        assert_eq!(g.len(), self.n);
        exec.fill(out, |i| {
            let (s, row) = self.row(i);
            row.iter().zip(&g[s..s + row.len()]).map(|(a, b)| a * b).sum()
        });
    }

    /// Entry `(i, j)`, zero outside the stored range.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (s, row) = self.row(i);
        if j >= s && j < s + row.len() {
            row[j - s]
        } else {
            0.0
        }
    }
}

/// Discretization of `G -> int G(y) g'(y) zeta(x - g(y)) dy` on `grid`, with
/// trapezoid weights folded into the entries.
pub fn build_kernel(map: ProjectiveMap, model: &DisorderModel, grid: &UniformGrid, exec: Exec) -> Result<BandedRows> {
    model.require_density()?;
    let (zlo, zhi) = model.kernel_support();
    let images: Vec<f64> = (0..grid.n).map(|j| map.apply(grid.x(j))).collect();
    let slopes: Vec<f64> = (0..grid.n).map(|j| map.derivative(grid.x(j)) * grid.weight(j)).collect();
    // zeta(x - g(y)) vanishes unless g(y) lies in [x - zhi, x - zlo]
    let ranges: Vec<(usize, usize)> = (0..grid.n)
        .map(|i| {
            let x = grid.x(i);
            let a = images.partition_point(|&v| v < x - zhi);
            let b = images.partition_point(|&v| v <= x - zlo);
            (a, b.max(a))
        })
        .collect();
    let mut offset = Vec::with_capacity(grid.n + 1);
    offset.push(0);
    for &(a, b) in &ranges {
        offset.push(offset.last().unwrap() + (b - a));
    }
    let rows: Vec<Vec<f64>> = exec.map(grid.n, |i| {
        let x = grid.x(i);
        let (a, b) = ranges[i];
        (a..b).map(|j| slopes[j] * model.pdf(x - images[j])).collect()
    });
    let values = rows.concat();
    Ok(BandedRows { n: grid.n, start: ranges.iter().map(|r| r.0).collect(), offset, values })
}

/// LU factorization without pivoting, stored in the envelope of `A`.
///
/// Row `i` of `L` occupies columns `f[i] .. i`, column `j` of `U` occupies rows
/// `g[j] ..= j`. Suitable for (weakly) column diagonally dominant matrices.
#[derive(Debug, Clone)]
pub struct ProfileLu {
    n: usize,
    f: Vec<usize>,
    g: Vec<usize>,
    lrow_off: Vec<usize>,
    lvals: Vec<f64>,
    ucol_off: Vec<usize>,
    uvals: Vec<f64>,
}

impl ProfileLu {
    /// Factors `A = I - K`, where row `i` of `A` is replaced by `e_i^T` for every `i` in `unit_rows`.
    pub fn identity_minus(k: &BandedRows, unit_rows: &[usize]) -> Result<Self> {
        let n = k.n;
        let is_unit = {
            let mut v = vec![false; n];
            for &i in unit_rows {
                v[i] = true;
            }
            v
        };
        let entry = |i: usize, j: usize| -> f64 {
            if is_unit[i] {
                f64::from(u8::from(i == j))
            } else {
                f64::from(u8::from(i == j)) - k.get(i, j)
            }
        };
        let f: Vec<usize> = (0..n).map(|i| if is_unit[i] { i } else { k.row(i).0.min(i) }).collect();
        // first row touching column j
        let mut g: Vec<usize> = (0..n).collect();
        for i in 0..n {
            if is_unit[i] {
                continue;
            }
            let (s, row) = k.row(i);
            for j in s..s + row.len() {
                if j > i && g[j] > i {
                    g[j] = i;
                }
            }
        }
        // envelope monotonicity keeps fill inside the profile
        for j in (0..n.saturating_sub(1)).rev() {
            g[j] = g[j].min(g[j + 1]);
        }
        let mut lrow_off = vec![0; n + 1];
        let mut ucol_off = vec![0; n + 1];
        for i in 0..n {
            lrow_off[i + 1] = lrow_off[i] + (i - f[i]);
            ucol_off[i + 1] = ucol_off[i] + (i - g[i] + 1);
        }
        let mut lu = ProfileLu { n, f, g, lrow_off, lvals: vec![0.0; 0], ucol_off, uvals: vec![0.0; 0] };
        lu.lvals = vec![0.0; lu.lrow_off[n]];
        lu.uvals = vec![0.0; lu.ucol_off[n]];
        for i in 0..n {
            for j in lu.f[i]..i {
                lu.lvals[lu.lrow_off[i] + j - lu.f[i]] = entry(i, j);
            }
            for j in lu.g[i]..=i {
                lu.uvals[lu.ucol_off[i] + j - lu.g[i]] = entry(j, i);
            }
        }
        lu.factor()?;
        Ok(lu)
    }

    #[inline]
    fn l(&self, i: usize) -> &[f64] {
        &self.lvals[self.lrow_off[i]..self.lrow_off[i + 1]]
    }

    #[inline]
    fn u(&self, j: usize) -> &[f64] {
        &self.uvals[self.ucol_off[j]..self.ucol_off[j + 1]]
    }

    /// `sum_m L[i, m] U[m, j]` over `m` in `lo .. hi`.
    #[inline]
    fn dot(&self, i: usize, j: usize, lo: usize, hi: usize) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let l = &self.l(i)[lo - self.f[i]..hi - self.f[i]];
        let u = &self.u(j)[lo - self.g[j]..hi - self.g[j]];
        l.iter().zip(u).map(|(a, b)| a * b).sum()
    }

    fn factor(&mut self) -> Result<()> {
        for i in 0..self.n {
            // row i of L
            for j in self.f[i]..i {
                let lo = self.f[i].max(self.g[j]);
                let s = self.dot(i, j, lo, j);
                let pivot = self.uvals[self.ucol_off[j + 1] - 1];
                let idx = self.lrow_off[i] + j - self.f[i];
                self.lvals[idx] = (self.lvals[idx] - s) / pivot;
            }
            // column i of U
            for j in self.g[i]..=i {
                let lo = self.f[j].max(self.g[i]);
                let s = self.dot(j, i, lo, j);
                let idx = self.ucol_off[i] + j - self.g[i];
                self.uvals[idx] -= s;
            }
            let pivot = self.uvals[self.ucol_off[i + 1] - 1];
            if !(pivot.abs() > 1e-300) || !pivot.is_finite() {
                return Err(LyapError::SingularSystem(i));
            }
        }
        Ok(())
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n);
        let mut y = rhs.to_vec();
        for i in 0..self.n {
            let l = self.l(i);
            let s: f64 = l.iter().zip(&y[self.f[i]..i]).map(|(a, b)| a * b).sum();
            y[i] -= s;
        }
        // column-oriented back substitution
        for j in (0..self.n).rev() {
            let u = self.u(j);
            let d = u[u.len() - 1];
            y[j] /= d;
            let yj = y[j];
            for (m, &um) in (self.g[j]..j).zip(&u[..u.len() - 1]) {
                y[m] -= um * yj;
            }
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spacing() {
        let g = UniformGrid::spanning(-1.0, 1.0, 0.3).unwrap();
        assert_eq!(g.n, 8);
        assert!((g.hi() - 1.0).abs() < 1e-15);
        assert!(g.dx <= 0.3);
        let g = UniformGrid::spanning(-20.0, 80.0, 0.02).unwrap();
        assert_eq!(g.n, 5001);
        assert_eq!(g.nearest(1.0), Some(1050));
    }

    #[test]
    fn kernel_matches_direct_evaluation() {
        let m = DisorderModel::gaussian(0.0, 1.0).unwrap();
        let grid = UniformGrid::spanning(-12.0, 12.0, 0.1).unwrap();
        let map = ProjectiveMap::bulk(4.0).unwrap();
        let k = build_kernel(map, &m, &grid, Exec::Sequential).unwrap();
        for &(i, j) in &[(0, 0), (120, 119), (120, 200), (240, 240), (10, 230)] {
            let (x, y) = (grid.x(i), grid.x(j));
            let direct = grid.weight(j) * map.derivative(y) * m.pdf(x - map.apply(y));
            assert!((k.get(i, j) - direct).abs() < 1e-16, "({i},{j})");
        }
    }

    #[test]
    fn lu_solves_banded_system() {
        let m = DisorderModel::gaussian(0.0, 1.0).unwrap();
        let grid = UniformGrid::spanning(-10.0, 30.0, 0.1).unwrap();
        let k = build_kernel(ProjectiveMap::Edge, &m, &grid, Exec::Sequential).unwrap();
        let unit = [grid.nearest(1.0).unwrap()];
        let lu = ProfileLu::identity_minus(&k, &unit).unwrap();
        let rhs: Vec<f64> = (0..grid.n).map(|i| (0.1 * i as f64).sin()).collect();
        let x = lu.solve(&rhs);
        // residual of (I - K) x with the replaced row
        let mut kx = vec![0.0; grid.n];
        k.apply(&x, &mut kx, Exec::Sequential);
        for i in 0..grid.n {
            let r = if i == unit[0] { x[i] } else { x[i] - kx[i] };
            assert!((r - rhs[i]).abs() < 1e-9, "row {i}: {r} vs {}", rhs[i]);
        }
    }
}
