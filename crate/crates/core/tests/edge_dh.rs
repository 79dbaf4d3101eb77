use std::sync::OnceLock;

use ising_lyap::dh::{
    asymptotic_lyap, build_dh, compare_all, fig2_overlay, one_step_residual, weak_disorder_formula_k, CompareParams, CompareRow, EdgePair,
    WEAK_DISORDER_KAPPA2,
};
use ising_lyap::disorder::DisorderModel;
use ising_lyap::edge::{edge_occupation_check, solve_edge, symmetry_identity_check, EdgeOptions, Side};
use ising_lyap::exec::Exec;
use ising_lyap::numeric::linear_fit;
use ising_lyap::operator::{lyap_first_form, TransferOperator};

fn gauss() -> DisorderModel {
    DisorderModel::gaussian(0.0, 1.0).unwrap()
}

fn gauss_edges() -> &'static EdgePair {
    static E: OnceLock<EdgePair> = OnceLock::new();
    E.get_or_init(|| EdgePair::solve(&gauss(), &EdgeOptions::default(), Exec::default()).unwrap())
}

fn fig2_edges() -> &'static EdgePair {
    static E: OnceLock<EdgePair> = OnceLock::new();
    E.get_or_init(|| EdgePair::solve(&DisorderModel::bimodal_example(), &EdgeOptions::default(), Exec::default()).unwrap())
}

#[test]
fn symmetric_law_gives_identical_sides() {
    let e = gauss_edges();
    let worst = e.left.f.iter().zip(&e.right.f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst}");
    let c = e.constants();
    assert_eq!(c.kappa2, c.c_left);
    assert_eq!(c.kappa2, c.c_right);
}

#[test]
fn edge_measure_invariants() {
    for m in [&gauss_edges().left, &fig2_edges().left, &fig2_edges().right] {
        assert!(m.eval(-15.0) < 1e-5);
        assert!(m.f[0] < 1e-6);
        assert!(m.f.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        assert!(m.asymptote_error() < 1e-3);
        assert!(m.fixed_point_change < 2.0 * EdgeOptions::default().tol);
        assert!(m.slope_raw > 0.0 && m.rho_estimate > 0.0 && !m.rho_is_lower_bound);
        let idx: Vec<usize> = (0..m.grid.n).filter(|&i| m.grid.x(i) >= m.fit_window.0 - 1e-9).collect();
        let xs: Vec<f64> = idx.iter().map(|&i| m.grid.x(i)).collect();
        let ys: Vec<f64> = idx.iter().map(|&i| m.f[i]).collect();
        assert!((linear_fit(&xs, &ys).slope - 1.0).abs() < 1e-8);
    }
}

#[test]
fn intercept_does_not_depend_on_normalization_point() {
    let m = DisorderModel::bimodal_example();
    let moved = EdgeOptions { x0: 3.0, ..EdgeOptions::default() };
    for (side, base) in [(Side::Left, &fig2_edges().left), (Side::Right, &fig2_edges().right)] {
        let e = solve_edge(&m, side, &moved).unwrap();
        assert!((e.intercept - base.intercept).abs() < 1e-4);
    }
}

/// Balancing the flux of `Y^2` through a high level against the slope-1 asymptote
/// gives `int log(1 + e^{-y}) nu(dy) = Var(z) / 2`, so `kappa1 = Var(z) / 4`.
#[test]
fn kappa1_matches_second_moment_balance() {
    for (edges, model) in [(gauss_edges(), gauss()), (fig2_edges(), DisorderModel::bimodal_example())] {
        let c = edges.constants();
        assert!((c.kappa1 - model.variance() / 4.0).abs() < 1e-6, "{} vs {}", c.kappa1, model.variance() / 4.0);
    }
}

/// The Laplace density has a kink at its mode, which costs the trapezoid rule an
/// order; at the default spacing the same identity holds to about 6e-4.
#[test]
fn kappa1_second_moment_balance_for_kinked_density() {
    let laplace = DisorderModel::laplace(0.0, 0.7).unwrap();
    let m = solve_edge(&laplace, Side::Left, &EdgeOptions::default()).unwrap();
    let kappa1 = 0.5 * m.log_moment();
    assert!((kappa1 - laplace.variance() / 4.0).abs() < 1e-3, "{kappa1}");
}

#[test]
fn kappa1_forms_and_symmetry_identity_agree() {
    let e = fig2_edges();
    let c = e.constants();
    assert!(c.kappa1_discrepancy() < 1e-5);
    let (lhs, rhs) = symmetry_identity_check(&e.left, &e.right);
    assert!(lhs > 0.0 && rhs > 0.0);
    assert!((lhs - rhs).abs() < 1e-4);
    let (gl, gr) = symmetry_identity_check(&gauss_edges().left, &gauss_edges().right);
    assert_eq!(gl, gr);
}

#[test]
fn kappa1_is_stable_under_grid_refinement() {
    let fine = EdgeOptions { spacing: 0.01, ..EdgeOptions::default() };
    let m = DisorderModel::bimodal_example();
    let refined = EdgePair::solve(&m, &fine, Exec::default()).unwrap().constants();
    let base = fig2_edges().constants();
    assert!((refined.kappa1 - base.kappa1).abs() < 1e-6);
}

#[test]
fn occupation_measure_tracks_the_solution() {
    let g = gauss();
    let m = &gauss_edges().left;
    let short = edge_occupation_check(m, &g, 100_000, 0, None).unwrap();
    let long = edge_occupation_check(m, &g, 10_000_000, 0, None).unwrap();
    assert!(long.discrepancy < 0.05, "{}", long.discrepancy);
    assert!(long.discrepancy < short.discrepancy);
    let far = edge_occupation_check(m, &g, 1_000_000, 0, Some((-40.0, -10.0))).unwrap();
    assert_eq!(far.window_visits, 0);
}

#[test]
fn glued_tail_is_a_continuous_probability_tail() {
    let g = gauss();
    let e = gauss_edges();
    let f2 = fig2_edges();
    for k in [4.0, 6.0, 9.0, 12.0] {
        for (edges, model) in [(e, g.clone()), (f2, DisorderModel::bimodal_example())] {
            let dh = build_dh(k, edges, &model).unwrap();
            dh.gk.check_probability().unwrap();
            assert_eq!(dh.ck, edges.left.eval(k) + edges.right.eval(k));
            let (below, above) = dh.branch_values;
            assert!((below - above).abs() < 1e-15);
            // the plateau sits at 1/C_k up to a correction of order e^{-rho k}
            if k >= 6.0 {
                let i0 = dh.gk.grid.nearest(0.0).unwrap();
                assert!((dh.density()[i0] * dh.ck - 1.0).abs() < 0.01);
            }
        }
    }
}

#[test]
fn ck_approaches_its_asymptote() {
    let g = gauss();
    let gaps: Vec<f64> = [6.0, 9.0, 12.0].iter().map(|&k| build_dh(k, gauss_edges(), &g).unwrap().ck_asymptote_gap()).collect();
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2]);
}

#[test]
fn edge_grid_limits_k() {
    assert!(build_dh(75.0, gauss_edges(), &gauss()).is_err());
}

#[test]
fn one_step_residual_decays_and_bounds_the_lyapunov_gap() {
    let g = gauss();
    let res: Vec<f64> = [4.0, 6.0, 8.0, 10.0].iter().map(|&k| one_step_residual(&build_dh(k, gauss_edges(), &g).unwrap(), &g, Exec::default()).unwrap()).collect();
    assert!(res.windows(2).all(|w| w[1] < w[0]), "{res:?}");
    let fit = linear_fit(&[4.0, 6.0, 8.0, 10.0], &res.iter().map(|r| r.ln()).collect::<Vec<_>>());
    assert!(fit.slope < 0.0);

    let k = 6.0;
    let dh = build_dh(k, gauss_edges(), &g).unwrap();
    let sol = TransferOperator::new(k, &g, dh.gk.grid, Exec::default()).unwrap().solve_invariant_direct().unwrap();
    let gap = (lyap_first_form(&sol.tail, k).unwrap() - dh.lyap().unwrap()).abs();
    assert!(gap <= sol.tail.l1_distance(&dh.gk).unwrap());
}

#[test]
fn asymptote_is_decreasing_and_matches_weak_disorder_form() {
    let c = gauss_edges().constants();
    let vals: Vec<f64> = (3..20).map(|k| c.asymptotic_lyap(k as f64).unwrap()).collect();
    assert!(vals.windows(2).all(|w| w[1] < w[0]));
    for k in [2.0, 5.0, 10.0, 30.0] {
        assert_eq!(asymptotic_lyap(0.25, WEAK_DISORDER_KAPPA2, k).unwrap(), weak_disorder_formula_k(k).unwrap());
    }
    let wd: Vec<f64> = (2..20).map(|k| weak_disorder_formula_k(k as f64).unwrap()).collect();
    assert!(wd.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn comparison_rows_are_complete_and_routes_agree() {
    let g = gauss();
    let params = CompareParams { mc_steps: 2_000_000, chain_steps: 2_000_000, chain_burn_in: 10_000, ..CompareParams::default() };
    let rows = compare_all(&[2.0, 4.0], &g, &params).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(CompareRow::HEADER.len(), rows[0].values().len());
    for r in &rows {
        assert!(r.values().iter().all(|v| v.is_finite()));
        let tol = 3.0 * r.ergodic_stderr + 1e-3;
        assert!((r.operator - r.ergodic).abs() < tol, "{r:?}");
    }
    // rows depend on k only, not on the rest of the list
    let single = compare_all(&[4.0], &g, &params).unwrap();
    assert_eq!(single[0], rows[1]);
}

#[test]
fn fig2_overlay_has_three_densities() {
    let m = DisorderModel::bimodal_example();
    let f = fig2_overlay(10.0, &m, &EdgeOptions::default(), (-12.0, 12.0), Exec::default()).unwrap();
    assert_eq!(f.x.len(), 2401);
    assert!((f.x[0] + 12.0).abs() < 1e-9 && (f.x[f.x.len() - 1] - 12.0).abs() < 1e-9);
    for i in 0..f.x.len() {
        assert!(f.dh_left[i] >= 0.0 && f.dh_right[i] >= 0.0);
        assert!(f.invariant[i] > -1e-6);
    }
    // each edge density follows the invariant density on its own side
    let at = |x: f64| f.x.iter().position(|&v| (v - x).abs() < 1e-9).unwrap();
    let (l, r) = (at(-6.0), at(6.0));
    assert!((f.invariant[l] - f.dh_left[l]).abs() < 0.01 * f.invariant[l]);
    assert!((f.invariant[r] - f.dh_right[r]).abs() < 0.01 * f.invariant[r]);
}
