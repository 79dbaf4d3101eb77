use ising_lyap::disorder::DisorderModel;
use ising_lyap::edge::{edge_occupation_check_with, solve_edge_with, EdgeOptions, Side};
use ising_lyap::exec::Exec;
use ising_lyap::matprod::{epsilon_sweep, lyapunov_mc, McParams};
use ising_lyap::operator::{default_grid, GridTail, TransferOperator};
use ising_lyap::projective::{ergodic_lyapunov, exit_time, ChainConfig};

fn gauss() -> DisorderModel {
    DisorderModel::gaussian(0.0, 1.0).unwrap()
}

#[test]
fn sequential_and_parallel_runs_are_identical() {
    let g = gauss();
    let p = McParams::new(400_000, 7).chains(4);
    let a = lyapunov_mc(0.01, &g, &p.exec(Exec::Sequential)).unwrap();
    let b = lyapunov_mc(0.01, &g, &p.exec(Exec::Parallel)).unwrap();
    assert_eq!(a, b);

    let eps = [0.1, 0.01, 0.001];
    let p = McParams::new(100_000, 3);
    assert_eq!(epsilon_sweep(&g, &eps, &p.exec(Exec::Sequential)).unwrap(), epsilon_sweep(&g, &eps, &p.exec(Exec::Parallel)).unwrap());

    let cfg = ChainConfig::new(3.0, g.clone()).steps(200_000).burn_in(1000).seed(5);
    assert_eq!(ergodic_lyapunov(&cfg, 8, Exec::Sequential).unwrap(), ergodic_lyapunov(&cfg, 8, Exec::Parallel).unwrap());

    let s = exit_time(6.0, &g, 0.0, 11, 64, Exec::Sequential).unwrap();
    let q = exit_time(6.0, &g, 0.0, 11, 64, Exec::Parallel).unwrap();
    assert_eq!((s.mean, s.stderr, s.max), (q.mean, q.stderr, q.max));
}

#[test]
fn operator_and_edge_solves_do_not_depend_on_execution_mode() {
    let g = gauss();
    let k = 3.0;
    let grid = default_grid(k, &g);
    let tail = GridTail::point_mass(grid, 0.0);
    let a = TransferOperator::new(k, &g, grid, Exec::Sequential).unwrap().apply(&tail).unwrap();
    let b = TransferOperator::new(k, &g, grid, Exec::Parallel).unwrap().apply(&tail).unwrap();
    assert_eq!(a, b);

    let m = DisorderModel::bimodal_example();
    let s = solve_edge_with(&m, Side::Right, &EdgeOptions::default(), Exec::Sequential).unwrap();
    let p = solve_edge_with(&m, Side::Right, &EdgeOptions::default(), Exec::Parallel).unwrap();
    assert_eq!(s.f, p.f);
    let cs = edge_occupation_check_with(&s, &m, 200_000, 1, None, 8, Exec::Sequential).unwrap();
    let cp = edge_occupation_check_with(&p, &m, 200_000, 1, None, 8, Exec::Parallel).unwrap();
    assert_eq!(cs.discrepancy, cp.discrepancy);
}

#[test]
fn matrix_and_chain_routes_agree_for_an_asymmetric_law() {
    let m = DisorderModel::bimodal_example();
    let k = 3.0f64;
    let mc = lyapunov_mc((-k).exp(), &m, &McParams::new(5_000_000, 1)).unwrap();
    let cfg = ChainConfig::new(k, m.clone()).steps(5_000_000).seed(2);
    let erg = ergodic_lyapunov(&cfg, 32, Exec::default()).unwrap();
    let op = TransferOperator::new(k, &m, default_grid(k, &m), Exec::default()).unwrap();
    let sol = op.solve_invariant_direct().unwrap();
    let l = ising_lyap::operator::lyap_first_form(&sol.tail, k).unwrap();
    for (v, se) in [(mc.mean, mc.stderr), (erg.mean, erg.stderr)] {
        assert!((v - l).abs() < 4.0 * se + 1e-4, "{v} +- {se} vs {l}");
    }
}

#[test]
fn model_files_round_trip() {
    let m = DisorderModel::bimodal_example();
    let text = serde_json::to_string(&m).unwrap();
    assert_eq!(DisorderModel::from_json(&text).unwrap(), m);
    let centered = DisorderModel::from_json(r#"{"family": "gaussian", "mu": 0.4, "sigma": 2.0, "center": true}"#).unwrap();
    assert!(centered.mean().abs() < 1e-12);
    assert!(DisorderModel::from_json(r#"{"family": "gaussian", "mu": 0.0, "sigma": 1.0, "extra": 1}"#).is_err());
}
