use serde_json::json;

use ising_lyap::dh::{build_dh, compare_all, fig2_overlay, one_step_residual, weak_disorder_formula, CompareParams, CompareRow, EdgePair, Fig2Data};
use ising_lyap::disorder::DisorderModel;
use ising_lyap::edge::{solve_edge, EdgeOptions, Side};
use ising_lyap::exec::Exec;
use ising_lyap::matprod::{epsilon_sweep, McParams};
use ising_lyap::operator::{default_max_iter, lyap_first_form, TransferOperator};
use ising_lyap::projective::{simulate_x, ChainConfig};

use crate::config::{Command, RunConfig};
use crate::error::CliError;
use crate::output::{sha256_hex, Cell, Sink, Table};

pub const DEFAULT_MC_STEPS: u64 = 1_000_000;
pub const DEFAULT_BATCHES: usize = 32;
pub const DEFAULT_CHAIN_STEPS: u64 = 1_000_000;
pub const DEFAULT_BURN_IN: u64 = 100_000;
pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_DH_K: [f64; 3] = [6.0, 9.0, 12.0];
pub const DEFAULT_COMPARE_STEPS: u64 = 10_000_000;
pub const DEFAULT_FIG2_K: f64 = 10.0;
pub const DEFAULT_FIG2_WINDOW: [f64; 2] = [-12.0, 12.0];

/// Model from `modelPath`; without one, the standard Gaussian (the asymmetric
/// two-component mixture for `fig2`).
fn load_model(cfg: &RunConfig) -> Result<(DisorderModel, Option<String>), CliError> {
    let Some(path) = &cfg.model_path else {
        let m = match cfg.command {
            Command::Fig2 => DisorderModel::bimodal_example(),
            _ => DisorderModel::gaussian(0.0, 1.0)?,
        };
        return Ok((m, None));
    };
    let bytes = std::fs::read(path).map_err(|_| CliError::Validation(format!("modelPath not found: {}", path.display())))?;
    let text = std::str::from_utf8(&bytes).map_err(|_| CliError::Validation(format!("modelPath {}: not UTF-8", path.display())))?;
    let model = DisorderModel::from_json(text).map_err(|e| CliError::Validation(format!("modelPath {}: {e}", path.display())))?;
    Ok((model, Some(sha256_hex(&bytes))))
}

/// Runs one configuration and writes its artifacts.
pub fn dispatch(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    let (model, model_sha256) = if cfg.command == Command::Wd { (None, None) } else { load_model(cfg).map(|(m, h)| (Some(m), h))? };
    let sink = Sink { config: cfg, model_sha256 };
    let model = || model.as_ref().expect("model loaded for this command");
    match cfg.command {
        Command::Mc => mc(cfg, model(), &sink),
        Command::Chain => chain(cfg, model(), &sink),
        Command::Operator => operator(cfg, model(), &sink),
        Command::Edge => edge(cfg, model(), &sink),
        Command::Dh if cfg.constants => dh_constants(cfg, model(), &sink),
        Command::Dh => dh(cfg, model(), &sink),
        Command::Wd => wd(cfg, &sink),
        Command::Compare => compare(cfg, model(), &sink),
        Command::Fig2 => fig2(cfg, model(), &sink),
    }
}

/// JSON summary: to `jsonOutputPath`, else to stdout when the CSV went to a file.
fn summary(cfg: &RunConfig, sink: &Sink, value: &serde_json::Value) -> Result<(), CliError> {
    match (&cfg.json_output_path, &cfg.output_path) {
        (Some(p), _) => sink.json(Some(p), value),
        (None, Some(_)) => sink.json(None, value),
        (None, None) => Ok(()),
    }
}

fn mc(cfg: &RunConfig, model: &DisorderModel, sink: &Sink) -> Result<(), CliError> {
    let eps = cfg.eps.as_deref().unwrap_or_default();
    let params = McParams::new(cfg.steps.unwrap_or(DEFAULT_MC_STEPS), cfg.seed).batches(cfg.batches.unwrap_or(DEFAULT_BATCHES));
    let est = epsilon_sweep(model, eps, &params)?;
    let mut t = Table::new(&["epsilon", "k", "mean", "stderr", "steps", "seed"]);
    for (e, r) in eps.iter().zip(&est) {
        t.push([Cell::from(*e), (-e.ln()).into(), r.mean.into(), r.stderr.into(), r.steps.into(), r.seed.into()]);
    }
    sink.table(&t)
}

fn chain(cfg: &RunConfig, model: &DisorderModel, sink: &Sink) -> Result<(), CliError> {
    let k = cfg.k.as_ref().expect("validated")[0];
    let c = ChainConfig::new(k, model.clone())
        .steps(cfg.steps.unwrap_or(DEFAULT_CHAIN_STEPS))
        .burn_in(cfg.burn_in.unwrap_or(DEFAULT_BURN_IN))
        .seed(cfg.seed);
    let s = simulate_x(&c, None, false)?;
    let h = &s.histogram;
    let mut t = Table::new(&["binLeft", "binRight", "density"]);
    for (i, d) in h.density().into_iter().enumerate() {
        let (a, b) = h.edges(i);
        t.push(vec![a, b, d]);
    }
    sink.table(&t)?;
    summary(
        cfg,
        sink,
        &json!({
            "k": k,
            "steps": c.steps,
            "burnIn": c.burn_in,
            "seed": c.seed,
            "driftMean": s.drift_mean,
            "driftStderr": s.drift_stderr,
            "maxState": s.max_state,
            "underflow": h.underflow,
            "overflow": h.overflow,
        }),
    )
}

fn operator(cfg: &RunConfig, model: &DisorderModel, sink: &Sink) -> Result<(), CliError> {
    let k = cfg.k.as_ref().expect("validated")[0];
    let op = TransferOperator::with_default_grid(k, model)?;
    let sol = op.solve_invariant(cfg.tol.unwrap_or(DEFAULT_TOL), default_max_iter(k))?;
    let g = &sol.tail;
    let mut t = Table::new(&["x", "G", "density"]);
    for (i, d) in g.density().into_iter().enumerate() {
        t.push(vec![g.grid.x(i), g.values[i], d]);
    }
    sink.table(&t)?;
    summary(
        cfg,
        sink,
        &json!({ "k": k, "iterations": sol.iterations, "residual": sol.residual, "lyapunov": lyap_first_form(g, k)? }),
    )
}

fn edge(cfg: &RunConfig, model: &DisorderModel, sink: &Sink) -> Result<(), CliError> {
    let side: Side = cfg.side.as_deref().unwrap_or("left").parse()?;
    let m = solve_edge(model, side, &EdgeOptions::default())?;
    let mut t = Table::new(&["x", "F", "residual"]);
    for ((x, f), r) in m.nodes().into_iter().zip(&m.f).zip(m.residual()) {
        t.push(vec![x, *f, r]);
    }
    sink.table(&t)?;
    summary(
        cfg,
        sink,
        &json!({
            "side": side,
            "slopeRaw": m.slope_raw,
            "intercept": m.intercept,
            "rhoEstimate": m.rho_estimate,
            "rhoIsLowerBound": m.rho_is_lower_bound,
            "iterations": m.iterations,
        }),
    )
}

fn dh_constants(cfg: &RunConfig, model: &DisorderModel, sink: &Sink) -> Result<(), CliError> {
    let c = EdgePair::solve(model, &EdgeOptions::default(), Exec::default())?.constants();
    sink.json(cfg.json_output_path.as_deref(), &c)
}

fn dh(cfg: &RunConfig, model: &DisorderModel, sink: &Sink) -> Result<(), CliError> {
    let edges = EdgePair::solve(model, &EdgeOptions::default(), Exec::default())?;
    let mut t = Table::new(&["k", "ck", "ckAsymptoteGap", "dhLyapunov", "asymptotic", "residual"]);
    for k in cfg.k_or(&DEFAULT_DH_K) {
        let d = build_dh(k, &edges, model)?;
        let residual = one_step_residual(&d, model, Exec::default())?;
        t.push(vec![k, d.ck, d.ck_asymptote_gap(), d.lyap()?, d.asymptotic_lyap()?, residual]);
    }
    sink.table(&t)?;
    summary(cfg, sink, &serde_json::to_value(edges.constants()).expect("constants serialize"))
}

fn wd(cfg: &RunConfig, sink: &Sink) -> Result<(), CliError> {
    let eps = cfg.eps.as_deref().unwrap_or_default();
    let values = eps.iter().map(|&e| weak_disorder_formula(e)).collect::<Result<Vec<_>, _>>()?;
    if cfg.output_path.is_none() {
        values.iter().for_each(|v| println!("{v}"));
        return Ok(());
    }
    let mut t = Table::new(&["epsilon", "k", "value"]);
    for (e, v) in eps.iter().zip(values) {
        t.push(vec![*e, -e.ln(), v]);
    }
    sink.table(&t)
}

fn compare(cfg: &RunConfig, model: &DisorderModel, sink: &Sink) -> Result<(), CliError> {
    let params = CompareParams {
        mc_steps: cfg.mc_steps.unwrap_or(DEFAULT_COMPARE_STEPS),
        chain_steps: cfg.chain_steps.unwrap_or(DEFAULT_COMPARE_STEPS),
        chain_burn_in: cfg.burn_in.unwrap_or(DEFAULT_BURN_IN),
        batches: cfg.batches.unwrap_or(DEFAULT_BATCHES),
        seed: cfg.seed,
        operator_tol: cfg.tol.unwrap_or(DEFAULT_TOL),
        ..CompareParams::default()
    };
    let rows = compare_all(&cfg.k_or(&DEFAULT_DH_K), model, &params)?;
    let mut t = Table::new(&CompareRow::HEADER);
    rows.iter().for_each(|r| t.push(r.values()));
    sink.table(&t)
}

fn fig2(cfg: &RunConfig, model: &DisorderModel, sink: &Sink) -> Result<(), CliError> {
    let k = cfg.k_or(&[DEFAULT_FIG2_K])[0];
    let [lo, hi] = cfg.window.unwrap_or(DEFAULT_FIG2_WINDOW);
    let d = fig2_overlay(k, model, &EdgeOptions::default(), (lo, hi), Exec::default())?;
    let mut t = Table::new(&Fig2Data::HEADER);
    for i in 0..d.x.len() {
        t.push(vec![d.x[i], d.invariant[i], d.dh_left[i], d.dh_right[i]]);
    }
    sink.table(&t)
}
