//! Command implementations behind the `lyapdim` binary. Each command takes
//! the merged key-value configuration and returns result tables.

use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;
use serde_json::json;

use crate::bounds::{
    mackey_glass_bound, mackey_glass_lambda, mackey_glass_scaled, scalar_bound, scaled_bound, suarez_schopf_bound,
    suarez_schopf_scaled, BoundProblem, DimensionBound, LambdaMode, DEFAULT_SCALE_RANGE, DEFAULT_SCALE_TOL,
};
use crate::charroots::{
    certified_count_right_of, char_roots, linear_fit, local_dimension, lyapunov_count, unstable_count,
    with_enough_roots, CharProblem, RootSet,
};
use crate::config::{KeyValues, ModelKind, ModelParams};
use crate::dde::{
    integrate, integrate_with_estimate, linearized_monodromy, numerical_lyapunov_spectrum, write_matrix_dump,
    DelayModel, HistorySegment, LinearDelay, LyapunovConfig, MackeyGlass, SuarezSchopf, DEFAULT_MONODROMY_NODES,
};
use crate::error::{Error, Result};
use crate::output::{num, Table};
use crate::sweep::{is_range, parse_range, run_cells};
use crate::verify::{run_suite, Suite};

impl FromStr for LambdaMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rough" => Ok(Self::Rough),
            "tight" => Ok(Self::Tight),
            other => Err(Error::input(format!("unknown lambda mode {other}"))),
        }
    }
}

fn flag(kv: &KeyValues, key: &str) -> Result<bool> {
    Ok(kv.parsed::<bool>(key)?.unwrap_or(false))
}

pub fn delay_model(p: &ModelParams) -> Result<Box<dyn DelayModel>> {
    Ok(match p.kind {
        ModelKind::MackeyGlass => Box::new(MackeyGlass::new(p.beta, p.gamma, p.k, p.tau)?),
        ModelKind::SuarezSchopf => Box::new(SuarezSchopf::new(p.alpha, p.amplitude, p.tau)?),
        ModelKind::Custom => Box::new(LinearDelay::scalar(p.a, p.b, p.tau)?),
    })
}

/// Step that divides `τ`: the requested one is checked, otherwise the
/// largest step not above `0.1` with at least ten cells per delay.
pub fn grid_step(tau: f64, requested: Option<f64>) -> Result<f64> {
    match requested {
        Some(dt) => {
            let k = (tau / dt).round();
            if !(dt > 0.0) || k < 10.0 || (k * dt - tau).abs() > 1e-9 * tau {
                return Err(Error::input(format!("dt = {dt} must divide τ = {tau} with at least ten steps")));
            }
            Ok(tau / k)
        }
        None => Ok(tau / (tau / 0.1).ceil().max(10.0)),
    }
}

fn default_history(p: &ModelParams) -> f64 {
    match p.kind {
        ModelKind::MackeyGlass => 0.5,
        ModelKind::SuarezSchopf => 0.1,
        ModelKind::Custom => 1.0,
    }
}

/// Bound for the configured model, with the chosen `Λ` mode and scaling.
pub fn model_bound(p: &ModelParams, mode: LambdaMode, scaled: bool) -> Result<DimensionBound> {
    match (p.kind, scaled) {
        (ModelKind::MackeyGlass, false) => mackey_glass_bound(p.beta, p.gamma, p.k, p.tau, mode),
        (ModelKind::MackeyGlass, true) => mackey_glass_scaled(p.beta, p.gamma, p.k, p.tau, mode),
        (ModelKind::SuarezSchopf, false) => suarez_schopf_bound(p.alpha, p.gamma, p.tau),
        (ModelKind::SuarezSchopf, true) => suarez_schopf_scaled(p.alpha, p.gamma, p.tau),
        (ModelKind::Custom, false) => scalar_bound(&BoundProblem::new(p.tau, 1.0 + 2.0 * p.a, p.b * p.b)),
        (ModelKind::Custom, true) => {
            let (tau, a, b) = (p.tau, p.a, p.b);
            scaled_bound(
                move |k| BoundProblem::new(tau / k, 1.0 + 2.0 * k * a, (k * b).powi(2)),
                DEFAULT_SCALE_RANGE,
                DEFAULT_SCALE_TOL,
            )
        }
    }
}

fn bound_row(p: &ModelParams, mode: LambdaMode, b: &DimensionBound) -> Vec<serde_json::Value> {
    vec![
        serde_json::to_value(p.kind).expect("model kind serializes"),
        num(p.tau),
        json!(if p.kind == ModelKind::MackeyGlass { format!("{mode:?}").to_lowercase() } else { String::new() }),
        num(b.d_star),
        json!(b.m),
        num(b.gamma),
        num(b.p_star),
        num(b.kappa_opt),
        b.scale_opt.map(num).unwrap_or(serde_json::Value::Null),
        num(b.slope),
        json!(serde_json::to_value(&b.provenance).expect("provenance serializes")),
    ]
}

const BOUND_COLUMNS: [&str; 11] =
    ["model", "tau", "lambda_mode", "d_star", "m", "gamma", "p_star", "kappa_opt", "scale_opt", "slope", "provenance"];

/// `bound`: dimension bound plus a comparison against tabulated values
/// at the classical parameter sets.
pub fn cmd_bound(kv: &KeyValues) -> Result<Vec<Table>> {
    let p = ModelParams::from_kv(kv)?;
    let mode: LambdaMode = kv.parsed("lambda")?.unwrap_or(LambdaMode::Rough);
    let scaled = flag(kv, "scaled")?;
    let b = model_bound(&p, mode, scaled)?;
    let mut t = Table::new("bound", &BOUND_COLUMNS);
    t.push(bound_row(&p, mode, &b));
    if p.kind == ModelKind::MackeyGlass {
        t.note("lambda", num(mackey_glass_lambda(p.beta, p.gamma, p.k, mode)));
    }
    let mut tables = vec![t];
    let mut reference = Table::new("reference", &["quantity", "computed", "reference", "abs_diff"]);
    let mut cmp = |name: &str, got: f64, want: f64| {
        reference.push(vec![json!(name), num(got), num(want), num((got - want).abs())]);
    };
    if p.is_classical_mackey_glass() && mode == LambdaMode::Rough {
        if scaled {
            cmp("scale_opt", b.scale_opt.unwrap_or(f64::NAN), 1.00431);
        } else {
            cmp("p_star", b.p_star, 0.8034);
            cmp("slope", b.slope, 0.9957);
            cmp("d_star", b.d_star, 0.9957 * p.tau + 1.0);
        }
    }
    if p.is_classical_suarez_schopf() {
        if scaled {
            cmp("scale_opt", b.scale_opt.unwrap_or(f64::NAN), 0.346771);
            cmp("d_star", b.d_star, 5.603);
        } else {
            cmp("p_star", b.p_star, 0.843807);
            cmp("d_star", b.d_star, 6.675);
        }
    }
    if !reference.rows.is_empty() {
        tables.push(reference);
    }
    Ok(tables)
}

/// Characteristic problem of the configured model at the chosen equilibrium
/// (`plus` for the symmetric pair, `zero` for the origin).
pub fn char_problem(p: &ModelParams, equilibrium: &str) -> Result<CharProblem> {
    match (p.kind, equilibrium) {
        (ModelKind::MackeyGlass, "plus" | "minus" | "pm") => {
            CharProblem::mackey_glass_symmetric(p.beta, p.gamma, p.k, p.tau)
        }
        (ModelKind::MackeyGlass, "zero") => CharProblem::mackey_glass_zero(p.beta, p.gamma, p.tau),
        (ModelKind::SuarezSchopf, "plus" | "minus" | "pm") => CharProblem::suarez_schopf_symmetric(p.alpha, p.tau),
        (ModelKind::SuarezSchopf, "zero") => CharProblem::suarez_schopf_zero(p.alpha, p.tau),
        (ModelKind::Custom, _) => CharProblem::new(p.a, p.b, p.tau),
        (_, other) => Err(Error::input(format!("unknown equilibrium {other} (plus or zero)"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RootSummary {
    pub n_l: Option<usize>,
    pub n_u: Option<usize>,
    pub local_dimension: Option<f64>,
}

/// Roots plus `N_L`, `N^u` and the local dimension, requesting more roots
/// when the first batch cannot decide them.
pub fn roots_with_summary(prob: &CharProblem, count: usize) -> Result<(RootSet, RootSummary)> {
    let rs = char_roots(prob, count)?;
    if rs.len() == 1 && prob.b == 0.0 {
        let stable = prob.a < 0.0;
        return Ok((
            rs,
            RootSummary {
                n_l: stable.then_some(0),
                n_u: Some(usize::from(!stable)),
                local_dimension: stable.then_some(0.0),
            },
        ));
    }
    let ld = with_enough_roots(prob, count, |r| Ok((local_dimension(r)?, lyapunov_count(r)?, unstable_count(r)?)));
    match ld {
        Ok(((d, nl, nu), bigger)) => {
            let rs = if bigger.len() > rs.len() { bigger } else { rs };
            Ok((rs, RootSummary { n_l: Some(nl), n_u: Some(nu), local_dimension: Some(d) }))
        }
        Err(Error::NeedsMoreRoots(_)) => {
            let nu = unstable_count(&rs).ok();
            Ok((rs, RootSummary { n_l: None, n_u: nu, local_dimension: None }))
        }
        Err(e) => Err(e),
    }
}

pub fn cmd_roots(kv: &KeyValues) -> Result<Vec<Table>> {
    let p = ModelParams::from_kv(kv)?;
    let eq = kv.get("equilibrium").unwrap_or("plus").to_string();
    let count = kv.count_or("count", 20)?;
    let prob = char_problem(&p, &eq)?;
    let (rs, summary) = roots_with_summary(&prob, count)?;
    let mut t = Table::new("roots", &["index", "re", "im", "residual", "multiplicity"]);
    for (i, r) in rs.roots.iter().enumerate() {
        t.push(vec![json!(i + 1), num(r.re), num(r.im), num(rs.residuals[i]), json!(rs.multiplicities[i])]);
    }
    t.note("a", num(prob.a));
    t.note("b", num(prob.b));
    t.note("tau", num(prob.tau));
    t.note("n_l", json!(summary.n_l));
    t.note("n_u", json!(summary.n_u));
    t.note("local_dimension", summary.local_dimension.map(num).unwrap_or(serde_json::Value::Null));
    if prob.b != 0.0 {
        t.note("certified_unstable", json!(certified_count_right_of(&prob, 0.0).ok()));
    }
    if rs.partial {
        t.note("partial", json!(true));
    }
    for w in &rs.warnings {
        t.note("warning", json!(w));
    }
    let mut tables = vec![t];
    if p.is_classical_mackey_glass() && p.tau == 22.0 {
        let mut r = Table::new("reference", &["quantity", "computed", "reference"]);
        let show = |v: Option<usize>| v.map(|x| json!(x)).unwrap_or(serde_json::Value::Null);
        if eq == "zero" {
            r.push(vec![json!("n_u"), show(summary.n_u), json!(1)]);
            r.push(vec![
                json!("local_dimension"),
                summary.local_dimension.map(num).unwrap_or_default(),
                json!("(3,4)"),
            ]);
        } else {
            r.push(vec![json!("n_l"), show(summary.n_l), json!(14)]);
            r.push(vec![json!("n_u"), show(summary.n_u), json!(6)]);
            r.push(vec![
                json!("local_dimension"),
                summary.local_dimension.map(num).unwrap_or_default(),
                json!("(14,15)"),
            ]);
        }
        tables.push(r);
    }
    Ok(tables)
}

fn history_for(p: &ModelParams, kv: &KeyValues, dt: f64) -> Result<HistorySegment> {
    let x0 = kv.f64_or("history", default_history(p))?;
    HistorySegment::constant(&[x0], p.tau, (p.tau / dt).round() as usize)
}

pub fn cmd_simulate(kv: &KeyValues) -> Result<Vec<Table>> {
    let p = ModelParams::from_kv(kv)?;
    let model = delay_model(&p)?;
    let dt = grid_step(p.tau, kv.parsed("dt")?)?;
    let t_end = kv.positive_or("t_end", 50.0 * p.tau)?;
    let t_end = (t_end / dt).round() * dt;
    let h0 = history_for(&p, kv, dt)?;
    let stride = kv.count_or("stride", 1)?;
    let (traj, err) = if flag(kv, "estimate")? {
        let r = integrate_with_estimate(model.as_ref(), &h0, t_end, dt)?;
        (r.trajectory, r.halving_error)
    } else {
        (integrate(model.as_ref(), &h0, t_end, dt)?, None)
    };
    let cols: Vec<String> = std::iter::once("t".to_string()).chain((1..=traj.n).map(|i| format!("x_{i}"))).collect();
    let colrefs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut t = Table::new("trajectory", &colrefs);
    for (time, x) in traj.rows(stride) {
        let mut row = vec![num(time)];
        row.extend(x.iter().map(|&v| num(v)));
        t.push(row);
    }
    t.note("dt", num(dt));
    if let Some(e) = err {
        t.note("halving_error", num(e));
    }
    if let Some(path) = kv.get("dump_monodromy") {
        let nodes = kv.count_or("nodes", DEFAULT_MONODROMY_NODES)?;
        let at = kv.f64_or("monodromy_at", (t_end - p.tau).max(0.0))?;
        let mono = linearized_monodromy(model.as_ref(), &traj, at, nodes)?;
        let file = std::fs::File::create(PathBuf::from(path))?;
        write_matrix_dump(std::io::BufWriter::new(file), model.dim(), nodes, &mono)?;
        t.note("monodromy_dump", json!(path));
    }
    Ok(vec![t])
}

pub fn cmd_lyap(kv: &KeyValues) -> Result<Vec<Table>> {
    let p = ModelParams::from_kv(kv)?;
    let model = delay_model(&p)?;
    let dt = grid_step(p.tau, kv.parsed("dt")?)?;
    let mut cfg = LyapunovConfig::new(dt, kv.positive_or("horizon", 20000.0)?, kv.count_or("m", 8)?);
    cfg.burn_in_delays = kv.f64_or("burn_in", cfg.burn_in_delays)?;
    cfg.seed = kv.parsed("seed")?.unwrap_or(0);
    let h0 = history_for(&p, kv, dt)?;
    let s = numerical_lyapunov_spectrum(model.as_ref(), &h0, &cfg)?;
    let mut t = Table::new("spectrum", &["index", "exponent", "half_horizon"]);
    for (i, (e, h)) in s.exponents.iter().zip(&s.half_horizon_exponents).enumerate() {
        t.push(vec![json!(i + 1), num(*e), num(*h)]);
    }
    t.note("lambda_1", num(s.exponents[0]));
    t.note("kaplan_yorke", s.kaplan_yorke.map(num).unwrap_or(serde_json::Value::Null));
    if s.kaplan_yorke.is_none() {
        t.note("warning", json!("partial sums nonnegative for all computed exponents; increase m"));
    }
    t.note("max_change", num(s.max_change));
    t.note("horizon", num(s.horizon));
    t.note("dt", num(dt));
    if let Ok(b) = model_bound(&p, LambdaMode::Rough, false) {
        t.note("bound", num(b.d_star));
        if let Some(ky) = s.kaplan_yorke {
            t.note("bound_dominates", json!(ky <= b.d_star));
        }
    }
    Ok(vec![t])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepQuantity {
    LocalDimension,
    UnstableCount,
    Bound,
    ScaledBound,
    KaplanYorke,
}

impl FromStr for SweepQuantity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local_dim" | "local_dimension" => Ok(Self::LocalDimension),
            "unstable" | "unstable_count" => Ok(Self::UnstableCount),
            "bound" => Ok(Self::Bound),
            "bound_scaled" | "scaled_bound" => Ok(Self::ScaledBound),
            "ky" | "kaplan_yorke" => Ok(Self::KaplanYorke),
            other => Err(Error::input(format!("unknown sweep quantity {other}"))),
        }
    }
}

fn sweep_cell(p: &ModelParams, q: SweepQuantity, kv: &KeyValues) -> Result<f64> {
    match q {
        SweepQuantity::LocalDimension | SweepQuantity::UnstableCount => {
            let prob = char_problem(p, kv.get("equilibrium").unwrap_or("plus"))?;
            let (_, s) = roots_with_summary(&prob, 16)?;
            let v = if q == SweepQuantity::LocalDimension { s.local_dimension } else { s.n_u.map(|n| n as f64) };
            v.ok_or_else(|| Error::NeedsMoreRoots(format!("undecided at τ = {}", p.tau)))
        }
        SweepQuantity::Bound | SweepQuantity::ScaledBound => {
            let mode: LambdaMode = kv.parsed("lambda")?.unwrap_or(LambdaMode::Rough);
            Ok(model_bound(p, mode, q == SweepQuantity::ScaledBound)?.d_star)
        }
        SweepQuantity::KaplanYorke => {
            let model = delay_model(p)?;
            let dt = grid_step(p.tau, kv.parsed("dt")?)?;
            let mut cfg = LyapunovConfig::new(dt, kv.positive_or("horizon", 20000.0)?, kv.count_or("m", 8)?);
            cfg.seed = kv.parsed("seed")?.unwrap_or(0);
            let h0 = history_for(p, kv, dt)?;
            numerical_lyapunov_spectrum(model.as_ref(), &h0, &cfg)?
                .kaplan_yorke
                .ok_or_else(|| Error::NonConvergence("partial sums stay nonnegative; increase m".into()))
        }
    }
}

/// `sweep`: evaluates a quantity over the single parameter given as a range.
pub fn cmd_sweep(kv: &KeyValues, jobs: usize) -> Result<Vec<Table>> {
    let axes: Vec<&str> = ModelParams::SWEEPABLE.iter().copied().filter(|k| kv.get(k).is_some_and(is_range)).collect();
    let axis = match axes.as_slice() {
        [one] => *one,
        [] => return Err(Error::input("sweep needs one parameter given as lo:hi[:count][:log]")),
        _ => return Err(Error::input(format!("only one parameter may be swept, got {axes:?}"))),
    };
    let grid = parse_range(kv.get(axis).expect("axis present"))?;
    let mut base_kv = kv.clone();
    base_kv.set(axis, grid[0]);
    let base = ModelParams::from_kv(&base_kv)?;
    let quantity: SweepQuantity = kv.get("quantity").unwrap_or("bound").parse()?;
    let values = run_cells(&grid, jobs, |x| base.with(axis, x).and_then(|p| sweep_cell(&p, quantity, kv)))?;
    let values = values.into_iter().collect::<Result<Vec<f64>>>()?;
    let mut t = Table::new("sweep", &[axis, "value"]);
    for (x, v) in grid.iter().zip(&values) {
        t.push(vec![num(*x), num(*v)]);
    }
    t.note("quantity", json!(kv.get("quantity").unwrap_or("bound")));
    if grid.len() >= 2 {
        let fit = linear_fit(&grid, &values)?;
        t.note("slope", num(fit.slope));
        t.note("intercept", num(fit.intercept));
        t.note("r_squared", num(fit.r_squared));
        t.note("low_confidence", json!(fit.low_confidence));
        let half = grid.len() / 2;
        if grid.len() - half >= 2 {
            let upper = linear_fit(&grid[half..], &values[half..])?;
            t.note("upper_slope", num(upper.slope));
        }
    }
    Ok(vec![t])
}

/// `verify`: runs property suites; the flag is false on any failure.
pub fn cmd_verify(kv: &KeyValues) -> Result<(Vec<Table>, bool)> {
    let which = kv.get("suite").unwrap_or("all");
    let suites: Vec<Suite> = if which == "all" { Suite::ALL.to_vec() } else { vec![which.parse()?] };
    let seed = kv.parsed("seed")?.unwrap_or(0);
    let mut t = Table::new("verify", &["suite", "check", "status", "detail"]);
    let mut ok = true;
    for s in suites {
        for c in run_suite(s, seed) {
            ok &= c.pass;
            t.push(vec![json!(s.name()), json!(c.name), json!(if c.pass { "PASS" } else { "FAIL" }), json!(c.detail)]);
        }
    }
    let failed = t.rows.iter().filter(|r| r[2] == "FAIL").count();
    t.note("checks", json!(t.rows.len()));
    t.note("failed", json!(failed));
    Ok((vec![t], ok))
}
