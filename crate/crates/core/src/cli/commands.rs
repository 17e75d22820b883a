use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Map, Value};

use super::config::{CoefficientSource, ReferenceChoice, RunConfig, SteadyChoice};
use crate::bounds::{
    bisect_quadruple, check_b_condition, check_global_stability, check_remark_condition, monotone_iteration,
    solve_quadruple, BCondition, BoundQuadruple, MonotoneOptions, ThresholdCheck,
};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, json_f64, matrix_csv, monitor_csv, trace_csv, write_snapshots};
use crate::lyapunov::{monitor_decrease, LyapunovConfig, DECREASE_TOL};
use crate::model::{CoefficientSpec, KineticParams, ModelSpec, State};
use crate::pde::{box_entry_time, simulate};
use crate::steady::{
    check_containment, steady_by_relaxation, steady_newton_1d, SteadyResult,
};

/// Slack used for box entry and containment verdicts.
pub const BOX_SLACK: f64 = 1e-3;

/// Hypothesis verdicts shared by `check` and `scan`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditions {
    pub a_min: f64,
    pub a_max: f64,
    pub b_condition: BCondition,
    pub quadruple: Option<BoundQuadruple>,
    pub stability: Option<ThresholdCheck>,
    pub m: Option<f64>,
    pub remark: Option<ThresholdCheck>,
}

impl Conditions {
    pub fn to_json(&self) -> Value {
        let verdict = |c: &Option<ThresholdCheck>| c.map_or(Value::Bool(false), |c| Value::Bool(c.holds));
        let margin = |c: &Option<ThresholdCheck>| c.map_or(Value::Null, |c| json_f64(c.margin));
        let rhs = |c: &Option<ThresholdCheck>| c.map_or(Value::Null, |c| json_f64(c.rhs));
        json!({
            "condition_2_2": self.b_condition.holds,
            "condition_4_6": verdict(&self.stability),
            "condition_4_66": verdict(&self.remark),
            "margins": {
                "condition_2_2": json_f64(self.b_condition.margin),
                "condition_4_6": margin(&self.stability),
                "condition_4_66": margin(&self.remark),
            },
            "rhs": {
                "condition_2_2": json_f64(self.a_min / self.a_max),
                "condition_4_6": rhs(&self.stability),
                "condition_4_66": rhs(&self.remark),
            },
            "m": self.m.map_or(Value::Null, json_f64),
            "a_min": json_f64(self.a_min),
            "a_max": json_f64(self.a_max),
            "quadruple": self.quadruple.as_ref().map_or(Value::Null, quadruple_json),
        })
    }
}

fn quadruple_json(q: &BoundQuadruple) -> Value {
    json!({
        "u_lo": json_f64(q.u_lo),
        "u_hi": json_f64(q.u_hi),
        "v_lo": json_f64(q.v_lo),
        "v_hi": json_f64(q.v_hi),
    })
}

/// Evaluates every hypothesis for a model. `m` defaults to the computed
/// ratio `u_hi / u_lo`.
pub fn evaluate_conditions(model: &ModelSpec, bounds_tol: f64, m: Option<f64>) -> Result<Conditions> {
    let (a_min, a_max) = model.a_extremes();
    let p = model.params();
    let b_condition = check_b_condition(a_min, a_max, p.b());
    let (d1_min, d1_max, d2_min, d2_max) = model.diffusion_extremes();
    let quadruple = if b_condition.holds {
        Some(solve_quadruple(a_min, a_max, p.b(), p.r(), bounds_tol)?)
    } else {
        None
    };
    let stability = quadruple
        .as_ref()
        .map(|q| check_global_stability(q, d1_min, d1_max, d2_min, d2_max, a_min, p));
    let m = m.or_else(|| quadruple.as_ref().map(|q| q.ratio()));
    let remark = m
        .map(|m| check_remark_condition(m, a_min, d1_min, d1_max, d2_min, d2_max, p.b(), p.r()))
        .transpose()?;
    Ok(Conditions {
        a_min,
        a_max,
        b_condition,
        quadruple,
        stability,
        m,
        remark,
    })
}

fn require_quadruple(model: &ModelSpec, cfg: &RunConfig) -> Result<BoundQuadruple> {
    let (a_min, a_max) = model.a_extremes();
    let p = model.params();
    if !check_b_condition(a_min, a_max, p.b()).holds {
        return Err(Error::BConditionViolated {
            b: p.b(),
            ratio: a_min / a_max,
        });
    }
    solve_quadruple(a_min, a_max, p.b(), p.r(), cfg.solver.bounds_tol)
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
}

fn write(path: PathBuf, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
    fs::write(&path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

fn grid_json(model: &ModelSpec) -> Value {
    let g = model.grid();
    json!({
        "dim": g.dim(),
        "extents": g.extents().iter().map(|&x| json_f64(x)).collect::<Vec<_>>(),
        "counts": g.counts(),
    })
}

fn params_json(p: &KineticParams) -> Value {
    json!({ "b": json_f64(p.b()), "r": json_f64(p.r()), "mu": json_f64(p.mu()) })
}

/// Quadruple by root finding, cross-checked by monotone iteration.
pub fn cmd_bounds(cfg: &RunConfig, out: &Path) -> Result<String> {
    let model = cfg.model()?;
    let (a_min, a_max) = model.a_extremes();
    let p = *model.params();
    let q = require_quadruple(&model, cfg)?;
    let tol = cfg.solver.bounds_tol;
    let mut opts = MonotoneOptions::for_problem(a_min, a_max, p.b())?;
    opts.tol = tol;
    opts.max_iter = cfg.solver.monotone_max_iter;
    let (limit, trace) = monotone_iteration(a_min, a_max, &p, &opts)?;
    let closed_form_gap = if p.r() == 0.0 {
        Some(bisect_quadruple(a_min, a_max, p.b(), 0.0, tol)?.distance(&q))
    } else {
        None
    };
    let residuals = q.residuals(a_min, a_max, &p);

    let mut text = String::new();
    let _ = writeln!(text, "a_min = {}", fmt_f64(a_min));
    let _ = writeln!(text, "a_max = {}", fmt_f64(a_max));
    let _ = writeln!(text, "condition_2_2 = true (margin {})", fmt_f64(a_min / a_max - p.b()));
    let method = if p.r() == 0.0 { "closed_form" } else { "bisection" };
    let _ = writeln!(text, "quadruple ({method}):");
    for (name, x) in [("u_lo", q.u_lo), ("u_hi", q.u_hi), ("v_lo", q.v_lo), ("v_hi", q.v_hi)] {
        let _ = writeln!(text, "  {name} = {}", fmt_f64(x));
    }
    let _ = writeln!(text, "residuals = [{}]", residuals.map(fmt_f64).join(", "));
    if let Some(gap) = closed_form_gap {
        let _ = writeln!(text, "closed form vs bisection: max difference {}", fmt_f64(gap));
    }
    let _ = writeln!(
        text,
        "monotone iteration: {} iterates, K = {}, max difference {}",
        trace.iterations,
        fmt_f64(trace.k),
        fmt_f64(limit.distance(&q))
    );

    let report = json!({
        "a_min": json_f64(a_min),
        "a_max": json_f64(a_max),
        "condition_2_2": true,
        "method": method,
        "quadruple": quadruple_json(&q),
        "residuals": residuals.iter().map(|&x| json_f64(x)).collect::<Vec<_>>(),
        "closed_form_gap": closed_form_gap.map_or(Value::Null, json_f64),
        "monotone": {
            "iterations": trace.iterations,
            "k": json_f64(trace.k),
            "limit": quadruple_json(&limit),
            "distance": json_f64(limit.distance(&q)),
        },
    });
    prepare_dir(out)?;
    write(out.join(format!("{}_bounds.json", cfg.prefix)), pretty(&report))?;
    Ok(text)
}

/// JSON verdicts for all hypotheses.
pub fn cmd_check(cfg: &RunConfig, out: &Path) -> Result<String> {
    let model = cfg.model()?;
    require_quadruple(&model, cfg)?;
    let verdict = evaluate_conditions(&model, cfg.solver.bounds_tol, cfg.check_m)?.to_json();
    let text = pretty(&verdict);
    prepare_dir(out)?;
    write(out.join(format!("{}_check.json", cfg.prefix)), &text)?;
    Ok(text)
}

fn quadruple_if_valid(model: &ModelSpec, cfg: &RunConfig) -> Result<Option<BoundQuadruple>> {
    match require_quadruple(model, cfg) {
        Ok(q) => Ok(Some(q)),
        Err(Error::BConditionViolated { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Trace CSV, optional snapshots, final fields and a summary.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<String> {
    let model = cfg.model()?;
    let q = quadruple_if_valid(&model, cfg)?;
    let initial = cfg.initial_state(q.map(|q| (q.u_mid(), q.v_mid())))?;
    let scfg = cfg.stepper_config(&model, true)?;
    let mut trace = simulate(&model, &initial, &scfg, None)?;
    let final_state = trace.final_state().cloned().expect("simulate records the final state");
    let entry = q.as_ref().and_then(|q| box_entry_time(&trace, q, BOX_SLACK));

    prepare_dir(out)?;
    let prefix = &cfg.prefix;
    write(out.join(format!("{prefix}_trace.csv")), trace_csv(&trace))?;
    write(out.join(format!("{prefix}_final_u.csv")), matrix_csv(&final_state.u))?;
    write(out.join(format!("{prefix}_final_v.csv")), matrix_csv(&final_state.v))?;
    let snapshots = if cfg.stepper.snapshots {
        write_snapshots(out, prefix, &trace)?.len() / 2
    } else {
        0
    };
    trace.states.clear();
    let last = trace.records.last().expect("final record");
    let summary = json!({
        "t_end": json_f64(final_state.t),
        "dt": json_f64(scfg.dt),
        "records": trace.records.len(),
        "snapshots": snapshots,
        "final": {
            "u_min": json_f64(last.u_min), "u_max": json_f64(last.u_max),
            "v_min": json_f64(last.v_min), "v_max": json_f64(last.v_max),
            "rhs_sup": json_f64(last.rhs_sup),
        },
        "quadruple": q.as_ref().map_or(Value::Null, quadruple_json),
        "box_slack": json_f64(BOX_SLACK),
        "box_entry_time": entry.map_or(Value::Null, json_f64),
    });
    write(out.join(format!("{prefix}_simulate.json")), pretty(&summary))?;
    let mut text = String::new();
    let _ = writeln!(text, "t = {}  dt = {}  records = {}", fmt_f64(final_state.t), fmt_f64(scfg.dt), trace.records.len());
    let _ = writeln!(
        text,
        "final u in [{}, {}], v in [{}, {}], residual {}",
        fmt_f64(last.u_min),
        fmt_f64(last.u_max),
        fmt_f64(last.v_min),
        fmt_f64(last.v_max),
        fmt_f64(last.rhs_sup)
    );
    let _ = writeln!(
        text,
        "box_entry_time = {}",
        entry.map_or_else(|| "none".to_string(), fmt_f64)
    );
    Ok(text)
}

/// Steady state with the configured method; `auto` tries Newton in 1D and
/// falls back to relaxation.
pub fn solve_steady(cfg: &RunConfig, model: &ModelSpec, q: Option<&BoundQuadruple>) -> Result<SteadyResult> {
    let initial = cfg.initial_state(q.map(|q| (q.u_mid(), q.v_mid())))?;
    let s = &cfg.solver;
    let relax = |init: &State| steady_by_relaxation(model, init, s.tol, s.t_max);
    match s.method {
        SteadyChoice::Relaxation => relax(&initial),
        SteadyChoice::Newton => steady_newton_1d(model, &initial, s.tol, s.max_iter),
        SteadyChoice::Auto if model.grid().dim() == 1 => {
            match steady_newton_1d(model, &initial, s.tol, s.max_iter) {
                Err(Error::NewtonFailed(_)) | Err(Error::NotConverged { .. }) | Err(Error::Precondition(_)) => {
                    relax(&initial)
                }
                other => other,
            }
        }
        SteadyChoice::Auto => relax(&initial),
    }
}

/// Steady fields, metadata and the containment verdict.
pub fn cmd_steady(cfg: &RunConfig, out: &Path) -> Result<String> {
    let model = cfg.model()?;
    let q = quadruple_if_valid(&model, cfg)?;
    prepare_dir(out)?;
    let prefix = &cfg.prefix;
    let meta_path = out.join(format!("{prefix}_steady.json"));
    let mut meta = Map::new();
    meta.insert("grid".into(), grid_json(&model));
    meta.insert("params".into(), params_json(model.params()));
    let result = match solve_steady(cfg, &model, q.as_ref()) {
        Ok(r) => r,
        Err(e) => {
            let residual = match &e {
                Error::RelaxationNotConverged { residual, .. } | Error::NotConverged { residual, .. } => {
                    json_f64(*residual)
                }
                _ => Value::Null,
            };
            meta.insert("status".into(), json!("not-converged"));
            meta.insert("residual".into(), residual);
            meta.insert("message".into(), json!(e.to_string()));
            write(meta_path, pretty(&Value::Object(meta)))?;
            return Err(e);
        }
    };
    write(out.join(format!("{prefix}_steady_u.csv")), matrix_csv(&result.u_star))?;
    write(out.join(format!("{prefix}_steady_v.csv")), matrix_csv(&result.v_star))?;
    let containment = q.as_ref().map(|q| check_containment(&result, q, BOX_SLACK));
    meta.insert("status".into(), json!("converged"));
    meta.insert("method".into(), json!(result.method.name()));
    meta.insert("iterations".into(), json!(result.iterations));
    meta.insert("residual".into(), json_f64(result.residual_sup));
    meta.insert(
        "update_norms".into(),
        Value::Array(result.update_norms.iter().map(|&x| json_f64(x)).collect()),
    );
    meta.insert(
        "u_star".into(),
        json!({ "min": json_f64(result.u_star.min()), "max": json_f64(result.u_star.max()) }),
    );
    meta.insert(
        "v_star".into(),
        json!({ "min": json_f64(result.v_star.min()), "max": json_f64(result.v_star.max()) }),
    );
    meta.insert("quadruple".into(), q.as_ref().map_or(Value::Null, quadruple_json));
    meta.insert(
        "containment".into(),
        containment.map_or(Value::Null, |c| {
            json!({ "holds": c.holds, "worst_violation": json_f64(c.worst_violation), "slack": json_f64(BOX_SLACK) })
        }),
    );
    write(meta_path, pretty(&Value::Object(meta)))?;

    let mut text = String::new();
    let _ = writeln!(
        text,
        "steady state by {} in {} iterations, residual {}",
        result.method.name(),
        result.iterations,
        fmt_f64(result.residual_sup)
    );
    let _ = writeln!(text, "u* in [{}, {}]", fmt_f64(result.u_star.min()), fmt_f64(result.u_star.max()));
    let _ = writeln!(text, "v* in [{}, {}]", fmt_f64(result.v_star.min()), fmt_f64(result.v_star.max()));
    match containment {
        Some(c) => {
            let _ = writeln!(text, "containment = {} (worst violation {})", c.holds, fmt_f64(c.worst_violation));
        }
        None => text.push_str("containment = n/a (no bound quadruple)\n"),
    }
    Ok(text)
}

/// Runs the configured simulation and monitors `G` against a reference.
pub fn cmd_lyapunov(cfg: &RunConfig, out: &Path) -> Result<String> {
    let model = cfg.model()?;
    let q = require_quadruple(&model, cfg)?;
    let initial = cfg.initial_state(Some((q.u_mid(), q.v_mid())))?;
    let scfg = cfg.stepper_config(&model, true)?;
    let trace = simulate(&model, &initial, &scfg, None)?;
    let reference = match cfg.lyapunov.reference {
        ReferenceChoice::Steady => solve_steady(cfg, &model, Some(&q))?.as_state(),
        ReferenceChoice::Final => trace.final_state().cloned().expect("final state recorded"),
    };
    let default = LyapunovConfig::with_default_eta(&model, &q, &reference)?;
    let lcfg = match cfg.lyapunov.eta {
        Some(eta) => default.with_eta(eta)?,
        None => default.clone(),
    };
    let report = monitor_decrease(&trace, &lcfg, &model, initial.t)?;
    let entry = box_entry_time(&trace, &q, BOX_SLACK);
    let (mut max_jump, mut min_margin) = (0.0f64, f64::INFINITY);
    if let Some(te) = entry {
        for pair in report.rows.windows(2) {
            if pair[0].t >= te {
                max_jump = max_jump.max(pair[1].dg);
            }
        }
        for row in report.rows.iter().filter(|r| r.t >= te) {
            min_margin = min_margin.min(row.min_margin);
        }
    }
    let nonincreasing = entry.is_some() && max_jump <= DECREASE_TOL;

    prepare_dir(out)?;
    let prefix = &cfg.prefix;
    write(out.join(format!("{prefix}_monitor.csv")), monitor_csv(&report))?;
    let summary = json!({
        "eta": json_f64(lcfg.eta()),
        "eta_default": json_f64(default.eta()),
        "reference": match cfg.lyapunov.reference { ReferenceChoice::Steady => "steady", ReferenceChoice::Final => "final" },
        "box_entry_time": entry.map_or(Value::Null, json_f64),
        "max_jump_after_entry": json_f64(max_jump),
        "min_margin_after_entry": json_f64(min_margin),
        "nonincreasing_after_entry": nonincreasing,
        "max_jump": json_f64(report.max_jump),
        "min_margin": json_f64(report.min_margin),
        "final_g": report.rows.last().map_or(Value::Null, |r| json_f64(r.g)),
    });
    write(out.join(format!("{prefix}_lyapunov.json")), pretty(&summary))?;

    let mut text = String::new();
    let _ = writeln!(text, "eta = {} (default {})", fmt_f64(lcfg.eta()), fmt_f64(default.eta()));
    let _ = writeln!(text, "box_entry_time = {}", entry.map_or_else(|| "none".to_string(), fmt_f64));
    let _ = writeln!(
        text,
        "after entry: max increase of G {}, min discriminant margin {}, nonincreasing = {nonincreasing}",
        fmt_f64(max_jump),
        fmt_f64(min_margin)
    );
    if let Some(r) = report.rows.last() {
        let _ = writeln!(text, "final G = {}", fmt_f64(r.g));
    }
    Ok(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanAxis {
    B,
    R,
    Amplitude,
    Contrast,
}

impl std::str::FromStr for ScanAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "b" => Ok(ScanAxis::B),
            "r" => Ok(ScanAxis::R),
            "amplitude" => Ok(ScanAxis::Amplitude),
            "contrast" => Ok(ScanAxis::Contrast),
            other => Err(Error::Config(format!(
                "unknown scan axis {other:?} (expected b, r, amplitude or contrast)"
            ))),
        }
    }
}

fn spec_of<'a>(source: &'a CoefficientSource, what: &str) -> Result<&'a CoefficientSpec> {
    match source {
        CoefficientSource::Spec(s @ (CoefficientSpec::Constant(_) | CoefficientSpec::Cosine { .. })) => Ok(s),
        _ => Err(Error::Config(format!("{what} must be constant or cosine to scan along this axis"))),
    }
}

fn base_of(spec: &CoefficientSpec) -> f64 {
    match spec {
        CoefficientSpec::Constant(v) => *v,
        CoefficientSpec::Cosine { base, .. } => *base,
        CoefficientSpec::Tabulated(_) => unreachable!("filtered by spec_of"),
    }
}

fn modes_of(spec: &CoefficientSpec, dim: usize) -> Vec<u32> {
    match spec {
        CoefficientSpec::Cosine { modes, .. } => modes.clone(),
        _ => vec![1; dim],
    }
}

/// The configuration with one scan value applied.
///
/// `contrast` sets `max d / min d` of both diffusion coefficients to the value,
/// keeping their bases.
pub fn apply_axis(cfg: &RunConfig, axis: ScanAxis, value: f64) -> Result<RunConfig> {
    let mut c = cfg.clone();
    let p = cfg.params;
    let dim = cfg.grid.dim();
    match axis {
        ScanAxis::B => c.params = KineticParams::new(value, p.r(), p.mu())?,
        ScanAxis::R => c.params = KineticParams::new(p.b(), value, p.mu())?,
        ScanAxis::Amplitude => {
            let spec = spec_of(&cfg.a, "[a]")?;
            c.a = CoefficientSource::Spec(CoefficientSpec::Cosine {
                base: base_of(spec),
                amplitude: value,
                modes: modes_of(spec, dim),
            });
        }
        ScanAxis::Contrast => {
            if value < 1.0 {
                return Err(Error::Config(format!("diffusion contrast must be >= 1, got {value}")));
            }
            for (source, what) in [(&mut c.d1, "[d1]"), (&mut c.d2, "[d2]")] {
                let spec = spec_of(source, what)?.clone();
                let base = base_of(&spec);
                *source = CoefficientSource::Spec(CoefficientSpec::Cosine {
                    base,
                    amplitude: base * (value - 1.0) / (value + 1.0),
                    modes: modes_of(&spec, dim),
                });
            }
        }
    }
    Ok(c)
}

pub const SCAN_HEADER: &str = "value,a_min,a_max,condition_2_2,margin_2_2,u_lo,u_hi,v_lo,v_hi,\
condition_4_6,rhs_4_6,margin_4_6,m,condition_4_66,rhs_4_66,margin_4_66";

fn scan_row(value: f64, c: &Conditions) -> String {
    let nan = f64::NAN;
    let q = c.quadruple.unwrap_or(BoundQuadruple {
        u_lo: nan,
        u_hi: nan,
        v_lo: nan,
        v_hi: nan,
    });
    let check = |t: &Option<ThresholdCheck>| {
        t.map_or_else(
            || format!("false,{},{}", fmt_f64(nan), fmt_f64(nan)),
            |t| format!("{},{},{}", t.holds, fmt_f64(t.rhs), fmt_f64(t.margin)),
        )
    };
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        fmt_f64(value),
        fmt_f64(c.a_min),
        fmt_f64(c.a_max),
        c.b_condition.holds,
        fmt_f64(c.b_condition.margin),
        fmt_f64(q.u_lo),
        fmt_f64(q.u_hi),
        fmt_f64(q.v_lo),
        fmt_f64(q.v_hi),
        check(&c.stability),
        fmt_f64(c.m.unwrap_or(nan)),
        check(&c.remark),
    )
}

/// One row per value, in input order; rows failing the `b` hypothesis are
/// kept with verdict `false`.
pub fn scan_conditions(cfg: &RunConfig, axis: ScanAxis, values: &[f64]) -> Result<Vec<Conditions>> {
    if let Some(bad) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::Config(format!("scan values must be positive, got {bad}")));
    }
    values
        .par_iter()
        .map(|&v| {
            let c = apply_axis(cfg, axis, v)?;
            evaluate_conditions(&c.model()?, c.solver.bounds_tol, c.check_m)
        })
        .collect()
}

pub fn cmd_scan(cfg: &RunConfig, axis: ScanAxis, values: &[f64], out: &Path) -> Result<String> {
    let rows = scan_conditions(cfg, axis, values)?;
    let mut text = String::from(SCAN_HEADER);
    text.push('\n');
    for (v, c) in values.iter().zip(&rows) {
        text.push_str(&scan_row(*v, c));
        text.push('\n');
    }
    prepare_dir(out)?;
    write(out.join(format!("{}_scan.csv", cfg.prefix)), &text)?;
    Ok(text)
}
