//! Weighted Lyapunov functional
//!
//! ```text
//! G = sum_i w_i (u*/d1) [(u - u*) - u* ln(u/u*)]
//!   + eta sum_i w_i (v*/d2) [(v - v*) - v* ln(v/v*)]
//! ```
//!
//! with trapezoid weights `w_i`, together with the pointwise discriminant
//! whose positivity makes the time derivative of `G` negative definite.

use crate::bounds::BoundQuadruple;
use crate::error::{Error, Result};
use crate::model::{KineticParams, ModelSpec, ScalarField, State};
use crate::pde::{laplacian_neumann, Observation, Observer, SimulationTrace};

/// Weight and reference steady state for `G`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovConfig {
    eta: f64,
    u_ref: ScalarField,
    v_ref: ScalarField,
}

impl LyapunovConfig {
    pub fn new(eta: f64, u_ref: ScalarField, v_ref: ScalarField) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::InvalidParameter(format!("eta must be > 0, got {eta}")));
        }
        v_ref.require_grid(u_ref.grid(), "reference fields on different grids")?;
        u_ref.require_positive("reference u")?;
        v_ref.require_positive("reference v")?;
        Ok(LyapunovConfig { eta, u_ref, v_ref })
    }

    /// Uses [`eta_default`] for the model and quadruple.
    pub fn with_default_eta(model: &ModelSpec, q: &BoundQuadruple, reference: &State) -> Result<Self> {
        let (d1_min, d1_max, d2_min, d2_max) = model.diffusion_extremes();
        let p = model.params();
        let eta = eta_default(q, d1_min, d1_max, d2_min, d2_max, p.b(), p.mu(), p.r());
        Self::new(eta, reference.u.clone(), reference.v.clone())
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn u_ref(&self) -> &ScalarField {
        &self.u_ref
    }

    pub fn v_ref(&self) -> &ScalarField {
        &self.v_ref
    }

    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        Self::new(eta, self.u_ref.clone(), self.v_ref.clone())
    }
}

/// Default weight, taken at the limiting bounds (no transient slack).
#[allow(clippy::too_many_arguments)]
pub fn eta_default(
    q: &BoundQuadruple,
    d1_min: f64,
    d1_max: f64,
    d2_min: f64,
    d2_max: f64,
    b: f64,
    mu: f64,
    r: f64,
) -> f64 {
    let diff = (d2_min * d2_max * q.u_lo * q.u_hi) / (d1_min * d1_max);
    let dens = q.u_lo.powi(3) * q.u_hi / (q.v_lo * q.v_hi.powi(3));
    (diff * dens).sqrt() * b / (mu * (1.0 + r * q.u_lo))
}

/// `s (x - ln(1 + x))` with `x = w/s - 1`, accurate near `x = 0`.
fn relative_entropy(w: f64, s: f64) -> f64 {
    let x = (w - s) / s;
    let core = if x.abs() < 1e-2 {
        // alternating series x^2/2 - x^3/3 + ...
        let mut acc = 0.0;
        let mut pow = x * x;
        for k in 2..12 {
            let term = pow / k as f64;
            acc += if k % 2 == 0 { term } else { -term };
            pow *= x;
        }
        acc
    } else {
        x - x.ln_1p()
    };
    s * core
}

fn require_state(state: &State, cfg: &LyapunovConfig, model: &ModelSpec) -> Result<()> {
    state.u.require_grid(model.grid(), "state and model grids differ")?;
    cfg.u_ref.require_grid(model.grid(), "reference and model grids differ")?;
    for (node, (&u, &v)) in state.u.values().iter().zip(state.v.values()).enumerate() {
        for x in [u, v] {
            if !(x > 0.0) || !x.is_finite() {
                return Err(Error::Singularity { node: Some(node), value: x });
            }
        }
    }
    Ok(())
}

/// Trapezoid value of `G`; zero exactly when the state equals the reference.
pub fn lyapunov_value(state: &State, cfg: &LyapunovConfig, model: &ModelSpec) -> Result<f64> {
    require_state(state, cfg, model)?;
    let w = model.grid().trapezoid_weights();
    let (d1, d2) = (model.d1().values(), model.d2().values());
    let (us, vs) = (cfg.u_ref.values(), cfg.v_ref.values());
    let (u, v) = (state.u.values(), state.v.values());
    let mut g_u = 0.0;
    let mut g_v = 0.0;
    for i in 0..w.len() {
        g_u += w[i] * us[i] / d1[i] * relative_entropy(u[i], us[i]);
        g_v += w[i] * vs[i] / d2[i] * relative_entropy(v[i], vs[i]);
    }
    Ok(g_u + cfg.eta * g_v)
}

/// Quadratic-form coefficients at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeDiscriminant {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// `2 sqrt(AC) - |B|`, or `-inf` when a bracket has the wrong sign.
    pub margin: f64,
    pub brackets_negative: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn discriminant_margin(
    u: f64,
    v: f64,
    u_star: f64,
    v_star: f64,
    d1: f64,
    d2: f64,
    params: &KineticParams,
    eta: f64,
) -> NodeDiscriminant {
    // v enters only through the state positivity requirement
    let _ = v;
    let (b, r, mu) = (params.b(), params.r(), params.mu());
    let su = 1.0 + r * u;
    let ss = 1.0 + r * u_star;
    let a = -d2 * u * u_star * u_star * (su * ss - b * r * v_star);
    let c = -d1 * eta * mu * u_star * v_star * su * ss;
    let bb = -b * d2 * u * u_star * u_star * ss + d1 * eta * mu * v_star * v_star * su * ss;
    let brackets_negative = a < 0.0 && c < 0.0;
    let margin = if brackets_negative {
        2.0 * (a * c).sqrt() - bb.abs()
    } else {
        f64::NEG_INFINITY
    };
    NodeDiscriminant {
        a,
        b: bb,
        c,
        margin,
        brackets_negative,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminantReport {
    pub nodes: Vec<NodeDiscriminant>,
    pub min_margin: f64,
    pub min_node: usize,
}

impl DiscriminantReport {
    pub fn all_valid(&self) -> bool {
        self.nodes.iter().all(|n| n.brackets_negative)
    }
}

pub fn discriminant_report(state: &State, cfg: &LyapunovConfig, model: &ModelSpec) -> Result<DiscriminantReport> {
    require_state(state, cfg, model)?;
    let (d1, d2) = (model.d1().values(), model.d2().values());
    let (us, vs) = (cfg.u_ref.values(), cfg.v_ref.values());
    let (u, v) = (state.u.values(), state.v.values());
    let nodes: Vec<NodeDiscriminant> = (0..u.len())
        .map(|i| discriminant_margin(u[i], v[i], us[i], vs[i], d1[i], d2[i], model.params(), cfg.eta))
        .collect();
    let (min_node, min_margin) = nodes
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bm), (i, n)| if n.margin < bm { (i, n.margin) } else { (bi, bm) });
    Ok(DiscriminantReport {
        nodes,
        min_margin,
        min_node,
    })
}

/// Attaches `G` and the minimum discriminant margin to every trace record.
#[derive(Debug, Clone)]
pub struct LyapunovObserver {
    pub config: LyapunovConfig,
}

impl Observer for LyapunovObserver {
    fn observe(&self, state: &State, model: &ModelSpec) -> Result<Observation> {
        Ok(Observation {
            lyapunov: Some(lyapunov_value(state, &self.config, model)?),
            disc_margin: Some(discriminant_report(state, &self.config, model)?.min_margin),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorRow {
    pub t: f64,
    pub g: f64,
    /// `G(t_k) - G(t_{k-1})`; zero on the first row.
    pub dg: f64,
    pub min_margin: f64,
    pub min_margin_node: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorReport {
    pub rows: Vec<MonitorRow>,
    /// Largest increase of `G` between consecutive rows (0 if none).
    pub max_jump: f64,
    pub min_margin: f64,
    pub nonincreasing: bool,
}

/// Tolerance on per-record increases of `G`.
pub const DECREASE_TOL: f64 = 1e-10;

/// Evaluates `G` and the discriminant on every stored state at or after
/// `t_start`.
pub fn monitor_decrease(
    trace: &SimulationTrace,
    cfg: &LyapunovConfig,
    model: &ModelSpec,
    t_start: f64,
) -> Result<MonitorReport> {
    if trace.states.is_empty() && !trace.records.is_empty() {
        return Err(Error::Precondition("trace holds no state snapshots".into()));
    }
    let mut rows = Vec::new();
    let mut prev: Option<f64> = None;
    for state in trace.states.iter().filter(|s| s.t >= t_start) {
        let g = lyapunov_value(state, cfg, model)?;
        let disc = discriminant_report(state, cfg, model)?;
        rows.push(MonitorRow {
            t: state.t,
            g,
            dg: prev.map_or(0.0, |p| g - p),
            min_margin: disc.min_margin,
            min_margin_node: disc.min_node,
        });
        prev = Some(g);
    }
    let max_jump = rows.iter().fold(0.0f64, |m, r| m.max(r.dg));
    let min_margin = rows.iter().fold(f64::INFINITY, |m, r| m.min(r.min_margin));
    Ok(MonitorReport {
        rows,
        max_jump,
        min_margin,
        nonincreasing: max_jump <= DECREASE_TOL,
    })
}

/// Both sides of the integral inequality
///
/// ```text
/// int w*(w - w*)/w (Lap w - (w/w*) Lap w*)  <=  -int w^2 |grad(w*/w)|^2
/// ```
///
/// using the Neumann stencil, central differences (zero normal difference on
/// the boundary) and trapezoid quadrature. Returns `(lhs, rhs)`.
pub fn green_inequality_check(w: &ScalarField, w_star: &ScalarField) -> Result<(f64, f64)> {
    let grid = *w.grid();
    w_star.require_grid(&grid, "w and w* grids differ")?;
    w.require_positive("w")?;
    w_star.require_positive("w*")?;
    let lap_w = laplacian_neumann(w);
    let lap_s = laplacian_neumann(w_star);
    let weights = grid.trapezoid_weights();
    let (wv, sv) = (w.values(), w_star.values());
    let ratio: Vec<f64> = sv.iter().zip(wv).map(|(s, x)| s / x).collect();
    let counts = grid.counts();
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for node in 0..grid.len() {
        let (x, s) = (wv[node], sv[node]);
        lhs += weights[node] * (s * (x - s) / x * lap_w.values()[node] - (x - s) * lap_s.values()[node]);
        let idx = grid.unflatten(node);
        let mut grad2 = 0.0;
        for axis in 0..grid.dim() {
            let k = idx[axis];
            if k == 0 || k + 1 == counts[axis] {
                continue;
            }
            let stride = if axis == 0 { 1 } else { counts[0] };
            let d = (ratio[node + stride] - ratio[node - stride]) / (2.0 * grid.spacing(axis));
            grad2 += d * d;
        }
        rhs -= weights[node] * x * x * grad2;
    }
    Ok((lhs, rhs))
}
