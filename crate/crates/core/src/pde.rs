//! Method-of-lines discretization of the reaction-diffusion system
//!
//! ```text
//! u_t = d1(x) Lap u + f(a(x), u, v)
//! v_t = d2(x) Lap v + g(u, v)
//! ```
//!
//! with no-flux boundaries, integrated by explicit Euler or classical RK4.
//! The diffusion coefficient multiplies the Laplacian (non-divergence form).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bounds::BoundQuadruple;
use crate::error::{Error, Result};
use crate::model::{f_raw, g_raw, Grid, ModelSpec, ScalarField, State};

/// Safety factor applied to the explicit diffusion limit.
pub const CFL_SAFETY: f64 = 0.9;

/// Seed used for random initial data when none is given.
pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Rk4,
    Euler,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepperConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Record every `record_every` steps (the final state is always recorded).
    pub record_every: usize,
    pub scheme: Scheme,
    /// Keep full state snapshots at each record, not only the scalar summaries.
    pub keep_states: bool,
}

impl StepperConfig {
    /// RK4 at the largest stable step for `model`.
    pub fn auto(model: &ModelSpec, t_end: f64, record_every: usize) -> Self {
        StepperConfig {
            dt: cfl_limit(model),
            t_end,
            record_every,
            scheme: Scheme::Rk4,
            keep_states: true,
        }
    }

    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0) {
            return Err(Error::InvalidParameter(format!("t_end must be >= 0, got {}", self.t_end)));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter("record_every must be >= 1".into()));
        }
        let limit = cfl_limit(model);
        if self.dt > limit {
            return Err(Error::Cfl { dt: self.dt, limit });
        }
        Ok(())
    }
}

/// `safety * h_min^2 / (2 dim max(d1, d2))`.
pub fn cfl_limit(model: &ModelSpec) -> f64 {
    let grid = model.grid();
    let d_max = model.d1().max().max(model.d2().max());
    let h = grid.min_spacing();
    CFL_SAFETY * h * h / (2.0 * grid.dim() as f64 * d_max)
}

/// Second-order Laplacian with mirror ghost nodes (zero normal derivative).
pub fn laplacian_neumann(field: &ScalarField) -> ScalarField {
    let grid = *field.grid();
    let mut out = vec![0.0; grid.len()];
    laplacian_into(field.values(), &grid, &mut out);
    ScalarField::new(grid, out).expect("same grid")
}

pub(crate) fn laplacian_into(w: &[f64], grid: &Grid, out: &mut [f64]) {
    let nx = grid.counts()[0];
    let hx2 = grid.spacing(0).powi(2);
    let ny = if grid.dim() == 2 { grid.counts()[1] } else { 1 };
    for j in 0..ny {
        let row = j * nx;
        for i in 0..nx {
            let c = w[row + i];
            let lap_x = if i == 0 {
                2.0 * (w[row + 1] - c)
            } else if i == nx - 1 {
                2.0 * (w[row + i - 1] - c)
            } else {
                w[row + i - 1] - 2.0 * c + w[row + i + 1]
            };
            out[row + i] = lap_x / hx2;
        }
    }
    if grid.dim() == 2 {
        let hy2 = grid.spacing(1).powi(2);
        for j in 0..ny {
            for i in 0..nx {
                let n = j * nx + i;
                let c = w[n];
                let lap_y = if j == 0 {
                    2.0 * (w[n + nx] - c)
                } else if j == ny - 1 {
                    2.0 * (w[n - nx] - c)
                } else {
                    w[n - nx] - 2.0 * c + w[n + nx]
                };
                out[n] += lap_y / hy2;
            }
        }
    }
}

/// Right-hand side written into `du`, `dv`; `lap` is scratch space.
pub(crate) fn rhs_into(
    model: &ModelSpec,
    u: &[f64],
    v: &[f64],
    du: &mut [f64],
    dv: &mut [f64],
    lap: &mut [f64],
) -> Result<()> {
    if let Some(node) = u.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::Singularity {
            node: Some(node),
            value: u[node],
        });
    }
    let grid = model.grid();
    let params = model.params();
    let (a, d1, d2) = (model.a().values(), model.d1().values(), model.d2().values());
    laplacian_into(u, grid, lap);
    for n in 0..u.len() {
        du[n] = d1[n] * lap[n] + f_raw(a[n], u[n], v[n], params);
    }
    laplacian_into(v, grid, lap);
    for n in 0..u.len() {
        dv[n] = d2[n] * lap[n] + g_raw(u[n], v[n], params);
    }
    Ok(())
}

/// `(du/dt, dv/dt)` at a state.
pub fn rhs(state: &State, model: &ModelSpec) -> Result<(ScalarField, ScalarField)> {
    state.u.require_grid(model.grid(), "state and model grids differ")?;
    let grid = *model.grid();
    let n = grid.len();
    let (mut du, mut dv, mut lap) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    rhs_into(model, state.u.values(), state.v.values(), &mut du, &mut dv, &mut lap)?;
    Ok((ScalarField::new(grid, du)?, ScalarField::new(grid, dv)?))
}

/// Sup-norm of the right-hand side over both species.
pub fn rhs_sup(state: &State, model: &ModelSpec) -> Result<f64> {
    let (du, dv) = rhs(state, model)?;
    Ok(sup_norm(du.values()).max(sup_norm(dv.values())))
}

pub(crate) fn sup_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Scratch buffers for repeated stepping without allocation.
pub(crate) struct Workspace {
    lap: Vec<f64>,
    ku: [Vec<f64>; 4],
    kv: [Vec<f64>; 4],
    tu: Vec<f64>,
    tv: Vec<f64>,
}

impl Workspace {
    pub(crate) fn new(n: usize) -> Self {
        let z = || vec![0.0; n];
        Workspace {
            lap: z(),
            ku: [z(), z(), z(), z()],
            kv: [z(), z(), z(), z()],
            tu: z(),
            tv: z(),
        }
    }

    /// Advances `(u, v)` in place by `dt`. Returns the sup-norm of the
    /// right-hand side at the starting point.
    pub(crate) fn advance(
        &mut self,
        model: &ModelSpec,
        scheme: Scheme,
        u: &mut [f64],
        v: &mut [f64],
        dt: f64,
    ) -> Result<f64> {
        let n = u.len();
        let Workspace { lap, ku, kv, tu, tv } = self;
        rhs_into(model, u, v, &mut ku[0], &mut kv[0], lap)?;
        let start_sup = sup_norm(&ku[0]).max(sup_norm(&kv[0]));
        match scheme {
            Scheme::Euler => {
                for i in 0..n {
                    u[i] += dt * ku[0][i];
                    v[i] += dt * kv[0][i];
                }
            }
            Scheme::Rk4 => {
                for stage in 1..4 {
                    let c = if stage == 3 { dt } else { 0.5 * dt };
                    for i in 0..n {
                        tu[i] = u[i] + c * ku[stage - 1][i];
                        tv[i] = v[i] + c * kv[stage - 1][i];
                    }
                    rhs_into(model, tu, tv, &mut ku[stage], &mut kv[stage], lap)?;
                }
                let w = dt / 6.0;
                for i in 0..n {
                    u[i] += w * (ku[0][i] + 2.0 * ku[1][i] + 2.0 * ku[2][i] + ku[3][i]);
                    v[i] += w * (kv[0][i] + 2.0 * kv[1][i] + 2.0 * kv[2][i] + kv[3][i]);
                }
            }
        }
        Ok(start_sup)
    }
}

fn positivity_error(u: &[f64], v: &[f64], t: f64, dt: f64) -> Option<Error> {
    if let Some(node) = u.iter().position(|&x| !(x > 0.0) || !x.is_finite()) {
        return Some(Error::PositivityLost {
            node,
            t,
            species: "u",
            value: u[node],
            suggested_dt: 0.5 * dt,
        });
    }
    if let Some(node) = v.iter().position(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Some(Error::PositivityLost {
            node,
            t,
            species: "v",
            value: v[node],
            suggested_dt: 0.5 * dt,
        });
    }
    None
}

/// One step that aborts instead of clamping when positivity is lost.
pub(crate) fn guarded_advance(
    ws: &mut Workspace,
    model: &ModelSpec,
    scheme: Scheme,
    u: &mut [f64],
    v: &mut [f64],
    t: f64,
    dt: f64,
) -> Result<f64> {
    let sup = ws.advance(model, scheme, u, v, dt).map_err(|e| match e {
        Error::Singularity { node, value } => Error::PositivityLost {
            node: node.unwrap_or(0),
            t,
            species: "u",
            value,
            suggested_dt: 0.5 * dt,
        },
        other => other,
    })?;
    match positivity_error(u, v, t + dt, dt) {
        Some(e) => Err(e),
        None => Ok(sup),
    }
}

/// Advances a state by one step of `cfg.dt`.
pub fn step(state: &State, model: &ModelSpec, cfg: &StepperConfig) -> Result<State> {
    cfg.validate(model)?;
    state.u.require_grid(model.grid(), "state and model grids differ")?;
    let mut next = state.clone();
    let mut ws = Workspace::new(model.grid().len());
    guarded_advance(
        &mut ws,
        model,
        cfg.scheme,
        next.u.values_mut(),
        next.v.values_mut(),
        state.t,
        cfg.dt,
    )?;
    next.t = state.t + cfg.dt;
    Ok(next)
}

/// Extra scalars evaluated at every record.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Observation {
    pub lyapunov: Option<f64>,
    pub disc_margin: Option<f64>,
}

/// Something evaluated on each recorded state, e.g. a Lyapunov functional.
pub trait Observer {
    fn observe(&self, state: &State, model: &ModelSpec) -> Result<Observation>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub rhs_sup: f64,
    pub lyapunov: Option<f64>,
    pub disc_margin: Option<f64>,
}

/// Recorded summaries (and optionally full states) of a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimulationTrace {
    pub records: Vec<TraceRecord>,
    /// Empty unless the run kept snapshots; otherwise aligned with `records`.
    pub states: Vec<State>,
}

impl SimulationTrace {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn final_state(&self) -> Option<&State> {
        self.states.last()
    }

    pub fn has_observations(&self) -> bool {
        self.records
            .iter()
            .any(|r| r.lyapunov.is_some() || r.disc_margin.is_some())
    }
}

fn record(state: &State, model: &ModelSpec, observer: Option<&dyn Observer>) -> Result<TraceRecord> {
    let obs = match observer {
        Some(o) => o.observe(state, model)?,
        None => Observation::default(),
    };
    Ok(TraceRecord {
        t: state.t,
        u_min: state.u.min(),
        u_max: state.u.max(),
        v_min: state.v.min(),
        v_max: state.v.max(),
        rhs_sup: rhs_sup(state, model)?,
        lyapunov: obs.lyapunov,
        disc_margin: obs.disc_margin,
    })
}

/// Integrates from `initial` to `initial.t + cfg.t_end`.
///
/// The last step is shortened so the run ends exactly at the final time.
pub fn simulate(
    model: &ModelSpec,
    initial: &State,
    cfg: &StepperConfig,
    observer: Option<&dyn Observer>,
) -> Result<SimulationTrace> {
    cfg.validate(model)?;
    initial.u.require_grid(model.grid(), "state and model grids differ")?;
    initial.check_positivity()?;

    let t0 = initial.t;
    let t_final = t0 + cfg.t_end;
    let n_steps = ((cfg.t_end / cfg.dt) - 1e-9).ceil().max(0.0) as usize;

    let mut trace = SimulationTrace::default();
    let mut state = initial.clone();
    trace.records.push(record(&state, model, observer)?);
    if cfg.keep_states {
        trace.states.push(state.clone());
    }

    let mut ws = Workspace::new(model.grid().len());
    for k in 1..=n_steps {
        let t_next = if k == n_steps {
            t_final
        } else {
            t0 + k as f64 * cfg.dt
        };
        let h = t_next - state.t;
        let t = state.t;
        guarded_advance(
            &mut ws,
            model,
            cfg.scheme,
            state.u.values_mut(),
            state.v.values_mut(),
            t,
            h,
        )?;
        state.t = t_next;
        if k % cfg.record_every == 0 || k == n_steps {
            trace.records.push(record(&state, model, observer)?);
            if cfg.keep_states {
                trace.states.push(state.clone());
            }
        }
    }
    Ok(trace)
}

/// First recorded time from which every later record stays in the box
/// inflated by `slack`; `None` when the final record is outside.
pub fn box_entry_time(trace: &SimulationTrace, q: &BoundQuadruple, slack: f64) -> Option<f64> {
    let inside = |r: &TraceRecord| {
        r.u_min >= q.u_lo - slack
            && r.u_max <= q.u_hi + slack
            && r.v_min >= q.v_lo - slack
            && r.v_max <= q.v_hi + slack
    };
    let mut entry = None;
    for r in trace.records.iter().rev() {
        if inside(r) {
            entry = Some(r.t);
        } else {
            break;
        }
    }
    entry
}

/// Initial data families accepted by the simulator.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Constant {
        u: f64,
        v: f64,
    },
    /// `base + amplitude * prod_k cos(modes[k] pi x_k / L_k)` for each species.
    Cosine {
        u_base: f64,
        u_amplitude: f64,
        v_base: f64,
        v_amplitude: f64,
        modes: Vec<u32>,
    },
    Tabulated {
        u: Vec<f64>,
        v: Vec<f64>,
    },
    /// Independent uniform draws in `[low, high]` per node and species.
    Random {
        low: f64,
        high: f64,
        seed: u64,
    },
}

impl InitialCondition {
    pub fn build(&self, grid: &Grid) -> Result<State> {
        let grid = *grid;
        match self {
            InitialCondition::Constant { u, v } => State::constant(grid, *u, *v),
            InitialCondition::Cosine {
                u_base,
                u_amplitude,
                v_base,
                v_amplitude,
                modes,
            } => {
                if modes.len() != grid.dim() {
                    return Err(Error::InvalidParameter(format!(
                        "cosine initial data needs {} modes",
                        grid.dim()
                    )));
                }
                let ext = grid.extents().to_vec();
                let shape = |x: [f64; 2]| -> f64 {
                    modes
                        .iter()
                        .zip(&ext)
                        .zip(x)
                        .map(|((&k, &l), xk)| (k as f64 * std::f64::consts::PI * xk / l).cos())
                        .product()
                };
                let u = ScalarField::from_fn(grid, |x| u_base + u_amplitude * shape(x));
                let v = ScalarField::from_fn(grid, |x| v_base + v_amplitude * shape(x));
                State::new(u, v, 0.0)
            }
            InitialCondition::Tabulated { u, v } => State::new(
                ScalarField::new(grid, u.clone())?,
                ScalarField::new(grid, v.clone())?,
                0.0,
            ),
            InitialCondition::Random { low, high, seed } => {
                if !(*low > 0.0 && high >= low) {
                    return Err(Error::InvalidParameter(format!(
                        "random initial range must satisfy 0 < low <= high, got [{low}, {high}]"
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let n = grid.len();
                let mut draw = |_| if high > low { rng.gen_range(*low..=*high) } else { *low };
                let u: Vec<f64> = (0..n).map(&mut draw).collect();
                let v: Vec<f64> = (0..n).map(&mut draw).collect();
                State::new(ScalarField::new(grid, u)?, ScalarField::new(grid, v)?, 0.0)
            }
        }
    }
}
