//! Steady states of the discretized system
//!
//! ```text
//! d1(x) Lap u + f(a(x), u, v) = 0,   d2(x) Lap v + g(u, v) = 0
//! ```
//!
//! with the same Neumann stencil as the time stepper, so a converged steady
//! state is an exact fixed point of the semi-discrete flow up to `tol`.

use crate::banded::BandMatrix;
use crate::bounds::BoundQuadruple;
use crate::error::{Error, Result};
use crate::model::{ModelSpec, ScalarField, State};
use crate::pde::{cfl_limit, guarded_advance, rhs_into, sup_norm, Scheme, Workspace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SteadyMethod {
    Relaxation,
    Newton,
}

impl SteadyMethod {
    pub fn name(&self) -> &'static str {
        match self {
            SteadyMethod::Relaxation => "relaxation",
            SteadyMethod::Newton => "newton",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyResult {
    pub u_star: ScalarField,
    pub v_star: ScalarField,
    pub residual_sup: f64,
    pub method: SteadyMethod,
    /// Time steps (relaxation) or Newton solves.
    pub iterations: usize,
    /// Sup-norm of each accepted Newton update; empty for relaxation.
    pub update_norms: Vec<f64>,
}

impl SteadyResult {
    pub fn as_state(&self) -> State {
        State {
            u: self.u_star.clone(),
            v: self.v_star.clone(),
            t: 0.0,
        }
    }
}

/// Sup-norm over nodes and both equations of the discrete steady residual.
pub fn residual_esp3(u: &ScalarField, v: &ScalarField, model: &ModelSpec) -> Result<f64> {
    u.require_grid(model.grid(), "u and model grids differ")?;
    v.require_grid(model.grid(), "v and model grids differ")?;
    let n = model.grid().len();
    let (mut du, mut dv, mut lap) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    rhs_into(model, u.values(), v.values(), &mut du, &mut dv, &mut lap)?;
    Ok(sup_norm(&du).max(sup_norm(&dv)))
}

/// Constant state at the midpoint of the bound quadruple.
pub fn default_initial_guess(model: &ModelSpec, q: &BoundQuadruple) -> State {
    let grid = *model.grid();
    State {
        u: ScalarField::constant(grid, q.u_mid()),
        v: ScalarField::constant(grid, q.v_mid()),
        t: 0.0,
    }
}

/// Long-time limit of the RK4 flow at the CFL step, stopped once the
/// residual drops below `tol`.
pub fn steady_by_relaxation(model: &ModelSpec, initial: &State, tol: f64, t_max: f64) -> Result<SteadyResult> {
    if !(tol > 0.0) {
        return Err(Error::Precondition(format!("tol must be > 0, got {tol}")));
    }
    initial.u.require_grid(model.grid(), "state and model grids differ")?;
    initial.check_positivity()?;
    let dt = cfl_limit(model);
    let mut u = initial.u.values().to_vec();
    let mut v = initial.v.values().to_vec();
    let mut ws = Workspace::new(u.len());
    let mut t = 0.0;
    let mut steps = 0usize;
    loop {
        // the first RK4 stage is the residual at the current iterate
        let before_u = u.clone();
        let before_v = v.clone();
        let residual = guarded_advance(&mut ws, model, Scheme::Rk4, &mut u, &mut v, t, dt)?;
        if residual < tol {
            let grid = *model.grid();
            return Ok(SteadyResult {
                u_star: ScalarField::new(grid, before_u)?,
                v_star: ScalarField::new(grid, before_v)?,
                residual_sup: residual,
                method: SteadyMethod::Relaxation,
                iterations: steps,
                update_norms: Vec::new(),
            });
        }
        if t >= t_max {
            return Err(Error::RelaxationNotConverged { t, residual });
        }
        t += dt;
        steps += 1;
    }
}

/// Residual vector in interleaved order `(u_0, v_0, u_1, v_1, ...)`.
fn stacked_residual(model: &ModelSpec, u: &[f64], v: &[f64], out: &mut [f64]) -> Result<f64> {
    let n = u.len();
    let (mut du, mut dv, mut lap) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    rhs_into(model, u, v, &mut du, &mut dv, &mut lap)?;
    for i in 0..n {
        out[2 * i] = du[i];
        out[2 * i + 1] = dv[i];
    }
    Ok(sup_norm(out))
}

fn jacobian(model: &ModelSpec, u: &[f64], v: &[f64]) -> BandMatrix {
    let n = u.len();
    let grid = model.grid();
    let inv_h2 = 1.0 / grid.spacing(0).powi(2);
    let p = model.params();
    let (b, r, mu) = (p.b(), p.r(), p.mu());
    let (a, d1, d2) = (model.a().values(), model.d1().values(), model.d2().values());
    let mut jac = BandMatrix::zeros(2 * n, 2, 2);
    for i in 0..n {
        let (iu, iv) = (2 * i, 2 * i + 1);
        // Laplacian row with mirrored ends
        let stencil: [(usize, f64); 3] = if i == 0 {
            [(0, -2.0), (1, 2.0), (usize::MAX, 0.0)]
        } else if i == n - 1 {
            [(n - 2, 2.0), (n - 1, -2.0), (usize::MAX, 0.0)]
        } else {
            [(i - 1, 1.0), (i, -2.0), (i + 1, 1.0)]
        };
        for &(j, w) in &stencil {
            if j == usize::MAX {
                continue;
            }
            jac.add(iu, 2 * j, d1[i] * w * inv_h2);
            jac.add(iv, 2 * j + 1, d2[i] * w * inv_h2);
        }
        let (ui, vi) = (u[i], v[i]);
        let s = 1.0 + r * ui;
        jac.add(iu, iu, a[i] - 2.0 * ui - b * vi / (s * s));
        jac.add(iu, iv, -b * ui / s);
        jac.add(iv, iu, mu * vi * vi / (ui * ui));
        jac.add(iv, iv, mu * (1.0 - 2.0 * vi / ui));
    }
    jac
}

const MAX_HALVINGS: usize = 30;

/// Damped Newton on the stacked 1D system with an analytic banded Jacobian.
///
/// Each step is halved (up to 30 times) until the iterate stays positive and
/// the residual decreases; failure to find such a step is reported as
/// [`Error::NewtonFailed`], meaning relaxation should be used instead.
pub fn steady_newton_1d(model: &ModelSpec, initial: &State, tol: f64, max_iter: usize) -> Result<SteadyResult> {
    if model.grid().dim() != 1 {
        return Err(Error::Precondition("Newton steady solver is 1D only".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Precondition(format!("tol must be > 0, got {tol}")));
    }
    initial.u.require_grid(model.grid(), "state and model grids differ")?;
    let n = model.grid().len();
    let mut u = initial.u.values().to_vec();
    let mut v = initial.v.values().to_vec();
    if u.iter().chain(&v).any(|&x| !(x > 0.0)) {
        return Err(Error::Precondition("Newton needs a strictly positive initial guess".into()));
    }
    let mut res = vec![0.0; 2 * n];
    let mut trial_res = vec![0.0; 2 * n];
    let mut norm = stacked_residual(model, &u, &v, &mut res)?;
    let mut update_norms = Vec::new();
    for iteration in 0..=max_iter {
        if norm < tol {
            let grid = *model.grid();
            return Ok(SteadyResult {
                u_star: ScalarField::new(grid, u)?,
                v_star: ScalarField::new(grid, v)?,
                residual_sup: norm,
                method: SteadyMethod::Newton,
                iterations: iteration,
                update_norms,
            });
        }
        if iteration == max_iter {
            break;
        }
        let mut delta: Vec<f64> = res.iter().map(|x| -x).collect();
        jacobian(model, &u, &v).solve(&mut delta)?;
        let full = sup_norm(&delta);
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let tu: Vec<f64> = (0..n).map(|i| u[i] + lambda * delta[2 * i]).collect();
            let tv: Vec<f64> = (0..n).map(|i| v[i] + lambda * delta[2 * i + 1]).collect();
            if tu.iter().chain(&tv).all(|&x| x > 0.0) {
                let trial = stacked_residual(model, &tu, &tv, &mut trial_res)?;
                if trial < norm {
                    u = tu;
                    v = tv;
                    std::mem::swap(&mut res, &mut trial_res);
                    norm = trial;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonFailed(format!(
                "no positive step with residual decrease after {MAX_HALVINGS} halvings (residual {norm:e})"
            )));
        }
        update_norms.push(lambda * full);
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        residual: norm,
    })
}

/// Containment verdict with the largest excursion outside the box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Containment {
    pub holds: bool,
    pub worst_violation: f64,
}

/// Whether `u_lo - slack <= u_star <= u_hi + slack` and likewise for `v_star`.
pub fn check_containment(result: &SteadyResult, q: &BoundQuadruple, slack: f64) -> Containment {
    fields_in_box(&result.u_star, &result.v_star, q, slack)
}

pub fn fields_in_box(u: &ScalarField, v: &ScalarField, q: &BoundQuadruple, slack: f64) -> Containment {
    let excess = |x: f64, lo: f64, hi: f64| (lo - x).max(x - hi).max(0.0);
    let worst_u = u
        .values()
        .iter()
        .fold(0.0f64, |m, &x| m.max(excess(x, q.u_lo, q.u_hi)));
    let worst_v = v
        .values()
        .iter()
        .fold(0.0f64, |m, &x| m.max(excess(x, q.v_lo, q.v_hi)));
    let worst = worst_u.max(worst_v);
    Containment {
        holds: worst <= slack,
        worst_violation: worst,
    }
}
