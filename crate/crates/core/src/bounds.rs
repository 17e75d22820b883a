//! The attracting bound quadruple `(u_lo, u_hi, v_lo, v_hi)` and the
//! parameter conditions that gate the stability results.
//!
//! The quadruple is the unique positive solution of
//!
//! ```text
//! f(a_max, u_hi, v_lo) = 0,   f(a_min, u_lo, v_hi) = 0,
//! g(u_hi, v_hi) = 0,          g(u_lo, v_lo) = 0,
//! ```
//!
//! which forces `v_hi = u_hi`, `v_lo = u_lo` and reduces to a scalar root of
//! the quartic `h` on `[0, a_min]`. It is computed three ways here: closed form
//! (`r = 0`), bisection on `h`, and the monotone upper/lower iteration.

use crate::error::{Error, Result};
use crate::model::{f_raw, g_raw, KineticParams};

/// Bounds `u_lo <= u_hi`, `v_lo <= v_hi` of the attracting rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundQuadruple {
    pub u_lo: f64,
    pub u_hi: f64,
    pub v_lo: f64,
    pub v_hi: f64,
}

impl BoundQuadruple {
    /// Residuals of the four algebraic equations, in the order
    /// `f(a_max, u_hi, v_lo)`, `f(a_min, u_lo, v_hi)`, `g(u_hi, v_hi)`, `g(u_lo, v_lo)`.
    pub fn residuals(&self, a_min: f64, a_max: f64, params: &KineticParams) -> [f64; 4] {
        [
            f_raw(a_max, self.u_hi, self.v_lo, params),
            f_raw(a_min, self.u_lo, self.v_hi, params),
            g_raw(self.u_hi, self.v_hi, params),
            g_raw(self.u_lo, self.v_lo, params),
        ]
    }

    pub fn max_residual(&self, a_min: f64, a_max: f64, params: &KineticParams) -> f64 {
        self.residuals(a_min, a_max, params)
            .iter()
            .fold(0.0, |m, r| m.max(r.abs()))
    }

    /// `u_hi / u_lo`, the heterogeneity ratio that enters the stability test.
    pub fn ratio(&self) -> f64 {
        self.u_hi / self.u_lo
    }

    /// `(u_lo + u_hi) / 2`, the default constant initial guess for steady solves.
    pub fn u_mid(&self) -> f64 {
        0.5 * (self.u_lo + self.u_hi)
    }

    pub fn v_mid(&self) -> f64 {
        0.5 * (self.v_lo + self.v_hi)
    }

    /// Largest componentwise difference to another quadruple.
    pub fn distance(&self, other: &BoundQuadruple) -> f64 {
        [
            self.u_lo - other.u_lo,
            self.u_hi - other.u_hi,
            self.v_lo - other.v_lo,
            self.v_hi - other.v_hi,
        ]
        .iter()
        .fold(0.0, |m, d| m.max(d.abs()))
    }

    fn is_ordered(&self) -> bool {
        0.0 < self.u_lo && self.u_lo <= self.u_hi && 0.0 < self.v_lo && self.v_lo <= self.v_hi
    }
}

/// Verdict plus the signed margin `a_min/a_max - b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BCondition {
    pub holds: bool,
    pub margin: f64,
}

/// Strict inequality `0 < b < a_min / a_max`.
pub fn check_b_condition(a_min: f64, a_max: f64, b: f64) -> BCondition {
    let ratio = a_min / a_max;
    BCondition {
        holds: b > 0.0 && b < ratio,
        margin: ratio - b,
    }
}

fn require_b_condition(a_min: f64, a_max: f64, b: f64) -> Result<()> {
    if !(a_min > 0.0 && a_min <= a_max) {
        return Err(Error::Precondition(format!(
            "need 0 < a_min <= a_max, got a_min = {a_min}, a_max = {a_max}"
        )));
    }
    if !check_b_condition(a_min, a_max, b).holds {
        return Err(Error::BConditionViolated {
            b,
            ratio: a_min / a_max,
        });
    }
    Ok(())
}

/// Positive constant steady state for constant `a`, `d1`, `d2`.
pub fn homogeneous_steady(a: f64, b: f64, r: f64) -> f64 {
    if r == 0.0 {
        return a / (1.0 + b);
    }
    // root of r u^2 + (b + 1 - a r) u - a = 0; pick the cancellation-free branch
    let beta = b + 1.0 - a * r;
    let disc = (beta * beta + 4.0 * a * r).sqrt();
    if beta > 0.0 {
        2.0 * a / (beta + disc)
    } else {
        (disc - beta) / (2.0 * r)
    }
}

/// Closed-form quadruple of the unsaturated (`r = 0`) case.
pub fn quadruple_closed_r0(a_min: f64, a_max: f64, b: f64) -> Result<BoundQuadruple> {
    require_b_condition(a_min, a_max, b)?;
    let denom = 1.0 - b * b;
    let u_lo = (a_min - b * a_max) / denom;
    let u_hi = (a_max - b * a_min) / denom;
    Ok(BoundQuadruple {
        u_lo,
        u_hi,
        v_lo: u_lo,
        v_hi: u_hi,
    })
}

/// The quartic whose root in `(0, a_min)` is `u_lo`.
///
/// `h(tau) = [b a_max - P][b + r P] - b^3 tau` with `P = (a_min - tau)(1 + r tau)`;
/// expanding gives the polynomial form checked in the tests.
pub fn h_eval(tau: f64, a_min: f64, a_max: f64, b: f64, r: f64) -> f64 {
    let p = (a_min - tau) * (1.0 + r * tau);
    (b * a_max - p) * (b + r * p) - b * b * b * tau
}

/// `u_hi` from `u_lo` through `(a_min - u_lo)(1 + r u_lo) = b u_hi`.
fn upper_from_lower(u_lo: f64, a_min: f64, b: f64, r: f64) -> f64 {
    (a_min - u_lo) * (1.0 + r * u_lo) / b
}

const BISECTION_MAX_ITER: usize = 200;

/// Bisection on `h` over `[0, a_min]`; valid for any `r >= 0`.
///
/// The bracket is driven down to adjacent floating point numbers (or 200
/// halvings); `tol` is the bracket width that must be reached and the scale
/// for the residual check of the resulting quadruple.
pub fn bisect_quadruple(a_min: f64, a_max: f64, b: f64, r: f64, tol: f64) -> Result<BoundQuadruple> {
    require_b_condition(a_min, a_max, b)?;
    if !(tol > 0.0) {
        return Err(Error::Precondition(format!("tol must be > 0, got {tol}")));
    }
    let params = KineticParams::new(b, r, 1.0)?;
    let h = |tau: f64| h_eval(tau, a_min, a_max, b, r);
    let (mut lo, mut hi) = (0.0, a_min);
    let (h0, h1) = (h(lo), h(hi));
    if !(h0 < 0.0 && h1 > 0.0) {
        return Err(Error::NoSignChange { h0, h1 });
    }
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let hm = h(mid);
        if hm == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if hm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if hi - lo > tol {
        return Err(Error::NotConverged {
            iterations: BISECTION_MAX_ITER,
            residual: hi - lo,
        });
    }
    // take whichever end has the smaller |h|
    let u_lo = if h(lo).abs() <= h(hi).abs() { lo } else { hi };
    let u_hi = upper_from_lower(u_lo, a_min, b, r);
    let q = BoundQuadruple {
        u_lo,
        u_hi,
        v_lo: u_lo,
        v_hi: u_hi,
    };
    let residual = q.max_residual(a_min, a_max, &params);
    if residual >= 10.0 * tol {
        return Err(Error::NotConverged {
            iterations: BISECTION_MAX_ITER,
            residual,
        });
    }
    Ok(q)
}

/// The bound quadruple: bisection for `r > 0`, closed form for `r = 0`.
pub fn solve_quadruple(a_min: f64, a_max: f64, b: f64, r: f64, tol: f64) -> Result<BoundQuadruple> {
    if r == 0.0 {
        require_b_condition(a_min, a_max, b)?;
        return quadruple_closed_r0(a_min, a_max, b);
    }
    if r < 0.0 {
        return Err(Error::InvalidParameter(format!("r must be >= 0, got {r}")));
    }
    bisect_quadruple(a_min, a_max, b, r, tol)
}

/// Lipschitz constant of `(f, g)` on the box `u_box x v_box`, for resource
/// levels in `[a_min, a_max]`.
///
/// Each partial derivative is bounded by interval arithmetic over the box:
/// `|f_v| <= b u_max`, `|g_u| <= mu v_max^2 / u_min^2`,
/// `|g_v| <= mu max(1, |1 - 2 v_max / u_min|)`, and `f_u = y - 2u - b v/(1+ru)^2`
/// is enclosed in `[a_min - 2 u_max - b v_max / (1 + r u_min)^2, a_max - 2 u_min]`.
pub fn lipschitz_k(
    u_box: (f64, f64),
    v_box: (f64, f64),
    a_min: f64,
    a_max: f64,
    params: &KineticParams,
) -> Result<f64> {
    let (u_min, u_max) = u_box;
    let (v_min, v_max) = v_box;
    if !(u_min > 0.0) {
        return Err(Error::Precondition(format!(
            "lower prey bound must be > 0, got {u_min}"
        )));
    }
    if u_min > u_max || v_min > v_max || v_min < 0.0 {
        return Err(Error::Precondition("box bounds out of order".into()));
    }
    let (b, r, mu) = (params.b(), params.r(), params.mu());
    let fu_low = a_min - 2.0 * u_max - b * v_max / (1.0 + r * u_min).powi(2);
    let fu_high = a_max - 2.0 * u_min;
    let fu = fu_low.abs().max(fu_high.abs());
    let fv = b * u_max;
    let gu = mu * v_max * v_max / (u_min * u_min);
    let gv = mu * 1f64.max((1.0 - 2.0 * v_max / u_min).abs());
    Ok(fu.max(fv).max(gu).max(gv))
}

/// Recorded iterates of the monotone scheme together with the constant `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateTrace {
    /// `(iteration index, iterate)`; index 1 is the seed. All of the first
    /// iterates are kept, later ones are thinned (every iterate is still
    /// checked for ordering as it is produced).
    pub iterates: Vec<(usize, BoundQuadruple)>,
    pub k: f64,
    pub iterations: usize,
}

const TRACE_DENSE: usize = 1024;
const TRACE_STRIDE: usize = 1024;

/// Seeds and stopping controls for [`monotone_iteration`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotoneOptions {
    pub eps1: f64,
    pub eps2: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl MonotoneOptions {
    /// Admissible default seeds (see [`default_eps`]), `tol = 1e-10`.
    pub fn for_problem(a_min: f64, a_max: f64, b: f64) -> Result<Self> {
        let eps = default_eps(a_min, a_max, b)?;
        Ok(MonotoneOptions {
            eps1: eps,
            eps2: eps,
            tol: 1e-10,
            max_iter: 100_000_000,
        })
    }
}

/// Whether `eps1` keeps the lower seed a strict lower solution:
/// `a_min - eps1 - b (a_max + eps1) > 0`.
pub fn eps1_admissible(a_min: f64, a_max: f64, b: f64, eps1: f64) -> bool {
    eps1 > 0.0 && a_min - eps1 - b * (a_max + eps1) > 0.0
}

/// Largest value in `{1e-2, 1e-3, ...}` that is admissible for `eps1`.
pub fn default_eps(a_min: f64, a_max: f64, b: f64) -> Result<f64> {
    require_b_condition(a_min, a_max, b)?;
    let mut eps = 1e-2;
    while eps > 1e-300 {
        if eps1_admissible(a_min, a_max, b, eps) {
            return Ok(eps);
        }
        eps *= 0.1;
    }
    Err(Error::Precondition("no admissible seed offset".into()))
}

/// Upper/lower constant iteration from the seeds
/// `u_hi = v_hi = a_max + eps1`, `u_lo = v_lo = eps2`:
///
/// ```text
/// u_hi <- u_hi + f(a_max, u_hi, v_lo) / K     u_lo <- u_lo + f(a_min, u_lo, v_hi) / K
/// v_hi <- v_hi + g(u_hi, v_hi) / K            v_lo <- v_lo + g(u_lo, v_lo) / K
/// ```
///
/// Stops once the largest change is below `tol` and every residual is below
/// `10 tol`. The ordering chain is checked at every step.
pub fn monotone_iteration(
    a_min: f64,
    a_max: f64,
    params: &KineticParams,
    opts: &MonotoneOptions,
) -> Result<(BoundQuadruple, IterateTrace)> {
    require_b_condition(a_min, a_max, params.b())?;
    let MonotoneOptions {
        eps1,
        eps2,
        tol,
        max_iter,
    } = *opts;
    if !eps1_admissible(a_min, a_max, params.b(), eps1) {
        return Err(Error::Precondition(format!(
            "eps1 = {eps1} does not satisfy a_min - eps1 - b (a_max + eps1) > 0"
        )));
    }
    if !(eps2 > 0.0 && eps2 <= eps1) {
        return Err(Error::Precondition(format!("need 0 < eps2 <= eps1, got eps2 = {eps2}")));
    }
    if !(tol > 0.0) {
        return Err(Error::Precondition(format!("tol must be > 0, got {tol}")));
    }
    let top = a_max + eps1;
    let k = lipschitz_k((eps2, top), (eps2, top), a_min, a_max, params)?;
    let inv_k = 1.0 / k;

    let mut q = BoundQuadruple {
        u_lo: eps2,
        u_hi: top,
        v_lo: eps2,
        v_hi: top,
    };
    let mut trace = IterateTrace {
        iterates: vec![(1, q)],
        k,
        iterations: 1,
    };
    let mut residual = f64::INFINITY;
    for i in 2..=max_iter.max(1) {
        let next = BoundQuadruple {
            u_hi: q.u_hi + inv_k * f_raw(a_max, q.u_hi, q.v_lo, params),
            u_lo: q.u_lo + inv_k * f_raw(a_min, q.u_lo, q.v_hi, params),
            v_hi: q.v_hi + inv_k * g_raw(q.u_hi, q.v_hi, params),
            v_lo: q.v_lo + inv_k * g_raw(q.u_lo, q.v_lo, params),
        };
        if let Some(detail) = ordering_violation(&q, &next) {
            trace.iterates.push((i, next));
            return Err(Error::MonotonicityViolated { iteration: i, detail });
        }
        let change = q.distance(&next);
        q = next;
        trace.iterations = i;
        if i <= TRACE_DENSE || i % TRACE_STRIDE == 0 {
            trace.iterates.push((i, q));
        }
        if change < tol {
            residual = q.max_residual(a_min, a_max, params);
            if residual < 10.0 * tol {
                if trace.iterates.last().map(|(n, _)| *n) != Some(i) {
                    trace.iterates.push((i, q));
                }
                return Ok((q, trace));
            }
        }
    }
    if residual.is_infinite() {
        residual = q.max_residual(a_min, a_max, params);
    }
    trace.iterates.push((trace.iterations, q));
    Err(Error::IterationNotConverged {
        residual,
        trace: Box::new(trace),
    })
}

fn ordering_violation(prev: &BoundQuadruple, next: &BoundQuadruple) -> Option<String> {
    if !(next.u_lo >= prev.u_lo) {
        return Some(format!("u_lo decreased: {} -> {}", prev.u_lo, next.u_lo));
    }
    if !(next.u_hi <= prev.u_hi) {
        return Some(format!("u_hi increased: {} -> {}", prev.u_hi, next.u_hi));
    }
    if !(next.v_lo >= prev.v_lo) {
        return Some(format!("v_lo decreased: {} -> {}", prev.v_lo, next.v_lo));
    }
    if !(next.v_hi <= prev.v_hi) {
        return Some(format!("v_hi increased: {} -> {}", prev.v_hi, next.v_hi));
    }
    if !next.is_ordered() {
        return Some(format!("lower bound crossed upper bound: {next:?}"));
    }
    None
}

/// Outcome of a threshold test on `b`: holds iff `b < rhs`, `margin = rhs - b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdCheck {
    pub holds: bool,
    pub rhs: f64,
    pub margin: f64,
}

/// Diffusion heterogeneity factor `sqrt(d1_min d2_min / (d1_max d2_max))`.
pub fn diffusion_ratio(d1_min: f64, d1_max: f64, d2_min: f64, d2_max: f64) -> f64 {
    ((d1_min * d2_min) / (d1_max * d2_max)).sqrt()
}

/// Global stability condition
/// `b < (1 + 2 r u_lo - r a_min) sqrt(d-ratio) (u_lo / u_hi)^(5/2)`.
pub fn check_global_stability(
    q: &BoundQuadruple,
    d1_min: f64,
    d1_max: f64,
    d2_min: f64,
    d2_max: f64,
    a_min: f64,
    params: &KineticParams,
) -> ThresholdCheck {
    let r = params.r();
    let rhs = (1.0 + 2.0 * r * q.u_lo - r * a_min)
        * diffusion_ratio(d1_min, d1_max, d2_min, d2_max)
        * (q.u_lo / q.u_hi).powf(2.5);
    ThresholdCheck {
        holds: params.b() < rhs,
        rhs,
        margin: rhs - params.b(),
    }
}

/// Small-amplitude sufficient condition
/// `b < (1 + r a_min) sqrt(d-ratio) M^(-5/2)`, meant to be used together with
/// a verified `u_hi / u_lo < M`.
#[allow(clippy::too_many_arguments)]
pub fn check_remark_condition(
    m: f64,
    a_min: f64,
    d1_min: f64,
    d1_max: f64,
    d2_min: f64,
    d2_max: f64,
    b: f64,
    r: f64,
) -> Result<ThresholdCheck> {
    if !(m >= 1.0) {
        return Err(Error::Precondition(format!("ratio bound M must be >= 1, got {m}")));
    }
    let rhs = (1.0 + r * a_min) * diffusion_ratio(d1_min, d1_max, d2_min, d2_max) * m.powf(-2.5);
    Ok(ThresholdCheck {
        holds: b < rhs,
        rhs,
        margin: rhs - b,
    })
}
