//! Problem definition: kinetics, grids, coefficient fields and states.
//!
//! The reaction terms are
//!
//! ```text
//! f(y, u, v) = u (y - u - b v / (1 + r u))
//! g(u, v)    = mu v (1 - v / u)
//! ```
//!
//! where `y` stands for the local resource level `a(x)`. Everything else in
//! the crate consumes the types defined here.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Kinetic constants `b` (predation), `r` (saturation) and `mu` (predator rate).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KineticParams {
    b: f64,
    r: f64,
    mu: f64,
}

impl KineticParams {
    pub fn new(b: f64, r: f64, mu: f64) -> Result<Self> {
        if !(b.is_finite() && r.is_finite() && mu.is_finite()) {
            return Err(Error::NonFinite("kinetic parameters"));
        }
        if b <= 0.0 {
            return Err(Error::InvalidParameter(format!("b must be > 0, got {b}")));
        }
        if r < 0.0 {
            return Err(Error::InvalidParameter(format!("r must be >= 0, got {r}")));
        }
        if mu <= 0.0 {
            return Err(Error::InvalidParameter(format!("mu must be > 0, got {mu}")));
        }
        Ok(KineticParams { b, r, mu })
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
}

#[inline]
pub(crate) fn f_raw(y: f64, u: f64, v: f64, p: &KineticParams) -> f64 {
    u * (y - u - p.b * v / (1.0 + p.r * u))
}

#[inline]
pub(crate) fn g_raw(u: f64, v: f64, p: &KineticParams) -> f64 {
    p.mu * v * (1.0 - v / u)
}

/// Prey reaction rate `f(y, u, v)`.
pub fn eval_f(y: f64, u: f64, v: f64, params: &KineticParams) -> Result<f64> {
    if !(y.is_finite() && u.is_finite() && v.is_finite()) {
        return Err(Error::NonFinite("eval_f arguments"));
    }
    if u < 0.0 {
        return Err(Error::Precondition(format!("prey density must be >= 0, got {u}")));
    }
    Ok(f_raw(y, u, v, params))
}

/// Predator reaction rate `g(u, v)`; singular when the prey vanishes.
pub fn eval_g(u: f64, v: f64, params: &KineticParams) -> Result<f64> {
    if !(u.is_finite() && v.is_finite()) {
        return Err(Error::NonFinite("eval_g arguments"));
    }
    if u <= 0.0 {
        return Err(Error::Singularity { node: None, value: u });
    }
    Ok(g_raw(u, v, params))
}

/// Uniform tensor grid on an interval `[0, L]` or a rectangle `[0, Lx] x [0, Ly]`.
///
/// Nodes include the boundary. In 2D the flat node index is `j * nx + i`,
/// with `i` running along the first axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    extents: [f64; 2],
    counts: [usize; 2],
}

impl Grid {
    pub fn new(extents: &[f64], counts: &[usize]) -> Result<Self> {
        let dim = extents.len();
        if dim == 0 || dim > 2 {
            return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if counts.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "{} extents but {} node counts",
                dim,
                counts.len()
            )));
        }
        let mut e = [1.0; 2];
        let mut c = [1usize; 2];
        for k in 0..dim {
            if !(extents[k].is_finite() && extents[k] > 0.0) {
                return Err(Error::InvalidGrid(format!("extent {} must be > 0", extents[k])));
            }
            if counts[k] < 3 {
                return Err(Error::InvalidGrid(format!(
                    "need at least 3 nodes per axis, got {}",
                    counts[k]
                )));
            }
            e[k] = extents[k];
            c[k] = counts[k];
        }
        Ok(Grid {
            dim,
            extents: e,
            counts: c,
        })
    }

    pub fn line(length: f64, nodes: usize) -> Result<Self> {
        Grid::new(&[length], &[nodes])
    }

    pub fn rectangle(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        Grid::new(&[lx, ly], &[nx, ny])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents[..self.dim]
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts[..self.dim]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extents[axis] / (self.counts[axis] - 1) as f64
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dim)
            .map(|k| self.spacing(k))
            .fold(f64::INFINITY, f64::min)
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.counts[0] * self.counts[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Per-axis indices of a flat node index.
    pub fn unflatten(&self, node: usize) -> [usize; 2] {
        [node % self.counts[0], node / self.counts[0]]
    }

    /// Physical coordinates of a node (second entry is 0 in 1D).
    pub fn coords(&self, node: usize) -> [f64; 2] {
        let [i, j] = self.unflatten(node);
        let y = if self.dim == 2 {
            j as f64 * self.spacing(1)
        } else {
            0.0
        };
        [i as f64 * self.spacing(0), y]
    }

    /// Composite trapezoid weights, tensorised in 2D. They sum to the domain measure.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let axis_weights = |k: usize| -> Vec<f64> {
            let n = self.counts[k];
            let h = self.spacing(k);
            (0..n)
                .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
                .collect()
        };
        let wx = axis_weights(0);
        if self.dim == 1 {
            return wx;
        }
        let wy = axis_weights(1);
        let mut w = Vec::with_capacity(self.len());
        for wyj in &wy {
            for wxi in &wx {
                w.push(wxi * wyj);
            }
        }
        w
    }
}

/// One real value per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        ScalarField {
            grid,
            values: vec![value; grid.len()],
        }
    }

    /// Evaluates `func` at every node's coordinates.
    pub fn from_fn(grid: Grid, mut func: impl FnMut([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|n| func(grid.coords(n))).collect();
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Sup-norm distance to another field on the same grid.
    pub fn sup_distance(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn require_positive(&self, what: &'static str) -> Result<()> {
        for (node, &value) in self.values.iter().enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::NonPositive { what, node, value });
            }
        }
        Ok(())
    }

    pub(crate) fn require_grid(&self, grid: &Grid, what: &str) -> Result<()> {
        if &self.grid != grid {
            return Err(Error::GridMismatch(what.to_string()));
        }
        Ok(())
    }
}

/// `(min, max)` over the nodes of a field; for the resource this is `(a_min, a_max)`.
pub fn coeff_extremes(field: &ScalarField) -> (f64, f64) {
    (field.min(), field.max())
}

/// Declarative description of a heterogeneous coefficient.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientSpec {
    Constant(f64),
    /// `base + amplitude * prod_k cos(modes[k] * pi * x_k / L_k)`; zero normal
    /// derivative on the boundary for every integer mode.
    Cosine {
        base: f64,
        amplitude: f64,
        modes: Vec<u32>,
    },
    /// One value per node, in flat node order.
    Tabulated(Vec<f64>),
}

/// Realizes a coefficient spec on a grid and checks strict positivity.
pub fn build_coefficient(spec: &CoefficientSpec, grid: &Grid) -> Result<ScalarField> {
    let field = match spec {
        CoefficientSpec::Constant(c) => ScalarField::constant(*grid, *c),
        CoefficientSpec::Cosine {
            base,
            amplitude,
            modes,
        } => {
            if modes.len() != grid.dim() {
                return Err(Error::InvalidParameter(format!(
                    "cosine coefficient needs {} modes, got {}",
                    grid.dim(),
                    modes.len()
                )));
            }
            let extents = grid.extents().to_vec();
            let field = ScalarField::from_fn(*grid, |x| {
                let shape: f64 = modes
                    .iter()
                    .zip(&extents)
                    .zip(x)
                    .map(|((&k, &len), xk)| (k as f64 * PI * xk / len).cos())
                    .product();
                base + amplitude * shape
            });
            field.require_positive("coefficient")?;
            if base - amplitude.abs() <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "cosine coefficient needs base - |amplitude| > 0, got {}",
                    base - amplitude.abs()
                )));
            }
            field
        }
        CoefficientSpec::Tabulated(values) => ScalarField::new(*grid, values.clone())?,
    };
    field.require_positive("coefficient")?;
    Ok(field)
}

/// Kinetics plus the three coefficient fields on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    params: KineticParams,
    a: ScalarField,
    d1: ScalarField,
    d2: ScalarField,
}

impl ModelSpec {
    pub fn new(params: KineticParams, a: ScalarField, d1: ScalarField, d2: ScalarField) -> Result<Self> {
        let grid = *a.grid();
        d1.require_grid(&grid, "d1 and a must share a grid")?;
        d2.require_grid(&grid, "d2 and a must share a grid")?;
        a.require_positive("a(x)")?;
        d1.require_positive("d1(x)")?;
        d2.require_positive("d2(x)")?;
        Ok(ModelSpec { params, a, d1, d2 })
    }

    pub fn from_specs(
        params: KineticParams,
        grid: Grid,
        a: &CoefficientSpec,
        d1: &CoefficientSpec,
        d2: &CoefficientSpec,
    ) -> Result<Self> {
        ModelSpec::new(
            params,
            build_coefficient(a, &grid)?,
            build_coefficient(d1, &grid)?,
            build_coefficient(d2, &grid)?,
        )
    }

    /// Constant `a`, `d1 = d2 = d` on the given grid.
    pub fn homogeneous(params: KineticParams, grid: Grid, a: f64, d: f64) -> Result<Self> {
        ModelSpec::from_specs(
            params,
            grid,
            &CoefficientSpec::Constant(a),
            &CoefficientSpec::Constant(d),
            &CoefficientSpec::Constant(d),
        )
    }

    pub fn with_params(&self, params: KineticParams) -> Self {
        ModelSpec {
            params,
            ..self.clone()
        }
    }

    pub fn params(&self) -> &KineticParams {
        &self.params
    }

    pub fn grid(&self) -> &Grid {
        self.a.grid()
    }

    pub fn a(&self) -> &ScalarField {
        &self.a
    }

    pub fn d1(&self) -> &ScalarField {
        &self.d1
    }

    pub fn d2(&self) -> &ScalarField {
        &self.d2
    }

    /// `(a_min, a_max)`.
    pub fn a_extremes(&self) -> (f64, f64) {
        coeff_extremes(&self.a)
    }

    /// `(d1_min, d1_max, d2_min, d2_max)`.
    pub fn diffusion_extremes(&self) -> (f64, f64, f64, f64) {
        let (d1_min, d1_max) = coeff_extremes(&self.d1);
        let (d2_min, d2_max) = coeff_extremes(&self.d2);
        (d1_min, d1_max, d2_min, d2_max)
    }
}

/// Prey and predator densities at time `t`.
///
/// The prey must stay strictly positive (`g` is singular at `u = 0`); the
/// predator may vanish identically, which is an invariant manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u: ScalarField,
    pub v: ScalarField,
    pub t: f64,
}

impl State {
    pub fn new(u: ScalarField, v: ScalarField, t: f64) -> Result<Self> {
        v.require_grid(u.grid(), "u and v must share a grid")?;
        let state = State { u, v, t };
        state.check_positivity()?;
        Ok(state)
    }

    pub fn constant(grid: Grid, u: f64, v: f64) -> Result<Self> {
        State::new(ScalarField::constant(grid, u), ScalarField::constant(grid, v), 0.0)
    }

    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }

    /// `u > 0` and `v >= 0` at every node, all values finite.
    pub fn check_positivity(&self) -> Result<()> {
        for (node, &value) in self.u.values().iter().enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::NonPositive { what: "u", node, value });
            }
        }
        for (node, &value) in self.v.values().iter().enumerate() {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(Error::NonPositive { what: "v", node, value });
            }
        }
        Ok(())
    }

    /// Largest nodal distance to another state, over both species.
    pub fn sup_distance(&self, other: &State) -> f64 {
        self.u.sup_distance(&other.u).max(self.v.sup_distance(&other.v))
    }
}
