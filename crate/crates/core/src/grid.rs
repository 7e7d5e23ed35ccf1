//! Uniform space and time grids, space-time grid functions, quadrature and
//! the discrete Sobolev-type norms used throughout the crate.
//!
//! Spatial unknowns live on the interior nodes `x_1 .. x_{N-1}`. The two end
//! nodes carry the pinned value zero and are identified with each other (the
//! glue point of the pinned-periodic grid, see [`crate::pde::operators`]).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pde::operators::DiscreteOperators;

/// Uniform grid on `[0, L]` with `N` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    length: f64,
    cells: usize,
    spacing: f64,
}

impl SpatialGrid {
    pub const MIN_CELLS: usize = 8;

    pub fn new(length: f64, cells: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "domain length must be positive and finite, got {length}"
            )));
        }
        if cells < Self::MIN_CELLS {
            return Err(Error::InvalidArgument(format!(
                "need at least {} cells, got {cells}",
                Self::MIN_CELLS
            )));
        }
        Ok(Self {
            length,
            cells,
            spacing: length / cells as f64,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Number of cells `N`.
    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Number of unknowns `N - 1`.
    pub fn interior(&self) -> usize {
        self.cells - 1
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Node `x_i = i h` for `i = 0..=N`.
    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.spacing
    }

    /// Coordinates of the interior nodes, in unknown order.
    pub fn interior_nodes(&self) -> Vec<f64> {
        (1..self.cells).map(|i| self.node(i)).collect()
    }

    /// Interior node indices (0-based into an unknown vector) with `x` strictly inside `(a, b)`.
    pub fn indices_in(&self, a: f64, b: f64) -> Vec<usize> {
        (1..self.cells)
            .filter(|&i| {
                let x = self.node(i);
                x > a && x < b
            })
            .map(|i| i - 1)
            .collect()
    }

    /// Samples a function of `x` on the interior nodes.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (1..self.cells).map(|i| f(self.node(i))).collect()
    }
}

/// Shorthand for [`SpatialGrid::new`].
pub fn make_grid(length: f64, cells: usize) -> Result<SpatialGrid> {
    SpatialGrid::new(length, cells)
}

/// Uniform grid on `[0, T]` with `M` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
    dt: f64,
}

impl TimeGrid {
    pub const MIN_STEPS: usize = 8;

    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "time horizon must be positive and finite, got {horizon}"
            )));
        }
        if steps < Self::MIN_STEPS {
            return Err(Error::InvalidArgument(format!(
                "need at least {} time steps, got {steps}",
                Self::MIN_STEPS
            )));
        }
        Ok(Self {
            horizon,
            steps,
            dt: horizon / steps as f64,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of steps `M`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of levels `M + 1`.
    pub fn levels(&self) -> usize {
        self.steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `t_n = n dt`; the last level returns `T` exactly.
    pub fn time(&self, n: usize) -> f64 {
        if n == self.steps {
            self.horizon
        } else {
            n as f64 * self.dt
        }
    }

    /// `t_n + theta dt`, the evaluation time of step `n`.
    pub fn step_time(&self, n: usize, theta: f64) -> f64 {
        (n as f64 + theta) * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|n| self.time(n)).collect()
    }

    pub fn midpoints(&self) -> Vec<f64> {
        (0..self.steps).map(|n| self.step_time(n, 0.5)).collect()
    }

    /// Composite trapezoid weight of level `n`.
    pub fn trapezoid_weight(&self, n: usize) -> f64 {
        if n == 0 || n == self.steps {
            0.5 * self.dt
        } else {
            self.dt
        }
    }

    /// The same grid with `factor` times as many steps.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(self.horizon, self.steps * factor)
    }
}

/// Shorthand for [`TimeGrid::new`].
pub fn make_time_grid(horizon: f64, steps: usize) -> Result<TimeGrid> {
    TimeGrid::new(horizon, steps)
}

/// A grid function on `rows x nodes` samples, row-major.
///
/// [`Field`] stores one row per time level, [`StepField`] one row per time step.
macro_rules! space_time_array {
    ($name:ident, $rows:ident, $doc:literal) => {
        #[doc = $doc]
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            rows: usize,
            nodes: usize,
            values: Vec<f64>,
        }

        impl $name {
            pub fn from_vec(rows: usize, nodes: usize, values: Vec<f64>) -> Result<Self> {
                if values.len() != rows * nodes {
                    return Err(Error::shape(
                        format!("{rows}x{nodes} values"),
                        format!("{} values", values.len()),
                    ));
                }
                if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "non-finite entry at row {} node {}",
                        bad / nodes.max(1),
                        bad % nodes.max(1)
                    )));
                }
                Ok(Self {
                    rows,
                    nodes,
                    values,
                })
            }

            pub(crate) fn zeros_raw(rows: usize, nodes: usize) -> Self {
                Self {
                    rows,
                    nodes,
                    values: vec![0.0; rows * nodes],
                }
            }

            pub fn $rows(&self) -> usize {
                self.rows
            }

            pub fn nodes(&self) -> usize {
                self.nodes
            }

            pub fn values(&self) -> &[f64] {
                &self.values
            }

            pub fn row(&self, n: usize) -> &[f64] {
                &self.values[n * self.nodes..(n + 1) * self.nodes]
            }

            pub fn row_mut(&mut self, n: usize) -> &mut [f64] {
                &mut self.values[n * self.nodes..(n + 1) * self.nodes]
            }

            pub fn rows_iter(&self) -> impl Iterator<Item = &[f64]> {
                self.values.chunks_exact(self.nodes.max(1))
            }

            pub fn get(&self, n: usize, i: usize) -> f64 {
                self.values[n * self.nodes + i]
            }

            pub fn is_zero(&self) -> bool {
                self.values.iter().all(|&v| v == 0.0)
            }

            pub fn max_abs(&self) -> f64 {
                self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
            }

            pub fn all_finite(&self) -> bool {
                self.values.iter().all(|v| v.is_finite())
            }

            pub fn scaled(&self, a: f64) -> Self {
                Self {
                    rows: self.rows,
                    nodes: self.nodes,
                    values: self.values.iter().map(|v| a * v).collect(),
                }
            }

            /// `self + a * other`.
            pub fn axpy(&self, a: f64, other: &Self) -> Result<Self> {
                self.check_same(other)?;
                Ok(Self {
                    rows: self.rows,
                    nodes: self.nodes,
                    values: self
                        .values
                        .iter()
                        .zip(&other.values)
                        .map(|(x, y)| x + a * y)
                        .collect(),
                })
            }

            pub fn check_same(&self, other: &Self) -> Result<()> {
                if self.rows != other.rows || self.nodes != other.nodes {
                    return Err(Error::shape(
                        format!("{}x{}", self.rows, self.nodes),
                        format!("{}x{}", other.rows, other.nodes),
                    ));
                }
                Ok(())
            }
        }
    };
}

space_time_array!(
    Field,
    levels,
    "Space-time grid function: one row per time level `t_0..t_M`, one column per interior node."
);
space_time_array!(
    StepField,
    steps,
    "Per-step source: row `n` holds the forcing applied on `[t_n, t_{n+1}]`."
);

impl Field {
    pub fn zeros(sg: &SpatialGrid, tg: &TimeGrid) -> Self {
        Self::zeros_raw(tg.levels(), sg.interior())
    }

    /// Samples `f(x, t)` on interior nodes at every level.
    pub fn from_fn(sg: &SpatialGrid, tg: &TimeGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(sg, tg);
        for n in 0..tg.levels() {
            let t = tg.time(n);
            for (i, v) in out.row_mut(n).iter_mut().enumerate() {
                *v = f(sg.node(i + 1), t);
            }
        }
        out
    }

    /// A field constant in time.
    pub fn constant_in_time(tg: &TimeGrid, slice: &[f64]) -> Self {
        let mut values = Vec::with_capacity(slice.len() * tg.levels());
        for _ in 0..tg.levels() {
            values.extend_from_slice(slice);
        }
        Self {
            rows: tg.levels(),
            nodes: slice.len(),
            values,
        }
    }

    pub fn check_grids(&self, sg: &SpatialGrid, tg: &TimeGrid) -> Result<()> {
        if self.rows != tg.levels() || self.nodes != sg.interior() {
            return Err(Error::shape(
                format!("{}x{}", tg.levels(), sg.interior()),
                format!("{}x{}", self.rows, self.nodes),
            ));
        }
        Ok(())
    }

    pub fn level(&self, n: usize) -> &[f64] {
        self.row(n)
    }

    pub fn last_level(&self) -> &[f64] {
        self.row(self.rows - 1)
    }

    /// Level `n` with the pinned boundary values prepended and appended (`N + 1` entries).
    pub fn with_boundary(&self, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.nodes + 2);
        out.push(0.0);
        out.extend_from_slice(self.row(n));
        out.push(0.0);
        out
    }

    /// `theta`-weighted combination of neighbouring levels, one row per step.
    pub fn step_average(&self, theta: f64) -> StepField {
        let steps = self.rows.saturating_sub(1);
        let mut out = StepField::zeros_raw(steps, self.nodes);
        for n in 0..steps {
            let (a, b) = (self.row(n), self.row(n + 1));
            for (o, (x, y)) in out.row_mut(n).iter_mut().zip(a.iter().zip(b)) {
                *o = theta * y + (1.0 - theta) * x;
            }
        }
        out
    }
}

impl StepField {
    pub fn zeros(sg: &SpatialGrid, tg: &TimeGrid) -> Self {
        Self::zeros_raw(tg.steps(), sg.interior())
    }

    /// Samples `f(x, t_n + theta dt)` for every step.
    pub fn from_fn(
        sg: &SpatialGrid,
        tg: &TimeGrid,
        theta: f64,
        f: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let mut out = Self::zeros(sg, tg);
        for n in 0..tg.steps() {
            let t = tg.step_time(n, theta);
            for (i, v) in out.row_mut(n).iter_mut().enumerate() {
                *v = f(sg.node(i + 1), t);
            }
        }
        out
    }

    pub fn check_grids(&self, sg: &SpatialGrid, tg: &TimeGrid) -> Result<()> {
        if self.rows != tg.steps() || self.nodes != sg.interior() {
            return Err(Error::shape(
                format!("{}x{}", tg.steps(), sg.interior()),
                format!("{}x{}", self.rows, self.nodes),
            ));
        }
        Ok(())
    }

    pub fn step(&self, n: usize) -> &[f64] {
        self.row(n)
    }
}

/// Right-hand side of an evolution problem.
#[derive(Debug, Clone, Copy)]
pub enum Source<'a> {
    Zero,
    /// Sampled at time levels; step `n` uses the `theta`-weighted average of levels `n`, `n+1`.
    Levels(&'a Field),
    /// Already one row per step.
    Steps(&'a StepField),
}

impl Source<'_> {
    pub fn check_grids(&self, sg: &SpatialGrid, tg: &TimeGrid) -> Result<()> {
        match self {
            Source::Zero => Ok(()),
            Source::Levels(f) => f.check_grids(sg, tg),
            Source::Steps(f) => f.check_grids(sg, tg),
        }
    }

    /// Writes the forcing of step `n` into `out`.
    pub fn step_into(&self, n: usize, theta: f64, out: &mut [f64]) {
        match self {
            Source::Zero => out.iter_mut().for_each(|v| *v = 0.0),
            Source::Levels(f) => {
                let (a, b) = (f.level(n), f.level(n + 1));
                for (o, (x, y)) in out.iter_mut().zip(a.iter().zip(b)) {
                    *o = theta * y + (1.0 - theta) * x;
                }
            }
            Source::Steps(f) => out.copy_from_slice(f.step(n)),
        }
    }

    pub fn to_steps(&self, sg: &SpatialGrid, tg: &TimeGrid, theta: f64) -> StepField {
        match self {
            Source::Zero => StepField::zeros(sg, tg),
            Source::Levels(f) => f.step_average(theta),
            Source::Steps(f) => (*f).clone(),
        }
    }
}

/// Composite trapezoid rule on `[0, L]` for a function known on interior
/// nodes and vanishing at both ends: `h * sum(slice)`.
pub fn quadrature_space(slice: &[f64], grid: &SpatialGrid) -> Result<f64> {
    if slice.len() != grid.interior() {
        return Err(Error::shape(grid.interior(), slice.len()));
    }
    Ok(grid.spacing() * slice.iter().sum::<f64>())
}

/// Discrete `L^2(0, L)` inner product on interior nodes.
pub fn inner(a: &[f64], b: &[f64], h: f64) -> f64 {
    h * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

/// Discrete `L^2(0, L)` norm.
pub fn l2(a: &[f64], h: f64) -> f64 {
    inner(a, a, h).sqrt()
}

/// Norms of the spaces `C([0,T]; H^s) ∩ L^2(0,T; H^{s+1})` for integer `s`, plus `L^2(0,T; H^{-1})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    /// `max_n ||f(t_n)||_{L^2}`.
    pub sup_t_l2: f64,
    pub l2_h1: Option<f64>,
    pub l2_h2: Option<f64>,
    /// `||f||_{L^2(Q)}` by the trapezoid rule in time.
    pub l2_q: f64,
    pub l2_hneg1: Option<f64>,
}

impl NormReport {
    /// `sup_t ||f||_{L^2} + ||f||_{L^2 H^1}`, the norm of `Y^0_T`.
    pub fn y0_norm(&self) -> f64 {
        self.sup_t_l2 + self.l2_h1.unwrap_or(0.0)
    }
}

/// Spatial `H^1` seminorm squared: `h * sum over the N cells of ((u_{i+1} - u_i)/h)^2`.
pub(crate) fn h1_seminorm_sq(u: &[f64], h: f64) -> f64 {
    let n = u.len();
    let mut acc = 0.0;
    let mut prev = 0.0;
    for &v in u {
        acc += (v - prev) * (v - prev);
        prev = v;
    }
    acc += prev * prev;
    debug_assert!(n > 0);
    acc / h
}

/// Spatial `H^2` seminorm squared from second differences at the interior
/// nodes. The glue node is left out: `y_xx` may jump there, and its
/// difference quotient would measure the jump rather than `y_xx`.
pub(crate) fn h2_seminorm_sq(u: &[f64], h: f64) -> f64 {
    let at = |k: usize| if k == 0 || k > u.len() { 0.0 } else { u[k - 1] };
    let mut acc = 0.0;
    for k in 1..=u.len() {
        let d = (at(k + 1) - 2.0 * at(k) + at(k - 1)) / (h * h);
        acc += d * d;
    }
    h * acc
}

/// Factorized `(I - D2)` for discrete `H^{-1}` norms.
pub(crate) struct NegativeNormSolver {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    h: f64,
}

impl NegativeNormSolver {
    pub(crate) fn new(ops: &DiscreteOperators) -> Result<Self> {
        let n = ops.grid().interior();
        let m = DMatrix::identity(n, n) - ops.d2_dense();
        let lu = m.lu();
        if !lu.is_invertible() {
            return Err(Error::Internal("I - D2 is singular".into()));
        }
        Ok(Self {
            lu,
            h: ops.grid().spacing(),
        })
    }

    /// `||f||^2_{H^{-1}} = h <f, (I - D2)^{-1} f>`.
    pub(crate) fn norm_sq(&self, f: &[f64]) -> f64 {
        let rhs = DVector::from_column_slice(f);
        let u = self.lu.solve(&rhs).expect("checked invertible");
        inner(f, u.as_slice(), self.h)
    }
}

/// Norms of a space-time field; `upto_order` in `{0, 1, 2}` selects which of
/// the `L^2 H^1`, `L^2 H^2` entries are populated.
pub fn discrete_norms(
    field: &Field,
    ops: &DiscreteOperators,
    tg: &TimeGrid,
    upto_order: usize,
) -> Result<NormReport> {
    let sg = ops.grid();
    field.check_grids(sg, tg)?;
    if upto_order > 2 {
        return Err(Error::InvalidArgument(format!(
            "upto_order must be 0, 1 or 2, got {upto_order}"
        )));
    }
    let h = sg.spacing();
    let neg = NegativeNormSolver::new(ops)?;
    let mut sup = 0.0f64;
    let (mut q, mut h1, mut h2, mut hm1) = (0.0, 0.0, 0.0, 0.0);
    for n in 0..tg.levels() {
        let u = field.level(n);
        let w = tg.trapezoid_weight(n);
        let l2sq = inner(u, u, h);
        sup = sup.max(l2sq.sqrt());
        q += w * l2sq;
        hm1 += w * neg.norm_sq(u);
        if upto_order >= 1 {
            h1 += w * (l2sq + h1_seminorm_sq(u, h));
        }
        if upto_order >= 2 {
            h2 += w * (l2sq + h1_seminorm_sq(u, h) + h2_seminorm_sq(u, h));
        }
    }
    Ok(NormReport {
        sup_t_l2: sup,
        l2_h1: (upto_order >= 1).then(|| h1.sqrt()),
        l2_h2: (upto_order >= 2).then(|| h2.sqrt()),
        l2_q: q.sqrt(),
        l2_hneg1: Some(hm1.max(0.0).sqrt()),
    })
}

/// `sup_t ||f||_{L^2} + ||f||_{L^2 H^1}` without the `H^{-1}` solve.
pub fn y0_norm(field: &Field, sg: &SpatialGrid, tg: &TimeGrid) -> f64 {
    let h = sg.spacing();
    let mut sup = 0.0f64;
    let mut h1 = 0.0;
    for n in 0..tg.levels() {
        let u = field.level(n);
        let l2sq = inner(u, u, h);
        sup = sup.max(l2sq.sqrt());
        h1 += tg.trapezoid_weight(n) * (l2sq + h1_seminorm_sq(u, h));
    }
    sup + h1.sqrt()
}

/// `||f||_{L^2(Q)}` by the trapezoid rule in time.
pub fn l2_q(field: &Field, sg: &SpatialGrid, tg: &TimeGrid) -> f64 {
    let h = sg.spacing();
    (0..tg.levels())
        .map(|n| tg.trapezoid_weight(n) * inner(field.level(n), field.level(n), h))
        .sum::<f64>()
        .sqrt()
}

/// `||f||_{L^2(Q)}` of a per-step field by the midpoint rule.
pub fn l2_q_steps(field: &StepField, sg: &SpatialGrid, tg: &TimeGrid) -> f64 {
    let h = sg.spacing();
    (0..tg.steps())
        .map(|n| tg.dt() * inner(field.step(n), field.step(n), h))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn grid_arithmetic() {
        let g = make_grid(1.0, 10).unwrap();
        assert_relative_eq!(g.spacing(), 0.1);
        assert_relative_eq!(g.node(5), 0.5);
        assert_eq!(g.interior(), 9);
        let g = make_grid(2.0, 8).unwrap();
        assert_eq!(g.spacing(), 0.25);
        assert!((g.spacing() * g.cells() as f64 - g.length()).abs() < 1e-15);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(matches!(make_grid(1.0, 4), Err(Error::InvalidArgument(_))));
        assert!(make_grid(0.0, 16).is_err());
        assert!(make_grid(-1.0, 16).is_err());
        assert!(make_grid(f64::NAN, 16).is_err());
    }

    #[test]
    fn time_grid_arithmetic() {
        let t = make_time_grid(1.0, 100).unwrap();
        assert_relative_eq!(t.dt(), 0.01);
        let t = make_time_grid(0.5, 10).unwrap();
        assert_relative_eq!(t.time(3), 0.15, epsilon = 1e-15);
        assert_eq!(t.time(0), 0.0);
        assert_eq!(t.time(10), 0.5);
        assert!(t.times().windows(2).all(|w| w[1] > w[0]));
        assert!(make_time_grid(-1.0, 10).is_err());
        assert!(make_time_grid(1.0, 7).is_err());
    }

    #[test]
    fn trapezoid_quadrature_values() {
        let g = make_grid(1.0, 10).unwrap();
        let ones = vec![1.0; g.interior()];
        assert_relative_eq!(quadrature_space(&ones, &g).unwrap(), 0.9, epsilon = 1e-14);
        assert_eq!(quadrature_space(&[0.0; 9], &g).unwrap(), 0.0);
        assert!(quadrature_space(&[1.0; 3], &g).is_err());

        let g = make_grid(1.0, 256).unwrap();
        let s = g.sample(|x| (PI * x).sin());
        assert!((quadrature_space(&s, &g).unwrap() - 2.0 / PI).abs() < 1e-3);
    }

    #[test]
    fn field_shape_and_finiteness() {
        assert!(Field::from_vec(2, 3, vec![0.0; 5]).is_err());
        assert!(Field::from_vec(2, 2, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
        let sg = make_grid(1.0, 8).unwrap();
        let tg = make_time_grid(1.0, 8).unwrap();
        let f = Field::from_fn(&sg, &tg, |x, t| x + t);
        let b = f.with_boundary(3);
        assert_eq!(b.len(), 9);
        assert_eq!(b[0], 0.0);
        assert_eq!(b[8], 0.0);
        assert_eq!(f.level(3)[0], sg.node(1) + tg.time(3));
    }

    #[test]
    fn h2_seminorm_matches_second_difference() {
        // u = sin(2 pi x): periodic second difference symbol -(2 sin(k h / 2) / h)^2
        let g = make_grid(1.0, 64).unwrap();
        let h = g.spacing();
        let u = g.sample(|x| (2.0 * PI * x).sin());
        let k = 2.0 * PI;
        let sym = (2.0 * (k * h / 2.0).sin() / h).powi(2);
        assert_relative_eq!(h2_seminorm_sq(&u, h), sym * sym * 0.5, max_relative = 1e-12);
    }
}
