//! The full equation `y_t + y_xxx - nu(t) y_xx + (ybar y)_x + y y_x = F`.
//!
//! [`NonlinearMode::Picard`] iterates on the whole time slab: each sweep
//! solves the linear problem with the convection of the previous iterate
//! moved to the right-hand side. Its fixed point is the fully implicit
//! theta-scheme with the energy-neutral convection split. When the distance
//! between iterates grows, later sweeps are damped by one half.
//!
//! [`NonlinearMode::SemiImplicit`] advances one step at a time with the
//! convection velocity extrapolated from the two previous levels, so every
//! step is a linear solve and the discrete energy identity still holds.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{y0_norm, Field, Source, TimeGrid};
use crate::pde::operators::{CoefficientSet, DiscreteOperators};
use crate::pde::solver::{Propagator, StepMatrices, DEFAULT_THETA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearMode {
    Picard,
    SemiImplicit,
}

#[derive(Debug, Clone, Copy)]
pub struct NonlinearOptions {
    pub mode: NonlinearMode,
    /// Picard stops once the `Y^0` distance of consecutive iterates is at most
    /// `tol` times the `Y^0` norm of the newer one.
    pub tol: f64,
    pub maxit: usize,
    pub theta: f64,
}

impl Default for NonlinearOptions {
    fn default() -> Self {
        Self {
            mode: NonlinearMode::Picard,
            tol: 1e-10,
            maxit: 200,
            theta: DEFAULT_THETA,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationLog {
    pub iterations: usize,
    /// `Y^0` distance between consecutive Picard iterates.
    pub distances: Vec<f64>,
    pub damped: bool,
}

#[derive(Debug, Clone)]
pub struct NonlinearSolution {
    pub field: Field,
    pub log: IterationLog,
}

/// Convection `N(v_theta)` of every step, subtracted from `forcing`.
fn picard_source(
    ops: &DiscreteOperators,
    v: &Field,
    forcing: &crate::grid::StepField,
    theta: f64,
) -> crate::grid::StepField {
    let vt = v.step_average(theta);
    let mut out = forcing.clone();
    for n in 0..out.steps() {
        let nl = ops.nonlinear_term(vt.step(n));
        for (o, c) in out.row_mut(n).iter_mut().zip(nl) {
            *o -= c;
        }
    }
    out
}

fn picard(
    ops: &DiscreteOperators,
    prop: &Propagator,
    forcing: &crate::grid::StepField,
    y0: &[f64],
    opts: &NonlinearOptions,
) -> Result<NonlinearSolution> {
    let sg = *ops.grid();
    let tg = *prop.time_grid();
    let mut v = Field::zeros(&sg, &tg);
    let mut distances = Vec::new();
    let mut damped = false;
    for k in 1..=opts.maxit {
        let src = picard_source(ops, &v, forcing, opts.theta);
        let mut next = prop
            .forward(Source::Steps(&src), y0)
            .map_err(|_| Error::NoConvergence {
                iterations: k,
                residual: f64::INFINITY,
                context: "Picard iterate became non-finite".into(),
            })?;
        if let Some(&prev) = distances.last() {
            let raw = y0_norm(&next.axpy(-1.0, &v)?, &sg, &tg);
            if raw > prev {
                damped = true;
            }
        }
        if damped {
            next = v.axpy(0.5, &next.axpy(-1.0, &v)?)?;
        }
        let dist = y0_norm(&next.axpy(-1.0, &v)?, &sg, &tg);
        let size = y0_norm(&next, &sg, &tg);
        distances.push(dist);
        v = next;
        if !dist.is_finite() || !size.is_finite() || size > 1e150 {
            return Err(Error::NoConvergence {
                iterations: k,
                residual: dist,
                context: "Picard iteration diverged; data outside the contraction ball".into(),
            });
        }
        if dist <= opts.tol * size {
            return Ok(NonlinearSolution {
                field: v,
                log: IterationLog {
                    iterations: k,
                    distances,
                    damped,
                },
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.maxit,
        residual: *distances.last().unwrap_or(&f64::NAN),
        context: "Picard iteration hit maxit".into(),
    })
}

fn semi_implicit(
    ops: &DiscreteOperators,
    prop: &Propagator,
    forcing: &crate::grid::StepField,
    y0: &[f64],
    opts: &NonlinearOptions,
) -> Result<NonlinearSolution> {
    let sg = *ops.grid();
    let tg = *prop.time_grid();
    let dt = tg.dt();
    let mut y = Field::zeros(&sg, &tg);
    y.row_mut(0).copy_from_slice(y0);
    for n in 0..tg.steps() {
        let lagged: Vec<f64> = if n == 0 {
            y0.to_vec()
        } else {
            y.level(n)
                .iter()
                .zip(y.level(n - 1))
                .map(|(a, b)| 1.5 * a - 0.5 * b)
                .collect()
        };
        let k = prop.step(n).k() + ops.convection_skew(&lagged);
        let step = StepMatrices::new(k, dt, opts.theta)?;
        let mut rhs = step.explicit() * DVector::from_column_slice(y.level(n));
        for (r, f) in rhs.iter_mut().zip(forcing.step(n)) {
            *r += dt * f;
        }
        let next = step.solve(rhs);
        if next.iter().any(|v| !v.is_finite() || v.abs() > 1e150) {
            return Err(Error::NoConvergence {
                iterations: n + 1,
                residual: f64::INFINITY,
                context: "semi-implicit march blew up".into(),
            });
        }
        y.row_mut(n + 1).copy_from_slice(next.as_slice());
    }
    Ok(NonlinearSolution {
        field: y,
        log: IterationLog {
            iterations: 1,
            distances: Vec::new(),
            damped: false,
        },
    })
}

/// Solves the nonlinear problem with an existing linear propagator.
pub fn solve_nonlinear_with(
    ops: &DiscreteOperators,
    prop: &Propagator,
    forcing: Source<'_>,
    y0: &[f64],
    opts: &NonlinearOptions,
) -> Result<NonlinearSolution> {
    if opts.theta != prop.theta() {
        return Err(Error::InvalidArgument(
            "options and propagator disagree on theta".into(),
        ));
    }
    if !(opts.tol.is_finite() && opts.tol >= 0.0) || opts.maxit == 0 {
        return Err(Error::InvalidArgument(
            "tol must be >= 0 and maxit >= 1".into(),
        ));
    }
    if y0.len() != ops.size() {
        return Err(Error::shape(ops.size(), y0.len()));
    }
    let sg = *ops.grid();
    let tg = *prop.time_grid();
    forcing.check_grids(&sg, &tg)?;
    let steps = forcing.to_steps(&sg, &tg, opts.theta);
    match opts.mode {
        NonlinearMode::Picard => picard(ops, prop, &steps, y0, opts),
        NonlinearMode::SemiImplicit => semi_implicit(ops, prop, &steps, y0, opts),
    }
}

pub fn solve_nonlinear(
    ops: &DiscreteOperators,
    coeffs: &CoefficientSet,
    forcing: Source<'_>,
    y0: &[f64],
    tg: &TimeGrid,
    opts: &NonlinearOptions,
) -> Result<NonlinearSolution> {
    let prop = Propagator::new(ops, coeffs, tg, opts.theta)?;
    solve_nonlinear_with(ops, &prop, forcing, y0, opts)
}

/// Free evolution `ybar_t + ybar_xxx - nu(t) ybar_xx + ybar ybar_x = 0`.
/// Any transport coefficient in `coeffs` is ignored.
pub fn uncontrolled_trajectory(
    ops: &DiscreteOperators,
    coeffs: &CoefficientSet,
    ybar0: &[f64],
    tg: &TimeGrid,
) -> Result<Field> {
    let plain = CoefficientSet::new(coeffs.nu0(), coeffs.nu_tilde().to_vec(), None)?;
    Ok(solve_nonlinear(
        ops,
        &plain,
        Source::Zero,
        ybar0,
        tg,
        &NonlinearOptions::default(),
    )?
    .field)
}
