//! Theta-scheme propagation of the linear and linearized equations and the
//! exact discrete adjoint.
//!
//! Step `n` reads
//!
//! ```text
//! (y^{n+1} - y^n) / dt + K_n (theta y^{n+1} + (1 - theta) y^n) = f^n
//! ```
//!
//! with `K_n = D3 - nu_n D2 + B(ybar_n)`, where `nu_n` and `ybar_n` are the
//! `theta`-averages of the level samples. Stacking the steps gives the
//! space-time operator `L`; [`Propagator::adjoint`] solves with `L^T`.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};
use crate::grid::{Field, Source, SpatialGrid, TimeGrid};
use crate::pde::operators::{CoefficientSet, DiscreteOperators};

pub const DEFAULT_THETA: f64 = 0.5;

fn check_theta(theta: f64) -> Result<()> {
    if !(0.5..=1.0).contains(&theta) {
        return Err(Error::InvalidArgument(format!(
            "theta must lie in [1/2, 1], got {theta}"
        )));
    }
    Ok(())
}

/// Matrices of one time step: `K`, `F = I + dt theta K` (factored) and
/// `G = I - dt (1 - theta) K`.
#[derive(Debug)]
pub struct StepMatrices {
    k: DMatrix<f64>,
    implicit: DMatrix<f64>,
    explicit: DMatrix<f64>,
    lu: LU<f64, Dyn, Dyn>,
    lu_transpose: OnceLock<LU<f64, Dyn, Dyn>>,
}

impl StepMatrices {
    pub(crate) fn new(k: DMatrix<f64>, dt: f64, theta: f64) -> Result<Self> {
        let n = k.nrows();
        let id = DMatrix::<f64>::identity(n, n);
        let implicit = &id + &k * (dt * theta);
        let explicit = &id - &k * (dt * (1.0 - theta));
        let lu = implicit.clone().lu();
        if !lu.is_invertible() {
            return Err(Error::Singular("implicit step matrix".into()));
        }
        Ok(Self {
            k,
            implicit,
            explicit,
            lu,
            lu_transpose: OnceLock::new(),
        })
    }

    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }

    /// `F = I + dt theta K`.
    pub fn implicit(&self) -> &DMatrix<f64> {
        &self.implicit
    }

    /// `G = I - dt (1 - theta) K`.
    pub fn explicit(&self) -> &DMatrix<f64> {
        &self.explicit
    }

    pub(crate) fn solve(&self, rhs: DVector<f64>) -> DVector<f64> {
        self.lu
            .solve(&rhs)
            .expect("factorization checked at construction")
    }

    pub(crate) fn solve_matrix(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.lu
            .solve(rhs)
            .expect("factorization checked at construction")
    }

    pub(crate) fn solve_transpose(&self, rhs: DVector<f64>) -> DVector<f64> {
        self.lu_transpose
            .get_or_init(|| self.implicit.transpose().lu())
            .solve(&rhs)
            .expect("transpose of an invertible matrix is invertible")
    }
}

/// Factored step matrices for every step of a time grid. Consecutive steps
/// with identical `K` share one factorization.
#[derive(Debug, Clone)]
pub struct Propagator {
    sg: SpatialGrid,
    tg: TimeGrid,
    theta: f64,
    steps: Vec<Arc<StepMatrices>>,
}

impl Propagator {
    pub fn new(
        ops: &DiscreteOperators,
        coeffs: &CoefficientSet,
        tg: &TimeGrid,
        theta: f64,
    ) -> Result<Self> {
        check_theta(theta)?;
        coeffs.check(ops.grid(), tg)?;
        let mut steps: Vec<Arc<StepMatrices>> = Vec::with_capacity(tg.steps());
        for n in 0..tg.steps() {
            let ybar = coeffs.ybar_step(n, theta);
            let k = ops.spatial_operator(coeffs.nu_step(n, theta), ybar.as_deref());
            match steps.last() {
                Some(prev) if prev.k == k => {
                    let shared = Arc::clone(prev);
                    steps.push(shared);
                }
                _ => steps.push(Arc::new(StepMatrices::new(k, tg.dt(), theta)?)),
            }
        }
        Ok(Self {
            sg: *ops.grid(),
            tg: *tg,
            theta,
            steps,
        })
    }

    /// Constant diffusion `nu0`, no transport: one factorization for all steps.
    pub fn constant(ops: &DiscreteOperators, nu0: f64, tg: &TimeGrid, theta: f64) -> Result<Self> {
        Self::new(ops, &CoefficientSet::constant(nu0, tg)?, tg, theta)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn spatial_grid(&self) -> &SpatialGrid {
        &self.sg
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.tg
    }

    pub fn step(&self, n: usize) -> &StepMatrices {
        &self.steps[n]
    }

    /// Number of distinct factorizations held.
    pub fn factorizations(&self) -> usize {
        let mut count = 0;
        for (n, s) in self.steps.iter().enumerate() {
            if n == 0 || !Arc::ptr_eq(s, &self.steps[n - 1]) {
                count += 1;
            }
        }
        count
    }

    fn check_vec(&self, v: &[f64], what: &str) -> Result<()> {
        if v.len() != self.sg.interior() {
            return Err(Error::shape(
                format!("{what} of length {}", self.sg.interior()),
                v.len(),
            ));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "{what} contains non-finite values"
            )));
        }
        Ok(())
    }

    /// Marches `y0` forward; `forcing(n, out)` writes the source of step `n`.
    pub(crate) fn march(&self, y0: &[f64], mut forcing: impl FnMut(usize, &mut [f64])) -> Field {
        let dim = self.sg.interior();
        let mut out = Field::zeros(&self.sg, &self.tg);
        out.row_mut(0).copy_from_slice(y0);
        let dt = self.tg.dt();
        let mut f = vec![0.0; dim];
        for n in 0..self.tg.steps() {
            forcing(n, &mut f);
            let s = &self.steps[n];
            let mut rhs = &s.explicit * DVector::from_column_slice(out.row(n));
            for (r, fi) in rhs.iter_mut().zip(&f) {
                *r += dt * fi;
            }
            let next = s.solve(rhs);
            out.row_mut(n + 1).copy_from_slice(next.as_slice());
        }
        out
    }

    pub fn forward(&self, f: Source<'_>, y0: &[f64]) -> Result<Field> {
        self.check_vec(y0, "initial datum")?;
        f.check_grids(&self.sg, &self.tg)?;
        let theta = self.theta;
        let y = self.march(y0, |n, out| f.step_into(n, theta, out));
        if !y.all_finite() {
            return Err(Error::Internal("non-finite state in forward march".into()));
        }
        Ok(y)
    }

    /// Solves `L^T lambda = b` level by level, backward in time.
    pub(crate) fn transpose_solve(&self, b: &Field) -> Field {
        let m = self.tg.steps();
        let mut lam = Field::zeros(&self.sg, &self.tg);
        let last = self.steps[m - 1].solve_transpose(DVector::from_column_slice(b.level(m)));
        lam.row_mut(m).copy_from_slice(last.as_slice());
        for n in (0..m).rev() {
            // E_n = -G_n couples level n to step row n+1
            let g_t = self.steps[n]
                .explicit
                .tr_mul(&DVector::from_column_slice(lam.level(n + 1)));
            let rhs = DVector::from_column_slice(b.level(n)) + g_t;
            let v = if n == 0 {
                rhs
            } else {
                self.steps[n - 1].solve_transpose(rhs)
            };
            lam.row_mut(n).copy_from_slice(v.as_slice());
        }
        lam
    }

    /// Discrete adjoint of the forward march, marched backward from `phi_t`.
    ///
    /// The result satisfies, for every forward solution `y` with source `f`,
    /// `(y0, phi^0) + sum_n dt (f^n, phi^{n+1}) = sum_n c_n dt (y^n, g^n) + (y^M, phi_T)`
    /// with trapezoid weights `c_n` and the interior inner product `h sum`.
    pub fn adjoint(&self, g: Option<&Field>, phi_t: &[f64]) -> Result<Field> {
        self.check_vec(phi_t, "terminal datum")?;
        let m = self.tg.steps();
        let mut b = Field::zeros(&self.sg, &self.tg);
        if let Some(g) = g {
            g.check_grids(&self.sg, &self.tg)?;
            for n in 0..=m {
                let w = self.tg.trapezoid_weight(n);
                for (bi, gi) in b.row_mut(n).iter_mut().zip(g.level(n)) {
                    *bi = w * gi;
                }
            }
        }
        for (bi, pi) in b.row_mut(m).iter_mut().zip(phi_t) {
            *bi += pi;
        }
        let phi = self.transpose_solve(&b);
        if !phi.all_finite() {
            return Err(Error::Internal("non-finite adjoint state".into()));
        }
        Ok(phi)
    }

    /// `(L y)`: row 0 is `y^0`, row `n+1` is `F_n y^{n+1} - G_n y^n`.
    pub fn apply(&self, y: &Field) -> Field {
        let mut out = Field::zeros(&self.sg, &self.tg);
        out.row_mut(0).copy_from_slice(y.level(0));
        for n in 0..self.tg.steps() {
            let s = &self.steps[n];
            let r = &s.implicit * DVector::from_column_slice(y.level(n + 1))
                - &s.explicit * DVector::from_column_slice(y.level(n));
            out.row_mut(n + 1).copy_from_slice(r.as_slice());
        }
        out
    }

    /// `(L^T lambda)` level by level.
    pub fn apply_transpose(&self, lam: &Field) -> Field {
        let m = self.tg.steps();
        let mut out = Field::zeros(&self.sg, &self.tg);
        for n in 0..=m {
            let mut acc = if n == 0 {
                DVector::from_column_slice(lam.level(0))
            } else {
                self.steps[n - 1]
                    .implicit
                    .tr_mul(&DVector::from_column_slice(lam.level(n)))
            };
            if n < m {
                acc -= self.steps[n]
                    .explicit
                    .tr_mul(&DVector::from_column_slice(lam.level(n + 1)));
            }
            out.row_mut(n).copy_from_slice(acc.as_slice());
        }
        out
    }
}

/// `y_t + y_xxx - nu0 y_xx = f` with `y(0) = y0`, Crank-Nicolson by default.
pub fn solve_linear_constant(
    ops: &DiscreteOperators,
    nu0: f64,
    f: Source<'_>,
    y0: &[f64],
    tg: &TimeGrid,
) -> Result<Field> {
    Propagator::constant(ops, nu0, tg, DEFAULT_THETA)?.forward(f, y0)
}

/// `y_t + y_xxx - nu(t) y_xx + (ybar y)_x = f` with `y(0) = y0`.
pub fn solve_linearized(
    ops: &DiscreteOperators,
    coeffs: &CoefficientSet,
    f: Source<'_>,
    y0: &[f64],
    tg: &TimeGrid,
) -> Result<Field> {
    Propagator::new(ops, coeffs, tg, DEFAULT_THETA)?.forward(f, y0)
}

/// `-phi_t - phi_xxx - nu(t) phi_xx - ybar phi_x = g` with `phi(T) = phi_t`.
pub fn solve_adjoint(
    ops: &DiscreteOperators,
    coeffs: &CoefficientSet,
    g: Option<&Field>,
    phi_t: &[f64],
    tg: &TimeGrid,
) -> Result<Field> {
    Propagator::new(ops, coeffs, tg, DEFAULT_THETA)?.adjoint(g, phi_t)
}
