//! Convergence orders against the manufactured solution `y* = e^{-t} sin(2 pi x / L)`.
//!
//! The forcing is computed analytically and sampled at time levels, so the
//! theta-average the scheme applies to it keeps second order.

use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{l2, make_grid, make_time_grid, Field, Source};
use crate::pde::nonlinear::{solve_nonlinear, NonlinearOptions};
use crate::pde::operators::{assemble_operators, CoefficientSet};
use crate::pde::solver::solve_linearized;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ManufacturedCase {
    /// `y* = 0`, which every scheme reproduces exactly.
    Zero,
    Linear,
    Nonlinear,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MmsConfig {
    pub case: ManufacturedCase,
    pub length: f64,
    pub horizon: f64,
    pub nu0: f64,
    /// `nu(t) = nu0 + nu_tilde_slope * t / T`.
    pub nu_tilde_slope: f64,
    /// Coarsest `(N, M)`; each further level doubles both.
    pub base: (usize, usize),
    pub levels: usize,
    /// Required fitted order.
    pub min_order: f64,
}

impl Default for MmsConfig {
    fn default() -> Self {
        Self {
            case: ManufacturedCase::Linear,
            length: 1.0,
            horizon: 1.0,
            nu0: 0.1,
            nu_tilde_slope: 0.05,
            base: (32, 64),
            levels: 3,
            min_order: 1.8,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub config: MmsConfig,
    pub grids: Vec<(usize, usize)>,
    /// `max_n ||y^n - y*(t_n)||_{L^2}` per grid.
    pub errors: Vec<f64>,
    /// `log2(e_k / e_{k+1})`.
    pub orders: Vec<f64>,
    pub monotone: bool,
    pub passed: bool,
}

fn exact(case: ManufacturedCase, k: f64, x: f64, t: f64) -> f64 {
    match case {
        ManufacturedCase::Zero => 0.0,
        _ => (-t).exp() * (k * x).sin(),
    }
}

/// `y*_t + y*_xxx - nu(t) y*_xx (+ y* y*_x)`.
fn forcing(cfg: &MmsConfig, k: f64, x: f64, t: f64) -> f64 {
    if cfg.case == ManufacturedCase::Zero {
        return 0.0;
    }
    let e = (-t).exp();
    let (s, c) = (k * x).sin_cos();
    let nu = cfg.nu0 + cfg.nu_tilde_slope * t / cfg.horizon;
    let mut f = -e * s - k.powi(3) * e * c + nu * k * k * e * s;
    if cfg.case == ManufacturedCase::Nonlinear {
        f += e * e * s * k * c;
    }
    f
}

pub fn mms_convergence(cfg: &MmsConfig) -> Result<ConvergenceReport> {
    if cfg.levels < 3 {
        return Err(Error::InvalidArgument(
            "at least 3 refinement levels required".into(),
        ));
    }
    let k = 2.0 * PI / cfg.length;
    let mut grids = Vec::with_capacity(cfg.levels);
    let mut errors = Vec::with_capacity(cfg.levels);
    for lvl in 0..cfg.levels {
        let (n, m) = (cfg.base.0 << lvl, cfg.base.1 << lvl);
        let sg = make_grid(cfg.length, n)?;
        let tg = make_time_grid(cfg.horizon, m)?;
        let ops = assemble_operators(&sg);
        let nu_tilde: Vec<f64> = tg
            .times()
            .iter()
            .map(|t| cfg.nu_tilde_slope * t / cfg.horizon)
            .collect();
        let coeffs = CoefficientSet::new(cfg.nu0, nu_tilde, None)?;
        let f = Field::from_fn(&sg, &tg, |x, t| forcing(cfg, k, x, t));
        let y0 = sg.sample(|x| exact(cfg.case, k, x, 0.0));
        let y = match cfg.case {
            ManufacturedCase::Nonlinear => {
                let opts = NonlinearOptions {
                    tol: 1e-11,
                    ..Default::default()
                };
                solve_nonlinear(&ops, &coeffs, Source::Levels(&f), &y0, &tg, &opts)?.field
            }
            _ => solve_linearized(&ops, &coeffs, Source::Levels(&f), &y0, &tg)?,
        };
        let reference = Field::from_fn(&sg, &tg, |x, t| exact(cfg.case, k, x, t));
        let diff = y.axpy(-1.0, &reference)?;
        let err = (0..tg.levels())
            .map(|n| l2(diff.level(n), sg.spacing()))
            .fold(0.0, f64::max);
        grids.push((n, m));
        errors.push(err);
    }
    let orders: Vec<f64> = errors
        .windows(2)
        .map(|w| {
            if w[1] == 0.0 {
                f64::INFINITY
            } else {
                (w[0] / w[1]).log2()
            }
        })
        .collect();
    let monotone = errors.windows(2).all(|w| w[1] <= w[0]);
    let exact_everywhere = errors.iter().all(|&e| e == 0.0);
    let passed = exact_everywhere || (monotone && orders.iter().all(|&p| p >= cfg.min_order));
    Ok(ConvergenceReport {
        config: *cfg,
        grids,
        errors,
        orders,
        monotone,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_solution_has_zero_error() {
        let rep = mms_convergence(&MmsConfig {
            case: ManufacturedCase::Zero,
            base: (8, 8),
            ..Default::default()
        })
        .unwrap();
        assert!(rep.errors.iter().all(|&e| e == 0.0));
        assert!(rep.passed);
    }

    #[test]
    fn linear_case_is_second_order_on_small_grids() {
        let rep = mms_convergence(&MmsConfig {
            base: (16, 32),
            ..Default::default()
        })
        .unwrap();
        assert!(rep.monotone, "{:?}", rep.errors);
        assert!(rep.orders.iter().all(|&p| p > 1.7), "{:?}", rep.orders);
    }

    #[test]
    fn two_levels_are_rejected() {
        let cfg = MmsConfig {
            levels: 2,
            ..Default::default()
        };
        assert!(mms_convergence(&cfg).is_err());
    }
}
