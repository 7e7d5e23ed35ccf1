//! The transposition identity between forward and adjoint solutions.
//!
//! For `y` solving the forward scheme with source `f` and `phi` the discrete
//! adjoint with source `g` and terminal value `phi_T`,
//! `sum_n c_n dt (y^n, g^n) + (y^M, phi_T) = sum_n dt (f^n, phi^{n+1}) + (y^0, phi^0)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::grid::{inner, Field, StepField, TimeGrid};
use crate::pde::operators::{CoefficientSet, DiscreteOperators};
use crate::pde::solver::{Propagator, DEFAULT_THETA};

use super::sampling::{random_nu_tilde, TrigField, TrigProfile};
use super::{max_median, GridInfo};

/// Pass threshold on the relative residual.
pub const DUALITY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DualityConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub nu0: f64,
    /// Amplitude of the random transport coefficient `ybar`.
    pub ybar_amplitude: f64,
    /// Upper bound of the random `nu_tilde` amplitude.
    pub nu_tilde_amplitude: f64,
    /// Added to `nu0` in the adjoint only. Nonzero values seed a bug the
    /// check must detect.
    pub adjoint_nu_shift: f64,
}

impl Default for DualityConfig {
    fn default() -> Self {
        Self {
            n_samples: 100,
            seed: 0,
            nu0: 0.1,
            ybar_amplitude: 0.2,
            nu_tilde_amplitude: 0.05,
            adjoint_nu_shift: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DualityReport {
    pub grid: GridInfo,
    pub config: DualityConfig,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub median_residual: f64,
    pub passed: bool,
}

/// Relative residual `|lhs - rhs| / (sum of |terms|)`; zero when every term vanishes.
pub fn duality_residual(
    tg: &TimeGrid,
    h: f64,
    y: &Field,
    f: &StepField,
    phi: &Field,
    g: &Field,
    phi_t: &[f64],
) -> f64 {
    let dt = tg.dt();
    let mut terms = Vec::with_capacity(2 * tg.levels() + 2);
    for n in 0..tg.levels() {
        terms.push(tg.trapezoid_weight(n) * inner(y.level(n), g.level(n), h));
    }
    terms.push(inner(y.last_level(), phi_t, h));
    let split = terms.len();
    for n in 0..tg.steps() {
        terms.push(-dt * inner(f.step(n), phi.level(n + 1), h));
    }
    terms.push(-inner(y.level(0), phi.level(0), h));
    let scale: f64 = terms.iter().map(|t| t.abs()).sum();
    if scale == 0.0 {
        return 0.0;
    }
    let lhs: f64 = terms[..split].iter().sum();
    let rhs: f64 = terms[split..].iter().sum();
    (lhs + rhs).abs() / scale
}

/// Draws `(f, y0, g, phi_T)` with random `ybar` and `nu_tilde` and measures the identity.
pub fn check_duality(
    ops: &DiscreteOperators,
    tg: &TimeGrid,
    cfg: &DualityConfig,
) -> Result<DualityReport> {
    let sg = *ops.grid();
    let (l, t) = (sg.length(), tg.horizon());
    let h = sg.spacing();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut residuals = Vec::with_capacity(cfg.n_samples);
    for _ in 0..cfg.n_samples {
        let ybar = TrigField::random(&mut rng, l, t)
            .levels(&sg, tg)
            .scaled(cfg.ybar_amplitude);
        let nu_tilde = random_nu_tilde(&mut rng, tg, cfg.nu_tilde_amplitude);
        let f = TrigField::random(&mut rng, l, t).steps(&sg, tg, DEFAULT_THETA);
        let y0 = TrigProfile::random(&mut rng, l).sample(&sg);
        let g = TrigField::random(&mut rng, l, t).levels(&sg, tg);
        let phi_t = TrigProfile::random(&mut rng, l).sample(&sg);

        let coeffs = CoefficientSet::new(cfg.nu0, nu_tilde.clone(), Some(ybar.clone()))?;
        let prop = Propagator::new(ops, &coeffs, tg, DEFAULT_THETA)?;
        let y = prop.forward(crate::grid::Source::Steps(&f), &y0)?;
        let phi = if cfg.adjoint_nu_shift == 0.0 {
            prop.adjoint(Some(&g), &phi_t)?
        } else {
            let shifted =
                CoefficientSet::new(cfg.nu0 + cfg.adjoint_nu_shift, nu_tilde, Some(ybar))?;
            Propagator::new(ops, &shifted, tg, DEFAULT_THETA)?.adjoint(Some(&g), &phi_t)?
        };
        residuals.push(duality_residual(tg, h, &y, &f, &phi, &g, &phi_t));
    }
    let (max_residual, median_residual) = max_median(&residuals);
    Ok(DualityReport {
        grid: GridInfo::new(&sg, tg),
        config: *cfg,
        passed: max_residual <= DUALITY_TOLERANCE,
        residuals,
        max_residual,
        median_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, make_time_grid};
    use crate::pde::operators::assemble_operators;

    #[test]
    fn zero_data_has_zero_residual() {
        let sg = make_grid(1.0, 16).unwrap();
        let tg = make_time_grid(1.0, 16).unwrap();
        let z = Field::zeros(&sg, &tg);
        let r = duality_residual(
            &tg,
            sg.spacing(),
            &z,
            &StepField::zeros(&sg, &tg),
            &z,
            &z,
            &[0.0; 15],
        );
        assert_eq!(r, 0.0);
    }

    #[test]
    fn transpose_passes_and_shifted_adjoint_fails() {
        let sg = make_grid(1.0, 24).unwrap();
        let tg = make_time_grid(1.0, 24).unwrap();
        let ops = assemble_operators(&sg);
        let cfg = DualityConfig {
            n_samples: 5,
            ..Default::default()
        };
        let ok = check_duality(&ops, &tg, &cfg).unwrap();
        assert!(ok.passed, "{}", ok.max_residual);
        let bad = check_duality(
            &ops,
            &tg,
            &DualityConfig {
                adjoint_nu_shift: 0.01,
                ..cfg
            },
        )
        .unwrap();
        assert!(bad.max_residual > 1e-6, "{}", bad.max_residual);
        assert!(!bad.passed);
    }

    #[test]
    fn reports_are_reproducible() {
        let sg = make_grid(1.0, 16).unwrap();
        let tg = make_time_grid(1.0, 16).unwrap();
        let ops = assemble_operators(&sg);
        let cfg = DualityConfig {
            n_samples: 3,
            seed: 9,
            ..Default::default()
        };
        let a = check_duality(&ops, &tg, &cfg).unwrap();
        let b = check_duality(&ops, &tg, &cfg).unwrap();
        assert_eq!(a.residuals, b.residuals);
    }
}
