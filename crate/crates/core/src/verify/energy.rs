//! The energy estimate of the constant-coefficient problem.
//!
//! For random `(y0, f)` the ratio
//! `(||y||_{L^inf L^2} + ||y||_{L^2 H^1}) / (||y0|| + ||f||_{L^1 L^2})` is
//! recorded. With `f = 0` Crank-Nicolson satisfies
//! `||y^{n+1}||^2 - ||y^n||^2 = 2 dt h <(-D3 + nu0 D2) y_mid, y_mid>` exactly,
//! and the per-step residual of that identity is reported as well.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::grid::{inner, l2, y0_norm, Field, Source, TimeGrid};
use crate::pde::operators::{dissipativity_pairing, DiscreteOperators};
use crate::pde::solver::Propagator;

use super::sampling::{TrigField, TrigProfile};
use super::{max_median, GridInfo};

#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    pub grid: GridInfo,
    pub nu0: f64,
    pub seed: u64,
    pub ratios: Vec<f64>,
    pub excluded: usize,
    pub max_ratio: f64,
    pub median_ratio: f64,
    /// Largest per-step defect of the energy identity, relative to `||y0||^2`.
    pub max_identity_residual: f64,
}

/// Worst relative defect of the discrete energy identity along a free solution.
pub(crate) fn energy_identity_residual(
    ops: &DiscreteOperators,
    nu0: f64,
    y: &Field,
    dt: f64,
) -> Result<f64> {
    let h = ops.grid().spacing();
    let scale = inner(y.level(0), y.level(0), h);
    if scale == 0.0 {
        return Ok(0.0);
    }
    let mid = y.step_average(0.5);
    let mut worst = 0.0f64;
    for n in 0..mid.steps() {
        let a = inner(y.level(n + 1), y.level(n + 1), h);
        let b = inner(y.level(n), y.level(n), h);
        let p = dissipativity_pairing(ops, nu0, mid.step(n))?;
        worst = worst.max((a - b - 2.0 * dt * p).abs() / scale);
    }
    Ok(worst)
}

pub fn check_energy_kato(
    ops: &DiscreteOperators,
    nu0: f64,
    tg: &TimeGrid,
    n_samples: usize,
    seed: u64,
) -> Result<EnergyReport> {
    let sg = *ops.grid();
    let (l, t) = (sg.length(), tg.horizon());
    let h = sg.spacing();
    let prop = Propagator::constant(ops, nu0, tg, 0.5)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratios = Vec::with_capacity(n_samples);
    let mut excluded = 0;
    let mut worst = 0.0f64;
    for _ in 0..n_samples {
        let y0 = TrigProfile::random(&mut rng, l).sample(&sg);
        let f = TrigField::random(&mut rng, l, t).steps(&sg, tg, 0.5);
        let y = prop.forward(Source::Steps(&f), &y0)?;
        let f_l1: f64 = (0..tg.steps()).map(|n| tg.dt() * l2(f.step(n), h)).sum();
        let den = l2(&y0, h) + f_l1;
        let num = y0_norm(&y, &sg, tg);
        if den > 0.0 && (num / den).is_finite() {
            ratios.push(num / den);
        } else {
            excluded += 1;
        }
        let free = prop.forward(Source::Zero, &y0)?;
        worst = worst.max(energy_identity_residual(ops, nu0, &free, tg.dt())?);
    }
    let (max_ratio, median_ratio) = max_median(&ratios);
    Ok(EnergyReport {
        grid: GridInfo::new(&sg, tg),
        nu0,
        seed,
        ratios,
        excluded,
        max_ratio,
        median_ratio,
        max_identity_residual: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, make_time_grid};
    use crate::pde::operators::assemble_operators;

    #[test]
    fn zero_initial_state_has_zero_residual() {
        let sg = make_grid(1.0, 16).unwrap();
        let tg = make_time_grid(1.0, 16).unwrap();
        let ops = assemble_operators(&sg);
        let r = energy_identity_residual(&ops, 0.1, &Field::zeros(&sg, &tg), tg.dt()).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn identity_is_exact_and_ratio_stable() {
        let mut maxima = Vec::new();
        for (n, m) in [(32, 32), (64, 64)] {
            let sg = make_grid(1.0, n).unwrap();
            let tg = make_time_grid(1.0, m).unwrap();
            let ops = assemble_operators(&sg);
            let rep = check_energy_kato(&ops, 0.1, &tg, 10, 3).unwrap();
            assert!(
                rep.max_identity_residual <= 1e-12,
                "{}",
                rep.max_identity_residual
            );
            assert_eq!(rep.excluded, 0);
            maxima.push(rep.max_ratio);
        }
        let q = maxima[1] / maxima[0];
        assert!((1.0 / 1.5..=1.5).contains(&q), "{maxima:?}");
    }
}
