//! Product and variable-diffusion bounds in the `Y^s` scale for `s = 0, 1`.
//!
//! `Y^0 = C(L^2) ∩ L^2(H^1)` and `Y^1 = C(H^1) ∩ L^2(H^2)`. The ratios are
//! `||(uv)_x||_{L^2 H^{s-1}} / (||u||_{Y^s} ||v||_{Y^s})` and
//! `||nu_tilde v_xx||_{L^2 H^{s-1}} / (||nu_tilde||_inf ||v||_{Y^s})`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::grid::{
    h1_seminorm_sq, h2_seminorm_sq, inner, y0_norm, Field, NegativeNormSolver, TimeGrid,
};
use crate::pde::operators::DiscreteOperators;

use super::sampling::{random_nu_tilde, TrigField};
use super::{max_median, GridInfo};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BilinearRatios {
    pub product_s0: f64,
    pub product_s1: f64,
    pub diffusion_s0: f64,
    pub diffusion_s1: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BilinearReport {
    pub grid: GridInfo,
    pub seed: u64,
    pub samples: Vec<BilinearRatios>,
    pub excluded: usize,
    pub max: BilinearRatios,
    pub median_product_s1: f64,
}

/// `sup_t ||u||_{H^1} + ||u||_{L^2 H^2}`.
fn y1_norm(u: &Field, tg: &TimeGrid, h: f64) -> f64 {
    let mut sup = 0.0f64;
    let mut acc = 0.0;
    for n in 0..tg.levels() {
        let w = u.level(n);
        let l2 = inner(w, w, h);
        let h1 = h1_seminorm_sq(w, h);
        sup = sup.max((l2 + h1).sqrt());
        acc += tg.trapezoid_weight(n) * (l2 + h1 + h2_seminorm_sq(w, h));
    }
    sup + acc.sqrt()
}

/// The four ratios for one pair, or `None` when a denominator vanishes.
pub fn bilinear_ratios(
    ops: &DiscreteOperators,
    tg: &TimeGrid,
    u: &Field,
    v: &Field,
    nu_tilde: &[f64],
) -> Result<Option<BilinearRatios>> {
    let sg = *ops.grid();
    u.check_grids(&sg, tg)?;
    v.check_grids(&sg, tg)?;
    let h = sg.spacing();
    let neg = NegativeNormSolver::new(ops)?;
    let (mut p0, mut p1, mut d0, mut d1) = (0.0, 0.0, 0.0, 0.0);
    #[allow(clippy::needless_range_loop)]
    for n in 0..tg.levels() {
        let w = tg.trapezoid_weight(n);
        let prod: Vec<f64> = u
            .level(n)
            .iter()
            .zip(v.level(n))
            .map(|(a, b)| a * b)
            .collect();
        let dp = ops.apply_d1(&prod);
        p1 += w * inner(&dp, &dp, h);
        p0 += w * neg.norm_sq(&dp);
        let dd: Vec<f64> = ops
            .apply_d2(v.level(n))
            .iter()
            .map(|x| nu_tilde[n] * x)
            .collect();
        d1 += w * inner(&dd, &dd, h);
        d0 += w * neg.norm_sq(&dd);
    }
    let (u0, v0) = (y0_norm(u, &sg, tg), y0_norm(v, &sg, tg));
    let (u1, v1) = (y1_norm(u, tg, h), y1_norm(v, tg, h));
    let nu_inf = nu_tilde.iter().cloned().fold(0.0, f64::max);
    if u0 == 0.0 || v0 == 0.0 || nu_inf == 0.0 {
        return Ok(None);
    }
    Ok(Some(BilinearRatios {
        product_s0: p0.sqrt() / (u0 * v0),
        product_s1: p1.sqrt() / (u1 * v1),
        diffusion_s0: d0.sqrt() / (nu_inf * v0),
        diffusion_s1: d1.sqrt() / (nu_inf * v1),
    }))
}

pub fn check_bilinear_bounds(
    ops: &DiscreteOperators,
    tg: &TimeGrid,
    n_samples: usize,
    seed: u64,
) -> Result<BilinearReport> {
    let sg = *ops.grid();
    let (l, t) = (sg.length(), tg.horizon());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n_samples);
    let mut excluded = 0;
    for _ in 0..n_samples {
        let u = TrigField::random(&mut rng, l, t).levels(&sg, tg);
        let v = TrigField::random(&mut rng, l, t).levels(&sg, tg);
        let nu = random_nu_tilde(&mut rng, tg, 1.0);
        match bilinear_ratios(ops, tg, &u, &v, &nu)? {
            Some(r) => samples.push(r),
            None => excluded += 1,
        }
    }
    let col = |f: fn(&BilinearRatios) -> f64| -> Vec<f64> { samples.iter().map(f).collect() };
    let max = BilinearRatios {
        product_s0: max_median(&col(|r| r.product_s0)).0,
        product_s1: max_median(&col(|r| r.product_s1)).0,
        diffusion_s0: max_median(&col(|r| r.diffusion_s0)).0,
        diffusion_s1: max_median(&col(|r| r.diffusion_s1)).0,
    };
    let median_product_s1 = max_median(&col(|r| r.product_s1)).1;
    Ok(BilinearReport {
        grid: GridInfo::new(&sg, tg),
        seed,
        samples,
        excluded,
        max,
        median_product_s1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, make_time_grid};
    use crate::pde::operators::assemble_operators;
    use std::f64::consts::PI;

    #[test]
    fn zero_factor_is_excluded() {
        let sg = make_grid(1.0, 16).unwrap();
        let tg = make_time_grid(1.0, 8).unwrap();
        let ops = assemble_operators(&sg);
        let z = Field::zeros(&sg, &tg);
        let v = Field::from_fn(&sg, &tg, |x, _| (2.0 * PI * x).sin());
        let nu = vec![1.0; tg.levels()];
        assert!(bilinear_ratios(&ops, &tg, &z, &v, &nu).unwrap().is_none());
    }

    #[test]
    fn single_mode_matches_closed_form() {
        let sg = make_grid(1.0, 128).unwrap();
        let tg = make_time_grid(1.0, 8).unwrap();
        let ops = assemble_operators(&sg);
        let u = Field::from_fn(&sg, &tg, |x, _| (2.0 * PI * x).sin());
        let nu = vec![1.0; tg.levels()];
        let r = bilinear_ratios(&ops, &tg, &u, &u, &nu).unwrap().unwrap();
        let k2 = 4.0 * PI * PI;
        // (u^2)_x = 2 pi sin(4 pi x): ||.||_{L^2(Q)}^2 = 2 pi^2
        let prod = (2.0 * PI * PI).sqrt();
        let y1 = (0.5 * (1.0 + k2)).sqrt() + (0.5 * (1.0 + k2 + k2 * k2)).sqrt();
        let expected = prod / (y1 * y1);
        assert!(
            (r.product_s1 / expected - 1.0).abs() < 0.05,
            "{} vs {expected}",
            r.product_s1
        );
        // u_xx = -k2 u
        let diff = k2 * 0.5f64.sqrt();
        let expected = diff / y1;
        assert!(
            (r.diffusion_s1 / expected - 1.0).abs() < 0.05,
            "{} vs {expected}",
            r.diffusion_s1
        );
    }

    #[test]
    fn random_ratios_are_finite_and_stable() {
        let mut maxima = Vec::new();
        for n in [32, 64] {
            let sg = make_grid(1.0, n).unwrap();
            let tg = make_time_grid(1.0, 16).unwrap();
            let ops = assemble_operators(&sg);
            let rep = check_bilinear_bounds(&ops, &tg, 10, 5).unwrap();
            assert_eq!(rep.excluded, 0);
            assert!(rep.max.product_s1.is_finite() && rep.max.diffusion_s0.is_finite());
            maxima.push(rep.max.product_s1);
        }
        assert!((maxima[1] / maxima[0] - 1.0).abs() < 0.5, "{maxima:?}");
    }
}
