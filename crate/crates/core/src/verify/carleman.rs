//! Ratio harness for the two Carleman inequalities of the adjoint problem.
//!
//! [`CarlemanVariant::Global`] uses `alpha = phi(x) xi(t)` with explicit powers of `s`:
//!
//! ```text
//! ∬ (s^5 xi^5 |p|^2 + s^3 xi^3 |p_x|^2 + s xi |p_xx|^2) e^{-4 s hat}
//!     <= C (∬ |g|^2 e^{-2 s hat} + s^9 ∬_omega xi^9 e^{-6 s breve + 2 s hat} |p|^2)
//! ```
//!
//! [`CarlemanVariant::Observability`] uses `beta = phi(x) tau(t)`, drops the
//! powers of `s` and adds `||p(0)||^2` on the left.
//!
//! Space-time integrals use the midpoint rule in time with `p` averaged over
//! each step, so no weight is evaluated at `t = 0` or `t = T`.
//!
//! The adjoint is marched with backward Euler by default. A terminal value
//! that is smooth but not compatible with the pinned glue point excites
//! grid-scale modes that Crank-Nicolson carries undamped to `t = 0`, and the
//! `p_xx` term then grows like `N`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{h1_seminorm_sq, h2_seminorm_sq, inner, Field, TimeGrid};
use crate::pde::operators::{CoefficientSet, DiscreteOperators};
use crate::pde::solver::Propagator;
use crate::weights::{CarlemanSpatialProfile, WeightFamily, WeightSet};

use super::sampling::{TrigField, TrigProfile};
use super::{max_median, GridInfo};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CarlemanVariant {
    Global,
    Observability,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CarlemanConfig {
    pub variant: CarlemanVariant,
    pub s: f64,
    pub clamp: f64,
    pub n_samples: usize,
    pub seed: u64,
    /// Draw a random source `g`; otherwise `g = 0`.
    pub with_source: bool,
    /// Restrict the random terminal value to the observation region.
    pub terminal_in_omega: bool,
    pub theta: f64,
}

impl CarlemanConfig {
    pub fn new(variant: CarlemanVariant, s: f64, clamp: f64) -> Self {
        Self {
            variant,
            s,
            clamp,
            n_samples: 50,
            seed: 0,
            with_source: true,
            terminal_in_omega: false,
            theta: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CarlemanSample {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CarlemanReport {
    pub grid: GridInfo,
    pub config: CarlemanConfig,
    pub omega: (f64, f64),
    /// Midpoint levels whose time factor hit the clamp.
    pub clamped_levels: usize,
    pub samples: Vec<CarlemanSample>,
    /// Samples with `0/0` or a non-finite ratio.
    pub excluded: usize,
    pub max_ratio: f64,
    pub median_ratio: f64,
}

/// Per-step coefficients of the five weighted integrals.
struct Coefficients {
    p0: Vec<f64>,
    p1: Vec<f64>,
    p2: Vec<f64>,
    source: Vec<f64>,
    observation: Vec<f64>,
}

impl Coefficients {
    fn new(w: &WeightSet, variant: CarlemanVariant) -> Self {
        let s = w.s;
        let (k5, k3, k1, k9) = match variant {
            CarlemanVariant::Global => (s.powi(5), s.powi(3), s, s.powi(9)),
            CarlemanVariant::Observability => (1.0, 1.0, 1.0, 1.0),
        };
        let scale = |k: f64, v: Vec<f64>| v.into_iter().map(|x| k * x).collect::<Vec<_>>();
        Self {
            p0: scale(k5, w.composite(-4.0, 0.0, 5.0)),
            p1: scale(k3, w.composite(-4.0, 0.0, 3.0)),
            p2: scale(k1, w.composite(-4.0, 0.0, 1.0)),
            source: w.composite(-2.0, 0.0, 0.0),
            observation: scale(k9, w.composite(2.0, -6.0, 9.0)),
        }
    }
}

pub fn check_carleman(
    ops: &DiscreteOperators,
    coeffs: &CoefficientSet,
    tg: &TimeGrid,
    profile: &CarlemanSpatialProfile,
    cfg: &CarlemanConfig,
) -> Result<CarlemanReport> {
    if cfg.n_samples < 10 {
        return Err(Error::InvalidArgument(
            "at least 10 samples required".into(),
        ));
    }
    let sg = *ops.grid();
    if (profile.length() - sg.length()).abs() > 1e-12 * sg.length() {
        return Err(Error::InvalidArgument(
            "profile and grid lengths differ".into(),
        ));
    }
    let family = match cfg.variant {
        CarlemanVariant::Global => WeightFamily::Alpha,
        CarlemanVariant::Observability => WeightFamily::Beta,
    };
    let weights = WeightSet::new(
        profile,
        family,
        &tg.midpoints(),
        tg.horizon(),
        cfg.s,
        cfg.clamp,
    )?;
    let c = Coefficients::new(&weights, cfg.variant);
    let omega = profile.omega();
    let in_omega = sg.indices_in(omega.0, omega.1);
    let prop = Propagator::new(ops, coeffs, tg, cfg.theta)?;
    let (l, t) = (sg.length(), tg.horizon());
    let h = sg.spacing();
    let dt = tg.dt();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut samples = Vec::with_capacity(cfg.n_samples);
    let mut excluded = 0;
    for _ in 0..cfg.n_samples {
        let g = if cfg.with_source {
            TrigField::random(&mut rng, l, t).levels(&sg, tg)
        } else {
            Field::zeros(&sg, tg)
        };
        let mut phi_t = TrigProfile::random(&mut rng, l).sample(&sg);
        if cfg.terminal_in_omega {
            let keep: Vec<f64> = in_omega.iter().map(|&i| phi_t[i]).collect();
            phi_t.iter_mut().for_each(|v| *v = 0.0);
            for (&i, v) in in_omega.iter().zip(keep) {
                phi_t[i] = v;
            }
        }
        let phi = prop.adjoint(Some(&g), &phi_t)?;
        let pm = phi.step_average(0.5);
        let gm = g.step_average(0.5);
        let (mut lhs, mut rhs) = (0.0, 0.0);
        // products are formed only for nonzero integrands so that 0 * inf stays 0
        let term = |w: f64, q: f64| if q == 0.0 { 0.0 } else { w * q };
        for n in 0..tg.steps() {
            let p = pm.step(n);
            lhs += dt
                * (term(c.p0[n], inner(p, p, h))
                    + term(c.p1[n], h1_seminorm_sq(p, h))
                    + term(c.p2[n], h2_seminorm_sq(p, h)));
            let obs: f64 = h * in_omega.iter().map(|&i| p[i] * p[i]).sum::<f64>();
            rhs += dt
                * (term(c.source[n], inner(gm.step(n), gm.step(n), h))
                    + term(c.observation[n], obs));
        }
        if cfg.variant == CarlemanVariant::Observability {
            lhs += inner(phi.level(0), phi.level(0), h);
        }
        let ratio = lhs / rhs;
        if ratio.is_finite() {
            samples.push(CarlemanSample { lhs, rhs, ratio });
        } else {
            excluded += 1;
        }
    }
    let ratios: Vec<f64> = samples.iter().map(|s| s.ratio).collect();
    let (max_ratio, median_ratio) = max_median(&ratios);
    Ok(CarlemanReport {
        grid: GridInfo::new(&sg, tg),
        config: *cfg,
        omega,
        clamped_levels: weights.clamped_count,
        samples,
        excluded,
        max_ratio,
        median_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, make_time_grid};
    use crate::pde::operators::assemble_operators;
    use crate::weights::{build_spatial_profile, s_for_target, DEFAULT_CLAMP};

    fn setup(
        n: usize,
        m: usize,
    ) -> (
        DiscreteOperators,
        CoefficientSet,
        TimeGrid,
        CarlemanSpatialProfile,
    ) {
        let sg = make_grid(1.0, n).unwrap();
        let tg = make_time_grid(1.0, m).unwrap();
        let coeffs = CoefficientSet::constant(0.1, &tg).unwrap();
        let profile = build_spatial_profile(1.0, (0.3, 0.7), 0.5).unwrap();
        (assemble_operators(&sg), coeffs, tg, profile)
    }

    fn config(variant: CarlemanVariant, s: f64) -> CarlemanConfig {
        CarlemanConfig {
            n_samples: 10,
            seed: 4,
            ..CarlemanConfig::new(variant, s, DEFAULT_CLAMP)
        }
    }

    #[test]
    fn terminal_data_in_omega_gives_finite_ratios() {
        let (ops, coeffs, tg, profile) = setup(16, 16);
        let cfg = CarlemanConfig {
            with_source: false,
            terminal_in_omega: true,
            ..config(CarlemanVariant::Global, 1e-3)
        };
        let rep = check_carleman(&ops, &coeffs, &tg, &profile, &cfg).unwrap();
        assert_eq!(rep.excluded, 0);
        assert!(rep
            .samples
            .iter()
            .all(|s| s.ratio > 0.0 && s.ratio.is_finite()));
    }

    #[test]
    fn both_variants_give_finite_ratios() {
        let (ops, coeffs, tg, profile) = setup(24, 24);
        for (variant, family) in [
            (CarlemanVariant::Global, WeightFamily::Alpha),
            (CarlemanVariant::Observability, WeightFamily::Beta),
        ] {
            let s =
                s_for_target(&profile, family, tg.midpoints()[tg.steps() - 1], 1.0, 50.0).unwrap();
            let rep = check_carleman(&ops, &coeffs, &tg, &profile, &config(variant, s)).unwrap();
            assert_eq!(rep.excluded, 0);
            assert!(
                rep.max_ratio.is_finite() && rep.max_ratio > 0.0,
                "{variant:?}"
            );
        }
    }

    #[test]
    fn too_few_samples_is_rejected() {
        let (ops, coeffs, tg, profile) = setup(16, 16);
        let cfg = CarlemanConfig {
            n_samples: 3,
            ..config(CarlemanVariant::Global, 1e-3)
        };
        assert!(check_carleman(&ops, &coeffs, &tg, &profile, &cfg).is_err());
    }
}
