//! Weighted norms certifying that a controlled pair decays at the final time.
//!
//! All four quantities use the beta-family weights at step midpoints, where
//! `tau` is finite, plus the initial level for the supremum.
//!
//! The last clause weighs the equation residual `L y - v 1_omega`, which for
//! a solution pair is the source `h`. It is evaluated from `h` itself: the
//! algebraic residual is roundoff that the weight `exp(2 s hat)` would amplify
//! beyond any meaning.

use serde::Serialize;

use crate::error::Result;
use crate::grid::{h1_seminorm_sq, inner, Field, NegativeNormSolver, StepField};
use crate::weights::{WeightFamily, WeightSet};

use super::variational::VariationalSystem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ENormReport {
    /// `||exp(s hat) y||_{L^2(Q)}`.
    pub n1: f64,
    /// `||tau^{-9/2} exp(3 s breve - s hat) v||_{L^2(omega x (0, T))}`.
    pub n2: f64,
    /// `sup_t ||exp(s hat) tau^{-3/2} y||_{L^2}`.
    pub n3_sup: f64,
    /// `||exp(s hat) tau^{-3/2} y||_{L^2 H^1}`.
    pub n3_l2h1: f64,
    /// `||exp(2 s hat) tau^{-5/2} h||_{L^2 H^{-1}}`.
    pub n4: f64,
}

impl ENormReport {
    pub fn as_array(&self) -> [f64; 5] {
        [self.n1, self.n2, self.n3_sup, self.n3_l2h1, self.n4]
    }

    pub fn all_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite() && *v >= 0.0)
    }
}

pub(crate) fn midpoint_weights(vsys: &VariationalSystem) -> Result<WeightSet> {
    let tg = vsys.time_grid();
    WeightSet::new(
        vsys.profile(),
        WeightFamily::Beta,
        &tg.midpoints(),
        tg.horizon(),
        vsys.s(),
        vsys.clamp(),
    )
}

/// `||exp(2 s hat) tau^{-5/2} h||_{L^2(Q)}`, midpoint rule in time.
pub fn weighted_source_norm(vsys: &VariationalSystem, h: &StepField) -> Result<f64> {
    let w = midpoint_weights(vsys)?.source_weight();
    let tg = vsys.time_grid();
    let hs = vsys.spatial_grid().spacing();
    Ok((0..tg.steps())
        .map(|n| {
            let a = inner(h.step(n), h.step(n), hs);
            if a == 0.0 {
                0.0
            } else {
                tg.dt() * w[n] * w[n] * a
            }
        })
        .sum::<f64>()
        .sqrt())
}

/// The weighted norms of a pair `(y, v)` with source `h`.
pub fn verify_e_membership(
    vsys: &VariationalSystem,
    y: &Field,
    v: &Field,
    h: &StepField,
) -> Result<ENormReport> {
    let sg = vsys.spatial_grid();
    let tg = vsys.time_grid();
    y.check_grids(sg, tg)?;
    v.check_grids(sg, tg)?;
    h.check_grids(sg, tg)?;
    let mid = midpoint_weights(vsys)?;
    let state = mid.composite(1.0, 0.0, 0.0);
    let ctrl = mid.control_weight();
    let energy = mid.energy_weight();
    let source = mid.source_weight();
    let start = WeightSet::new(
        vsys.profile(),
        WeightFamily::Beta,
        &[0.0],
        tg.horizon(),
        vsys.s(),
        vsys.clamp(),
    )?
    .energy_weight()[0];

    let hs = sg.spacing();
    let dt = tg.dt();
    let ym = y.step_average(0.5);
    let vm = v.step_average(0.5);
    let neg = NegativeNormSolver::new(vsys.ops())?;
    // products are formed only for nonzero data so that 0 * inf stays 0
    let weighted = |w: f64, sq: f64| if sq == 0.0 { 0.0 } else { w * w * sq };
    let (mut n1, mut n2, mut h1, mut n4) = (0.0, 0.0, 0.0, 0.0);
    let mut sup = weighted(start, inner(y.level(0), y.level(0), hs)).sqrt();
    for n in 0..tg.steps() {
        let u = ym.step(n);
        let l2 = inner(u, u, hs);
        n1 += dt * weighted(state[n], l2);
        n2 += dt * weighted(ctrl[n], inner(vm.step(n), vm.step(n), hs));
        sup = sup.max(weighted(energy[n], l2).sqrt());
        h1 += dt * weighted(energy[n], l2 + h1_seminorm_sq(u, hs));
        n4 += dt * weighted(source[n], neg.norm_sq(h.step(n)));
    }
    Ok(ENormReport {
        n1: n1.sqrt(),
        n2: n2.sqrt(),
        n3_sup: sup,
        n3_l2h1: h1.sqrt(),
        n4: n4.sqrt(),
    })
}

/// Growth of the weighted norms between a time grid and its refinement.
#[derive(Debug, Clone, Serialize)]
pub struct ERefinement {
    pub coarse: ENormReport,
    pub fine: ENormReport,
    /// `fine / coarse` per norm; `1` when both vanish.
    pub ratios: [f64; 5],
}

impl ERefinement {
    pub fn new(coarse: ENormReport, fine: ENormReport) -> Self {
        let c = coarse.as_array();
        let f = fine.as_array();
        let mut ratios = [0.0; 5];
        for i in 0..5 {
            ratios[i] = if c[i] == 0.0 && f[i] == 0.0 {
                1.0
            } else {
                f[i] / c[i]
            };
        }
        Self {
            coarse,
            fine,
            ratios,
        }
    }

    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().cloned().fold(0.0, f64::max)
    }

    /// Every norm grows by at most `limit`.
    pub fn stable(&self, limit: f64) -> bool {
        self.coarse.all_finite() && self.fine.all_finite() && self.max_ratio() <= limit
    }

    /// Some norm grows by more than `limit`.
    pub fn grows(&self, limit: f64) -> bool {
        self.max_ratio() > limit || !self.fine.all_finite()
    }
}
