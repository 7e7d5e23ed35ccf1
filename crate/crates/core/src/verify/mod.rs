//! Empirical checks of the identities and inequalities the solvers rely on.
//!
//! Every check draws band-limited random data from a seeded generator, so a
//! report is a pure function of its inputs. Constants are measured, never
//! compared against analytical values.

pub mod bilinear;
pub mod carleman;
pub mod control_bound;
pub mod duality;
pub mod energy;
pub mod mms;
mod sampling;

pub use bilinear::{bilinear_ratios, check_bilinear_bounds, BilinearRatios, BilinearReport};
pub use carleman::{
    check_carleman, CarlemanConfig, CarlemanReport, CarlemanSample, CarlemanVariant,
};
pub use control_bound::{check_control_bound, ControlBoundReport};
pub use duality::{check_duality, duality_residual, DualityConfig, DualityReport};
pub use energy::{check_energy_kato, EnergyReport};
pub use mms::{mms_convergence, ConvergenceReport, ManufacturedCase, MmsConfig};

use serde::Serialize;

/// Largest and median of the finite entries.
pub(crate) fn max_median(values: &[f64]) -> (f64, f64) {
    let mut v: Vec<f64> = values.iter().cloned().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    let median = if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    };
    (v[n - 1], median)
}

/// Grid metadata attached to every report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridInfo {
    pub length: f64,
    pub horizon: f64,
    pub cells: usize,
    pub steps: usize,
}

impl GridInfo {
    pub fn new(sg: &crate::grid::SpatialGrid, tg: &crate::grid::TimeGrid) -> Self {
        Self {
            length: sg.length(),
            horizon: tg.horizon(),
            cells: sg.cells(),
            steps: tg.steps(),
        }
    }
}
