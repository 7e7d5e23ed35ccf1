//! The null-control bound `||v||_{L^2(Q)} <= C (||y0|| + ||h||_{L^2(Q)})`.
//!
//! Each instance draws `y0` and `h` with independent random amplitudes and
//! records `||v|| / (||y0|| + ||h||)`. A bounded constant shows up as a small
//! spread between the largest and smallest ratio.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::control::{control_norm, solve_null_control, VariationalSystem};
use crate::error::{Error, Result};
use crate::grid::{l2, l2_q_steps};

use super::sampling::{TrigField, TrigProfile};
use super::GridInfo;

#[derive(Debug, Clone, Serialize)]
pub struct ControlBoundReport {
    pub grid: GridInfo,
    pub modes: usize,
    pub seed: u64,
    pub ratios: Vec<f64>,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// `max_ratio / min_ratio`.
    pub spread: f64,
    /// Largest re-simulated terminal norm relative to `||y0|| + ||h||`.
    pub worst_terminal: f64,
}

/// Solves `n_instances` null-control problems on `vsys` with data in the
/// first `modes` Fourier modes. With `with_source` false every `h` vanishes.
pub fn check_control_bound(
    vsys: &VariationalSystem,
    n_instances: usize,
    modes: usize,
    seed: u64,
    with_source: bool,
) -> Result<ControlBoundReport> {
    if n_instances < 2 || modes == 0 {
        return Err(Error::InvalidArgument(
            "need at least 2 instances and 1 mode".into(),
        ));
    }
    let sg = *vsys.spatial_grid();
    let tg = *vsys.time_grid();
    let hs = sg.spacing();
    let theta = vsys.options().theta;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratios = Vec::with_capacity(n_instances);
    let mut worst_terminal = 0.0f64;
    for _ in 0..n_instances {
        let raw = TrigProfile::random_modes(&mut rng, sg.length(), modes).sample(&sg);
        let a = rng.gen_range(0.5..2.0) / l2(&raw, hs);
        let y0: Vec<f64> = raw.iter().map(|v| a * v).collect();
        let h = if with_source {
            let f = TrigField::random_modes(&mut rng, sg.length(), tg.horizon(), modes)
                .steps(&sg, &tg, theta);
            let b = rng.gen_range(0.0..1.0) / l2_q_steps(&f, &sg, &tg);
            Some(f.scaled(b))
        } else {
            None
        };
        let data = l2(&y0, hs) + h.as_ref().map_or(0.0, |f| l2_q_steps(f, &sg, &tg));
        let res = solve_null_control(vsys, &y0, h.as_ref())?;
        ratios.push(control_norm(&res.control, &sg, &tg) / data);
        worst_terminal = worst_terminal.max(res.terminal_norm / data);
    }
    let min_ratio = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(ControlBoundReport {
        grid: GridInfo::new(&sg, &tg),
        modes,
        seed,
        spread: max_ratio / min_ratio,
        ratios,
        min_ratio,
        max_ratio,
        worst_terminal,
    })
}
