//! Local controllability to a free trajectory `ybar`.
//!
//! The deviation `z = y - ybar` obeys the linearized equation with transport
//! `ybar` plus the quadratic term `z z_x`. The loop freezes that term as a
//! source, solves a null-control problem for the linearized system, and
//! repeats with the new `z`. Every sweep reuses one factored system.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{l2, l2_q, Field, Source, StepField};
use crate::pde::nonlinear::{solve_nonlinear, NonlinearOptions};
use crate::pde::operators::CoefficientSet;

use super::variational::{solve_null_control, ControlResult, VariationalSystem};

#[derive(Debug, Clone, Copy)]
pub struct TrackingOptions {
    pub tol: f64,
    pub maxit: usize,
}

impl Default for TrackingOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            maxit: 20,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryControlResult {
    pub control: Field,
    /// `ybar + z` from the last linear solve.
    pub state: Field,
    /// The nonlinear equation re-simulated from `y0` with the computed control.
    pub resimulated: Field,
    pub deviation: Field,
    pub iterations: usize,
    /// `||z^{k+1} - z^k||_{L^2(Q)}` per sweep.
    pub history: Vec<f64>,
    /// `||y(T) - ybar(T)||` of the fixed point.
    pub terminal_gap: f64,
    /// The same for the re-simulated nonlinear state.
    pub terminal_gap_resimulated: f64,
    pub last_solve: ControlResult,
}

/// `-N(z_theta)` per step: the frozen quadratic term as a source.
fn quadratic_source(vsys: &VariationalSystem, z: &Field) -> StepField {
    let theta = vsys.options().theta;
    let zs = z.step_average(theta);
    let mut out = StepField::zeros(vsys.spatial_grid(), vsys.time_grid());
    for n in 0..out.steps() {
        let nl = vsys.ops().nonlinear_term(zs.step(n));
        for (o, c) in out.row_mut(n).iter_mut().zip(nl) {
            *o = -c;
        }
    }
    out
}

/// Steers `y0` onto `ybar`; `vsys` must carry `ybar` as its transport coefficient.
pub fn control_to_trajectory(
    vsys: &VariationalSystem,
    ybar: &Field,
    y0: &[f64],
    opts: &TrackingOptions,
) -> Result<TrajectoryControlResult> {
    let sg = *vsys.spatial_grid();
    let tg = *vsys.time_grid();
    ybar.check_grids(&sg, &tg)?;
    match vsys.coefficients().ybar() {
        Some(b) if b == ybar => {}
        _ => {
            return Err(Error::InvalidArgument(
                "variational system must be assembled with ybar as transport coefficient".into(),
            ))
        }
    }
    if y0.len() != sg.interior() {
        return Err(Error::shape(sg.interior(), y0.len()));
    }
    if opts.maxit == 0 || !(opts.tol >= 0.0) {
        return Err(Error::InvalidArgument(
            "maxit >= 1 and tol >= 0 required".into(),
        ));
    }
    let z0: Vec<f64> = y0.iter().zip(ybar.level(0)).map(|(a, b)| a - b).collect();

    let mut z = Field::zeros(&sg, &tg);
    let mut history = Vec::new();
    let mut first = None::<f64>;
    for k in 1..=opts.maxit {
        let h = quadratic_source(vsys, &z);
        let res = solve_null_control(vsys, &z0, Some(&h))?;
        let dist = l2_q(&res.state.axpy(-1.0, &z)?, &sg, &tg);
        history.push(dist);
        let z1 = *first.get_or_insert(l2_q(&res.state, &sg, &tg));
        z = res.state.clone();
        if !dist.is_finite() {
            break;
        }
        if dist <= opts.tol * z1 {
            return finish(vsys, ybar, y0, z, res, k, history);
        }
    }
    Err(Error::NoConvergence {
        iterations: history.len(),
        residual: history.last().cloned().unwrap_or(f64::NAN),
        context:
            "trajectory fixed point did not converge; initial deviation may exceed the local ball"
                .into(),
    })
}

fn finish(
    vsys: &VariationalSystem,
    ybar: &Field,
    y0: &[f64],
    z: Field,
    res: ControlResult,
    iterations: usize,
    history: Vec<f64>,
) -> Result<TrajectoryControlResult> {
    let sg = *vsys.spatial_grid();
    let tg = *vsys.time_grid();
    let state = ybar.axpy(1.0, &z)?;
    let coeffs = vsys.coefficients();
    let plain = CoefficientSet::new(coeffs.nu0(), coeffs.nu_tilde().to_vec(), None)?;
    let opts = NonlinearOptions {
        theta: vsys.options().theta,
        ..Default::default()
    };
    let forcing = vsys.control_source(&res.control);
    let resimulated = if res.control.is_zero() && z.is_zero() {
        ybar.clone()
    } else {
        solve_nonlinear(vsys.ops(), &plain, Source::Steps(&forcing), y0, &tg, &opts)?.field
    };
    let h = sg.spacing();
    let gap = |f: &Field| {
        let d: Vec<f64> = f
            .last_level()
            .iter()
            .zip(ybar.last_level())
            .map(|(a, b)| a - b)
            .collect();
        l2(&d, h)
    };
    Ok(TrajectoryControlResult {
        control: res.control.clone(),
        terminal_gap: gap(&state),
        terminal_gap_resimulated: gap(&resimulated),
        state,
        resimulated,
        deviation: z,
        iterations,
        history,
        last_solve: res,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DeltaProbe {
    pub delta: f64,
    pub converged: bool,
    pub iterations: usize,
    pub terminal_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DeltaSweep {
    pub probes: Vec<DeltaProbe>,
    /// Largest probed amplitude that converged.
    pub empirical_delta: f64,
}

/// Runs the tracking loop from `ybar(0) + delta * direction / ||direction||`
/// for increasing `delta` until failure, then bisects the bracket.
pub fn delta_sweep(
    vsys: &VariationalSystem,
    ybar: &Field,
    direction: &[f64],
    start: f64,
    stop: f64,
    bisections: usize,
    opts: &TrackingOptions,
) -> Result<DeltaSweep> {
    let h = vsys.spatial_grid().spacing();
    let norm = l2(direction, h);
    if !(norm > 0.0) || !(0.0 < start && start < stop) {
        return Err(Error::InvalidArgument(
            "need a nonzero direction and 0 < start < stop".into(),
        ));
    }
    let mut probes = Vec::new();
    let mut probe = |delta: f64| -> bool {
        let y0: Vec<f64> = ybar
            .level(0)
            .iter()
            .zip(direction)
            .map(|(b, d)| b + delta * d / norm)
            .collect();
        let outcome = control_to_trajectory(vsys, ybar, &y0, opts);
        let (converged, iterations, terminal_gap) = match &outcome {
            Ok(r) => (
                r.terminal_gap_resimulated <= 1e-3 * delta,
                r.iterations,
                r.terminal_gap_resimulated,
            ),
            Err(_) => (false, opts.maxit, f64::NAN),
        };
        probes.push(DeltaProbe {
            delta,
            converged,
            iterations,
            terminal_gap,
        });
        converged
    };
    let mut good = 0.0;
    let mut bad = None;
    let mut delta = start;
    while delta <= stop {
        if probe(delta) {
            good = delta;
            delta *= 2.0;
        } else {
            bad = Some(delta);
            break;
        }
    }
    if let Some(mut hi) = bad {
        let mut lo = good;
        for _ in 0..bisections {
            let mid = 0.5 * (lo + hi);
            if probe(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        good = lo;
    }
    Ok(DeltaSweep {
        probes,
        empirical_delta: good,
    })
}
