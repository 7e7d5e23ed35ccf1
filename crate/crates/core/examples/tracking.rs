//! Steer a perturbed initial state onto the free trajectory from
//! `0.05 sin(2 pi x)`, then probe how large the perturbation may grow.
//!
//! ```text
//! cargo run --release --example tracking
//! ```

use kdvb::control::{
    assemble_variational_system, control_to_trajectory, delta_sweep, TrackingOptions,
    VariationalOptions,
};
use kdvb::grid::{l2, make_grid, make_time_grid};
use kdvb::pde::nonlinear::uncontrolled_trajectory;
use kdvb::pde::{assemble_operators, CoefficientSet};
use kdvb::weights::{build_spatial_profile, s_for_target, WeightFamily, CONTROL_CLAMP};
use std::f64::consts::PI;

fn main() -> kdvb::Result<()> {
    let sg = make_grid(1.0, 64)?;
    let tg = make_time_grid(1.0, 128)?;
    let ops = assemble_operators(&sg);
    let omega = (0.3, 0.7);
    let profile = build_spatial_profile(1.0, omega, 0.5)?;
    let coeffs = CoefficientSet::constant(0.1, &tg)?;

    let ybar0 = sg.sample(|x| 0.05 * (2.0 * PI * x).sin());
    let ybar = uncontrolled_trajectory(&ops, &coeffs, &ybar0, &tg)?;
    let s = s_for_target(
        &profile,
        WeightFamily::Beta,
        tg.time(tg.steps() - 1),
        1.0,
        150.0,
    )?;
    let vsys = assemble_variational_system(
        &ops,
        &coeffs.with_ybar(Some(ybar.clone()))?,
        &tg,
        &profile,
        omega,
        s,
        CONTROL_CLAMP,
        VariationalOptions::default(),
    )?;

    let dir = sg.sample(|x| (2.0 * PI * x).cos() - 1.0 + 0.5 * (2.0 * PI * x).sin());
    let scale = 1e-2 / l2(&dir, sg.spacing());
    let y0: Vec<f64> = ybar0.iter().zip(&dir).map(|(b, d)| b + scale * d).collect();
    let opts = TrackingOptions::default();
    let res = control_to_trajectory(&vsys, &ybar, &y0, &opts)?;
    println!("iterations: {}", res.iterations);
    println!("fixed-point history: {:?}", res.history);
    println!(
        "terminal gap {:.3e}, re-simulated {:.3e}",
        res.terminal_gap, res.terminal_gap_resimulated
    );

    let sweep = delta_sweep(&vsys, &ybar, &dir, 1e-2, 1.0, 4, &opts)?;
    for p in &sweep.probes {
        println!(
            "delta = {:.4e}  converged {}  gap {:.3e}",
            p.delta, p.converged, p.terminal_gap
        );
    }
    println!("largest converged amplitude: {:.4e}", sweep.empirical_delta);
    Ok(())
}
