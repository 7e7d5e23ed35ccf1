//! Drive a unit-norm initial state to rest with a control supported in
//! `omega = (0.3, 0.7)`.
//!
//! ```text
//! cargo run --release --example null_control
//! ```

use kdvb::control::{assemble_variational_system, solve_null_control, VariationalOptions};
use kdvb::grid::{l2, make_grid, make_time_grid};
use kdvb::pde::{assemble_operators, CoefficientSet};
use kdvb::weights::{build_spatial_profile, s_for_target, WeightFamily, CONTROL_CLAMP};
use std::f64::consts::PI;

fn main() -> kdvb::Result<()> {
    let (length, horizon) = (1.0, 1.0);
    let sg = make_grid(length, 64)?;
    let tg = make_time_grid(horizon, 128)?;
    let ops = assemble_operators(&sg);
    let coeffs = CoefficientSet::constant(0.1, &tg)?;
    let omega = (0.3, 0.7);
    let profile = build_spatial_profile(length, omega, 0.5)?;
    let s = s_for_target(
        &profile,
        WeightFamily::Beta,
        tg.time(tg.steps() - 1),
        horizon,
        150.0,
    )?;

    let vsys = assemble_variational_system(
        &ops,
        &coeffs,
        &tg,
        &profile,
        omega,
        s,
        CONTROL_CLAMP,
        VariationalOptions::default(),
    )?;

    let raw = sg.sample(|x| (2.0 * PI * x / length).sin());
    let norm = l2(&raw, sg.spacing());
    let y0: Vec<f64> = raw.iter().map(|v| v / norm).collect();
    let res = solve_null_control(&vsys, &y0, None)?;

    println!(
        "s = {s:.6e}, clamped weights = {}",
        res.stats.clamped_weights
    );
    println!("solver: {:?}", res.stats);
    println!("terminal norm (re-simulated) = {:.3e}", res.terminal_norm);
    println!(
        "terminal norm (algebraic)    = {:.3e}",
        res.terminal_norm_algebraic
    );
    println!("control norm                 = {:.4}", res.control_norm);
    println!(
        "energy identity: {:.6e} vs {:.6e} (rel. defect {:.2e})",
        res.identity_lhs,
        res.identity_rhs,
        res.identity_defect()
    );
    println!("E-norms: {:?}", res.e_norms);
    for n in (0..=tg.steps()).step_by(16) {
        println!(
            "t = {:.3}  ||y|| = {:.3e}  ||v|| = {:.3e}",
            tg.time(n),
            l2(res.resimulated.level(n), sg.spacing()),
            l2(res.control.level(n), sg.spacing())
        );
    }
    Ok(())
}
