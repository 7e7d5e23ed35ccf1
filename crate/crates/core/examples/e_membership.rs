//! Weighted norms of a controlled and an uncontrolled state under time
//! refinement: the controlled ones settle, the free state's blow up.
//!
//! ```text
//! cargo run --release --example e_membership
//! ```

use kdvb::control::{
    assemble_variational_system, solve_null_control, verify_e_membership, ERefinement,
    VariationalOptions,
};
use kdvb::grid::{l2, make_grid, make_time_grid, Field, Source, StepField};
use kdvb::pde::{assemble_operators, CoefficientSet};
use kdvb::weights::{build_spatial_profile, s_for_target, WeightFamily};
use std::f64::consts::PI;

fn main() -> kdvb::Result<()> {
    let sg = make_grid(1.0, 64)?;
    let ops = assemble_operators(&sg);
    let omega = (0.3, 0.7);
    let profile = build_spatial_profile(1.0, omega, 0.5)?;
    let target = 8.75;
    let fine = make_time_grid(1.0, 256)?;
    let s = s_for_target(
        &profile,
        WeightFamily::Beta,
        fine.midpoints()[255],
        1.0,
        target,
    )?;
    let raw = sg.sample(|x| (2.0 * PI * x).sin());
    let norm = l2(&raw, sg.spacing());
    let y0: Vec<f64> = raw.iter().map(|v| v / norm).collect();

    let (mut controlled, mut free) = (Vec::new(), Vec::new());
    for m in [128, 256] {
        let tg = make_time_grid(1.0, m)?;
        let vsys = assemble_variational_system(
            &ops,
            &CoefficientSet::constant(0.1, &tg)?,
            &tg,
            &profile,
            omega,
            s,
            target,
            VariationalOptions::default(),
        )?;
        controlled.push(solve_null_control(&vsys, &y0, None)?.e_norms);
        let y = vsys.propagator().forward(Source::Zero, &y0)?;
        free.push(verify_e_membership(
            &vsys,
            &y,
            &Field::zeros(&sg, &tg),
            &StepField::zeros(&sg, &tg),
        )?);
    }
    let c = ERefinement::new(controlled[0], controlled[1]);
    let f = ERefinement::new(free[0], free[1]);
    println!("controlled M=128: {:?}", c.coarse);
    println!("controlled M=256: {:?}", c.fine);
    println!(
        "controlled ratios {:.3?}, stable: {}",
        c.ratios,
        c.stable(1.5)
    );
    println!(
        "uncontrolled ratios {:.3?}, grows: {}",
        f.ratios,
        f.grows(2.0)
    );
    Ok(())
}
