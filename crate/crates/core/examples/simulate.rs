//! Free KdV-Burgers evolution of a sine bump, linear and nonlinear.
//!
//! ```text
//! cargo run --release --example simulate
//! ```

use kdvb::grid::{discrete_norms, l2, make_grid, make_time_grid, Source};
use kdvb::pde::{
    assemble_operators, solve_linear_constant, solve_nonlinear, CoefficientSet, NonlinearOptions,
};
use std::f64::consts::PI;

fn main() -> kdvb::Result<()> {
    let sg = make_grid(1.0, 64)?;
    let tg = make_time_grid(1.0, 128)?;
    let ops = assemble_operators(&sg);
    let coeffs = CoefficientSet::constant(0.1, &tg)?;
    let y0 = sg.sample(|x| 0.5 * (2.0 * PI * x).sin());

    let linear = solve_linear_constant(&ops, 0.1, Source::Zero, &y0, &tg)?;
    let nonlinear = solve_nonlinear(
        &ops,
        &coeffs,
        Source::Zero,
        &y0,
        &tg,
        &NonlinearOptions::default(),
    )?;
    println!("Picard iterations: {}", nonlinear.log.iterations);

    for n in (0..=tg.steps()).step_by(16) {
        println!(
            "t = {:.3}  linear {:.4e}  nonlinear {:.4e}",
            tg.time(n),
            l2(linear.level(n), sg.spacing()),
            l2(nonlinear.field.level(n), sg.spacing())
        );
    }
    let norms = discrete_norms(&nonlinear.field, &ops, &tg, 2)?;
    println!("{norms:#?}");
    Ok(())
}
