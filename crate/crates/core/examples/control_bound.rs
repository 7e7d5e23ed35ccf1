//! Compare control cost with data size over random initial states and
//! sources.
//!
//! ```text
//! cargo run --release --example control_bound
//! ```

use kdvb::control::{assemble_variational_system, VariationalOptions};
use kdvb::grid::{make_grid, make_time_grid};
use kdvb::pde::{assemble_operators, CoefficientSet};
use kdvb::verify::check_control_bound;
use kdvb::weights::{build_spatial_profile, s_for_target, WeightFamily, CONTROL_CLAMP};

fn main() -> kdvb::Result<()> {
    let sg = make_grid(1.0, 64)?;
    let tg = make_time_grid(1.0, 128)?;
    let omega = (0.3, 0.7);
    let profile = build_spatial_profile(1.0, omega, 0.5)?;
    let s = s_for_target(
        &profile,
        WeightFamily::Beta,
        tg.time(tg.steps() - 1),
        1.0,
        150.0,
    )?;
    let vsys = assemble_variational_system(
        &assemble_operators(&sg),
        &CoefficientSet::constant(0.1, &tg)?,
        &tg,
        &profile,
        omega,
        s,
        CONTROL_CLAMP,
        VariationalOptions::default(),
    )?;

    for modes in [2, 4, 8] {
        let rep = check_control_bound(&vsys, 10, modes, 0, true)?;
        println!(
            "{modes} modes: ratio in [{:.3e}, {:.3e}], spread {:.2}, worst terminal {:.2e}",
            rep.min_ratio, rep.max_ratio, rep.spread, rep.worst_terminal
        );
    }
    Ok(())
}
