//! Run the discrete consistency checks: energy identity, duality,
//! bilinear bounds and manufactured-solution convergence.
//!
//! ```text
//! cargo run --release --example verification
//! ```

use kdvb::grid::{make_grid, make_time_grid};
use kdvb::pde::assemble_operators;
use kdvb::verify::{
    check_bilinear_bounds, check_duality, check_energy_kato, mms_convergence, DualityConfig,
    ManufacturedCase, MmsConfig,
};

fn main() -> kdvb::Result<()> {
    let sg = make_grid(1.0, 64)?;
    let tg = make_time_grid(1.0, 128)?;
    let ops = assemble_operators(&sg);

    let energy = check_energy_kato(&ops, 0.1, &tg, 50, 1)?;
    println!(
        "energy: identity residual {:.2e}, max ratio {:.3}, median {:.3}",
        energy.max_identity_residual, energy.max_ratio, energy.median_ratio
    );

    let duality = check_duality(&ops, &tg, &DualityConfig::default())?;
    println!("duality: max residual {:.2e}", duality.max_residual);
    let seeded = check_duality(
        &ops,
        &tg,
        &DualityConfig {
            adjoint_nu_shift: 0.01,
            ..Default::default()
        },
    )?;
    println!(
        "duality with a perturbed adjoint: {:.2e}",
        seeded.max_residual
    );

    let bilinear = check_bilinear_bounds(&ops, &tg, 50, 2)?;
    println!("bilinear: {:?}", bilinear.max);

    for case in [ManufacturedCase::Linear, ManufacturedCase::Nonlinear] {
        let rep = mms_convergence(&MmsConfig {
            case,
            ..Default::default()
        })?;
        println!(
            "{case:?}: grids {:?}, errors {:?}, orders {:.3?}",
            rep.grids, rep.errors, rep.orders
        );
    }
    Ok(())
}
