//! Sample the ratio of the two sides of both Carleman estimates over an
//! increasing sweep of the weight parameter `s`.
//!
//! ```text
//! cargo run --release --example carleman
//! ```

use kdvb::grid::{make_grid, make_time_grid};
use kdvb::pde::{assemble_operators, CoefficientSet};
use kdvb::verify::{check_carleman, CarlemanConfig, CarlemanVariant};
use kdvb::weights::{build_spatial_profile, s_for_target, WeightFamily, DEFAULT_CLAMP};

fn main() -> kdvb::Result<()> {
    let sg = make_grid(1.0, 64)?;
    let tg = make_time_grid(1.0, 128)?;
    let ops = assemble_operators(&sg);
    let coeffs = CoefficientSet::constant(0.1, &tg)?;
    let p = build_spatial_profile(1.0, (0.3, 0.7), 0.5)?;
    let last_mid = tg.midpoints()[tg.steps() - 1];

    for (variant, family) in [
        (CarlemanVariant::Global, WeightFamily::Alpha),
        (CarlemanVariant::Observability, WeightFamily::Beta),
    ] {
        let s_ref = s_for_target(&p, family, last_mid, 1.0, 100.0)?;
        for m in [1.0, 10.0, 30.0, 100.0] {
            let cfg = CarlemanConfig::new(variant, m * s_ref, DEFAULT_CLAMP);
            let rep = check_carleman(&ops, &coeffs, &tg, &p, &cfg)?;
            println!(
                "{variant:?}  s = {:.3e}  max ratio {:.4e}  median {:.4e}  excluded {}",
                m * s_ref,
                rep.max_ratio,
                rep.median_ratio,
                rep.excluded
            );
        }
    }
    Ok(())
}
