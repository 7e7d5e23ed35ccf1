//! Build the spatial weight profile, validate it and tabulate the time
//! factors of both weight families.
//!
//! ```text
//! cargo run --release --example weights
//! ```

use kdvb::grid::make_time_grid;
use kdvb::weights::{
    build_spatial_profile, eval_alpha_weights, eval_beta_weights, s_for_target,
    validate_spatial_profile, WeightFamily, DEFAULT_CLAMP,
};

fn main() -> kdvb::Result<()> {
    let p = build_spatial_profile(1.0, (0.3, 0.7), 0.5)?;
    let report = validate_spatial_profile(&p, 2001)?;
    println!("{report:#?}");
    println!("all checks pass: {}", report.all_pass());
    println!(
        "c1 = {:.6}, c2 = {:.6}, min {:.6}, max {:.6}",
        p.c1(),
        p.c2(),
        p.min(),
        p.max()
    );
    for x in [0.0, 0.15, 0.3, 0.5, 0.7, 0.85, 1.0] {
        println!(
            "x = {x:.2}  phi = {:.6}  phi' = {:+.6}",
            p.value(x),
            p.derivative(x, 1)
        );
    }

    let tg = make_time_grid(1.0, 16)?;
    let s = s_for_target(&p, WeightFamily::Beta, tg.time(15), 1.0, 150.0)?;
    let alpha = eval_alpha_weights(&p, &tg, s, DEFAULT_CLAMP)?;
    let beta = eval_beta_weights(&p, &tg, s, DEFAULT_CLAMP)?;
    println!("s = {s:.4e}");
    for n in 0..tg.levels() {
        println!(
            "t = {:.4}  alpha factor {:.4e}  beta factor {:.4e}  beta hat {:.4e}",
            tg.time(n),
            alpha.factor[n],
            beta.factor[n],
            beta.hat[n]
        );
    }
    Ok(())
}
