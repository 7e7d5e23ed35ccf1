//! One function per subcommand. Each writes its artifacts into `out` and
//! returns whether its checks passed.

use std::path::Path;

use serde::Serialize;

use crate::control::{
    assemble_variational_system, control_norm, control_to_trajectory, delta_sweep,
    solve_null_control, ENormReport, SolverStats, TrackingOptions, VariationalOptions,
    VariationalSystem,
};
use crate::error::Result;
use crate::grid::{discrete_norms, l2, Field, NormReport, Source};
use crate::io::{table_csv, write_field_csv, write_json};
use crate::pde::nonlinear::solve_nonlinear;
use crate::pde::operators::{assemble_operators, DiscreteOperators};
use crate::pde::solver::Propagator;
use crate::verify::{
    check_bilinear_bounds, check_carleman, check_control_bound, check_duality, check_energy_kato,
    mms_convergence, BilinearReport, CarlemanConfig, CarlemanReport, CarlemanVariant,
    ControlBoundReport, ConvergenceReport, DualityConfig, DualityReport, EnergyReport, GridInfo,
    ManufacturedCase, MmsConfig,
};
use crate::weights::{
    s_for_target, validate_spatial_profile, ValidationReport, WeightFamily, WeightSet,
};

use super::config::{Resolved, RunConfig};
use super::Suite;

/// Largest per-step energy-identity defect accepted by the energy suite.
pub const ENERGY_IDENTITY_TOLERANCE: f64 = 1e-12;

#[derive(Serialize)]
struct FieldReport<'a> {
    grid: GridInfo,
    norms: NormReport,
    iterations: Option<usize>,
    label: &'a str,
}

fn write_field_report(
    out: &Path,
    name: &str,
    field: &Field,
    ops: &DiscreteOperators,
    r: &Resolved,
    iterations: Option<usize>,
) -> Result<()> {
    write_field_csv(&out.join(format!("{name}.csv")), field, &r.sg, &r.tg)?;
    let report = FieldReport {
        grid: GridInfo::new(&r.sg, &r.tg),
        norms: discrete_norms(field, ops, &r.tg, 2)?,
        iterations,
        label: name,
    };
    write_json(&out.join("norms.json"), "norms", &report)
}

pub fn simulate(cfg: &RunConfig, r: &Resolved, out: &Path) -> Result<bool> {
    let ops = assemble_operators(&r.sg);
    let y0 = r.profile_of(&cfg.simulate.y0, &cfg.domain)?;
    let forcing = r.source_of(&cfg.simulate.forcing, &cfg.domain)?;
    let src = forcing.as_ref().map_or(Source::Zero, Source::Steps);
    let (field, iterations) = if cfg.simulate.linear {
        let prop = Propagator::new(&ops, &r.coeffs, &r.tg, r.nonlinear.theta)?;
        (prop.forward(src, &y0)?, None)
    } else {
        let sol = solve_nonlinear(&ops, &r.coeffs, src, &y0, &r.tg, &r.nonlinear)?;
        (sol.field, Some(sol.log.iterations))
    };
    write_field_report(out, "field", &field, &ops, r, iterations)?;
    Ok(true)
}

fn free_trajectory(
    cfg: &RunConfig,
    r: &Resolved,
    ops: &DiscreteOperators,
    ybar0: &str,
) -> Result<(Field, usize)> {
    let y0 = r.profile_of(ybar0, &cfg.domain)?;
    let sol = solve_nonlinear(ops, &r.coeffs, Source::Zero, &y0, &r.tg, &r.nonlinear)?;
    Ok((sol.field, sol.log.iterations))
}

pub fn trajectory(cfg: &RunConfig, r: &Resolved, out: &Path) -> Result<bool> {
    let ops = assemble_operators(&r.sg);
    let (ybar, iterations) = free_trajectory(cfg, r, &ops, &cfg.trajectory.ybar0)?;
    write_field_report(out, "ybar", &ybar, &ops, r, Some(iterations))?;
    Ok(true)
}

fn variational(
    cfg: &RunConfig,
    r: &Resolved,
    ops: &DiscreteOperators,
    coeffs: &crate::pde::operators::CoefficientSet,
) -> Result<VariationalSystem> {
    let opts = VariationalOptions {
        theta: r.nonlinear.theta,
        ..Default::default()
    };
    assemble_variational_system(
        ops,
        coeffs,
        &r.tg,
        &r.profile,
        r.omega,
        r.s,
        cfg.weights.clamp,
        opts,
    )
}

#[derive(Serialize)]
struct NullControlReport {
    grid: GridInfo,
    s: f64,
    clamp: f64,
    omega: (f64, f64),
    y0_norm: f64,
    terminal_norm: f64,
    terminal_norm_algebraic: f64,
    control_norm: f64,
    identity_lhs: f64,
    identity_rhs: f64,
    identity_defect: f64,
    e_norms: ENormReport,
    stats: SolverStats,
    control_bound: Option<ControlBoundReport>,
}

pub fn null_control(cfg: &RunConfig, r: &Resolved, out: &Path) -> Result<bool> {
    let ops = assemble_operators(&r.sg);
    let vsys = variational(cfg, r, &ops, &r.coeffs)?;
    let nc = &cfg.null_control;
    let mut y0 = r.profile_of(&nc.y0, &cfg.domain)?;
    let h = r.sg.spacing();
    if nc.normalize {
        let n = l2(&y0, h);
        if n > 0.0 {
            y0.iter_mut().for_each(|v| *v /= n);
        }
    }
    let source = r.source_of(&nc.source, &cfg.domain)?;
    let res = solve_null_control(&vsys, &y0, source.as_ref())?;
    for (name, f) in [
        ("control", &res.control),
        ("state", &res.state),
        ("resimulated", &res.resimulated),
        ("multiplier", &res.multiplier),
    ] {
        write_field_csv(&out.join(format!("{name}.csv")), f, &r.sg, &r.tg)?;
    }
    let control_bound = if nc.bound_instances > 0 {
        Some(check_control_bound(
            &vsys,
            nc.bound_instances,
            nc.bound_modes,
            cfg.seed,
            true,
        )?)
    } else {
        None
    };
    let report = NullControlReport {
        grid: GridInfo::new(&r.sg, &r.tg),
        s: r.s,
        clamp: cfg.weights.clamp,
        omega: r.omega,
        y0_norm: l2(&y0, h),
        terminal_norm: res.terminal_norm,
        terminal_norm_algebraic: res.terminal_norm_algebraic,
        control_norm: control_norm(&res.control, &r.sg, &r.tg),
        identity_lhs: res.identity_lhs,
        identity_rhs: res.identity_rhs,
        identity_defect: res.identity_defect(),
        e_norms: res.e_norms,
        stats: res.stats.clone(),
        control_bound,
    };
    write_json(&out.join("report.json"), "null_control", &report)?;
    Ok(true)
}

#[derive(Serialize)]
struct TrackReport {
    grid: GridInfo,
    s: f64,
    clamp: f64,
    deviation_norm: f64,
    iterations: usize,
    history: Vec<f64>,
    terminal_gap: f64,
    terminal_gap_resimulated: f64,
    control_norm: f64,
    control_is_zero: bool,
}

pub fn track(cfg: &RunConfig, r: &Resolved, out: &Path) -> Result<bool> {
    let ops = assemble_operators(&r.sg);
    let (ybar, _) = free_trajectory(cfg, r, &ops, &cfg.track.ybar0)?;
    let coeffs = r.coeffs.clone().with_ybar(Some(ybar.clone()))?;
    let vsys = variational(cfg, r, &ops, &coeffs)?;
    let y0 = r.profile_of(&cfg.track.y0, &cfg.domain)?;
    let opts = TrackingOptions {
        tol: cfg.track.tol,
        maxit: cfg.track.maxit,
    };
    let res = control_to_trajectory(&vsys, &ybar, &y0, &opts)?;
    for (name, f) in [
        ("control", &res.control),
        ("state", &res.state),
        ("resimulated", &res.resimulated),
        ("ybar", &ybar),
    ] {
        write_field_csv(&out.join(format!("{name}.csv")), f, &r.sg, &r.tg)?;
    }
    let dev: Vec<f64> = y0.iter().zip(ybar.level(0)).map(|(a, b)| a - b).collect();
    let report = TrackReport {
        grid: GridInfo::new(&r.sg, &r.tg),
        s: r.s,
        clamp: cfg.weights.clamp,
        deviation_norm: l2(&dev, r.sg.spacing()),
        iterations: res.iterations,
        history: res.history.clone(),
        terminal_gap: res.terminal_gap,
        terminal_gap_resimulated: res.terminal_gap_resimulated,
        control_norm: control_norm(&res.control, &r.sg, &r.tg),
        control_is_zero: res.control.is_zero(),
    };
    write_json(&out.join("report.json"), "track", &report)?;
    if let Some(sw) = &cfg.track.sweep {
        let direction = r.profile_of(&sw.direction, &cfg.domain)?;
        let sweep = delta_sweep(
            &vsys,
            &ybar,
            &direction,
            sw.start,
            sw.stop,
            sw.bisections,
            &opts,
        )?;
        write_json(&out.join("sweep.json"), "delta_sweep", &sweep)?;
    }
    Ok(true)
}

#[derive(Serialize)]
struct CarlemanSuite {
    reference_exponent: f64,
    multipliers: Vec<f64>,
    global: Vec<CarlemanReport>,
    observability: Vec<CarlemanReport>,
    /// Max ratio does not increase along the sweep, per variant.
    global_sweep_non_increasing: bool,
    observability_sweep_non_increasing: bool,
    passed: bool,
}

fn carleman_suite(cfg: &RunConfig, r: &Resolved, ops: &DiscreteOperators) -> Result<CarlemanSuite> {
    let v = &cfg.verify;
    let last_mid = r.tg.midpoints()[r.tg.steps() - 1];
    let run = |variant, family| -> Result<Vec<CarlemanReport>> {
        let s_ref = s_for_target(
            &r.profile,
            family,
            last_mid,
            r.tg.horizon(),
            v.carleman_exponent,
        )?;
        v.carleman_multipliers
            .iter()
            .map(|m| {
                let c = CarlemanConfig {
                    n_samples: v.carleman_samples,
                    seed: cfg.seed,
                    ..CarlemanConfig::new(variant, m * s_ref, crate::weights::DEFAULT_CLAMP)
                };
                check_carleman(ops, &r.coeffs, &r.tg, &r.profile, &c)
            })
            .collect()
    };
    let global = run(CarlemanVariant::Global, WeightFamily::Alpha)?;
    let observability = run(CarlemanVariant::Observability, WeightFamily::Beta)?;
    let finite = |reps: &[CarlemanReport]| {
        reps.iter()
            .all(|x| x.max_ratio.is_finite() && x.max_ratio > 0.0)
    };
    let non_increasing =
        |reps: &[CarlemanReport]| reps.windows(2).all(|w| w[1].max_ratio <= w[0].max_ratio);
    let global_sweep_non_increasing = non_increasing(&global);
    let observability_sweep_non_increasing = non_increasing(&observability);
    Ok(CarlemanSuite {
        reference_exponent: v.carleman_exponent,
        multipliers: v.carleman_multipliers.clone(),
        passed: finite(&global)
            && finite(&observability)
            && global_sweep_non_increasing
            && observability_sweep_non_increasing,
        global,
        observability,
        global_sweep_non_increasing,
        observability_sweep_non_increasing,
    })
}

#[derive(Serialize)]
struct Passed<T: Serialize> {
    passed: bool,
    #[serde(flatten)]
    report: T,
}

#[derive(Serialize)]
struct MmsSuite {
    linear: ConvergenceReport,
    nonlinear: ConvergenceReport,
    passed: bool,
}

fn energy_passed(rep: &EnergyReport) -> bool {
    rep.max_ratio.is_finite() && rep.max_identity_residual <= ENERGY_IDENTITY_TOLERANCE
}

fn bilinear_passed(rep: &BilinearReport) -> bool {
    let m = &rep.max;
    !rep.samples.is_empty()
        && [m.product_s0, m.product_s1, m.diffusion_s0, m.diffusion_s1]
            .iter()
            .all(|v| v.is_finite())
}

/// Runs the selected suites, one JSON report each, plus `summary.json`.
pub fn verify(cfg: &RunConfig, r: &Resolved, suite: Suite, out: &Path) -> Result<bool> {
    let ops = assemble_operators(&r.sg);
    let v = &cfg.verify;
    let wants = |s: Suite| suite == Suite::All || suite == s;
    let mut summary: Vec<(&str, bool)> = Vec::new();

    if wants(Suite::Duality) {
        let dc = DualityConfig {
            n_samples: v.duality_samples,
            seed: cfg.seed,
            nu0: cfg.physics.nu0,
            adjoint_nu_shift: v.duality_adjoint_nu_shift,
            ..Default::default()
        };
        let rep: DualityReport = check_duality(&ops, &r.tg, &dc)?;
        summary.push(("duality", rep.passed));
        write_json(&out.join("duality.json"), "verify_duality", &rep)?;
    }
    if wants(Suite::Energy) {
        let rep = check_energy_kato(&ops, cfg.physics.nu0, &r.tg, v.energy_samples, cfg.seed)?;
        let passed = energy_passed(&rep);
        summary.push(("energy", passed));
        write_json(
            &out.join("energy.json"),
            "verify_energy",
            &Passed {
                passed,
                report: rep,
            },
        )?;
    }
    if wants(Suite::Bilinear) {
        let rep = check_bilinear_bounds(&ops, &r.tg, v.bilinear_samples, cfg.seed)?;
        let passed = bilinear_passed(&rep);
        summary.push(("bilinear", passed));
        write_json(
            &out.join("bilinear.json"),
            "verify_bilinear",
            &Passed {
                passed,
                report: rep,
            },
        )?;
    }
    if wants(Suite::Carleman) {
        let rep = carleman_suite(cfg, r, &ops)?;
        summary.push(("carleman", rep.passed));
        write_json(&out.join("carleman.json"), "verify_carleman", &rep)?;
    }
    if wants(Suite::Mms) {
        let base = MmsConfig {
            length: cfg.domain.length,
            horizon: cfg.domain.horizon,
            nu0: cfg.physics.nu0,
            base: (v.mms_base[0], v.mms_base[1]),
            levels: v.mms_levels,
            ..Default::default()
        };
        let linear = mms_convergence(&MmsConfig {
            case: ManufacturedCase::Linear,
            ..base
        })?;
        let nonlinear = mms_convergence(&MmsConfig {
            case: ManufacturedCase::Nonlinear,
            ..base
        })?;
        let passed = linear.passed && nonlinear.passed;
        summary.push(("mms", passed));
        write_json(
            &out.join("mms.json"),
            "verify_mms",
            &MmsSuite {
                linear,
                nonlinear,
                passed,
            },
        )?;
    }
    let all = summary.iter().all(|(_, p)| *p);
    let suites: std::collections::BTreeMap<&str, bool> = summary.into_iter().collect();
    write_json(
        &out.join("summary.json"),
        "verify_summary",
        &serde_json::json!({ "suites": suites, "passed": all }),
    )?;
    Ok(all)
}

#[derive(Serialize)]
struct ProfileReport {
    s: f64,
    clamp: f64,
    omega: (f64, f64),
    phi_min: f64,
    phi_max: f64,
    clamped_levels: usize,
    validation: ValidationReport,
}

pub fn weights_export(cfg: &RunConfig, r: &Resolved, out: &Path) -> Result<bool> {
    let tg = &r.tg;
    let ws = WeightSet::new(
        &r.profile,
        WeightFamily::Beta,
        &tg.times(),
        tg.horizon(),
        r.s,
        cfg.weights.clamp,
    )?;
    let csv = table_csv(
        &[
            "t",
            "tau",
            "beta_hat",
            "beta_breve",
            "state",
            "observation",
            "source",
            "energy",
            "control",
        ],
        &[
            tg.times(),
            ws.factor.clone(),
            ws.hat.clone(),
            ws.breve.clone(),
            ws.state_weight(),
            ws.observation_weight(),
            ws.source_weight(),
            ws.energy_weight(),
            ws.control_weight(),
        ],
    )?;
    std::fs::write(out.join("weights.csv"), csv)?;
    let xs: Vec<f64> = (0..=r.sg.cells()).map(|i| r.sg.node(i)).collect();
    let phi: Vec<f64> = xs.iter().map(|&x| r.profile.value(x)).collect();
    std::fs::write(
        out.join("profile.csv"),
        table_csv(&["x", "phi"], &[xs, phi])?,
    )?;
    let validation = validate_spatial_profile(&r.profile, 2000)?;
    let passed = validation.all_pass();
    let report = ProfileReport {
        s: r.s,
        clamp: cfg.weights.clamp,
        omega: r.omega,
        phi_min: r.profile.min(),
        phi_max: r.profile.max(),
        clamped_levels: ws.clamped_count,
        validation,
    };
    write_json(&out.join("profile.json"), "weights", &report)?;
    Ok(passed)
}
