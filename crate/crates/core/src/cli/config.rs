//! The run configuration: one TOML file, every key optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{make_grid, make_time_grid, Field, SpatialGrid, StepField, TimeGrid};
use crate::pde::nonlinear::{NonlinearMode, NonlinearOptions};
use crate::pde::operators::CoefficientSet;
use crate::weights::{
    build_spatial_profile, s_for_target, CarlemanSpatialProfile, WeightFamily, CONTROL_CLAMP,
};

/// Printed by `--help`.
pub const CONFIG_HELP: &str = "\
CONFIG FILE (TOML, every key optional, unknown keys rejected)

  seed = 0                       seed of every random sample, 0 to 2^63 - 1
  output_dir = \"out\"             overridden by --output-dir, then KDVB_OUTPUT_DIR

  [domain]   L = 1.0  T = 1.0  N = 64  M = 128
  [physics]  nu0 = 0.1
             nu_tilde = \"0\"     expression in t, L, T; or a table
                                [[t0, v0], [t1, v1], ...] interpolated linearly
  [weights]  omega = [0.3, 0.7]  eps = 0.5  clamp = 15.0
             s_target_exponent = 150.0   s from max_x s beta_hat(t_{M-1})
             s = <float>                 explicit s, overrides the target
  [solver]   theta = 0.5  mode = \"picard\" | \"semi_implicit\"  tol = 1e-10  maxit = 200

  [simulate]      y0 = \"sin(2*pi*x/L)\"  forcing = \"0\"  linear = false
  [trajectory]    ybar0 = \"0.05*sin(2*pi*x/L)\"
  [null_control]  y0 = \"sin(2*pi*x/L)\"  normalize = true  source = \"0\"
                  bound_instances = 0   random instances for the control bound
                  bound_modes = 8
  [track]         ybar0 = \"0.05*sin(2*pi*x/L)\"
                  y0 = \"0.05*sin(2*pi*x/L) + 0.01*sqrt(2/L)*sin(2*pi*x/L)\"
                  tol = 1e-8  maxit = 20
  [track.sweep]   direction = \"sin(2*pi*x/L)\"  start = 1e-3  stop = 1.0  bisections = 4
  [verify]        duality_samples = 100  energy_samples = 100  bilinear_samples = 100
                  carleman_samples = 50  carleman_exponent = 100.0
                  carleman_multipliers = [10.0, 30.0, 100.0]
                  mms_base = [32, 64]  mms_levels = 3
                  duality_adjoint_nu_shift = 0.0   nonzero perturbs the adjoint
                                                   (negative control, must fail)

Expressions use x, t, L, T, pi and the usual functions; sources take (x, t).
";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// At most `i64::MAX`, the largest TOML integer.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub domain: DomainConfig,
    pub physics: PhysicsConfig,
    pub weights: WeightsConfig,
    pub solver: SolverConfig,
    pub simulate: SimulateConfig,
    pub trajectory: TrajectoryConfig,
    pub null_control: NullControlConfig,
    pub track: TrackConfig,
    pub verify: VerifyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            domain: DomainConfig::default(),
            physics: PhysicsConfig::default(),
            weights: WeightsConfig::default(),
            solver: SolverConfig::default(),
            simulate: SimulateConfig::default(),
            trajectory: TrajectoryConfig::default(),
            null_control: NullControlConfig::default(),
            track: TrackConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainConfig {
    #[serde(rename = "L")]
    pub length: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "N")]
    pub cells: usize,
    #[serde(rename = "M")]
    pub steps: usize,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self {
            length: 1.0,
            horizon: 1.0,
            cells: 64,
            steps: 128,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NuTilde {
    Expression(String),
    Table(Vec<[f64; 2]>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    pub nu0: f64,
    pub nu_tilde: NuTilde,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            nu0: 0.1,
            nu_tilde: NuTilde::Expression("0".into()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsConfig {
    pub omega: [f64; 2],
    pub eps: f64,
    pub s_target_exponent: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    pub clamp: f64,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        Self {
            omega: [0.3, 0.7],
            eps: 0.5,
            s_target_exponent: 150.0,
            s: None,
            clamp: CONTROL_CLAMP,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub theta: f64,
    pub mode: NonlinearMode,
    pub tol: f64,
    pub maxit: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = NonlinearOptions::default();
        Self {
            theta: d.theta,
            mode: d.mode,
            tol: d.tol,
            maxit: d.maxit,
        }
    }
}

const SINE: &str = "sin(2*pi*x/L)";
const YBAR0: &str = "0.05*sin(2*pi*x/L)";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub y0: String,
    pub forcing: String,
    pub linear: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            y0: SINE.into(),
            forcing: "0".into(),
            linear: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub ybar0: String,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            ybar0: YBAR0.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NullControlConfig {
    pub y0: String,
    /// Rescale `y0` to unit `L^2` norm.
    pub normalize: bool,
    pub source: String,
    pub bound_instances: usize,
    pub bound_modes: usize,
}

impl Default for NullControlConfig {
    fn default() -> Self {
        Self {
            y0: SINE.into(),
            normalize: true,
            source: "0".into(),
            bound_instances: 0,
            bound_modes: 8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackConfig {
    pub ybar0: String,
    pub y0: String,
    pub tol: f64,
    pub maxit: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            ybar0: YBAR0.into(),
            y0: format!("{YBAR0} + 0.01*sqrt(2/L)*{SINE}"),
            tol: 1e-8,
            maxit: 20,
            sweep: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub direction: String,
    pub start: f64,
    pub stop: f64,
    pub bisections: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            direction: SINE.into(),
            start: 1e-3,
            stop: 1.0,
            bisections: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub duality_samples: usize,
    pub energy_samples: usize,
    pub bilinear_samples: usize,
    pub carleman_samples: usize,
    /// `s` of the sweep is `multiplier * s_ref`, with `s_ref` reaching this
    /// exponent at the last midpoint.
    pub carleman_exponent: f64,
    pub carleman_multipliers: Vec<f64>,
    pub mms_base: [usize; 2],
    pub mms_levels: usize,
    pub duality_adjoint_nu_shift: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            duality_samples: 100,
            energy_samples: 100,
            bilinear_samples: 100,
            carleman_samples: 50,
            carleman_exponent: 100.0,
            carleman_multipliers: vec![10.0, 30.0, 100.0],
            mms_base: [32, 64],
            mms_levels: 3,
            duality_adjoint_nu_shift: 0.0,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    /// Checks every key and builds the objects shared by all subcommands.
    pub fn resolve(&self) -> Result<Resolved> {
        if i64::try_from(self.seed).is_err() {
            return Err(Error::Config(format!(
                "seed = {} exceeds 2^63 - 1",
                self.seed
            )));
        }
        let d = &self.domain;
        let sg = make_grid(d.length, d.cells).map_err(config)?;
        let tg = make_time_grid(d.horizon, d.steps).map_err(config)?;
        let s = &self.solver;
        if !(s.theta >= 0.5 && s.theta <= 1.0) {
            return Err(Error::Config(format!(
                "solver.theta = {} must lie in [1/2, 1]",
                s.theta
            )));
        }
        if !(s.tol >= 0.0) || s.maxit == 0 {
            return Err(Error::Config(
                "solver.tol >= 0 and solver.maxit >= 1 required".into(),
            ));
        }
        if !(self.physics.nu0 > 0.0) {
            return Err(Error::Config("physics.nu0 must be positive".into()));
        }
        let m = &self.verify.carleman_multipliers;
        if m.is_empty() || m[0] <= 0.0 || m.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config(
                "verify.carleman_multipliers must be positive and increasing".into(),
            ));
        }
        let nu_tilde = self.nu_tilde_levels(&tg)?;
        let coeffs = CoefficientSet::new(self.physics.nu0, nu_tilde, None).map_err(config)?;
        let w = &self.weights;
        if !(w.clamp > 0.0) {
            return Err(Error::Config("weights.clamp must be positive".into()));
        }
        let omega = (w.omega[0], w.omega[1]);
        let profile = build_spatial_profile(d.length, omega, w.eps).map_err(config)?;
        let s_weight = match w.s {
            Some(s) if s > 0.0 => s,
            Some(s) => return Err(Error::Config(format!("weights.s = {s} must be positive"))),
            None => s_for_target(
                &profile,
                WeightFamily::Beta,
                tg.time(tg.steps() - 1),
                tg.horizon(),
                w.s_target_exponent,
            )
            .map_err(config)?,
        };
        Ok(Resolved {
            sg,
            tg,
            coeffs,
            profile,
            omega,
            s: s_weight,
            nonlinear: NonlinearOptions {
                mode: s.mode,
                tol: s.tol,
                maxit: s.maxit,
                theta: s.theta,
            },
        })
    }

    fn nu_tilde_levels(&self, tg: &TimeGrid) -> Result<Vec<f64>> {
        let times = tg.times();
        let values: Vec<f64> = match &self.physics.nu_tilde {
            NuTilde::Expression(e) => {
                let f = expression(e, &self.domain)?;
                times.iter().map(|&t| f(0.0, t)).collect()
            }
            NuTilde::Table(rows) => {
                if rows.is_empty() || rows.windows(2).any(|w| !(w[0][0] < w[1][0])) {
                    return Err(Error::Config(
                        "physics.nu_tilde table needs increasing times".into(),
                    ));
                }
                times.iter().map(|&t| interpolate(rows, t)).collect()
            }
        };
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config(
                "physics.nu_tilde must be finite and nonnegative".into(),
            ));
        }
        Ok(values)
    }
}

fn config(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

fn interpolate(rows: &[[f64; 2]], t: f64) -> f64 {
    let first = rows[0];
    let last = rows[rows.len() - 1];
    if t <= first[0] {
        return first[1];
    }
    if t >= last[0] {
        return last[1];
    }
    let k = rows.partition_point(|r| r[0] <= t);
    let ([t0, v0], [t1, v1]) = (rows[k - 1], rows[k]);
    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
}

/// Compiles `text` as a function of `(x, t)` with `L`, `T` bound.
pub fn expression(text: &str, d: &DomainConfig) -> Result<impl Fn(f64, f64) -> f64> {
    let expr: meval::Expr = text
        .parse()
        .map_err(|e| Error::Config(format!("cannot parse {text:?}: {e}")))?;
    let mut ctx = meval::Context::new();
    ctx.var("L", d.length).var("T", d.horizon);
    expr.bind2_with_context(ctx, "x", "t")
        .map_err(|e| Error::Config(format!("in {text:?}: {e}")))
}

/// Grids, coefficients and weights shared by the subcommands.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub sg: SpatialGrid,
    pub tg: TimeGrid,
    pub coeffs: CoefficientSet,
    pub profile: CarlemanSpatialProfile,
    pub omega: (f64, f64),
    pub s: f64,
    pub nonlinear: NonlinearOptions,
}

impl Resolved {
    /// `text` at the interior nodes, `t = 0`.
    pub fn profile_of(&self, text: &str, d: &DomainConfig) -> Result<Vec<f64>> {
        let f = expression(text, d)?;
        let v = self.sg.sample(|x| f(x, 0.0));
        if v.iter().any(|a| !a.is_finite()) {
            return Err(Error::Config(format!("{text:?} is not finite on the grid")));
        }
        Ok(v)
    }

    /// `text` at step times; `None` for the literal `0`.
    pub fn source_of(&self, text: &str, d: &DomainConfig) -> Result<Option<StepField>> {
        if text.trim() == "0" {
            return Ok(None);
        }
        let f = expression(text, d)?;
        let out = StepField::from_fn(&self.sg, &self.tg, self.nonlinear.theta, f);
        if !out.all_finite() {
            return Err(Error::Config(format!("{text:?} is not finite on the grid")));
        }
        Ok(Some(out))
    }

    pub fn field_of(&self, text: &str, d: &DomainConfig) -> Result<Field> {
        let f = expression(text, d)?;
        Ok(Field::from_fn(&self.sg, &self.tg, f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c.domain.cells, 64);
        assert_eq!(c.weights.clamp, CONTROL_CLAMP);
        c.resolve().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("[domain]\nK = 3\n").is_err());
        assert!(RunConfig::from_toml("colour = 1\n").is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = RunConfig::from_toml("seed = 7\n[physics]\nnu_tilde = [[0.0, 0.0], [1.0, 0.1]]\n")
            .unwrap();
        let back = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back.to_toml().unwrap(), c.to_toml().unwrap());
        assert_eq!(back.seed, 7);
    }

    #[test]
    fn nu_tilde_table_is_interpolated() {
        let c = RunConfig::from_toml(
            "[domain]\nM = 8\n[physics]\nnu_tilde = [[0.0, 0.0], [1.0, 0.1]]\n",
        )
        .unwrap();
        let r = c.resolve().unwrap();
        assert!((r.coeffs.nu_tilde()[4] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn expressions_see_domain_constants() {
        let c = RunConfig::from_toml("[domain]\nL = 2.0\n").unwrap();
        let f = expression("x / L + t", &c.domain).unwrap();
        assert_eq!(f(1.0, 0.5), 1.0);
        assert!(expression("x +", &c.domain).is_err());
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in [
            "[domain]\nN = 2\n",
            "[solver]\ntheta = 0.2\n",
            "[physics]\nnu0 = -1.0\n",
            "[physics]\nnu_tilde = \"-1\"\n",
            "[weights]\nomega = [0.7, 0.3]\n",
            "[verify]\ncarleman_multipliers = [3.0, 1.0]\n",
        ] {
            let err = RunConfig::from_toml(text).unwrap().resolve().unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{text}: {err}");
        }
    }
}
