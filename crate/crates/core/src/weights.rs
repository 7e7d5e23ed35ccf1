//! Carleman weights.
//!
//! The spatial profile `phi` is a cubic on `[0, l1]` and on `[l2, L]`, glued
//! across the control region `omega = (l1, l2)` by the degree-9 polynomial
//! matching value and the first four derivatives at both ends. The additive
//! constant `C2` is chosen so that `2 max phi < 3 min phi` with a margin.
//!
//! Two time factors are provided. `xi(t) = 1 / (t^2 (T - t)^2)` is singular at
//! both ends of `[0, T]`; `tau(t) = 1 / ell(t)^2` is bounded near `t = 0` and
//! singular only at `t = T`. A [`WeightSet`] samples one of them on a list of
//! times and evaluates the exponential composites in the log domain, with the
//! time factor capped so that `s * max phi * factor <= clamp`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{SpatialGrid, TimeGrid};

const DENSE_SAMPLES: usize = 20_000;

/// The piecewise spatial weight `phi` on `[0, L]`.
#[derive(Debug, Clone, Serialize)]
pub struct CarlemanSpatialProfile {
    length: f64,
    omega: (f64, f64),
    eps: f64,
    c1: f64,
    c2: f64,
    /// Monomial coefficients in `x`, lowest degree first.
    left: [f64; 4],
    right: [f64; 4],
    /// Monomial coefficients in `u = (x - l1) / (l2 - l1)`.
    bridge: [f64; 10],
    max: f64,
    min: f64,
}

/// `k`-th derivative of `sum_j c_j x^j`, by Horner's rule.
fn poly_derivative(coeffs: &[f64], x: f64, k: usize) -> f64 {
    let mut acc = 0.0;
    for (j, &c) in coeffs.iter().enumerate().skip(k).rev() {
        let falling: f64 = (0..k).map(|i| (j - i) as f64).product();
        acc = acc * x + c * falling;
    }
    acc
}

impl CarlemanSpatialProfile {
    /// Profile with an explicitly chosen `C2`; [`build_spatial_profile`] picks it.
    pub fn with_c2(length: f64, omega: (f64, f64), eps: f64, c2: f64) -> Result<Self> {
        let (l1, l2) = omega;
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "L must be positive, got {length}"
            )));
        }
        if !(0.0 < l1 && l1 < l2 && l2 < length) {
            return Err(Error::InvalidArgument(format!(
                "omega = ({l1}, {l2}) must satisfy 0 < l1 < l2 < L = {length}"
            )));
        }
        if !(0.0 < eps && eps < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "eps must lie in (0, 1), got {eps}"
            )));
        }
        if !c2.is_finite() {
            return Err(Error::InvalidArgument("C2 must be finite".into()));
        }
        let c1 = 2.0 * eps * length.powi(3) + length + c2;
        let left = [c1, -1.0, -3.0 * l1, eps];
        let right = [c2, 1.0 + 3.0 * eps * length * length, 0.0, -eps];

        let width = l2 - l1;
        let mut a = DMatrix::<f64>::zeros(10, 10);
        let mut b = DVector::<f64>::zeros(10);
        for k in 0..5 {
            let scale = width.powi(k as i32);
            // u = 0 row: only the monomial u^k survives
            let falling0: f64 = (1..=k).map(|i| i as f64).product();
            a[(k, k)] = falling0;
            b[k] = poly_derivative(&left, l1, k) * scale;
            for j in k..10 {
                let falling: f64 = (0..k).map(|i| (j - i) as f64).product();
                a[(5 + k, j)] = falling;
            }
            b[5 + k] = poly_derivative(&right, l2, k) * scale;
        }
        let sol = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::ConstructionFailed("singular Hermite bridge system".into()))?;
        let mut bridge = [0.0; 10];
        bridge.copy_from_slice(sol.as_slice());

        let mut p = Self {
            length,
            omega,
            eps,
            c1,
            c2,
            left,
            right,
            bridge,
            max: f64::NAN,
            min: f64::NAN,
        };
        let (lo, hi) = p.sampled_range(DENSE_SAMPLES);
        p.min = lo;
        p.max = hi;
        Ok(p)
    }

    fn sampled_range(&self, samples: usize) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..=samples {
            let x = self.length * i as f64 / samples as f64;
            let v = self.value(x);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        for x in [self.omega.0, self.omega.1] {
            let v = self.value(x);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn omega(&self) -> (f64, f64) {
        self.omega
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    pub fn left_coefficients(&self) -> [f64; 4] {
        self.left
    }

    pub fn right_coefficients(&self) -> [f64; 4] {
        self.right
    }

    pub fn bridge_coefficients(&self) -> [f64; 10] {
        self.bridge
    }

    /// `max phi` over a dense sample of `[0, L]`.
    pub fn max(&self) -> f64 {
        self.max
    }

    /// `min phi` over a dense sample of `[0, L]`.
    pub fn min(&self) -> f64 {
        self.min
    }

    fn bridge_derivative(&self, x: f64, k: usize) -> f64 {
        let (l1, l2) = self.omega;
        let w = l2 - l1;
        poly_derivative(&self.bridge, (x - l1) / w, k) / w.powi(k as i32)
    }

    /// `k`-th derivative of `phi` at `x`.
    pub fn derivative(&self, x: f64, k: usize) -> f64 {
        let (l1, l2) = self.omega;
        if x <= l1 {
            poly_derivative(&self.left, x, k)
        } else if x >= l2 {
            poly_derivative(&self.right, x, k)
        } else {
            self.bridge_derivative(x, k)
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.derivative(x, 0)
    }

    /// Largest relative jump of derivatives `0..=4` across `l1` and `l2`.
    pub fn junction_mismatch(&self) -> f64 {
        let (l1, l2) = self.omega;
        let mut worst = 0.0f64;
        for k in 0..5 {
            let pairs = [
                (
                    poly_derivative(&self.left, l1, k),
                    self.bridge_derivative(l1, k),
                ),
                (
                    poly_derivative(&self.right, l2, k),
                    self.bridge_derivative(l2, k),
                ),
            ];
            for (a, b) in pairs {
                worst = worst.max((a - b).abs() / a.abs().max(b.abs()).max(1.0));
            }
        }
        worst
    }

    /// `phi` at all `N + 1` grid nodes, boundary nodes included.
    pub fn sample_nodes(&self, sg: &SpatialGrid) -> Vec<f64> {
        (0..=sg.cells()).map(|i| self.value(sg.node(i))).collect()
    }
}

/// Builds the profile and picks `C2 = max(1, 2M - 3m) * 1.1 + 1`, where `M`,
/// `m` are the extremes of the `C2`-free part.
pub fn build_spatial_profile(
    length: f64,
    omega: (f64, f64),
    eps: f64,
) -> Result<CarlemanSpatialProfile> {
    let base = CarlemanSpatialProfile::with_c2(length, omega, eps, 0.0)?;
    let c2 = (2.0 * base.max() - 3.0 * base.min()).max(1.0) * 1.1 + 1.0;
    let p = CarlemanSpatialProfile::with_c2(length, omega, eps, c2)?;
    let report = validate_spatial_profile(&p, DENSE_SAMPLES)?;
    if !report.all_pass() {
        return Err(Error::ConstructionFailed(format!(
            "profile failed validation: {report:?}"
        )));
    }
    Ok(p)
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub samples: usize,
    pub min: f64,
    pub max: f64,
    pub positive: bool,
    pub endpoint_gap: f64,
    pub equal_endpoints: bool,
    pub slope_left: f64,
    pub slope_right: f64,
    pub slopes_ok: bool,
    /// Largest sampled `phi''` outside `omega`.
    pub max_curvature_outside: f64,
    pub concave_outside: bool,
    pub junction_mismatch: f64,
    pub smooth_junctions: bool,
    pub ratio_ok: bool,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.positive
            && self.equal_endpoints
            && self.slopes_ok
            && self.concave_outside
            && self.smooth_junctions
            && self.ratio_ok
    }
}

pub const JUNCTION_TOLERANCE: f64 = 1e-8;

pub fn validate_spatial_profile(
    p: &CarlemanSpatialProfile,
    samples: usize,
) -> Result<ValidationReport> {
    if samples < 100 {
        return Err(Error::InvalidArgument(format!(
            "need at least 100 samples, got {samples}"
        )));
    }
    let (min, max) = p.sampled_range(samples);
    let length = p.length;
    let (l1, l2) = p.omega;
    let scale = max.abs().max(1.0);
    let endpoint_gap = p.value(0.0) - p.value(length);
    let slope_left = p.derivative(0.0, 1);
    let slope_right = p.derivative(length, 1);

    // phi'' = 6 (eps x - l1) on [0, l1] and -6 eps x on [l2, L]: maxima at x = l1 and x = l2
    let analytic = (6.0 * (p.eps * l1 - l1)).max(-6.0 * p.eps * l2);
    let mut sampled = f64::NEG_INFINITY;
    for i in 0..=samples {
        let x = length * i as f64 / samples as f64;
        if x <= l1 || x >= l2 {
            sampled = sampled.max(p.derivative(x, 2));
        }
    }
    let max_curvature_outside = analytic.max(sampled);
    let junction_mismatch = p.junction_mismatch();
    Ok(ValidationReport {
        samples,
        min,
        max,
        positive: min > 0.0,
        endpoint_gap,
        equal_endpoints: endpoint_gap.abs() <= 1e-12 * scale,
        slope_left,
        slope_right,
        slopes_ok: slope_left < 0.0
            && slope_right > 0.0
            && (slope_left.abs() - slope_right.abs()).abs() <= 1e-12,
        max_curvature_outside,
        concave_outside: max_curvature_outside < 0.0,
        junction_mismatch,
        smooth_junctions: junction_mismatch <= JUNCTION_TOLERANCE,
        ratio_ok: 2.0 * max < 3.0 * min,
    })
}

/// `ell(t)` and `ell'(t)`: `T^2 / 4` on `[0, T/2]`, `t (T - t)` on `[T/2, T]`.
///
/// The `C^1` cubic bridge on `(T/4, T/2)` joins equal values with zero slopes
/// and is therefore the constant `T^2 / 4`.
pub fn ell_function(t: f64, horizon: f64) -> Result<(f64, f64)> {
    if !(horizon > 0.0 && (0.0..=horizon).contains(&t)) {
        return Err(Error::InvalidArgument(format!(
            "t = {t} outside [0, T = {horizon}]"
        )));
    }
    if t <= 0.5 * horizon {
        Ok((0.25 * horizon * horizon, 0.0))
    } else {
        Ok((t * (horizon - t), horizon - 2.0 * t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightFamily {
    /// `xi(t) = 1 / (t^2 (T - t)^2)`.
    Alpha,
    /// `tau(t) = 1 / ell(t)^2`.
    Beta,
}

impl WeightFamily {
    pub fn factor(self, t: f64, horizon: f64) -> Result<f64> {
        match self {
            WeightFamily::Alpha => {
                if !(0.0..=horizon).contains(&t) {
                    return Err(Error::InvalidArgument(format!("t = {t} outside [0, T]")));
                }
                let d = t * (horizon - t);
                Ok(if d == 0.0 {
                    f64::INFINITY
                } else {
                    1.0 / (d * d)
                })
            }
            WeightFamily::Beta => {
                let (l, _) = ell_function(t, horizon)?;
                Ok(if l == 0.0 {
                    f64::INFINITY
                } else {
                    1.0 / (l * l)
                })
            }
        }
    }
}

/// Time samples of a weight family and its composites.
#[derive(Debug, Clone, Serialize)]
pub struct WeightSet {
    pub family: WeightFamily,
    pub s: f64,
    pub clamp: f64,
    pub times: Vec<f64>,
    /// Raw time factor (`xi` or `tau`), possibly infinite.
    pub factor: Vec<f64>,
    /// Factor capped at `clamp / (s max phi)`.
    pub factor_clamped: Vec<f64>,
    /// `max_x phi(x) * factor(t)`.
    pub hat: Vec<f64>,
    /// `min_x phi(x) * factor(t)`.
    pub breve: Vec<f64>,
    pub clamped_count: usize,
    pub phi_max: f64,
    pub phi_min: f64,
}

impl WeightSet {
    pub fn new(
        p: &CarlemanSpatialProfile,
        family: WeightFamily,
        times: &[f64],
        horizon: f64,
        s: f64,
        clamp: f64,
    ) -> Result<Self> {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "s must be positive, got {s}"
            )));
        }
        if !(clamp > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "clamp must be positive, got {clamp}"
            )));
        }
        let cap = clamp / (s * p.max());
        let mut factor = Vec::with_capacity(times.len());
        let mut factor_clamped = Vec::with_capacity(times.len());
        let mut clamped_count = 0;
        for &t in times {
            let f = family.factor(t, horizon)?;
            let fc = if f > cap {
                clamped_count += 1;
                cap
            } else {
                f
            };
            factor.push(f);
            factor_clamped.push(fc);
        }
        Ok(Self {
            family,
            s,
            clamp,
            times: times.to_vec(),
            hat: factor.iter().map(|f| p.max() * f).collect(),
            breve: factor.iter().map(|f| p.min() * f).collect(),
            factor,
            factor_clamped,
            clamped_count,
            phi_max: p.max(),
            phi_min: p.min(),
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `exp(s (a hat + b breve)) factor^power` at sample `n`, with the clamped factor.
    ///
    /// An infinite factor (only possible with `clamp = inf`) is resolved by the
    /// limit of the expression.
    pub fn composite_at(&self, n: usize, a: f64, b: f64, power: f64) -> f64 {
        let f = self.factor_clamped[n];
        let c = a * self.phi_max + b * self.phi_min;
        if f.is_infinite() {
            let sign = if c != 0.0 { c } else { power };
            return if sign < 0.0 {
                0.0
            } else if sign > 0.0 {
                f64::INFINITY
            } else {
                1.0
            };
        }
        (self.s * c * f + power * f.ln()).exp()
    }

    pub fn composite(&self, a: f64, b: f64, power: f64) -> Vec<f64> {
        (0..self.len())
            .map(|n| self.composite_at(n, a, b, power))
            .collect()
    }

    /// `exp(-2 s hat)`.
    pub fn state_weight(&self) -> Vec<f64> {
        self.composite(-2.0, 0.0, 0.0)
    }

    /// `exp(-6 s breve + 2 s hat) factor^9`.
    pub fn observation_weight(&self) -> Vec<f64> {
        self.composite(2.0, -6.0, 9.0)
    }

    /// `exp(2 s hat) factor^{-5/2}`.
    pub fn source_weight(&self) -> Vec<f64> {
        self.composite(2.0, 0.0, -2.5)
    }

    /// `exp(s hat) factor^{-3/2}`.
    pub fn energy_weight(&self) -> Vec<f64> {
        self.composite(1.0, 0.0, -1.5)
    }

    /// `exp(3 s breve - s hat) factor^{-9/2}`.
    pub fn control_weight(&self) -> Vec<f64> {
        self.composite(-1.0, 3.0, -4.5)
    }

    /// `phi(x_i) * factor(t_n)` on grid nodes `0..=N`.
    pub fn node_weights(&self, p: &CarlemanSpatialProfile, sg: &SpatialGrid, n: usize) -> Vec<f64> {
        p.sample_nodes(sg)
            .iter()
            .map(|v| v * self.factor[n])
            .collect()
    }
}

pub fn eval_alpha_weights(
    p: &CarlemanSpatialProfile,
    tg: &TimeGrid,
    s: f64,
    clamp: f64,
) -> Result<WeightSet> {
    WeightSet::new(p, WeightFamily::Alpha, &tg.times(), tg.horizon(), s, clamp)
}

pub fn eval_beta_weights(
    p: &CarlemanSpatialProfile,
    tg: &TimeGrid,
    s: f64,
    clamp: f64,
) -> Result<WeightSet> {
    WeightSet::new(p, WeightFamily::Beta, &tg.times(), tg.horizon(), s, clamp)
}

/// `s` such that `s * max phi * factor(t_ref) = target`.
pub fn s_for_target(
    p: &CarlemanSpatialProfile,
    family: WeightFamily,
    t_ref: f64,
    horizon: f64,
    target: f64,
) -> Result<f64> {
    let f = family.factor(t_ref, horizon)?;
    if !(f.is_finite() && target > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "cannot target exponent {target} at t = {t_ref}"
        )));
    }
    Ok(target / (p.max() * f))
}

pub const DEFAULT_CLAMP: f64 = 200.0;

/// Clamp for null-control solves. Above roughly 20 the optimal control
/// exceeds what double precision can steer back to rest.
pub const CONTROL_CLAMP: f64 = 15.0;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, make_time_grid};

    fn reference() -> CarlemanSpatialProfile {
        build_spatial_profile(1.0, (0.3, 0.7), 0.5).unwrap()
    }

    #[test]
    fn boundary_slopes_and_values() {
        let p = reference();
        assert!((p.derivative(0.0, 1) + 1.0).abs() <= 1e-12);
        assert!((p.derivative(1.0, 1) - 1.0).abs() <= 1e-12);
        assert!((p.value(0.0) - p.value(1.0)).abs() <= 1e-12);
        assert!(validate_spatial_profile(&p, 1000).unwrap().all_pass());
        assert!(2.0 * p.max() < 3.0 * p.min());
    }

    #[test]
    fn small_c2_breaks_the_ratio_condition() {
        // C2 = 0: max 2, bridge minimum about 1.3525, so 2 max < 3 min holds by 0.057
        let p = CarlemanSpatialProfile::with_c2(1.0, (0.3, 0.7), 0.5, 0.0).unwrap();
        let r = validate_spatial_profile(&p, 1000).unwrap();
        assert!((r.max - 2.0).abs() < 1e-12);
        assert!((r.min - 1.352485689933449).abs() < 1e-4);
        assert!(r.ratio_ok && r.positive);

        let p = CarlemanSpatialProfile::with_c2(1.0, (0.3, 0.7), 0.5, -1.0).unwrap();
        let r = validate_spatial_profile(&p, 1000).unwrap();
        assert!(!r.ratio_ok);
        assert!(r.smooth_junctions && r.slopes_ok && r.concave_outside);
        let p = CarlemanSpatialProfile::with_c2(1.0, (0.3, 0.7), 0.5, -1.5).unwrap();
        assert!(!validate_spatial_profile(&p, 1000).unwrap().positive);
    }

    #[test]
    fn report_flags_are_consistent() {
        let p = CarlemanSpatialProfile::with_c2(1.0, (0.05, 0.97), 0.99, 3.0).unwrap();
        let r = validate_spatial_profile(&p, 500).unwrap();
        assert_eq!(r.positive, r.min > 0.0);
        assert_eq!(r.ratio_ok, 2.0 * r.max < 3.0 * r.min);
        assert_eq!(
            r.smooth_junctions,
            r.junction_mismatch <= JUNCTION_TOLERANCE
        );
    }

    #[test]
    fn rejects_bad_profile_input() {
        assert!(build_spatial_profile(1.0, (0.7, 0.3), 0.5).is_err());
        assert!(build_spatial_profile(1.0, (0.0, 0.3), 0.5).is_err());
        assert!(build_spatial_profile(1.0, (0.3, 0.7), 1.0).is_err());
        assert!(validate_spatial_profile(&reference(), 10).is_err());
    }

    #[test]
    fn ell_values() {
        let t = 2.0;
        assert_eq!(ell_function(t / 8.0, t).unwrap().0, t * t / 4.0);
        assert!((ell_function(0.75 * t, t).unwrap().0 - 3.0 * t * t / 16.0).abs() < 1e-15);
        assert_eq!(ell_function(t, t).unwrap().0, 0.0);
        assert!(ell_function(-0.1, t).is_err());
        for junction in [0.25 * t, 0.5 * t] {
            let d = 1e-7;
            let (_, dl) = ell_function(junction - d, t).unwrap();
            let (_, dr) = ell_function(junction + d, t).unwrap();
            assert!((dl - dr).abs() < 1e-6);
            let (vl, _) = ell_function(junction, t).unwrap();
            assert!((vl - t * t / 4.0).abs() < 1e-15);
        }
    }

    #[test]
    fn time_factors() {
        assert_eq!(WeightFamily::Alpha.factor(0.5, 1.0).unwrap(), 16.0);
        assert_eq!(WeightFamily::Beta.factor(0.0, 1.0).unwrap(), 16.0);
        assert!(WeightFamily::Alpha.factor(0.0, 1.0).unwrap().is_infinite());
        assert!(WeightFamily::Beta.factor(1.0, 1.0).unwrap().is_infinite());
    }

    #[test]
    fn weight_set_invariants() {
        let p = reference();
        let tg = make_time_grid(1.0, 64).unwrap();
        let w = eval_beta_weights(&p, &tg, 2.0, DEFAULT_CLAMP).unwrap();
        let expected = tg
            .times()
            .iter()
            .filter(|&&t| {
                let l = if t <= 0.5 { 0.25 } else { t * (1.0 - t) };
                2.0 * p.max() / (l * l) > DEFAULT_CLAMP
            })
            .count();
        assert!(expected >= 1);
        assert_eq!(w.clamped_count, expected);
        let sg = make_grid(1.0, 40).unwrap();
        for n in 0..tg.levels() {
            if w.factor[n].is_finite() {
                assert!(2.0 * w.hat[n] < 3.0 * w.breve[n]);
                let nodes = w.node_weights(&p, &sg, n);
                let m = nodes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert!(m <= w.hat[n]);
            }
            assert!(w.observation_weight()[n] >= 0.0);
        }
        // e^{-2 s hat} decreases on [T/2, T)
        let sw = w.state_weight();
        for n in 32..64 {
            assert!(sw[n + 1] <= sw[n]);
        }
        let a = eval_alpha_weights(&p, &tg, 2.0, DEFAULT_CLAMP).unwrap();
        assert!(a.clamped_count >= 2);
        assert!((a.state_weight()[0] / (-2.0 * DEFAULT_CLAMP).exp() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clamp_is_transparent_for_moderate_exponents() {
        let p = reference();
        let times: Vec<f64> = (1..50).map(|i| i as f64 / 100.0).collect();
        let a = WeightSet::new(&p, WeightFamily::Beta, &times, 1.0, 0.5, f64::INFINITY).unwrap();
        let b = WeightSet::new(&p, WeightFamily::Beta, &times, 1.0, 0.5, 1e300).unwrap();
        assert_eq!(a.state_weight(), b.state_weight());
        assert_eq!(a.observation_weight(), b.observation_weight());
        assert_eq!(a.clamped_count, 0);
    }

    #[test]
    fn infinite_factor_takes_limits() {
        let p = reference();
        let w = WeightSet::new(&p, WeightFamily::Beta, &[1.0], 1.0, 1.0, f64::INFINITY).unwrap();
        assert_eq!(w.state_weight()[0], 0.0);
        assert_eq!(w.observation_weight()[0], 0.0);
        assert_eq!(w.source_weight()[0], f64::INFINITY);
    }
}
