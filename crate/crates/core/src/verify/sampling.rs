//! Band-limited random data compatible with the pinned-periodic grid.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use crate::grid::{Field, SpatialGrid, StepField, TimeGrid};

/// Number of spatial modes in every random sample.
pub(crate) const MODES: usize = 8;

/// `sum_k a_k sin(2 pi k x / L) + b_k (cos(2 pi k x / L) - 1)` with `|a_k|, |b_k| <= 1/k`.
#[derive(Debug, Clone)]
pub(crate) struct TrigProfile {
    sin: Vec<f64>,
    cos: Vec<f64>,
    length: f64,
}

impl TrigProfile {
    pub(crate) fn random(rng: &mut ChaCha8Rng, length: f64) -> Self {
        Self::random_modes(rng, length, MODES)
    }

    /// The same with the first `modes` modes only.
    pub(crate) fn random_modes(rng: &mut ChaCha8Rng, length: f64, modes: usize) -> Self {
        let mut sin = Vec::with_capacity(modes);
        let mut cos = Vec::with_capacity(modes);
        for k in 1..=modes {
            let a = 1.0 / k as f64;
            sin.push(rng.gen_range(-a..a));
            cos.push(rng.gen_range(-a..a));
        }
        Self { sin, cos, length }
    }

    pub(crate) fn eval(&self, x: f64) -> f64 {
        let w = 2.0 * PI * x / self.length;
        self.sin
            .iter()
            .zip(&self.cos)
            .enumerate()
            .map(|(k, (a, b))| {
                let kw = (k + 1) as f64 * w;
                a * kw.sin() + b * (kw.cos() - 1.0)
            })
            .sum()
    }

    pub(crate) fn sample(&self, sg: &SpatialGrid) -> Vec<f64> {
        sg.sample(|x| self.eval(x))
    }
}

/// Three profiles combined as `p0(x) + p1(x) cos(pi t / T) + p2(x) sin(pi t / T)`.
#[derive(Debug, Clone)]
pub(crate) struct TrigField {
    parts: [TrigProfile; 3],
    horizon: f64,
}

impl TrigField {
    pub(crate) fn random(rng: &mut ChaCha8Rng, length: f64, horizon: f64) -> Self {
        Self::random_modes(rng, length, horizon, MODES)
    }

    pub(crate) fn random_modes(
        rng: &mut ChaCha8Rng,
        length: f64,
        horizon: f64,
        modes: usize,
    ) -> Self {
        Self {
            parts: [
                TrigProfile::random_modes(rng, length, modes),
                TrigProfile::random_modes(rng, length, modes),
                TrigProfile::random_modes(rng, length, modes),
            ],
            horizon,
        }
    }

    pub(crate) fn eval(&self, x: f64, t: f64) -> f64 {
        let w = PI * t / self.horizon;
        self.parts[0].eval(x) + self.parts[1].eval(x) * w.cos() + self.parts[2].eval(x) * w.sin()
    }

    pub(crate) fn levels(&self, sg: &SpatialGrid, tg: &TimeGrid) -> Field {
        Field::from_fn(sg, tg, |x, t| self.eval(x, t))
    }

    pub(crate) fn steps(&self, sg: &SpatialGrid, tg: &TimeGrid, theta: f64) -> StepField {
        StepField::from_fn(sg, tg, theta, |x, t| self.eval(x, t))
    }
}

/// Nonnegative `a (1 + sin(2 pi t / T + c)) / 2` sampled at levels.
pub(crate) fn random_nu_tilde(rng: &mut ChaCha8Rng, tg: &TimeGrid, amplitude: f64) -> Vec<f64> {
    let a = rng.gen_range(0.0..amplitude);
    let c = rng.gen_range(0.0..2.0 * PI);
    tg.times()
        .iter()
        .map(|t| 0.5 * a * (1.0 + (2.0 * PI * t / tg.horizon() + c).sin()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use rand::SeedableRng;

    #[test]
    fn profiles_vanish_at_the_glue_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = TrigProfile::random(&mut rng, 2.0);
        assert!(p.eval(0.0).abs() < 1e-14);
        assert!(p.eval(2.0).abs() < 1e-12);
        let sg = make_grid(2.0, 16).unwrap();
        assert_eq!(p.sample(&sg).len(), 15);
    }

    #[test]
    fn same_seed_same_sample() {
        let a = TrigField::random(&mut ChaCha8Rng::seed_from_u64(7), 1.0, 1.0);
        let b = TrigField::random(&mut ChaCha8Rng::seed_from_u64(7), 1.0, 1.0);
        assert_eq!(a.eval(0.3, 0.4), b.eval(0.3, 0.4));
    }
}
