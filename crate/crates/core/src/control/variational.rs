//! Weighted space-time least squares for null controls.
//!
//! With `L` the stacked theta-scheme operator (row 0 fixes the initial level,
//! row `n + 1` is step `n` multiplied by `dt`) and `S` the injection of a
//! level-sampled control on `omega` into the step rows, the control solves
//!
//! ```text
//! minimize   1/2 sum_n c_n h dt (exp(2 s hat_n) |y^n|^2 + q_n^{-1} |v^n|^2)
//! subject to L y = d + S v,      q_n = exp(-6 s breve_n + 2 s hat_n) tau_n^9,
//! ```
//!
//! where `d` carries `y0` and the source. The multiplier `lambda` solves the
//! block tridiagonal SPD system `A lambda = d` with
//! `A = L P L^T + S P_v S^T`, `P = diag(exp(-2 s hat_n) / (c_n h dt))`,
//! `P_v = diag(q_n / (c_n h dt))`, and then `y = P L^T lambda`,
//! `v = -P_v S^T lambda`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{inner, Field, SpatialGrid, StepField, TimeGrid};
use crate::pde::operators::{CoefficientSet, DiscreteOperators};
use crate::pde::solver::{Propagator, DEFAULT_THETA};
use crate::weights::{CarlemanSpatialProfile, WeightFamily, WeightSet};

use super::enorms::{verify_e_membership, ENormReport};
use super::riccati::RiccatiFactor;

/// Largest relative equation residual of an accepted `(y, v)`.
pub const CONSTRAINT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    /// Square-root dynamic programming on the primal problem.
    Riccati,
    /// Conjugate gradients on the equilibrated multiplier system.
    ConjugateGradient,
}

#[derive(Debug, Clone, Copy)]
pub struct VariationalOptions {
    pub theta: f64,
    pub solver: SolverKind,
    pub cg_tol: f64,
    pub cg_maxit: usize,
    pub refinement_steps: usize,
    pub lanczos_steps: usize,
}

impl Default for VariationalOptions {
    fn default() -> Self {
        Self {
            theta: DEFAULT_THETA,
            solver: SolverKind::Riccati,
            cg_tol: 1e-10,
            cg_maxit: 20_000,
            refinement_steps: 2,
            lanczos_steps: 40,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverStats {
    pub method: SolverKind,
    pub iterations: usize,
    /// `||L y - S v - d|| / ||d||` for the returned pair.
    pub constraint_residual: f64,
    /// `||A lambda - d|| / ||d||`; large values only mean the multiplier is
    /// poorly determined, which the pair is not.
    pub multiplier_residual: f64,
    /// `||v + P_v S^T lambda|| / ||v||`, the first-order optimality defect.
    pub optimality_defect: f64,
    pub smallest_ritz: f64,
    pub largest_ritz: f64,
    pub clamped_weights: usize,
}

/// Output of [`VariationalSystem::solve_constrained`].
#[derive(Debug, Clone)]
pub struct ConstrainedSolution {
    pub multiplier: Field,
    pub state: Field,
    pub control: Field,
    pub stats: SolverStats,
}

/// The assembled and factored weighted system for one linearized problem.
pub struct VariationalSystem {
    ops: DiscreteOperators,
    coeffs: CoefficientSet,
    prop: Propagator,
    profile: CarlemanSpatialProfile,
    weights: WeightSet,
    mid_clamped: usize,
    omega: (f64, f64),
    omega_idx: Vec<usize>,
    /// `P` and `P_v` per level.
    p: Vec<f64>,
    pv: Vec<f64>,
    diag: Vec<DMatrix<f64>>,
    sub: Vec<DMatrix<f64>>,
    /// Equilibration `D = diag(A)^{-1/2}`, per level.
    scale: Vec<DVector<f64>>,
    scaled_diag: Vec<DMatrix<f64>>,
    scaled_sub: Vec<DMatrix<f64>>,
    factor: Option<RiccatiFactor>,
    options: VariationalOptions,
    ritz: (f64, f64),
}

impl std::fmt::Debug for VariationalSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VariationalSystem")
            .field("levels", &self.diag.len())
            .field("unknowns_per_level", &self.ops.size())
            .field("omega", &self.omega)
            .field("s", &self.weights.s)
            .field("factored", &self.factor.is_some())
            .finish()
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Assembles `A` for the linearized operator in `coeffs` with the beta-family
/// weights of `profile` at parameter `s`.
#[allow(clippy::too_many_arguments)]
pub fn assemble_variational_system(
    ops: &DiscreteOperators,
    coeffs: &CoefficientSet,
    tg: &TimeGrid,
    profile: &CarlemanSpatialProfile,
    omega: (f64, f64),
    s: f64,
    clamp: f64,
    options: VariationalOptions,
) -> Result<VariationalSystem> {
    let sg = *ops.grid();
    if (profile.length() - sg.length()).abs() > 1e-12 * sg.length() {
        return Err(Error::InvalidArgument(
            "weight profile and grid disagree on L".into(),
        ));
    }
    let (a, b) = omega;
    if !(0.0 < a && a < b && b < sg.length()) {
        return Err(Error::InvalidArgument(format!(
            "omega = ({a}, {b}) must lie inside (0, L)"
        )));
    }
    let omega_idx = sg.indices_in(a, b);
    if omega_idx.is_empty() {
        return Err(Error::InvalidArgument(
            "omega contains no grid nodes".into(),
        ));
    }
    let weights = WeightSet::new(
        profile,
        WeightFamily::Beta,
        &tg.times(),
        tg.horizon(),
        s,
        clamp,
    )?;
    let prop = Propagator::new(ops, coeffs, tg, options.theta)?;
    let h = sg.spacing();
    let dt = tg.dt();
    let theta = options.theta;
    let m = tg.steps();
    let mid = WeightSet::new(
        profile,
        WeightFamily::Beta,
        &tg.midpoints(),
        tg.horizon(),
        s,
        clamp,
    )?;
    let (p, pv) = level_precisions(&mid, m, h, dt);
    if p.iter().chain(&pv).any(|v| !v.is_finite() || *v < 0.0) || p.contains(&0.0) {
        return Err(Error::IllConditioned(
            "state weight underflowed; lower s or the clamp".into(),
        ));
    }

    let dim = ops.size();
    let mut diag = Vec::with_capacity(m + 1);
    let mut sub = Vec::with_capacity(m);
    diag.push(DMatrix::<f64>::identity(dim, dim) * p[0]);
    for k in 0..m {
        let st = prop.step(k);
        let (f, g) = (st.implicit(), st.explicit());
        let mut d = g * g.transpose() * p[k] + f * f.transpose() * p[k + 1];
        let sw = dt * dt * (theta * theta * pv[k + 1] + (1.0 - theta) * (1.0 - theta) * pv[k]);
        for &i in &omega_idx {
            d[(i, i)] += sw;
        }
        diag.push(symmetrize(d));
        let mut l = if k == 0 {
            -g * p[0]
        } else {
            -(g * prop.step(k - 1).implicit().transpose()) * p[k]
        };
        if k > 0 {
            let cw = dt * dt * theta * (1.0 - theta) * pv[k];
            for &i in &omega_idx {
                l[(i, i)] += cw;
            }
        }
        sub.push(l);
    }

    let scale: Vec<DVector<f64>> = diag
        .iter()
        .map(|d| DVector::from_iterator(dim, (0..dim).map(|i| 1.0 / d[(i, i)].sqrt())))
        .collect();
    if scale.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
        return Err(Error::IllConditioned(
            "zero or non-finite diagonal entry; lower s or the clamp".into(),
        ));
    }
    let scale_block = |mat: &DMatrix<f64>, r: &DVector<f64>, c: &DVector<f64>| {
        let mut out = mat.clone();
        for j in 0..out.ncols() {
            for i in 0..out.nrows() {
                out[(i, j)] *= r[i] * c[j];
            }
        }
        out
    };
    let scaled_diag: Vec<DMatrix<f64>> = diag
        .iter()
        .zip(&scale)
        .map(|(d, s)| symmetrize(scale_block(d, s, s)))
        .collect();
    let scaled_sub: Vec<DMatrix<f64>> = sub
        .iter()
        .enumerate()
        .map(|(k, l)| scale_block(l, &scale[k + 1], &scale[k]))
        .collect();

    let factor = match options.solver {
        SolverKind::ConjugateGradient => None,
        SolverKind::Riccati => Some(RiccatiFactor::new(&prop, &p, &pv, &omega_idx).ok_or_else(
            || Error::IllConditioned("Riccati recursion broke down; lower s or the clamp".into()),
        )?),
    };

    let mut sys = VariationalSystem {
        ops: ops.clone(),
        coeffs: coeffs.clone(),
        prop,
        profile: profile.clone(),
        weights,
        mid_clamped: mid.clamped_count,
        omega,
        omega_idx,
        p,
        pv,
        diag,
        sub,
        scale,
        scaled_diag,
        scaled_sub,
        factor,
        options,
        ritz: (f64::NAN, f64::NAN),
    };
    sys.ritz = sys.lanczos_extremes(options.lanczos_steps);
    Ok(sys)
}

type Blocks = Vec<DVector<f64>>;

fn blocks_dot(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn blocks_norm(a: &[DVector<f64>]) -> f64 {
    blocks_dot(a, a).sqrt()
}

impl VariationalSystem {
    pub fn ops(&self) -> &DiscreteOperators {
        &self.ops
    }

    pub fn coefficients(&self) -> &CoefficientSet {
        &self.coeffs
    }

    pub fn propagator(&self) -> &Propagator {
        &self.prop
    }

    pub fn spatial_grid(&self) -> &SpatialGrid {
        self.ops.grid()
    }

    pub fn time_grid(&self) -> &TimeGrid {
        self.prop.time_grid()
    }

    pub fn profile(&self) -> &CarlemanSpatialProfile {
        &self.profile
    }

    pub fn weights(&self) -> &WeightSet {
        &self.weights
    }

    pub fn s(&self) -> f64 {
        self.weights.s
    }

    pub fn clamp(&self) -> f64 {
        self.weights.clamp
    }

    pub fn omega(&self) -> (f64, f64) {
        self.omega
    }

    pub fn omega_indices(&self) -> &[usize] {
        &self.omega_idx
    }

    pub fn options(&self) -> &VariationalOptions {
        &self.options
    }

    pub fn is_factored(&self) -> bool {
        self.factor.is_some()
    }

    /// Smallest and largest Ritz values of the equilibrated matrix.
    pub fn ritz_extremes(&self) -> (f64, f64) {
        self.ritz
    }

    pub fn levels(&self) -> usize {
        self.diag.len()
    }

    /// Diagonal block `k` of `A`.
    pub fn diagonal_block(&self, k: usize) -> &DMatrix<f64> {
        &self.diag[k]
    }

    /// Block `A_{k+1,k}`; `A_{k,k+1}` is its transpose.
    pub fn subdiagonal_block(&self, k: usize) -> &DMatrix<f64> {
        &self.sub[k]
    }

    /// `max |A - A^T|` over the stored blocks.
    pub fn symmetry_defect(&self) -> f64 {
        self.diag
            .iter()
            .map(|d| (d - d.transpose()).amax())
            .fold(0.0, f64::max)
    }

    /// Dense `A` for small systems.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let dim = self.ops.size();
        let n = dim * self.levels();
        let mut a = DMatrix::zeros(n, n);
        for (k, d) in self.diag.iter().enumerate() {
            a.view_mut((k * dim, k * dim), (dim, dim)).copy_from(d);
        }
        for (k, l) in self.sub.iter().enumerate() {
            a.view_mut(((k + 1) * dim, k * dim), (dim, dim))
                .copy_from(l);
            a.view_mut((k * dim, (k + 1) * dim), (dim, dim))
                .copy_from(&l.transpose());
        }
        a
    }

    fn field_to_blocks(f: &Field) -> Blocks {
        f.rows_iter().map(DVector::from_column_slice).collect()
    }

    fn blocks_to_field(&self, b: &[DVector<f64>]) -> Field {
        let mut out = Field::zeros(self.spatial_grid(), self.time_grid());
        for (k, v) in b.iter().enumerate() {
            out.row_mut(k).copy_from_slice(v.as_slice());
        }
        out
    }

    fn tridiag_apply(diag: &[DMatrix<f64>], sub: &[DMatrix<f64>], x: &[DVector<f64>]) -> Blocks {
        let m = diag.len();
        (0..m)
            .map(|k| {
                let mut r = &diag[k] * &x[k];
                if k > 0 {
                    r += &sub[k - 1] * &x[k - 1];
                }
                if k + 1 < m {
                    r += sub[k].tr_mul(&x[k + 1]);
                }
                r
            })
            .collect()
    }

    /// `A lambda` with the assembled blocks.
    pub fn apply(&self, lambda: &Field) -> Field {
        let x = Self::field_to_blocks(lambda);
        self.blocks_to_field(&Self::tridiag_apply(&self.diag, &self.sub, &x))
    }

    fn apply_scaled(&self, x: &[DVector<f64>]) -> Blocks {
        Self::tridiag_apply(&self.scaled_diag, &self.scaled_sub, x)
    }

    /// `S^T lambda` on levels (zero outside omega).
    pub(crate) fn control_adjoint(&self, lambda: &Field) -> Field {
        let tg = self.time_grid();
        let (dt, theta, m) = (tg.dt(), self.options.theta, tg.steps());
        let mut out = Field::zeros(self.spatial_grid(), tg);
        for l in 0..=m {
            let row = out.row_mut(l);
            for &i in &self.omega_idx {
                let mut acc = 0.0;
                if l >= 1 {
                    acc += dt * theta * lambda.get(l, i);
                }
                if l < m {
                    acc += dt * (1.0 - theta) * lambda.get(l + 1, i);
                }
                row[i] = acc;
            }
        }
        out
    }

    /// State and control recovered from a multiplier: `(P L^T lambda, -P_v S^T lambda)`.
    pub fn recover(&self, lambda: &Field) -> (Field, Field) {
        let lt = self.prop.apply_transpose(lambda);
        let mut y = lt;
        for n in 0..y.levels() {
            let p = self.p[n];
            y.row_mut(n).iter_mut().for_each(|v| *v *= p);
        }
        let mut v = self.control_adjoint(lambda);
        for n in 0..v.levels() {
            let pv = self.pv[n];
            v.row_mut(n).iter_mut().for_each(|x| *x *= -pv);
        }
        (y, v)
    }

    /// `A lambda` through `L P L^T + S P_v S^T` without the assembled blocks.
    pub fn apply_matrix_free(&self, lambda: &Field) -> Field {
        let (y, v) = self.recover(lambda);
        self.constraint_map(&y, &v)
    }

    /// Per-step forcing `theta v^{n+1} + (1 - theta) v^n` of a level control.
    pub fn control_source(&self, v: &Field) -> StepField {
        v.step_average(self.options.theta)
    }

    /// Right-hand side `d = (y0; dt h^0; ...; dt h^{M-1})`.
    pub fn rhs(&self, y0: &[f64], h: &StepField) -> Field {
        let tg = self.time_grid();
        let mut d = Field::zeros(self.spatial_grid(), tg);
        d.row_mut(0).copy_from_slice(y0);
        for n in 0..tg.steps() {
            for (o, x) in d.row_mut(n + 1).iter_mut().zip(h.step(n)) {
                *o = tg.dt() * x;
            }
        }
        d
    }

    fn scale_in(&self, d: &Field) -> Blocks {
        d.rows_iter()
            .zip(&self.scale)
            .map(|(r, s)| DVector::from_column_slice(r).component_mul(s))
            .collect()
    }

    fn pcg(&self, b: &[DVector<f64>], x0: Blocks) -> Result<(Blocks, usize)> {
        // the equilibrated matrix has unit diagonal, so Jacobi preconditioning is the identity
        let bnorm = blocks_norm(b);
        if bnorm == 0.0 {
            return Ok((x0, 0));
        }
        let mut x = x0;
        let ax = self.apply_scaled(&x);
        let mut r: Blocks = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let mut p = r.clone();
        let mut rr = blocks_dot(&r, &r);
        for it in 1..=self.options.cg_maxit {
            let ap = self.apply_scaled(&p);
            let alpha = rr / blocks_dot(&p, &ap);
            for (xi, pi) in x.iter_mut().zip(&p) {
                xi.axpy(alpha, pi, 1.0);
            }
            for (ri, api) in r.iter_mut().zip(&ap) {
                ri.axpy(-alpha, api, 1.0);
            }
            let rr_new = blocks_dot(&r, &r);
            if rr_new.sqrt() <= self.options.cg_tol * bnorm {
                return Ok((x, it));
            }
            if !rr_new.is_finite() {
                break;
            }
            let beta = rr_new / rr;
            for (pi, ri) in p.iter_mut().zip(&r) {
                *pi = ri + &*pi * beta;
            }
            rr = rr_new;
        }
        Err(Error::IllConditioned(format!(
            "conjugate gradients stagnated at relative residual {:.3e}; lower s or the clamp",
            rr.sqrt() / bnorm
        )))
    }

    fn lanczos_extremes(&self, steps: usize) -> (f64, f64) {
        let dim = self.ops.size();
        let levels = self.levels();
        let total = dim * levels;
        let k = steps.min(total).max(1);
        // deterministic start vector
        let mut q: Blocks = (0..levels)
            .map(|l| {
                DVector::from_iterator(dim, (0..dim).map(|i| 1.0 + ((l * 31 + i * 17) % 7) as f64))
            })
            .collect();
        let nq = blocks_norm(&q);
        q.iter_mut().for_each(|v| *v /= nq);
        let mut basis: Vec<Blocks> = vec![q];
        let mut alpha = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        for j in 0..k {
            let mut w = self.apply_scaled(&basis[j]);
            let a = blocks_dot(&w, &basis[j]);
            alpha.push(a);
            // full reorthogonalization keeps the few Ritz values honest
            for _ in 0..2 {
                for b in &basis {
                    let c = blocks_dot(&w, b);
                    for (wi, bi) in w.iter_mut().zip(b) {
                        wi.axpy(-c, bi, 1.0);
                    }
                }
            }
            let bnorm = blocks_norm(&w);
            if j + 1 == k || bnorm < 1e-14 {
                break;
            }
            beta.push(bnorm);
            w.iter_mut().for_each(|v| *v /= bnorm);
            basis.push(w);
        }
        let n = alpha.len();
        let mut t = DMatrix::zeros(n, n);
        for i in 0..n {
            t[(i, i)] = alpha[i];
            if i + 1 < n {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = t.symmetric_eigen();
        let lo = eig
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let hi = eig
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// `L y - S v`, the constraint map; `A lambda` is this map at `recover(lambda)`.
    pub fn constraint_map(&self, y: &Field, v: &Field) -> Field {
        let mut out = self.prop.apply(y);
        let sv = self.control_source(v);
        let dt = self.time_grid().dt();
        for n in 0..sv.steps() {
            for (o, c) in out.row_mut(n + 1).iter_mut().zip(sv.step(n)) {
                *o -= dt * c;
            }
        }
        out
    }

    fn unscale(&self, x: &[DVector<f64>]) -> Field {
        let blocks: Blocks = x
            .iter()
            .zip(&self.scale)
            .map(|(xi, s)| xi.component_mul(s))
            .collect();
        self.blocks_to_field(&blocks)
    }

    /// Minimizes the weighted cost subject to `L y - S v = d` with
    /// `d = rhs(y0, h)`.
    pub fn solve_constrained(&self, y0: &[f64], h: &StepField) -> Result<ConstrainedSolution> {
        let d = self.rhs(y0, h);
        let (multiplier, state, control, method, iterations) = match &self.factor {
            Some(fac) => {
                let (state, control, lambda) = fac.solve(&self.prop, y0, h);
                (lambda, state, control, SolverKind::Riccati, 1)
            }
            None => {
                let b = self.scale_in(&d);
                let zero: Blocks = b.iter().map(|v| DVector::zeros(v.len())).collect();
                let (x, it) = self.pcg(&b, zero)?;
                let lambda = self.unscale(&x);
                let (y, v) = self.recover(&lambda);
                (lambda, y, v, SolverKind::ConjugateGradient, it)
            }
        };
        if !(multiplier.all_finite() && state.all_finite() && control.all_finite()) {
            return Err(Error::IllConditioned(
                "non-finite solution; lower s or the clamp".into(),
            ));
        }
        let norm = |f: &Field| f.values().iter().map(|v| v * v).sum::<f64>().sqrt();
        let dnorm = norm(&d);
        let rel = |r: f64, base: f64| if base == 0.0 { 0.0 } else { r / base };
        let constraint = d.axpy(-1.0, &self.constraint_map(&state, &control))?;
        let constraint_residual = rel(norm(&constraint), dnorm);
        if constraint_residual > CONSTRAINT_TOLERANCE {
            return Err(Error::IllConditioned(format!(
                "controlled state violates the equation by {constraint_residual:.2e}; lower the clamp or s"
            )));
        }
        let lam_res = self.apply(&multiplier).axpy(-1.0, &d)?;
        let (_, v_rec) = self.recover(&multiplier);
        let opt = v_rec.axpy(-1.0, &control)?;
        Ok(ConstrainedSolution {
            stats: SolverStats {
                method,
                iterations,
                constraint_residual,
                multiplier_residual: rel(norm(&lam_res), dnorm),
                optimality_defect: rel(norm(&opt), norm(&control)),
                smallest_ritz: self.ritz.0,
                largest_ritz: self.ritz.1,
                clamped_weights: self.mid_clamped,
            },
            multiplier,
            state,
            control,
        })
    }

    /// `lambda^T A lambda`, evaluated in the equilibrated variables.
    pub fn energy(&self, lambda: &Field) -> f64 {
        let x: Blocks = lambda
            .rows_iter()
            .zip(&self.scale)
            .map(|(r, s)| DVector::from_column_slice(r).component_div(s))
            .collect();
        blocks_dot(&x, &self.apply_scaled(&x))
    }

    /// `sum_n (|y^n|^2 / P_n + |v^n|^2 / P_v,n)` with the level precisions
    /// induced by the midpoint weights.
    pub fn weighted_cost(&self, y: &Field, v: &Field) -> f64 {
        let h = self.spatial_grid().spacing();
        let mut total = 0.0;
        for n in 0..self.time_grid().levels() {
            total += inner(y.level(n), y.level(n), h) / (h * self.p[n]);
            let vv = inner(v.level(n), v.level(n), h);
            if vv > 0.0 {
                total += vv / (h * self.pv[n]);
            }
        }
        total
    }
}

/// Level precisions `P_n`, `P_v,n` from midpoint weights: each level carries
/// half the cost of its neighbouring steps, so the midpoint E-norms of the
/// step-averaged state stay below the cost.
fn level_precisions(mid: &WeightSet, m: usize, h: f64, dt: f64) -> (Vec<f64>, Vec<f64>) {
    let state = mid.state_weight();
    let obs = mid.observation_weight();
    let level = |w: &[f64], n: usize| {
        let left = if n > 0 { 1.0 / w[n - 1] } else { 0.0 };
        let right = if n < m { 1.0 / w[n] } else { 0.0 };
        1.0 / (h * 0.5 * dt * (left + right))
    };
    let p = (0..=m).map(|n| level(&state, n)).collect();
    let pv = (0..=m).map(|n| level(&obs, n)).collect();
    (p, pv)
}

/// Result of one null-control solve.
#[derive(Debug, Clone)]
pub struct ControlResult {
    pub control: Field,
    /// State from the constrained solve.
    pub state: Field,
    /// Forward re-simulation with the computed control.
    pub resimulated: Field,
    /// `phi_hat = lambda / h`.
    pub multiplier: Field,
    pub source: StepField,
    pub terminal_norm: f64,
    pub terminal_norm_algebraic: f64,
    pub control_norm: f64,
    /// `<lambda, d> = <y0, lambda^0> + dt sum_n <h^n, lambda^{n+1}>`.
    pub identity_lhs: f64,
    /// Weighted cost of the recovered pair.
    pub identity_rhs: f64,
    pub e_norms: ENormReport,
    pub stats: SolverStats,
}

impl ControlResult {
    pub fn identity_defect(&self) -> f64 {
        let scale = self.identity_lhs.abs().max(self.identity_rhs.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.identity_lhs - self.identity_rhs).abs() / scale
        }
    }
}

/// `||v||_{L^2(omega x (0, T))}` by the trapezoid rule in time.
pub fn control_norm(v: &Field, sg: &SpatialGrid, tg: &TimeGrid) -> f64 {
    crate::grid::l2_q(v, sg, tg)
}

/// Null control of the linearized system with initial state `y0` and source `h`.
pub fn solve_null_control(
    vsys: &VariationalSystem,
    y0: &[f64],
    h: Option<&StepField>,
) -> Result<ControlResult> {
    let sg = *vsys.spatial_grid();
    let tg = *vsys.time_grid();
    if y0.len() != sg.interior() {
        return Err(Error::shape(sg.interior(), y0.len()));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("initial datum is not finite".into()));
    }
    let source = match h {
        Some(h) => {
            h.check_grids(&sg, &tg)?;
            h.clone()
        }
        None => StepField::zeros(&sg, &tg),
    };
    let e_source = super::enorms::weighted_source_norm(vsys, &source)?;
    if !e_source.is_finite() {
        return Err(Error::InvalidArgument(
            "weighted source norm exp(2 s hat) tau^{-5/2} h is not finite".into(),
        ));
    }

    let d = vsys.rhs(y0, &source);
    let ConstrainedSolution {
        multiplier: lambda,
        state,
        control,
        stats,
    } = vsys.solve_constrained(y0, &source)?;

    let mut forcing = source.clone();
    let vs = vsys.control_source(&control);
    for n in 0..forcing.steps() {
        for (f, c) in forcing.row_mut(n).iter_mut().zip(vs.step(n)) {
            *f += c;
        }
    }
    let resimulated = vsys
        .propagator()
        .forward(crate::grid::Source::Steps(&forcing), y0)?;
    let h_sp = sg.spacing();
    let terminal_norm = crate::grid::l2(resimulated.last_level(), h_sp);
    let terminal_norm_algebraic = crate::grid::l2(state.last_level(), h_sp);
    let identity_lhs = inner(lambda.values(), d.values(), 1.0);
    let identity_rhs = vsys.weighted_cost(&state, &control);
    let e_norms = verify_e_membership(vsys, &state, &control, &source)?;
    let multiplier = lambda.scaled(1.0 / h_sp);
    Ok(ControlResult {
        control_norm: control_norm(&control, &sg, &tg),
        control,
        state,
        resimulated,
        multiplier,
        source,
        terminal_norm,
        terminal_norm_algebraic,
        identity_lhs,
        identity_rhs,
        e_norms,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, make_time_grid};
    use crate::pde::operators::assemble_operators;
    use crate::weights::{build_spatial_profile, s_for_target};

    fn small_system(n: usize, m: usize, target: f64, clamp: f64) -> VariationalSystem {
        let sg = make_grid(1.0, n).unwrap();
        let tg = make_time_grid(1.0, m).unwrap();
        let ops = assemble_operators(&sg);
        let coeffs = CoefficientSet::constant(0.1, &tg).unwrap();
        let profile = build_spatial_profile(1.0, (0.3, 0.7), 0.5).unwrap();
        let s = s_for_target(&profile, WeightFamily::Beta, tg.time(m - 1), 1.0, target).unwrap();
        assemble_variational_system(
            &ops,
            &coeffs,
            &tg,
            &profile,
            (0.3, 0.7),
            s,
            clamp,
            VariationalOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn matrix_free_matches_assembled() {
        let v = small_system(8, 8, 5.0, 15.0);
        let sg = *v.spatial_grid();
        let tg = *v.time_grid();
        let lam = Field::from_fn(&sg, &tg, |x, t| (3.0 * x + 5.0 * t).sin());
        let a = v.apply(&lam);
        let b = v.apply_matrix_free(&lam);
        let scale = a.max_abs();
        assert!(a.axpy(-1.0, &b).unwrap().max_abs() <= 1e-12 * scale);
    }

    #[test]
    fn pair_matches_dense_multiplier() {
        let v = small_system(8, 8, 5.0, 15.0);
        let sg = *v.spatial_grid();
        let tg = *v.time_grid();
        let y0 = sg.sample(|x| (2.0 * x).cos());
        let h = StepField::from_fn(&sg, &tg, 0.5, |x, t| (x - t).sin());
        let d = v.rhs(&y0, &h);
        let sol = v.solve_constrained(&y0, &h).unwrap();
        assert!(sol.stats.constraint_residual < 1e-12, "{:?}", sol.stats);
        let a = v.to_dense();
        let lam = a
            .lu()
            .solve(&DVector::from_column_slice(d.values()))
            .unwrap();
        let lam = Field::from_vec(tg.levels(), sg.interior(), lam.as_slice().to_vec()).unwrap();
        let gap = lam.axpy(-1.0, &sol.multiplier).unwrap().max_abs();
        assert!(gap <= 1e-8 * lam.max_abs(), "{gap:e}");
        let (y, c) = v.recover(&lam);
        assert!(y.axpy(-1.0, &sol.state).unwrap().max_abs() <= 1e-8 * y.max_abs());
        assert!(c.axpy(-1.0, &sol.control).unwrap().max_abs() <= 1e-8 * c.max_abs());
    }

    #[test]
    fn zero_data_gives_zero_control() {
        let v = small_system(8, 8, 5.0, 15.0);
        let y0 = vec![0.0; v.spatial_grid().interior()];
        let r = solve_null_control(&v, &y0, None).unwrap();
        assert!(r.control.is_zero());
        assert!(r.state.is_zero());
        assert_eq!(r.terminal_norm, 0.0);
    }

    #[test]
    fn control_is_homogeneous_in_the_data() {
        let v = small_system(8, 8, 5.0, 15.0);
        let y0 = v.spatial_grid().sample(|x| (6.0 * x).sin());
        let y1: Vec<f64> = y0.iter().map(|a| -3.0 * a).collect();
        let a = solve_null_control(&v, &y0, None).unwrap().control;
        let b = solve_null_control(&v, &y1, None).unwrap().control;
        let gap = b.axpy(3.0, &a).unwrap().max_abs();
        assert!(gap <= 1e-10 * b.max_abs(), "{gap:e}");
    }

    #[test]
    fn control_vanishes_outside_omega() {
        let v = small_system(16, 16, 5.0, 15.0);
        let y0 = v.spatial_grid().sample(|x| (6.0 * x).sin());
        let r = solve_null_control(&v, &y0, None).unwrap();
        let inside = v.omega_indices();
        for n in 0..v.time_grid().levels() {
            for (i, c) in r.control.level(n).iter().enumerate() {
                if !inside.contains(&i) {
                    assert_eq!(*c, 0.0);
                }
            }
        }
        assert!(!r.control.is_zero());
    }

    #[test]
    fn assembled_matrix_is_symmetric() {
        let v = small_system(8, 8, 5.0, 15.0);
        let a = v.to_dense();
        let gap = (&a - a.transpose()).amax();
        assert!(gap <= 1e-12 * a.amax(), "{gap:e}");
        assert!(v.symmetry_defect() <= 1e-12);
    }

    #[test]
    fn full_observation_region_gives_positive_definite_matrix() {
        let sg = make_grid(1.0, 8).unwrap();
        let tg = make_time_grid(1.0, 8).unwrap();
        let ops = assemble_operators(&sg);
        let coeffs = CoefficientSet::constant(0.1, &tg).unwrap();
        let profile = build_spatial_profile(1.0, (0.3, 0.7), 0.5).unwrap();
        let s = s_for_target(&profile, WeightFamily::Beta, tg.time(7), 1.0, 5.0).unwrap();
        let v = assemble_variational_system(
            &ops,
            &coeffs,
            &tg,
            &profile,
            (1e-9, 1.0 - 1e-9),
            s,
            15.0,
            VariationalOptions::default(),
        )
        .unwrap();
        assert_eq!(v.omega_indices().len(), sg.interior());
        let a = v.to_dense();
        let sym = (&a + a.transpose()) * 0.5;
        let eig = sym.symmetric_eigenvalues();
        assert!(eig.min() > 0.0, "{}", eig.min());
    }
}
