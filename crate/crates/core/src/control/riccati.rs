//! Square-root dynamic programming for the weighted control problem.
//!
//! The cost-to-go from level `n` is kept as `||U_n z - eta_n||^2` in the
//! augmented variable `z = (v^n on omega, y^n)`. Each step eliminates the next
//! control level with a QR of `U_{n+1} B_n`, then re-triangularizes the
//! remaining rows together with the level-`n` weights. Only orthogonal
//! transformations touch the weights, which span hundreds of orders of
//! magnitude, and the forward pass is the propagator itself, so the state and
//! control it returns satisfy the scheme exactly.

use nalgebra::{DMatrix, DVector};

use crate::grid::{Field, StepField};
use crate::pde::solver::Propagator;

struct Step {
    /// `T^{-1} Q_1^T U_{n+1} A_n`: the feedback gain on `z^n`.
    gain: DMatrix<f64>,
    /// Upper triangular `T` and the rows `Q_1^T`, `Q_2^T` of the first QR.
    t: DMatrix<f64>,
    q1t: DMatrix<f64>,
    q2t: DMatrix<f64>,
    /// Thin orthogonal factor of the re-triangularization, in sorted row order.
    q: DMatrix<f64>,
    order: Vec<usize>,
}

pub(crate) struct RiccatiFactor {
    dim: usize,
    omega_idx: Vec<usize>,
    theta: f64,
    dt: f64,
    /// `U_n` per level.
    u: Vec<DMatrix<f64>>,
    steps: Vec<Step>,
}

/// Row-sorted Householder QR; returns `(Q_thin, R, order)` of the sorted matrix.
fn sorted_qr(m: DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, Vec<usize>) {
    let mut order: Vec<(usize, f64)> = (0..m.nrows()).map(|i| (i, m.row(i).norm())).collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1));
    let order: Vec<usize> = order.into_iter().map(|(i, _)| i).collect();
    let sorted = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(order[i], j)]);
    let qr = sorted.qr();
    (qr.q(), qr.r(), order)
}

/// Row-sorted Householder QR `P M = Q R`; returns `(Q^T P, R)`.
fn sorted_qr_full(m: DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut order: Vec<(usize, f64)> = (0..m.nrows()).map(|i| (i, m.row(i).norm())).collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1));
    let n = m.nrows();
    let mut perm = DMatrix::<f64>::zeros(n, n);
    for (i, (o, _)) in order.iter().enumerate() {
        perm[(i, *o)] = 1.0;
    }
    let qr = (&perm * m).qr();
    qr.q_tr_mul(&mut perm);
    (perm, qr.r())
}

impl RiccatiFactor {
    /// `p`, `pv` are the level weights with cost `|y|^2 / p + |v|^2 / pv`.
    pub(crate) fn new(
        prop: &Propagator,
        p: &[f64],
        pv: &[f64],
        omega_idx: &[usize],
    ) -> Option<Self> {
        let dim = prop.spatial_grid().interior();
        let nw = omega_idx.len();
        let nz = nw + dim;
        let dt = prop.time_grid().dt();
        let theta = prop.theta();
        let m = p.len() - 1;
        let lambda = |n: usize| {
            let mut l = DMatrix::<f64>::zeros(nz, nz);
            for a in 0..nw {
                l[(a, a)] = 1.0 / pv[n].sqrt();
            }
            for i in 0..dim {
                l[(nw + i, nw + i)] = 1.0 / p[n].sqrt();
            }
            l
        };
        let mut u = vec![DMatrix::<f64>::zeros(0, 0); m + 1];
        u[m] = lambda(m);
        let mut steps: Vec<Step> = Vec::with_capacity(m);
        let mut inj = DMatrix::<f64>::zeros(dim, nw);
        for (a, &i) in omega_idx.iter().enumerate() {
            inj[(i, a)] = 1.0;
        }
        for n in (0..m).rev() {
            let st = prop.step(n);
            let fg = st.solve_matrix(st.explicit());
            let fe = st.solve_matrix(&inj) * dt;
            // z' = A z + B w + c with z = (v, y)
            let mut a_mat = DMatrix::<f64>::zeros(nz, nz);
            a_mat
                .view_mut((nw, 0), (dim, nw))
                .copy_from(&(&fe * (1.0 - theta)));
            a_mat.view_mut((nw, nw), (dim, dim)).copy_from(&fg);
            let mut b_mat = DMatrix::<f64>::zeros(nz, nw);
            b_mat.view_mut((0, 0), (nw, nw)).fill_with_identity();
            b_mat.view_mut((nw, 0), (dim, nw)).copy_from(&(&fe * theta));

            let un = &u[n + 1];
            let ub = un * &b_mat;
            let ua = un * &a_mat;
            let (q_full, t) = sorted_qr_full(ub);
            if t.diagonal()
                .iter()
                .any(|v| !(v.abs() > 0.0) || !v.is_finite())
            {
                return None;
            }
            let q1t = q_full.rows(0, nw).into_owned();
            let q2t = q_full.rows(nw, nz - nw).into_owned();
            let gain = t.solve_upper_triangular(&(&q1t * &ua))?;
            let mut stack = DMatrix::<f64>::zeros(nz + nz - nw, nz);
            stack.view_mut((0, 0), (nz, nz)).copy_from(&lambda(n));
            stack
                .view_mut((nz, 0), (nz - nw, nz))
                .copy_from(&(&q2t * &ua));
            let (q, r, order) = sorted_qr(stack);
            if r.iter().any(|v| !v.is_finite()) {
                return None;
            }
            u[n] = r;
            steps.push(Step {
                gain,
                t,
                q1t,
                q2t,
                q,
                order,
            });
        }
        steps.reverse();
        if u[0]
            .view((0, 0), (nw, nw))
            .diagonal()
            .iter()
            .any(|v| !(v.abs() > 0.0))
        {
            return None;
        }
        Some(Self {
            dim,
            omega_idx: omega_idx.to_vec(),
            theta,
            dt,
            u,
            steps,
        })
    }

    /// Optimal state, control and multiplier from `y0` with source `h`. The
    /// multiplier of row `n` is the sensitivity of half the optimal cost to
    /// that row's data, read off the cost-to-go.
    pub(crate) fn solve(
        &self,
        prop: &Propagator,
        y0: &[f64],
        h: &StepField,
    ) -> (Field, Field, Field) {
        let (dim, nw) = (self.dim, self.omega_idx.len());
        let nz = nw + dim;
        let m = self.steps.len();
        // affine parts: eta_n and the feedback offsets k_n
        let mut eta = DVector::<f64>::zeros(nz);
        let mut etas = vec![DVector::<f64>::zeros(nz); m + 1];
        let mut es = vec![DVector::<f64>::zeros(0); m];
        let mut offsets = vec![DVector::<f64>::zeros(nw); m];
        for n in (0..m).rev() {
            let st = &self.steps[n];
            let mut c = DVector::<f64>::zeros(nz);
            let fh = prop
                .step(n)
                .solve(DVector::from_column_slice(h.step(n)) * self.dt);
            c.rows_mut(nw, dim).copy_from(&fh);
            let g = &self.u[n + 1] * c - &eta;
            offsets[n] =
                st.t.solve_upper_triangular(&(&st.q1t * &g))
                    .expect("checked at construction");
            let mut e = DVector::<f64>::zeros(nz + nz - nw);
            e.rows_mut(nz, nz - nw).copy_from(&(-(&st.q2t * &g)));
            let sorted = DVector::from_fn(e.len(), |i, _| e[st.order[i]]);
            eta = st.q.tr_mul(&sorted);
            etas[n] = eta.clone();
            es[n] = sorted;
        }
        // v^0 minimizes ||U_0 (v, y0) - eta_0||
        let u0 = &self.u[0];
        let y0v = DVector::from_column_slice(y0);
        let rhs = eta.rows(0, nw) - u0.view((0, nw), (nw, dim)) * &y0v;
        let v0 = u0
            .view((0, 0), (nw, nw))
            .into_owned()
            .solve_upper_triangular(&rhs)
            .expect("checked at construction");

        let sg = prop.spatial_grid();
        let tg = prop.time_grid();
        let mut control = Field::zeros(sg, tg);
        let mut state = Field::zeros(sg, tg);
        let mut multiplier = Field::zeros(sg, tg);
        state.row_mut(0).copy_from_slice(y0);
        let mut z = DVector::<f64>::zeros(nz);
        z.rows_mut(0, nw).copy_from(&v0);
        z.rows_mut(nw, dim).copy_from(&y0v);
        self.scatter(&mut control, 0, &v0);
        // cost residual r_n = U_n z_n - eta_n, carried forward by the orthogonal
        // factors; forming it directly cancels at the scale of the weights
        let mut r = &self.u[0] * &z - &etas[0];
        let sensitivity =
            |n: usize, r: &DVector<f64>| self.u[n].tr_mul(r).rows(nw, dim).into_owned();
        multiplier
            .row_mut(0)
            .copy_from_slice(sensitivity(0, &r).as_slice());
        for n in 0..m {
            let w = -(&self.steps[n].gain * &z) - &offsets[n];
            self.scatter(&mut control, n + 1, &w);
            let st = prop.step(n);
            let mut rhs = st.explicit() * DVector::from_column_slice(state.row(n));
            let (a, b) = (control.row(n), control.row(n + 1));
            for (i, r) in rhs.iter_mut().enumerate() {
                let f = h.step(n)[i] + (self.theta * b[i] + (1.0 - self.theta) * a[i]);
                *r += self.dt * f;
            }
            let next = st.solve(rhs);
            state.row_mut(n + 1).copy_from_slice(next.as_slice());
            z.rows_mut(0, nw).copy_from(&w);
            z.rows_mut(nw, dim).copy_from(&next);
            let sp = &self.steps[n];
            let e = &es[n];
            let stacked = &sp.q * &r - (e - &sp.q * sp.q.tr_mul(e));
            let mut s_rows = DVector::<f64>::zeros(nz - nw);
            for (i, &o) in sp.order.iter().enumerate() {
                if o >= nz {
                    s_rows[o - nz] = stacked[i];
                }
            }
            r = sp.q2t.tr_mul(&s_rows);
            let lam = st.solve_transpose(sensitivity(n + 1, &r));
            multiplier.row_mut(n + 1).copy_from_slice(lam.as_slice());
        }
        (state, control, multiplier)
    }

    fn scatter(&self, f: &mut Field, level: usize, w: &DVector<f64>) {
        let row = f.row_mut(level);
        for (a, &i) in self.omega_idx.iter().enumerate() {
            row[i] = w[a];
        }
    }
}
