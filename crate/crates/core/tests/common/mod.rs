//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use kdvb::grid::{l2, Field, Source};
use kdvb::pde::Propagator;
use nalgebra::{DMatrix, DVector};

/// Penalized HUM control: minimizes `||v||^2_{L^2(omega x (0,T))} + ||y(T)||^2 / eps`
/// over controls sampled at time levels on the nodes `omega`.
///
/// The control-to-terminal map `R` is assembled row by row from adjoint
/// solutions started at unit terminal data; the minimizer then follows
/// from the eigendecomposition of the Gramian `R W^{-1} R^T`.
pub struct HumResult {
    pub control: Field,
    /// Terminal residual predicted by the linear algebra.
    pub terminal_predicted: f64,
    /// Terminal norm of the forward march with the computed control.
    pub terminal_resimulated: f64,
    pub control_norm: f64,
}

pub fn penalized_hum(prop: &Propagator, omega: &[usize], y0: &[f64], eps: f64) -> HumResult {
    let sg = *prop.spatial_grid();
    let tg = *prop.time_grid();
    let theta = prop.theta();
    let (n, m) = (sg.interior(), tg.steps());
    let h = sg.spacing();
    let dt = tg.dt();
    let nw = omega.len();
    let nv = nw * (m + 1);

    // y(T)_i = sum_k dt (theta v^{k+1} + (1 - theta) v^k, phi_i^{k+1}) on omega,
    // with phi_i the adjoint started from phi_T = e_i / h
    let mut r = DMatrix::<f64>::zeros(n, nv);
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0 / h;
        let phi = prop.adjoint(None, &e).expect("adjoint");
        for k in 0..m {
            let next = phi.level(k + 1);
            for (jj, &j) in omega.iter().enumerate() {
                let a = h * dt * next[j];
                r[(i, (k + 1) * nw + jj)] += theta * a;
                r[(i, k * nw + jj)] += (1.0 - theta) * a;
            }
        }
    }
    let w: Vec<f64> = (0..=m)
        .flat_map(|k| std::iter::repeat_n(tg.trapezoid_weight(k) * h, nw))
        .collect();
    let free = prop.forward(Source::Zero, y0).expect("forward");
    let yf = DVector::from_column_slice(free.last_level());

    let mut rw = r.clone();
    for (c, wc) in w.iter().enumerate() {
        rw.column_mut(c).scale_mut(1.0 / wc);
    }
    let gram = &rw * r.transpose();
    let gram = (&gram + gram.transpose()) * 0.5;
    let eig = gram.symmetric_eigen();
    let q = &eig.eigenvectors;
    let coef = q.tr_mul(&yf);
    let scaled = DVector::from_iterator(
        n,
        coef.iter()
            .zip(eig.eigenvalues.iter())
            .map(|(c, d)| c / (1.0 + h * d.max(0.0) / eps)),
    );
    let resid = q * scaled;
    let v = -(rw.transpose() * &resid) * (h / eps);

    let mut control = Field::zeros(&sg, &tg);
    for k in 0..=m {
        let row = control.row_mut(k);
        for (jj, &j) in omega.iter().enumerate() {
            row[j] = v[k * nw + jj];
        }
    }
    let sim = prop.forward(Source::Levels(&control), y0).expect("forward");
    let control_norm = (0..=m)
        .map(|k| tg.trapezoid_weight(k) * l2(control.level(k), h).powi(2))
        .sum::<f64>()
        .sqrt();
    HumResult {
        terminal_predicted: l2(resid.as_slice(), h),
        terminal_resimulated: l2(sim.last_level(), h),
        control,
        control_norm,
    }
}
