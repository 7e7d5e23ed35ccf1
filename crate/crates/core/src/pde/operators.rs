//! Difference operators on the pinned-periodic grid.
//!
//! The boundary conditions `y(0) = y(L) = 0`, `y_x(0) = y_x(L)` are realized
//! by a periodic grid of `N` nodes whose node `0` (identified with node `N`)
//! is pinned to zero. Every operator is the periodic circulant stencil with
//! row and column `0` removed, so skew-symmetry and symmetry of the periodic
//! stencils carry over exactly to the `(N-1) x (N-1)` matrices.
//!
//! This is slightly smoother across the glue point than the continuous
//! domain requires (it also matches `y_xx` there). A one-sided closure that
//! only imposes the two stated conditions would lose the exact energy
//! identity and is not provided.

use nalgebra::DMatrix;
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::error::{Error, Result};
use crate::grid::{Field, SpatialGrid, TimeGrid};

/// `D1`, `D2`, `D3` and the forward difference `D1+` on a pinned-periodic grid.
#[derive(Debug, Clone)]
pub struct DiscreteOperators {
    grid: SpatialGrid,
    d1: CsrMatrix<f64>,
    d2: CsrMatrix<f64>,
    d3: CsrMatrix<f64>,
    d1_forward: CsrMatrix<f64>,
    d1_dense: DMatrix<f64>,
    d2_dense: DMatrix<f64>,
    d3_dense: DMatrix<f64>,
    quadrature: Vec<f64>,
}

/// Periodic stencil `(offset, coefficient)` restricted to the unknowns `1..N-1`.
fn pinned_circulant(cells: usize, stencil: &[(isize, f64)]) -> CsrMatrix<f64> {
    let n = cells - 1;
    let mut coo = CooMatrix::new(n, n);
    for row in 0..n {
        let node = (row + 1) as isize;
        for &(off, c) in stencil {
            let k = (node + off).rem_euclid(cells as isize);
            if k != 0 {
                coo.push(row, (k - 1) as usize, c);
            }
        }
    }
    CsrMatrix::from(&coo)
}

fn csr_to_dense(m: &CsrMatrix<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(m.nrows(), m.ncols());
    for (i, j, v) in m.triplet_iter() {
        d[(i, j)] += *v;
    }
    d
}

fn csr_apply(m: &CsrMatrix<f64>, u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.nrows()];
    for (i, row) in m.row_iter().enumerate() {
        out[i] = row
            .col_indices()
            .iter()
            .zip(row.values())
            .map(|(&j, v)| v * u[j])
            .sum();
    }
    out
}

impl DiscreteOperators {
    pub fn new(grid: &SpatialGrid) -> Self {
        let cells = grid.cells();
        let h = grid.spacing();
        let c1 = 1.0 / (2.0 * h);
        let c2 = 1.0 / (h * h);
        let c3 = 1.0 / (2.0 * h * h * h);
        let d1 = pinned_circulant(cells, &[(1, c1), (-1, -c1)]);
        let d2 = pinned_circulant(cells, &[(1, c2), (0, -2.0 * c2), (-1, c2)]);
        let d3 = pinned_circulant(cells, &[(2, c3), (1, -2.0 * c3), (-1, 2.0 * c3), (-2, -c3)]);

        // (D1+ u)_c = (u_{c+1} - u_c) / h for the N cells, u_0 = u_N = 0
        let n = cells - 1;
        let mut coo = CooMatrix::new(cells, n);
        for c in 0..cells {
            if c < n {
                coo.push(c, c, 1.0 / h);
            }
            if c >= 1 {
                coo.push(c, c - 1, -1.0 / h);
            }
        }
        let d1_forward = CsrMatrix::from(&coo);

        Self {
            grid: *grid,
            d1_dense: csr_to_dense(&d1),
            d2_dense: csr_to_dense(&d2),
            d3_dense: csr_to_dense(&d3),
            d1,
            d2,
            d3,
            d1_forward,
            quadrature: vec![h; n],
        }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn size(&self) -> usize {
        self.grid.interior()
    }

    pub fn d1(&self) -> &CsrMatrix<f64> {
        &self.d1
    }

    pub fn d2(&self) -> &CsrMatrix<f64> {
        &self.d2
    }

    pub fn d3(&self) -> &CsrMatrix<f64> {
        &self.d3
    }

    /// Forward difference over all `N` cells, `N x (N-1)`.
    pub fn d1_forward(&self) -> &CsrMatrix<f64> {
        &self.d1_forward
    }

    pub fn d1_dense(&self) -> &DMatrix<f64> {
        &self.d1_dense
    }

    pub fn d2_dense(&self) -> &DMatrix<f64> {
        &self.d2_dense
    }

    pub fn d3_dense(&self) -> &DMatrix<f64> {
        &self.d3_dense
    }

    /// Trapezoid weights on the interior nodes (all equal to `h`).
    pub fn quadrature(&self) -> &[f64] {
        &self.quadrature
    }

    pub fn apply_d1(&self, u: &[f64]) -> Vec<f64> {
        csr_apply(&self.d1, u)
    }

    pub fn apply_d2(&self, u: &[f64]) -> Vec<f64> {
        csr_apply(&self.d2, u)
    }

    pub fn apply_d3(&self, u: &[f64]) -> Vec<f64> {
        csr_apply(&self.d3, u)
    }

    pub fn forward_difference(&self, u: &[f64]) -> Vec<f64> {
        csr_apply(&self.d1_forward, u)
    }

    /// Discretization of `(w u)_x` that is the exact derivative of
    /// [`Self::nonlinear_term`] at `w`: `(2 D1 W + W D1 + diag(D1 w)) / 3`.
    pub fn convection_linearized(&self, w: &[f64]) -> DMatrix<f64> {
        let n = self.size();
        let dw = self.apply_d1(w);
        let mut b = DMatrix::zeros(n, n);
        for (i, j, &d) in self.d1.triplet_iter() {
            b[(i, j)] += (2.0 * d * w[j] + w[i] * d) / 3.0;
        }
        for i in 0..n {
            b[(i, i)] += dw[i] / 3.0;
        }
        b
    }

    /// Skew-symmetric convection `(D1 W + W D1) / 3`; `B(u) u` discretizes `u u_x`.
    pub fn convection_skew(&self, w: &[f64]) -> DMatrix<f64> {
        let n = self.size();
        let mut b = DMatrix::zeros(n, n);
        for (i, j, &d) in self.d1.triplet_iter() {
            b[(i, j)] += d * (w[i] + w[j]) / 3.0;
        }
        b
    }

    /// Energy-neutral split `u u_x ~ (D1(u^2) + u D1 u) / 3`.
    pub fn nonlinear_term(&self, u: &[f64]) -> Vec<f64> {
        let sq: Vec<f64> = u.iter().map(|v| v * v).collect();
        let a = self.apply_d1(&sq);
        let b = self.apply_d1(u);
        a.iter()
            .zip(u.iter().zip(&b))
            .map(|(x, (ui, bi))| (x + ui * bi) / 3.0)
            .collect()
    }

    /// `K = D3 - nu D2 + B(w)`, the spatial operator of `y_t + K y = f`.
    pub fn spatial_operator(&self, nu: f64, ybar: Option<&[f64]>) -> DMatrix<f64> {
        let mut k = &self.d3_dense - &self.d2_dense * nu;
        if let Some(w) = ybar {
            k += self.convection_linearized(w);
        }
        k
    }
}

/// Shorthand for [`DiscreteOperators::new`].
pub fn assemble_operators(grid: &SpatialGrid) -> DiscreteOperators {
    DiscreteOperators::new(grid)
}

/// `h <(-D3 + nu0 D2) u, u>`, which equals `-nu0 h ||D1+ u||^2`.
pub fn dissipativity_pairing(ops: &DiscreteOperators, nu0: f64, u: &[f64]) -> Result<f64> {
    if u.len() != ops.size() {
        return Err(Error::shape(ops.size(), u.len()));
    }
    let d3u = ops.apply_d3(u);
    let d2u = ops.apply_d2(u);
    let h = ops.grid().spacing();
    Ok(h * u
        .iter()
        .zip(d3u.iter().zip(&d2u))
        .map(|(ui, (a, b))| (-a + nu0 * b) * ui)
        .sum::<f64>())
}

/// Diffusion `nu(t) = nu0 + nu_tilde(t)` and the frozen transport coefficient `ybar`.
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    nu0: f64,
    nu_tilde: Vec<f64>,
    ybar: Option<Field>,
}

impl CoefficientSet {
    /// `nu_tilde` holds one sample per time level.
    pub fn new(nu0: f64, nu_tilde: Vec<f64>, ybar: Option<Field>) -> Result<Self> {
        if !(nu0.is_finite() && nu0 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "nu0 must be positive, got {nu0}"
            )));
        }
        if let Some(bad) = nu_tilde.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "nu_tilde must be nonnegative, got {bad}"
            )));
        }
        if let Some(y) = &ybar {
            if y.levels() != nu_tilde.len() {
                return Err(Error::shape(
                    format!("{} levels of ybar", nu_tilde.len()),
                    y.levels(),
                ));
            }
        }
        Ok(Self {
            nu0,
            nu_tilde,
            ybar,
        })
    }

    /// Constant diffusion `nu0` and no transport.
    pub fn constant(nu0: f64, tg: &TimeGrid) -> Result<Self> {
        Self::new(nu0, vec![0.0; tg.levels()], None)
    }

    pub fn with_ybar(mut self, ybar: Option<Field>) -> Result<Self> {
        if let Some(y) = &ybar {
            if y.levels() != self.nu_tilde.len() {
                return Err(Error::shape(self.nu_tilde.len(), y.levels()));
            }
        }
        self.ybar = ybar;
        Ok(self)
    }

    pub fn nu0(&self) -> f64 {
        self.nu0
    }

    pub fn nu_tilde(&self) -> &[f64] {
        &self.nu_tilde
    }

    pub fn ybar(&self) -> Option<&Field> {
        self.ybar.as_ref()
    }

    pub fn levels(&self) -> usize {
        self.nu_tilde.len()
    }

    pub fn nu_max(&self) -> f64 {
        self.nu0 + self.nu_tilde.iter().cloned().fold(0.0, f64::max)
    }

    pub fn check(&self, sg: &SpatialGrid, tg: &TimeGrid) -> Result<()> {
        if self.nu_tilde.len() != tg.levels() {
            return Err(Error::shape(
                format!("{} nu_tilde samples", tg.levels()),
                self.nu_tilde.len(),
            ));
        }
        if let Some(y) = &self.ybar {
            y.check_grids(sg, tg)?;
        }
        Ok(())
    }

    /// `nu` on step `n`: `nu0` plus the `theta`-average of the level samples.
    pub fn nu_step(&self, n: usize, theta: f64) -> f64 {
        self.nu0 + theta * self.nu_tilde[n + 1] + (1.0 - theta) * self.nu_tilde[n]
    }

    /// `theta`-average of `ybar` on step `n`, if any.
    pub fn ybar_step(&self, n: usize, theta: f64) -> Option<Vec<f64>> {
        self.ybar.as_ref().map(|y| {
            y.level(n)
                .iter()
                .zip(y.level(n + 1))
                .map(|(a, b)| theta * b + (1.0 - theta) * a)
                .collect()
        })
    }

    /// `true` when every step sees the same spatial operator.
    pub fn is_time_invariant(&self) -> bool {
        let nu_const = self.nu_tilde.windows(2).all(|w| w[0] == w[1]);
        let ybar_const = match &self.ybar {
            None => true,
            Some(y) => (1..y.levels()).all(|n| y.level(n) == y.level(0)),
        };
        nu_const && ybar_const
    }
}
