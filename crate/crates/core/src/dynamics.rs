//! Nonlinearities `F(u) = V[u] u` with real potential `V[u]` depending only on
//! `|u|`, the exact phase flow `Φ_t(u) = exp(−itV[u]) u` of `iu' = F(u)`, and
//! its linearization.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Result, SpdeError};
use crate::spectral::{FieldState, Grid};

/// Largest imaginary residue (relative to the potential's magnitude) that a
/// spectral convolution may leave before it is treated as a convention bug.
const RESIDUE_LIMIT: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CubicSign {
    Plus,
    Minus,
}

impl CubicSign {
    pub fn value(self) -> f64 {
        match self {
            CubicSign::Plus => 1.0,
            CubicSign::Minus => -1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Nonlinearity {
    Zero,
    /// `V[u] = V`, a fixed real potential sampled at the nodes.
    ExternalPotential { potential: Vec<f64> },
    /// `V[u] = V ⋆ |u|²` on the torus.
    NonlocalInteraction {
        kernel: Vec<f64>,
        /// `√(2π) v̂_k`: multiplying orthonormal coefficients by this is the
        /// torus convolution with the kernel.
        kernel_hat: Vec<Complex64>,
        grid: Grid,
    },
    /// `V[u] = ±|u|²`
    Cubic(CubicSign),
}

impl Nonlinearity {
    pub fn external(grid: &Grid, potential: Vec<f64>) -> Result<Self> {
        check_real_nodes(grid, &potential)?;
        Ok(Nonlinearity::ExternalPotential { potential })
    }

    pub fn external_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::external(grid, grid.nodes().map(f).collect())
    }

    pub fn nonlocal(grid: &Grid, kernel: Vec<f64>) -> Result<Self> {
        check_real_nodes(grid, &kernel)?;
        let mut kernel_hat: Vec<Complex64> = kernel.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        grid.forward_in_place(&mut kernel_hat);
        let scale = (2.0 * PI).sqrt();
        kernel_hat.iter_mut().for_each(|c| *c *= scale);
        Ok(Nonlinearity::NonlocalInteraction {
            kernel,
            kernel_hat,
            grid: grid.clone(),
        })
    }

    pub fn nonlocal_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::nonlocal(grid, grid.nodes().map(f).collect())
    }

    pub fn cubic(sign: CubicSign) -> Self {
        Nonlinearity::Cubic(sign)
    }

    /// Checks that node-valued data belongs to `grid`.
    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        match self {
            Nonlinearity::ExternalPotential { potential } if potential.len() != grid.num_modes() => {
                Err(SpdeError::GridMismatch {
                    expected: grid.num_modes(),
                    found: potential.len(),
                })
            }
            Nonlinearity::NonlocalInteraction { grid: g, .. } => grid.check_same(g),
            _ => Ok(()),
        }
    }

    /// Writes `V[u](x_j)` into `out`.
    pub(crate) fn potential_into(&self, grid: &Grid, u: &[Complex64], out: &mut [f64]) -> Result<()> {
        match self {
            Nonlinearity::Zero => out.fill(0.0),
            Nonlinearity::ExternalPotential { potential } => out.copy_from_slice(potential),
            Nonlinearity::Cubic(sign) => {
                let s = sign.value();
                for (o, v) in out.iter_mut().zip(u) {
                    *o = s * v.norm_sqr();
                }
            }
            Nonlinearity::NonlocalInteraction { kernel_hat, .. } => {
                let mut density: Vec<Complex64> = u.iter().map(|v| Complex64::new(v.norm_sqr(), 0.0)).collect();
                convolve_in_place(grid, kernel_hat, &mut density, out)?;
            }
        }
        Ok(())
    }

    /// `V[u]` at the nodes.
    pub fn potential_of(&self, u: &FieldState) -> Result<Vec<f64>> {
        self.check_grid(u.grid())?;
        let mut out = vec![0.0; u.values().len()];
        self.potential_into(u.grid(), u.values(), &mut out)?;
        Ok(out)
    }

    /// `F(u) = V[u] u`.
    pub fn evaluate(&self, u: &FieldState) -> Result<FieldState> {
        let v = self.potential_of(u)?;
        let values = u.values().iter().zip(&v).map(|(x, p)| x * p).collect();
        Ok(FieldState::from_raw(u.grid(), values))
    }

    /// Exact flow `Φ_t(u) = exp(−itV[u]) u`.
    pub fn flow(&self, u: &FieldState, t: f64) -> Result<FieldState> {
        if !t.is_finite() {
            return Err(SpdeError::NonFinite("flow time"));
        }
        let v = self.potential_of(u)?;
        let mut values = u.values().to_vec();
        apply_phase(&mut values, &v, t);
        Ok(FieldState::from_raw(u.grid(), values))
    }

    /// `DV[u].h` at the nodes (zero for potentials independent of `u`).
    pub(crate) fn potential_derivative_into(
        &self,
        grid: &Grid,
        u: &[Complex64],
        h: &[Complex64],
        out: &mut [f64],
    ) -> Result<()> {
        match self {
            Nonlinearity::Zero | Nonlinearity::ExternalPotential { .. } => out.fill(0.0),
            Nonlinearity::Cubic(sign) => {
                let s = 2.0 * sign.value();
                for ((o, a), b) in out.iter_mut().zip(u).zip(h) {
                    *o = s * (a.conj() * b).re;
                }
            }
            Nonlinearity::NonlocalInteraction { kernel_hat, .. } => {
                let mut rho: Vec<Complex64> = u
                    .iter()
                    .zip(h)
                    .map(|(a, b)| Complex64::new(2.0 * (a.conj() * b).re, 0.0))
                    .collect();
                convolve_in_place(grid, kernel_hat, &mut rho, out)?;
            }
        }
        Ok(())
    }

    /// `DΦ_t(u).h = exp(−itV[u]) (h − it (DV[u].h) u)`.
    pub fn linearize_flow(&self, u: &FieldState, h: &FieldState, t: f64) -> Result<FieldState> {
        u.grid().check_same(h.grid())?;
        self.check_grid(u.grid())?;
        let n = u.values().len();
        let mut v = vec![0.0; n];
        let mut dv = vec![0.0; n];
        self.potential_into(u.grid(), u.values(), &mut v)?;
        self.potential_derivative_into(u.grid(), u.values(), h.values(), &mut dv)?;
        let mut out = vec![Complex64::default(); n];
        linearized_phase(&mut out, u.values(), h.values(), &v, &dv, t);
        Ok(FieldState::from_raw(u.grid(), out))
    }
}

fn check_real_nodes(grid: &Grid, values: &[f64]) -> Result<()> {
    if values.len() != grid.num_modes() {
        return Err(SpdeError::GridMismatch {
            expected: grid.num_modes(),
            found: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(SpdeError::NonFinite("potential nodes"));
    }
    Ok(())
}

/// Replaces `buf` (node values of a real density) by its spectral convolution
/// with the kernel; the real part lands in `out`.
fn convolve_in_place(grid: &Grid, kernel_hat: &[Complex64], buf: &mut [Complex64], out: &mut [f64]) -> Result<()> {
    grid.forward_in_place(buf);
    // sup-norm bound of the result, used to judge the imaginary residue
    let mut scale = 0.0f64;
    for (c, k) in buf.iter_mut().zip(kernel_hat) {
        *c *= k;
        scale += c.norm();
    }
    scale /= (2.0 * PI).sqrt();
    grid.inverse_in_place(buf);
    let mut residue = 0.0f64;
    for (o, c) in out.iter_mut().zip(buf.iter()) {
        *o = c.re;
        residue = residue.max(c.im.abs());
    }
    if residue > RESIDUE_LIMIT * scale {
        return Err(SpdeError::ConventionBug { residue, scale });
    }
    Ok(())
}

/// `u(x_j) ← exp(−itV_j) u(x_j)`.
pub(crate) fn apply_phase(u: &mut [Complex64], v: &[f64], t: f64) {
    for (x, p) in u.iter_mut().zip(v) {
        *x *= Complex64::from_polar(1.0, -t * p);
    }
}

pub(crate) fn linearized_phase(
    out: &mut [Complex64],
    u: &[Complex64],
    h: &[Complex64],
    v: &[f64],
    dv: &[f64],
    t: f64,
) {
    for i in 0..out.len() {
        let inner = h[i] - Complex64::new(0.0, t * dv[i]) * u[i];
        out[i] = Complex64::from_polar(1.0, -t * v[i]) * inner;
    }
}
