//! Fourier discretization of the torus `[0, 2π)`.
//!
//! Coefficients are stored against the orthonormal basis
//! `e_k(x) = exp(ikx) / sqrt(2π)`, so the squared `L²` norm of a field is the
//! plain sum `Σ |c_k|²`. The `sqrt(2π)/N` scaling lives only in the two
//! transforms. Storage follows the usual FFT layout: index `i < N/2` holds
//! wavenumber `i`, index `i ≥ N/2` holds `i - N`, so the wavenumber set is
//! `{-N/2, ..., N/2 - 1}`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Result, SpdeError};

struct GridInner {
    num_modes: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    wavenumbers: Vec<f64>,
}

/// Uniform grid of `N` nodes `x_j = j·2π/N` with cached FFT plans.
///
/// Cloning is cheap; clones share the plans and compare equal.
#[derive(Clone)]
pub struct Grid(Arc<GridInner>);

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("num_modes", &self.0.num_modes).finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0.num_modes == other.0.num_modes
    }
}

impl Grid {
    pub fn new(num_modes: usize) -> Result<Self> {
        if num_modes < 4 || !num_modes.is_power_of_two() {
            return Err(SpdeError::InvalidGrid(num_modes));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(num_modes);
        let inverse = planner.plan_fft_inverse(num_modes);
        let wavenumbers = (0..num_modes)
            .map(|i| wavenumber_at(i, num_modes) as f64)
            .collect();
        Ok(Grid(Arc::new(GridInner {
            num_modes,
            forward,
            inverse,
            wavenumbers,
        })))
    }

    pub fn num_modes(&self) -> usize {
        self.0.num_modes
    }

    pub fn length(&self) -> f64 {
        2.0 * PI
    }

    pub fn node_spacing(&self) -> f64 {
        2.0 * PI / self.0.num_modes as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.node_spacing()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.num_modes()).map(move |j| self.node(j))
    }

    /// Wavenumber stored at storage index `i`.
    pub fn wavenumber(&self, i: usize) -> i64 {
        wavenumber_at(i, self.0.num_modes)
    }

    /// Wavenumbers in storage order, as floats.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.0.wavenumbers
    }

    /// Storage index of wavenumber `k`, if it lies in `{-N/2, ..., N/2 - 1}`.
    pub fn index_of(&self, k: i64) -> Option<usize> {
        let n = self.0.num_modes as i64;
        if k < -n / 2 || k >= n / 2 {
            None
        } else {
            Some(k.rem_euclid(n) as usize)
        }
    }

    /// Node values to orthonormal coefficients, in place.
    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.num_modes());
        self.0.forward.process(buf);
        let scale = (2.0 * PI).sqrt() / self.num_modes() as f64;
        buf.iter_mut().for_each(|c| *c *= scale);
    }

    /// Orthonormal coefficients to node values, in place.
    pub fn inverse_in_place(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.num_modes());
        self.0.inverse.process(buf);
        let scale = 1.0 / (2.0 * PI).sqrt();
        buf.iter_mut().for_each(|c| *c *= scale);
    }

    /// Multipliers `exp(i t k²)` of the free group `S(t) = exp(-itΔ)`.
    pub fn semigroup_factors(&self, t: f64) -> Vec<Complex64> {
        self.wavenumbers()
            .iter()
            .map(|&k| Complex64::from_polar(1.0, t * k * k))
            .collect()
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(SpdeError::GridMismatch {
                expected: self.num_modes(),
                found: other.num_modes(),
            })
        }
    }
}

fn wavenumber_at(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

fn all_finite(v: &[Complex64]) -> bool {
    v.iter().all(|c| c.re.is_finite() && c.im.is_finite())
}

/// Node values `u(x_j)` of a field.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldState {
    grid: Grid,
    values: Vec<Complex64>,
}

impl FieldState {
    pub fn new(grid: &Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.num_modes() {
            return Err(SpdeError::GridMismatch {
                expected: grid.num_modes(),
                found: values.len(),
            });
        }
        if !all_finite(&values) {
            return Err(SpdeError::NonFinite("field values"));
        }
        Ok(FieldState {
            grid: grid.clone(),
            values,
        })
    }

    /// Samples `f` at the grid nodes.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let values = grid.nodes().map(f).collect();
        Self::new(grid, values)
    }

    pub fn zeros(grid: &Grid) -> Self {
        FieldState {
            grid: grid.clone(),
            values: vec![Complex64::default(); grid.num_modes()],
        }
    }

    pub(crate) fn from_raw(grid: &Grid, values: Vec<Complex64>) -> Self {
        FieldState {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// Trapezoidal mass `Δx Σ |u(x_j)|²`.
    pub fn quadrature_mass(&self) -> f64 {
        self.grid.node_spacing() * self.values.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    pub fn to_modes(&self) -> Result<SpectralState> {
        if !all_finite(&self.values) {
            return Err(SpdeError::NonFinite("field values"));
        }
        let mut coeffs = self.values.clone();
        self.grid.forward_in_place(&mut coeffs);
        Ok(SpectralState {
            grid: self.grid.clone(),
            coeffs,
        })
    }
}

/// Orthonormal Fourier coefficients of a field, in storage order.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralState {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl SpectralState {
    pub fn new(grid: &Grid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.num_modes() {
            return Err(SpdeError::GridMismatch {
                expected: grid.num_modes(),
                found: coeffs.len(),
            });
        }
        if !all_finite(&coeffs) {
            return Err(SpdeError::NonFinite("spectral coefficients"));
        }
        Ok(SpectralState {
            grid: grid.clone(),
            coeffs,
        })
    }

    pub fn zeros(grid: &Grid) -> Self {
        SpectralState {
            grid: grid.clone(),
            coeffs: vec![Complex64::default(); grid.num_modes()],
        }
    }

    /// State with a single nonzero coefficient `value` at wavenumber `k`.
    pub fn single_mode(grid: &Grid, k: i64, value: Complex64) -> Result<Self> {
        let idx = grid
            .index_of(k)
            .ok_or_else(|| SpdeError::param(format!("wavenumber {k} outside the grid")))?;
        let mut s = Self::zeros(grid);
        s.coeffs[idx] = value;
        Ok(s)
    }

    pub(crate) fn from_raw(grid: &Grid, coeffs: Vec<Complex64>) -> Self {
        SpectralState {
            grid: grid.clone(),
            coeffs,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Coefficient at wavenumber `k` (zero outside the grid).
    pub fn coeff(&self, k: i64) -> Complex64 {
        self.grid
            .index_of(k)
            .map(|i| self.coeffs[i])
            .unwrap_or_default()
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.coeffs)
    }

    pub fn to_nodes(&self) -> Result<FieldState> {
        if !self.is_finite() {
            return Err(SpdeError::NonFinite("spectral coefficients"));
        }
        let mut values = self.coeffs.clone();
        self.grid.inverse_in_place(&mut values);
        Ok(FieldState {
            grid: self.grid.clone(),
            values,
        })
    }

    /// `S(t) = exp(-itΔ)`: mode `k` is multiplied by `exp(i t k²)`.
    pub fn apply_semigroup(&self, t: f64) -> Result<SpectralState> {
        if !t.is_finite() {
            return Err(SpdeError::NonFinite("semigroup time"));
        }
        let mut out = self.clone();
        for (c, &k) in out.coeffs.iter_mut().zip(self.grid.wavenumbers()) {
            *c *= Complex64::from_polar(1.0, t * k * k);
        }
        Ok(out)
    }

    /// `(Σ (1 + k²)^σ |c_k|²)^{1/2}` for `σ ∈ {0, 1, 2}`.
    pub fn sobolev_norm(&self, sigma: u32) -> Result<f64> {
        if sigma > 2 {
            return Err(SpdeError::InvalidSobolevIndex(sigma));
        }
        let sum: f64 = self
            .coeffs
            .iter()
            .zip(self.grid.wavenumbers())
            .map(|(c, &k)| (1.0 + k * k).powi(sigma as i32) * c.norm_sqr())
            .sum();
        Ok(sum.sqrt())
    }

    pub fn l2_norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// `L²` distance to another state on the same grid.
    pub fn distance(&self, other: &SpectralState) -> f64 {
        l2_distance(&self.coeffs, &other.coeffs)
    }
}

pub(crate) fn l2_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Zeroes every mode with `|k| > N/3`.
pub(crate) fn dealias(grid: &Grid, coeffs: &mut [Complex64]) {
    let cutoff = grid.num_modes() as f64 / 3.0;
    for (c, &k) in coeffs.iter_mut().zip(grid.wavenumbers()) {
        if k.abs() > cutoff {
            *c = Complex64::default();
        }
    }
}
