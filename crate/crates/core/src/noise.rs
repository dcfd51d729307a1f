//! Q-Wiener increments, dyadic aggregation of fine increments, and exact
//! sampling of the one-step stochastic convolution.
//!
//! Each mode `k` carries an independent real Brownian motion `β_k`; the noise
//! is `W(t) = Σ γ_k β_k(t) e_k`, truncated to the grid's wavenumber set.
//! Random draws are keyed by `(seed, domain, sample_index, step)` through a
//! ChaCha stream, so any step of any sample can be regenerated without
//! replaying the ones before it.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, SpdeError};
use crate::spectral::{Grid, SpectralState};

/// Domain of the Brownian increments themselves.
pub(crate) const DOMAIN_BROWNIAN: u32 = 0;
/// Domain of the auxiliary normals for the exact convolution at level `r`
/// is `DOMAIN_CONVOLUTION + r`.
pub(crate) const DOMAIN_CONVOLUTION: u32 = 1;
/// Domain for tangent-vector seeding in trajectory diagnostics.
pub(crate) const DOMAIN_TANGENTS: u32 = 0xffff;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CovarianceKind {
    /// `γ_k = 1/(1+k²)`
    PowerLaw2,
    /// `γ_k = 1/(1+k⁴)`
    PowerLaw4,
    Custom,
}

/// Diagonal covariance `Q e_k = γ_k² e_k` on the grid's wavenumbers.
#[derive(Clone, Debug)]
pub struct Covariance {
    kind: CovarianceKind,
    grid: Grid,
    gamma: Vec<f64>,
}

impl Covariance {
    pub fn power_law2(grid: &Grid) -> Self {
        Self::from_fn(grid, CovarianceKind::PowerLaw2, |k| 1.0 / (1.0 + k * k))
    }

    pub fn power_law4(grid: &Grid) -> Self {
        Self::from_fn(grid, CovarianceKind::PowerLaw4, |k| 1.0 / (1.0 + k.powi(4)))
    }

    /// Custom spectrum given as `γ_k` in storage order.
    pub fn custom(grid: &Grid, gamma: Vec<f64>) -> Result<Self> {
        if gamma.len() != grid.num_modes() {
            return Err(SpdeError::GridMismatch {
                expected: grid.num_modes(),
                found: gamma.len(),
            });
        }
        if gamma.iter().any(|g| !g.is_finite() || *g < 0.0) {
            return Err(SpdeError::param("noise spectrum must be finite and nonnegative"));
        }
        Ok(Covariance {
            kind: CovarianceKind::Custom,
            grid: grid.clone(),
            gamma,
        })
    }

    /// Custom spectrum from a function of the wavenumber.
    pub fn custom_fn(grid: &Grid, f: impl Fn(i64) -> f64) -> Result<Self> {
        let gamma = (0..grid.num_modes()).map(|i| f(grid.wavenumber(i))).collect();
        Self::custom(grid, gamma)
    }

    fn from_fn(grid: &Grid, kind: CovarianceKind, f: impl Fn(f64) -> f64) -> Self {
        Covariance {
            kind,
            grid: grid.clone(),
            gamma: grid.wavenumbers().iter().map(|&k| f(k)).collect(),
        }
    }

    pub fn kind(&self) -> CovarianceKind {
        self.kind
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `γ_k` in storage order.
    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// `Tr(Q) = Σ γ_k²`.
    pub fn trace(&self) -> f64 {
        self.gamma.iter().map(|g| g * g).sum()
    }
}

/// Free-function form of [`Covariance::trace`].
pub fn trace_q(cov: &Covariance) -> f64 {
    cov.trace()
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The Brownian path of one Monte Carlo sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoisePath {
    pub seed: u64,
    pub sample_index: u64,
}

impl NoisePath {
    pub fn new(seed: u64, sample_index: u64) -> Self {
        NoisePath { seed, sample_index }
    }

    fn rng(&self, domain: u32, step: u64) -> ChaCha8Rng {
        let mut state = self.seed ^ (u64::from(domain) << 32).rotate_left(17);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.sample_index);
        // 2^32 words per step; far more than any grid consumes.
        rng.set_word_pos(u128::from(step) << 32);
        rng
    }

    /// Fills `out` with independent standard normals for `(domain, step)`.
    pub(crate) fn fill_normals(&self, domain: u32, step: u64, out: &mut [f64]) {
        let mut rng = self.rng(domain, step);
        for x in out.iter_mut() {
            *x = StandardNormal.sample(&mut rng);
        }
    }

    /// Writes `γ_k √τ ξ_{n,k}` into `out`.
    pub(crate) fn increment_into(&self, step: u64, tau: f64, cov: &Covariance, out: &mut [Complex64]) {
        let mut rng = self.rng(DOMAIN_BROWNIAN, step);
        let sqrt_tau = tau.sqrt();
        for (c, &g) in out.iter_mut().zip(cov.gamma()) {
            let xi: f64 = StandardNormal.sample(&mut rng);
            *c = Complex64::new(g * sqrt_tau * xi, 0.0);
        }
    }

    /// The increment `δW_n = W((n+1)τ) − W(nτ)` for step `n`.
    pub fn sample_increment(&self, step: u64, tau: f64, cov: &Covariance) -> Result<SpectralState> {
        check_tau(tau)?;
        let mut coeffs = vec![Complex64::default(); cov.grid().num_modes()];
        self.increment_into(step, tau, cov, &mut coeffs);
        Ok(SpectralState::from_raw(cov.grid(), coeffs))
    }

    /// `−iα ∫_{t_n}^{t_{n+1}} S(t_{n+1} − t) dW(t)`, sampled exactly.
    ///
    /// Uses the same normals as [`NoisePath::sample_increment`] for the
    /// Brownian increment of each mode, so the result is coupled to the
    /// increment driving the splitting scheme at the same step.
    pub fn exact_convolution_increment(
        &self,
        step: u64,
        tau: f64,
        alpha: f64,
        cov: &Covariance,
    ) -> Result<SpectralState> {
        check_tau(tau)?;
        let factors = ConvolutionFactors::new(cov.grid(), tau)?;
        let n = cov.grid().num_modes();
        let mut increment = vec![Complex64::default(); n];
        self.increment_into(step, tau, cov, &mut increment);
        let mut aux = vec![0.0; 2 * n];
        self.fill_normals(DOMAIN_CONVOLUTION, step, &mut aux);
        let mut out = vec![Complex64::default(); n];
        factors.convolution_from_increment(&increment, cov.gamma(), &aux, alpha, &mut out);
        Ok(SpectralState::from_raw(cov.grid(), out))
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau.is_finite() && tau > 0.0 {
        Ok(())
    } else {
        Err(SpdeError::param(format!("time step must be positive, got {tau}")))
    }
}

/// A noise increment covering fine steps `first_step .. first_step + steps`.
#[derive(Clone, Debug, PartialEq)]
pub struct Increment {
    pub first_step: u64,
    pub steps: u64,
    pub state: SpectralState,
}

/// Sums a contiguous block of `2^r` increments by pairwise (tree) reduction.
///
/// The tree order makes aggregation exactly associative over dyadic
/// sub-blocks: aggregating four increments is bit-identical to aggregating
/// the two aggregated pairs.
pub fn aggregate_increments(block: &[Increment]) -> Result<Increment> {
    let first = block
        .first()
        .ok_or_else(|| SpdeError::NonContiguous("empty block".into()))?;
    if !block.len().is_power_of_two() {
        return Err(SpdeError::NonContiguous(format!(
            "block length {} is not a power of two",
            block.len()
        )));
    }
    for (i, inc) in block.iter().enumerate() {
        let expected = first.first_step + i as u64 * first.steps;
        if inc.steps != first.steps || inc.first_step != expected {
            return Err(SpdeError::NonContiguous(format!(
                "entry {i} starts at step {} (span {}), expected {expected} (span {})",
                inc.first_step, inc.steps, first.steps
            )));
        }
        first.state.grid().check_same(inc.state.grid())?;
    }
    Ok(Increment {
        first_step: first.first_step,
        steps: first.steps * block.len() as u64,
        state: SpectralState::from_raw(first.state.grid(), tree_sum(block)),
    })
}

fn tree_sum(block: &[Increment]) -> Vec<Complex64> {
    if block.len() == 1 {
        return block[0].state.coeffs().to_vec();
    }
    let (lo, hi) = block.split_at(block.len() / 2);
    let mut a = tree_sum(lo);
    let b = tree_sum(hi);
    add_assign(&mut a, &b);
    a
}

pub(crate) fn add_assign(a: &mut [Complex64], b: &[Complex64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += *y;
    }
}

/// Per-mode Cholesky factor of the joint covariance of
/// `(B, X, Y) = (∫dβ, ∫cos(k²s)dβ, ∫sin(k²s)dβ)` over one step, with `s` the
/// time remaining to the end of the step.
#[derive(Clone, Debug)]
pub struct ConvolutionFactors {
    tau: f64,
    // (l00, l10, l11, l20, l21, l22) per mode
    factors: Vec<[f64; 6]>,
}

/// Second moments of `(B, X, Y)` for a single mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeMoments {
    pub var_b: f64,
    pub var_x: f64,
    pub var_y: f64,
    pub cov_bx: f64,
    pub cov_by: f64,
    pub cov_xy: f64,
}

/// Itô-isometry integrals over `[0, τ]` for wavenumber `k`.
pub fn mode_moments(k: f64, tau: f64) -> ModeMoments {
    let k2 = k * k;
    if k2 == 0.0 {
        return ModeMoments {
            var_b: tau,
            var_x: tau,
            var_y: 0.0,
            cov_bx: tau,
            cov_by: 0.0,
            cov_xy: 0.0,
        };
    }
    let theta = k2 * tau;
    let x = 2.0 * theta;
    // (x − sin x)/x, with a series where the subtraction cancels
    let x_minus_sin_over_x = if x < 0.1 {
        let x2 = x * x;
        x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0 * (1.0 - x2 / 72.0)))
    } else {
        (x - x.sin()) / x
    };
    let var_y = 0.5 * tau * x_minus_sin_over_x;
    let half = (0.5 * theta).sin();
    ModeMoments {
        var_b: tau,
        var_x: tau - var_y,
        var_y,
        cov_bx: theta.sin() / k2,
        cov_by: 2.0 * half * half / k2,
        cov_xy: theta.sin().powi(2) / (2.0 * k2),
    }
}

impl ConvolutionFactors {
    pub fn new(grid: &Grid, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        let factors = grid
            .wavenumbers()
            .iter()
            .map(|&k| cholesky3(&mode_moments(k, tau)))
            .collect();
        Ok(ConvolutionFactors { tau, factors })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Builds the exact convolution from the Brownian increment of the same
    /// step (`increment_k = γ_k B_k`) plus `2N` auxiliary normals.
    pub(crate) fn convolution_from_increment(
        &self,
        increment: &[Complex64],
        gamma: &[f64],
        aux: &[f64],
        alpha: f64,
        out: &mut [Complex64],
    ) {
        let inv_sqrt_tau = 1.0 / self.tau.sqrt();
        for (i, (o, l)) in out.iter_mut().zip(&self.factors).enumerate() {
            let g = gamma[i];
            if g == 0.0 {
                *o = Complex64::default();
                continue;
            }
            let xi0 = increment[i].re / g * inv_sqrt_tau;
            let (xi1, xi2) = (aux[2 * i], aux[2 * i + 1]);
            let x = l[1] * xi0 + l[2] * xi1;
            let y = l[3] * xi0 + l[4] * xi1 + l[5] * xi2;
            // −iαγ(X + iY) = αγ(Y − iX)
            *o = Complex64::new(alpha * g * y, -alpha * g * x);
        }
    }
}

fn cholesky3(m: &ModeMoments) -> [f64; 6] {
    let l00 = m.var_b.sqrt();
    let l10 = m.cov_bx / l00;
    let l20 = m.cov_by / l00;
    let d11 = m.var_x - l10 * l10;
    // roundoff can push the conditional variances slightly negative when k²τ is tiny
    let l11 = d11.max(0.0).sqrt();
    let tiny = 1e-300_f64.max(1e-14 * m.var_b.sqrt());
    let l21 = if l11 > tiny {
        (m.cov_xy - l20 * l10) / l11
    } else {
        0.0
    };
    let l22 = (m.var_y - l20 * l20 - l21 * l21).max(0.0).sqrt();
    [l00, l10, l11, l20, l21, l22]
}
