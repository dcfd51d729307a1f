//! One-step maps: the splitting scheme `u ↦ S(τ)(Φ_τ(u) − iα δW)`, its
//! exact-convolution variant, and the Euler–Maruyama, semi-implicit
//! Euler–Maruyama, stochastic exponential and Crank–Nicolson comparators.
//!
//! All linear parts are diagonal in Fourier space. Nonlinear work happens in
//! node space between a pair of transforms. Every map can carry tangent
//! vectors along, propagated by the exact linearization of the same map.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;

use crate::dynamics::{apply_phase, linearized_phase, Nonlinearity};
use crate::error::{Result, SpdeError};
use crate::noise::{ConvolutionFactors, Covariance, NoisePath, DOMAIN_CONVOLUTION};
use crate::spectral::{dealias, Grid, SpectralState};

/// Node modulus beyond which a trajectory is declared diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    /// `S(τ)(Φ_τ(u) − iα δW)`
    #[default]
    Split,
    /// `S(τ)Φ_τ(u) − iα ∫ S(t_{n+1} − t) dW`
    SplitExact,
    /// Explicit Euler–Maruyama.
    EulerMaruyama,
    /// Euler–Maruyama, implicit in the Laplacian.
    SemiImplicitEuler,
    /// `S(τ)(u − iτF(u) − iα δW)`
    StochasticExponential,
    /// Crank–Nicolson in the Laplacian, explicit in `F`.
    CrankNicolson,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::Split,
        Scheme::SplitExact,
        Scheme::EulerMaruyama,
        Scheme::SemiImplicitEuler,
        Scheme::StochasticExponential,
        Scheme::CrankNicolson,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Split => "split",
            Scheme::SplitExact => "split-exact",
            Scheme::EulerMaruyama => "em",
            Scheme::SemiImplicitEuler => "sem",
            Scheme::StochasticExponential => "sexp",
            Scheme::CrankNicolson => "cn",
        }
    }

    fn is_splitting(self) -> bool {
        matches!(self, Scheme::Split | Scheme::SplitExact)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = SpdeError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name() == lower)
            .ok_or_else(|| SpdeError::Config(format!("unknown scheme '{s}'")))
    }
}

/// Step data shared by all schemes at one step size, with the diagonal
/// multipliers precomputed.
#[derive(Clone, Debug)]
pub struct StepContext {
    tau: f64,
    alpha: f64,
    nonlinearity: Arc<Nonlinearity>,
    covariance: Covariance,
    grid: Grid,
    dealias: bool,
    semigroup: Vec<Complex64>,
    explicit: Vec<Complex64>,
    implicit_inv: Vec<Complex64>,
    cayley: Vec<Complex64>,
    cayley_inv: Vec<Complex64>,
    convolution: ConvolutionFactors,
}

impl StepContext {
    pub fn new(
        tau: f64,
        alpha: f64,
        nonlinearity: impl Into<Arc<Nonlinearity>>,
        covariance: Covariance,
    ) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(SpdeError::param(format!("time step must lie in (0, 1), got {tau}")));
        }
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(SpdeError::param(format!("noise size must be finite and nonnegative, got {alpha}")));
        }
        let grid = covariance.grid().clone();
        let nonlinearity = nonlinearity.into();
        nonlinearity.check_grid(&grid)?;
        let k2: Vec<f64> = grid.wavenumbers().iter().map(|k| k * k).collect();
        let half = |x: f64| Complex64::new(1.0, 0.5 * tau * x);
        Ok(StepContext {
            tau,
            alpha,
            semigroup: grid.semigroup_factors(tau),
            explicit: k2.iter().map(|&x| Complex64::new(1.0, tau * x)).collect(),
            implicit_inv: k2.iter().map(|&x| Complex64::new(1.0, -tau * x).inv()).collect(),
            cayley: k2.iter().map(|&x| half(x) / half(x).conj()).collect(),
            cayley_inv: k2.iter().map(|&x| half(x).conj().inv()).collect(),
            convolution: ConvolutionFactors::new(&grid, tau)?,
            nonlinearity,
            covariance,
            grid,
            dealias: false,
        })
    }

    /// Enables 2/3-rule truncation after each nonlinear stage.
    pub fn with_dealias(mut self, on: bool) -> Self {
        self.dealias = on;
        self
    }

    /// Same problem at a different step size.
    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        Ok(StepContext::new(tau, self.alpha, self.nonlinearity.clone(), self.covariance.clone())?
            .with_dealias(self.dealias))
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.nonlinearity
    }

    pub fn covariance(&self) -> &Covariance {
        &self.covariance
    }

    pub fn dealias(&self) -> bool {
        self.dealias
    }

    /// The linear multiplier `|·|` of CN on each mode; unitary by construction.
    pub fn cayley_factors(&self) -> &[Complex64] {
        &self.cayley
    }

    pub(crate) fn convolution(&self) -> &ConvolutionFactors {
        &self.convolution
    }
}

/// A one-step map with its scratch buffers. One per trajectory.
pub struct Stepper {
    scheme: Scheme,
    ctx: StepContext,
    nodes: Vec<Complex64>,
    potential: Vec<f64>,
    force: Vec<Complex64>,
    tangent_nodes: Vec<Complex64>,
    tangent_potential: Vec<f64>,
}

impl Stepper {
    pub fn new(scheme: Scheme, ctx: &StepContext) -> Self {
        let n = ctx.grid.num_modes();
        Stepper {
            scheme,
            ctx: ctx.clone(),
            nodes: vec![Complex64::default(); n],
            potential: vec![0.0; n],
            force: vec![Complex64::default(); n],
            tangent_nodes: vec![Complex64::default(); n],
            tangent_potential: vec![0.0; n],
        }
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn context(&self) -> &StepContext {
        &self.ctx
    }

    /// Advances `u` (coefficients) by one step. `driver` is the Wiener
    /// increment, or for [`Scheme::SplitExact`] the exact stochastic
    /// convolution. `step` only labels a divergence.
    pub fn step(&mut self, u: &mut [Complex64], driver: &[Complex64], step: u64) -> Result<()> {
        self.step_with_tangents(u, &mut [], driver, step)
    }

    /// As [`Stepper::step`], also mapping each tangent through the
    /// linearization of the step at `u`.
    pub fn step_with_tangents(
        &mut self,
        u: &mut [Complex64],
        tangents: &mut [Vec<Complex64>],
        driver: &[Complex64],
        step: u64,
    ) -> Result<()> {
        let grid = self.ctx.grid.clone();
        self.nodes.copy_from_slice(u);
        grid.inverse_in_place(&mut self.nodes);
        if diverged(&self.nodes) {
            return Err(SpdeError::Diverged { step });
        }
        self.ctx
            .nonlinearity
            .potential_into(&grid, &self.nodes, &mut self.potential)?;

        for xi in tangents.iter_mut() {
            self.tangent_step(xi)?;
        }

        let tau = self.ctx.tau;
        let alpha = self.ctx.alpha;
        if self.scheme.is_splitting() {
            apply_phase(&mut self.nodes, &self.potential, tau);
            grid.forward_in_place(&mut self.nodes);
            if self.ctx.dealias {
                dealias(&grid, &mut self.nodes);
            }
            let sg = &self.ctx.semigroup;
            if self.scheme == Scheme::Split {
                for i in 0..u.len() {
                    u[i] = sg[i] * (self.nodes[i] - I * alpha * driver[i]);
                }
            } else {
                for i in 0..u.len() {
                    u[i] = sg[i] * self.nodes[i] + driver[i];
                }
            }
        } else {
            for (f, (x, p)) in self.force.iter_mut().zip(self.nodes.iter().zip(&self.potential)) {
                *f = x * p;
            }
            grid.forward_in_place(&mut self.force);
            if self.ctx.dealias {
                dealias(&grid, &mut self.force);
            }
            for i in 0..u.len() {
                let rhs = -I * (tau * self.force[i] + alpha * driver[i]);
                u[i] = self.linear_update(i, u[i], rhs);
            }
        }
        if u.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(SpdeError::Diverged { step: step + 1 });
        }
        Ok(())
    }

    #[inline]
    fn linear_update(&self, i: usize, u: Complex64, rhs: Complex64) -> Complex64 {
        let c = &self.ctx;
        match self.scheme {
            Scheme::EulerMaruyama => c.explicit[i] * u + rhs,
            Scheme::SemiImplicitEuler => c.implicit_inv[i] * (u + rhs),
            Scheme::StochasticExponential => c.semigroup[i] * (u + rhs),
            Scheme::CrankNicolson => c.cayley[i] * u + c.cayley_inv[i] * rhs,
            Scheme::Split | Scheme::SplitExact => unreachable!("splitting schemes have no linear update"),
        }
    }

    /// Maps one tangent vector; requires `self.nodes`/`self.potential` to
    /// hold `u_n`. Additive noise does not enter the differential.
    fn tangent_step(&mut self, xi: &mut [Complex64]) -> Result<()> {
        let grid = self.ctx.grid.clone();
        let tau = self.ctx.tau;
        self.tangent_nodes.copy_from_slice(xi);
        grid.inverse_in_place(&mut self.tangent_nodes);
        self.ctx.nonlinearity.potential_derivative_into(
            &grid,
            &self.nodes,
            &self.tangent_nodes,
            &mut self.tangent_potential,
        )?;
        if self.scheme.is_splitting() {
            let h = self.tangent_nodes.clone();
            linearized_phase(
                &mut self.tangent_nodes,
                &self.nodes,
                &h,
                &self.potential,
                &self.tangent_potential,
                tau,
            );
            grid.forward_in_place(&mut self.tangent_nodes);
            if self.ctx.dealias {
                dealias(&grid, &mut self.tangent_nodes);
            }
            for (x, (d, s)) in xi.iter_mut().zip(self.tangent_nodes.iter().zip(&self.ctx.semigroup)) {
                *x = s * d;
            }
        } else {
            // F'(u).h = V[u] h + (DV[u].h) u
            for j in 0..self.tangent_nodes.len() {
                self.tangent_nodes[j] =
                    self.potential[j] * self.tangent_nodes[j] + self.tangent_potential[j] * self.nodes[j];
            }
            grid.forward_in_place(&mut self.tangent_nodes);
            if self.ctx.dealias {
                dealias(&grid, &mut self.tangent_nodes);
            }
            for i in 0..xi.len() {
                let rhs = -I * tau * self.tangent_nodes[i];
                xi[i] = self.linear_update(i, xi[i], rhs);
            }
        }
        Ok(())
    }
}

fn diverged(nodes: &[Complex64]) -> bool {
    nodes.iter().any(|c| {
        let m = c.norm();
        !m.is_finite() || m > DIVERGENCE_THRESHOLD
    })
}

/// Fills the driver a scheme consumes at `step` of `path` with `ctx.tau`.
pub(crate) fn native_driver(
    scheme: Scheme,
    path: &NoisePath,
    step: u64,
    ctx: &StepContext,
    aux: &mut Vec<f64>,
    out: &mut [Complex64],
) {
    path.increment_into(step, ctx.tau, &ctx.covariance, out);
    if scheme == Scheme::SplitExact {
        let increment = out.to_vec();
        aux.resize(2 * out.len(), 0.0);
        path.fill_normals(DOMAIN_CONVOLUTION, step, aux);
        ctx.convolution
            .convolution_from_increment(&increment, ctx.covariance.gamma(), aux, ctx.alpha, out);
    }
}

fn single_step(scheme: Scheme, u: &SpectralState, driver: &SpectralState, ctx: &StepContext) -> Result<SpectralState> {
    ctx.grid.check_same(u.grid())?;
    ctx.grid.check_same(driver.grid())?;
    let mut out = u.coeffs().to_vec();
    Stepper::new(scheme, ctx).step(&mut out, driver.coeffs(), 0)?;
    Ok(SpectralState::from_raw(&ctx.grid, out))
}

/// `u_{n+1} = S(τ)(Φ_τ(u_n) − iα δW_n)`
pub fn step_split(u: &SpectralState, dw: &SpectralState, ctx: &StepContext) -> Result<SpectralState> {
    single_step(Scheme::Split, u, dw, ctx)
}

/// `u_{n+1} = S(τ)Φ_τ(u_n) + conv_n`
pub fn step_split_exact(u: &SpectralState, conv: &SpectralState, ctx: &StepContext) -> Result<SpectralState> {
    single_step(Scheme::SplitExact, u, conv, ctx)
}

/// `û_{n+1} = (1 + iτk²)û_n − iτF̂(u_n) − iα δŴ_n`
pub fn step_em(u: &SpectralState, dw: &SpectralState, ctx: &StepContext) -> Result<SpectralState> {
    single_step(Scheme::EulerMaruyama, u, dw, ctx)
}

/// `(1 − iτk²)û_{n+1} = û_n − iτF̂(u_n) − iα δŴ_n`
pub fn step_sem(u: &SpectralState, dw: &SpectralState, ctx: &StepContext) -> Result<SpectralState> {
    single_step(Scheme::SemiImplicitEuler, u, dw, ctx)
}

/// `u_{n+1} = S(τ)(u_n − iτF(u_n) − iα δW_n)`
pub fn step_sexp(u: &SpectralState, dw: &SpectralState, ctx: &StepContext) -> Result<SpectralState> {
    single_step(Scheme::StochasticExponential, u, dw, ctx)
}

/// `(1 − iτk²/2)û_{n+1} = (1 + iτk²/2)û_n − iτF̂(u_n) − iα δŴ_n`
pub fn step_cn(u: &SpectralState, dw: &SpectralState, ctx: &StepContext) -> Result<SpectralState> {
    single_step(Scheme::CrankNicolson, u, dw, ctx)
}

/// A base point with tangent vectors attached.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentBundle {
    pub base: SpectralState,
    pub tangents: Vec<SpectralState>,
}

/// Advances the base by [`step_split`] and each tangent by
/// `ξ ↦ S(τ) DΦ_τ(u_n).ξ`.
pub fn tangent_step_split(bundle: &TangentBundle, dw: &SpectralState, ctx: &StepContext) -> Result<TangentBundle> {
    ctx.grid.check_same(bundle.base.grid())?;
    ctx.grid.check_same(dw.grid())?;
    for t in &bundle.tangents {
        ctx.grid.check_same(t.grid())?;
    }
    let mut base = bundle.base.coeffs().to_vec();
    let mut tangents: Vec<Vec<Complex64>> = bundle.tangents.iter().map(|t| t.coeffs().to_vec()).collect();
    Stepper::new(Scheme::Split, ctx).step_with_tangents(&mut base, &mut tangents, dw.coeffs(), 0)?;
    Ok(TangentBundle {
        base: SpectralState::from_raw(&ctx.grid, base),
        tangents: tangents
            .into_iter()
            .map(|t| SpectralState::from_raw(&ctx.grid, t))
            .collect(),
    })
}

/// States recorded along one path.
#[derive(Clone, Debug)]
pub struct Trajectory {
    /// `(step, state)` pairs, every `save_stride` steps plus the last one.
    pub saved: Vec<(u64, SpectralState)>,
    /// First step at which the path left the finite/bounded regime.
    pub diverged_at: Option<u64>,
}

impl Trajectory {
    pub fn last(&self) -> &SpectralState {
        &self.saved.last().expect("trajectory always holds u_0").1
    }
}

/// Runs `n_steps` of `scheme` on the noise of `path`.
pub fn integrate(
    scheme: Scheme,
    u0: &SpectralState,
    ctx: &StepContext,
    n_steps: u64,
    path: &NoisePath,
    save_stride: u64,
) -> Result<Trajectory> {
    if save_stride == 0 {
        return Err(SpdeError::param("save stride must be at least 1"));
    }
    ctx.grid.check_same(u0.grid())?;
    let mut stepper = Stepper::new(scheme, ctx);
    let mut u = u0.coeffs().to_vec();
    let mut driver = vec![Complex64::default(); u.len()];
    let mut aux = Vec::new();
    let mut saved = vec![(0, u0.clone())];
    for n in 0..n_steps {
        native_driver(scheme, path, n, ctx, &mut aux, &mut driver);
        match stepper.step(&mut u, &driver, n) {
            Ok(()) => {}
            Err(SpdeError::Diverged { step }) => {
                return Ok(Trajectory {
                    saved,
                    diverged_at: Some(step),
                })
            }
            Err(e) => return Err(e),
        }
        if (n + 1) % save_stride == 0 || n + 1 == n_steps {
            saved.push((n + 1, SpectralState::from_raw(&ctx.grid, u.clone())));
        }
    }
    let mut nodes = u.clone();
    ctx.grid.inverse_in_place(&mut nodes);
    let diverged_at = diverged(&nodes).then_some(n_steps);
    if diverged_at.is_some() && saved.len() > 1 {
        saved.pop();
    }
    Ok(Trajectory { saved, diverged_at })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::CubicSign;
    use crate::observables::{mass, symplectic_form};
    use crate::spectral::FieldState;

    fn grid(n: usize) -> Grid {
        Grid::new(n).unwrap()
    }

    fn u0(g: &Grid) -> SpectralState {
        FieldState::from_fn(g, |x| Complex64::new(2.0 / (2.0 - x.cos()), 0.0))
            .unwrap()
            .to_modes()
            .unwrap()
    }

    fn ctx(g: &Grid, tau: f64, alpha: f64, nl: Nonlinearity) -> StepContext {
        StepContext::new(tau, alpha, nl, Covariance::power_law2(g)).unwrap()
    }

    fn rational(g: &Grid) -> Nonlinearity {
        Nonlinearity::external_fn(g, |x| 3.0 / (5.0 - 4.0 * x.cos())).unwrap()
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert!("rk4".parse::<Scheme>().is_err());
        assert_eq!(Scheme::default(), Scheme::Split);
    }

    #[test]
    fn context_validation() {
        let g = grid(8);
        let cov = Covariance::power_law2(&g);
        assert!(StepContext::new(0.0, 1.0, Nonlinearity::Zero, cov.clone()).is_err());
        assert!(StepContext::new(1.0, 1.0, Nonlinearity::Zero, cov.clone()).is_err());
        assert!(StepContext::new(0.1, -1.0, Nonlinearity::Zero, cov.clone()).is_err());
        let other = Nonlinearity::nonlocal_fn(&grid(16), f64::cos).unwrap();
        assert!(StepContext::new(0.1, 1.0, other, cov).is_err());
    }

    #[test]
    fn noiseless_free_split_is_the_semigroup() {
        let g = grid(32);
        let c = ctx(&g, 0.1, 0.0, Nonlinearity::Zero);
        let u = u0(&g);
        let dw = SpectralState::zeros(&g);
        let out = step_split(&u, &dw, &c).unwrap();
        assert!(out.distance(&u.apply_semigroup(0.1).unwrap()) < 1e-13);
        assert!((mass(&out) - mass(&u)).abs() < 1e-12 * mass(&u));
        // the exact-convolution variant coincides without noise
        let exact = step_split_exact(&u, &dw, &c).unwrap();
        assert!(exact.distance(&out) < 1e-14);
        // so does the exponential integrator when F = 0
        let sexp = step_sexp(&u, &dw, &c).unwrap();
        assert!(sexp.distance(&out) < 1e-14);
    }

    #[test]
    fn constant_potential_is_a_global_phase() {
        let g = grid(32);
        let c = ctx(&g, 0.1, 0.0, Nonlinearity::external_fn(&g, |_| 2.0).unwrap());
        let u = u0(&g);
        let dw = SpectralState::zeros(&g);
        let out = step_split(&u, &dw, &c).unwrap();
        let expected = u.apply_semigroup(0.1).unwrap();
        let phase = Complex64::from_polar(1.0, -0.2);
        let diff: f64 = out
            .coeffs()
            .iter()
            .zip(expected.coeffs())
            .map(|(a, b)| (a - b * phase).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(diff < 1e-13);

        // sEXP: S(τ)(1 − iτc)u, mass grows by 1 + τ²c²
        let sexp = step_sexp(&u, &dw, &c).unwrap();
        assert!((mass(&sexp) / mass(&u) - (1.0 + 0.01 * 4.0)).abs() < 1e-12);
    }

    #[test]
    fn single_mode_growth_factors() {
        let g = grid(32);
        let tau: f64 = 0.05;
        let c = ctx(&g, tau, 0.0, Nonlinearity::Zero);
        let dw = SpectralState::zeros(&g);
        for k in [0i64, 1, 3, 7] {
            let u = SpectralState::single_mode(&g, k, Complex64::new(0.6, -0.8)).unwrap();
            let k4 = (k as f64).powi(4);
            let em = step_em(&u, &dw, &c).unwrap();
            assert!((mass(&em) - (1.0 + tau * tau * k4)).abs() < 1e-12 * (1.0 + tau * tau * k4));
            let sem = step_sem(&u, &dw, &c).unwrap();
            assert!((mass(&sem) - 1.0 / (1.0 + tau * tau * k4)).abs() < 1e-14);
            let cn = step_cn(&u, &dw, &c).unwrap();
            assert!((mass(&cn) - 1.0).abs() < 1e-14);
            if k == 0 {
                assert_eq!(em, u);
            }
        }
        for f in c.cayley_factors() {
            assert!((f.norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_state_stays_zero_without_noise() {
        let g = grid(16);
        let c = ctx(&g, 0.1, 0.0, Nonlinearity::cubic(CubicSign::Plus));
        let z = SpectralState::zeros(&g);
        assert_eq!(step_sem(&z, &z, &c).unwrap(), z);
        assert_eq!(step_cn(&z, &z, &c).unwrap(), z);
    }

    #[test]
    fn split_mass_identity_is_pathwise() {
        let g = grid(64);
        let c = ctx(&g, 0.1, 1.0, Nonlinearity::nonlocal_fn(&g, f64::cos).unwrap());
        let path = NoisePath::new(5, 0);
        let mut u = u0(&g);
        for n in 0..20 {
            let dw = path.sample_increment(n, 0.1, c.covariance()).unwrap();
            let next = step_split(&u, &dw, &c).unwrap();
            // M(u_{n+1}) = M(Φ_τ(u_n) − iα δW_n)
            let phi = c.nonlinearity().flow(&u.to_nodes().unwrap(), 0.1).unwrap().to_modes().unwrap();
            let pre: Vec<Complex64> = phi.coeffs().iter().zip(dw.coeffs()).map(|(a, b)| a - I * b).collect();
            let expected: f64 = pre.iter().map(|c| c.norm_sqr()).sum();
            assert!((mass(&next) - expected).abs() <= 1e-12 * expected);
            u = next;
        }
    }

    #[test]
    fn without_noise_em_gains_and_sem_loses_mass() {
        let g = grid(32);
        let u = u0(&g);
        let m0 = mass(&u);
        let c = ctx(&g, 0.01, 0.0, Nonlinearity::Zero);
        let path = NoisePath::new(0, 0);
        for scheme in Scheme::ALL {
            let traj = integrate(scheme, &u, &c, 10, &path, 10).unwrap();
            assert!(traj.diverged_at.is_none());
            let m = mass(traj.last());
            match scheme {
                Scheme::EulerMaruyama => assert!(m > m0 * (1.0 + 1e-6)),
                Scheme::SemiImplicitEuler => assert!(m < m0 * (1.0 - 1e-6)),
                _ => assert!((m - m0).abs() < 1e-12 * m0, "{scheme}: {m} vs {m0}"),
            }
        }
    }

    #[test]
    fn integrate_bookkeeping() {
        let g = grid(16);
        let c = ctx(&g, 0.1, 1.0, rational(&g));
        let u = u0(&g);
        let path = NoisePath::new(1, 2);
        let t = integrate(Scheme::Split, &u, &c, 0, &path, 1).unwrap();
        assert_eq!(t.saved.len(), 1);
        assert_eq!(t.saved[0].1, u);
        let t = integrate(Scheme::Split, &u, &c, 10, &path, 3).unwrap();
        let steps: Vec<u64> = t.saved.iter().map(|(s, _)| *s).collect();
        assert_eq!(steps, vec![0, 3, 6, 9, 10]);
        assert!(integrate(Scheme::Split, &u, &c, 10, &path, 0).is_err());
    }

    #[test]
    fn unitary_composition_over_many_steps() {
        let g = grid(64);
        let c = ctx(&g, 0.01, 0.0, rational(&g));
        let u = u0(&g);
        let t = integrate(Scheme::Split, &u, &c, 10_000, &NoisePath::new(0, 0), 10_000).unwrap();
        assert!((mass(t.last()) - mass(&u)).abs() < 1e-10 * mass(&u));
    }

    #[test]
    fn em_divergence_is_flagged_not_fatal() {
        let g = grid(256);
        let c = ctx(&g, 0.1, 1.0, rational(&g));
        let t = integrate(Scheme::EulerMaruyama, &u0(&g), &c, 40, &NoisePath::new(9, 0), 1).unwrap();
        let at = t.diverged_at.expect("explicit Euler blows up at this step size");
        assert!(at < 40);
        assert!(t.saved.iter().all(|(_, s)| s.is_finite()));
    }

    fn random_tangent(g: &Grid, seed: u64) -> SpectralState {
        let mut re = vec![0.0; g.num_modes()];
        let mut im = vec![0.0; g.num_modes()];
        let p = NoisePath::new(seed, 0);
        p.fill_normals(77, 0, &mut re);
        p.fill_normals(77, 1, &mut im);
        let c = re
            .iter()
            .zip(&im)
            .zip(g.wavenumbers())
            .map(|((a, b), k)| Complex64::new(*a, *b) / (1.0 + k * k))
            .collect();
        SpectralState::new(g, c).unwrap()
    }

    #[test]
    fn constant_potential_tangent_map_is_unitary() {
        let g = grid(32);
        let c = ctx(&g, 0.1, 1.0, Nonlinearity::external_fn(&g, |_| 1.3).unwrap());
        let bundle = TangentBundle {
            base: u0(&g),
            tangents: vec![random_tangent(&g, 1), random_tangent(&g, 2)],
        };
        let dw = NoisePath::new(3, 3).sample_increment(0, 0.1, c.covariance()).unwrap();
        let next = tangent_step_split(&bundle, &dw, &c).unwrap();
        let phase = Complex64::from_polar(1.0, -0.13);
        for (a, b) in next.tangents.iter().zip(&bundle.tangents) {
            let expected = b.apply_semigroup(0.1).unwrap();
            for (x, y) in a.coeffs().iter().zip(expected.coeffs()) {
                assert!((x - y * phase).norm() < 1e-13);
            }
        }
        let w0 = symplectic_form(&bundle.tangents[0], &bundle.tangents[1]);
        let w1 = symplectic_form(&next.tangents[0], &next.tangents[1]);
        assert!((w1 - w0).abs() < 1e-12 * w0.abs());
    }

    #[test]
    fn split_preserves_the_two_form_per_step() {
        let g = grid(64);
        let path = NoisePath::new(4, 4);
        for nl in [
            Nonlinearity::nonlocal_fn(&g, f64::cos).unwrap(),
            rational(&g),
            Nonlinearity::cubic(CubicSign::Plus),
            Nonlinearity::cubic(CubicSign::Minus),
        ] {
            let c = ctx(&g, 0.05, 1.0, nl);
            let mut bundle = TangentBundle {
                base: u0(&g),
                tangents: vec![random_tangent(&g, 10), random_tangent(&g, 11)],
            };
            for n in 0..20 {
                let before = symplectic_form(&bundle.tangents[0], &bundle.tangents[1]);
                let dw = path.sample_increment(n, 0.05, c.covariance()).unwrap();
                bundle = tangent_step_split(&bundle, &dw, &c).unwrap();
                let after = symplectic_form(&bundle.tangents[0], &bundle.tangents[1]);
                assert!((after - before).abs() <= 1e-10 * before.abs());
            }
        }
    }

    #[test]
    fn split_tangent_matches_finite_differences() {
        let g = grid(64);
        let c = ctx(&g, 0.1, 1.0, Nonlinearity::nonlocal_fn(&g, f64::cos).unwrap());
        let u = u0(&g);
        let xi = random_tangent(&g, 21);
        let dw = NoisePath::new(2, 2).sample_increment(0, 0.1, c.covariance()).unwrap();
        let bundle = TangentBundle {
            base: u.clone(),
            tangents: vec![xi.clone()],
        };
        let exact = tangent_step_split(&bundle, &dw, &c).unwrap().tangents.remove(0);
        let base = step_split(&u, &dw, &c).unwrap();
        let mut errs = vec![];
        for eps in [1e-3, 1e-4, 1e-5] {
            let shifted: Vec<Complex64> = u.coeffs().iter().zip(xi.coeffs()).map(|(a, b)| a + b * eps).collect();
            let shifted = SpectralState::new(&g, shifted).unwrap();
            let moved = step_split(&shifted, &dw, &c).unwrap();
            let fd: Vec<Complex64> = moved.coeffs().iter().zip(base.coeffs()).map(|(a, b)| (a - b) / eps).collect();
            errs.push(crate::spectral::l2_distance(&fd, exact.coeffs()));
        }
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((7.0..13.0).contains(&ratio), "{errs:?}");
        }
    }

    #[test]
    fn sem_agrees_with_split_to_second_order_on_one_step() {
        // two-mode state, F = 0, no noise: the deterministic one-step gap is O(τ²)
        let g = grid(8);
        let mut coeffs = vec![Complex64::default(); 8];
        coeffs[1] = Complex64::new(1.0, 0.0);
        coeffs[g.index_of(-2).unwrap()] = Complex64::new(0.0, 0.5);
        let u = SpectralState::new(&g, coeffs).unwrap();
        let gaps: Vec<f64> = [0.02, 0.01, 0.005]
            .iter()
            .map(|&tau| {
                let c = ctx(&g, tau, 0.0, Nonlinearity::Zero);
                let z = SpectralState::zeros(&g);
                step_sem(&u, &z, &c).unwrap().distance(&step_split(&u, &z, &c).unwrap())
            })
            .collect();
        for w in gaps.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.5..4.5).contains(&ratio), "{gaps:?}");
        }
    }
}
