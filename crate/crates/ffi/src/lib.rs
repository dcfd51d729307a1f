//! C ABI for single-path simulation.
//!
//! A simulator is created from [`SpdeParams`], owns its state and noise
//! path, and is advanced with [`spde_simulator_step`]. Every fallible call
//! returns an [`SpdeStatus`]; on failure a message is available from
//! [`spde_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use num_complex::Complex64;
use spde_split::{
    Covariance, CubicSign, FieldState, Grid, Nonlinearity, NoisePath, Scheme, SpdeError, StepContext, Stepper,
};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpdeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    GridMismatch = 3,
    NonFinite = 4,
    Diverged = 5,
    Internal = 6,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpdeScheme {
    Split = 0,
    SplitExact = 1,
    EulerMaruyama = 2,
    SemiImplicitEuler = 3,
    StochasticExponential = 4,
    CrankNicolson = 5,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpdeCovariance {
    PowerLaw2 = 0,
    PowerLaw4 = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpdeNonlinearity {
    Zero = 0,
    /// `V[u] = V`, with `potential` holding `V` at the nodes.
    External = 1,
    /// `V[u] = V ⋆ |u|²`, with `potential` holding the kernel at the nodes.
    Nonlocal = 2,
    CubicPlus = 3,
    CubicMinus = 4,
}

/// Simulator parameters. `potential` must point to `nx` values for the
/// external and nonlocal variants and is ignored otherwise.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct SpdeParams {
    pub nx: usize,
    pub tau: f64,
    pub alpha: f64,
    pub scheme: SpdeScheme,
    pub covariance: SpdeCovariance,
    pub nonlinearity: SpdeNonlinearity,
    pub potential: *const f64,
    pub seed: u64,
    pub sample_index: u64,
}

/// Opaque simulator handle.
pub struct SpdeSimulator {
    ctx: StepContext,
    stepper: Stepper,
    path: NoisePath,
    coeffs: Vec<Complex64>,
    steps: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &SpdeError) -> SpdeStatus {
    match err {
        SpdeError::GridMismatch { .. } => SpdeStatus::GridMismatch,
        SpdeError::NonFinite(_) => SpdeStatus::NonFinite,
        SpdeError::Diverged { .. } => SpdeStatus::Diverged,
        SpdeError::ConventionBug { .. } | SpdeError::Io(_) | SpdeError::Csv(_) => SpdeStatus::Internal,
        _ => SpdeStatus::InvalidArgument,
    }
}

/// Runs `f`, recording its error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), (SpdeStatus, String)>) -> SpdeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SpdeStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SpdeStatus::Internal
        }
    }
}

fn lift<T>(r: spde_split::Result<T>) -> Result<T, (SpdeStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (SpdeStatus, String) {
    (SpdeStatus::NullPointer, format!("{what} is null"))
}

fn scheme_of(s: SpdeScheme) -> Scheme {
    match s {
        SpdeScheme::Split => Scheme::Split,
        SpdeScheme::SplitExact => Scheme::SplitExact,
        SpdeScheme::EulerMaruyama => Scheme::EulerMaruyama,
        SpdeScheme::SemiImplicitEuler => Scheme::SemiImplicitEuler,
        SpdeScheme::StochasticExponential => Scheme::StochasticExponential,
        SpdeScheme::CrankNicolson => Scheme::CrankNicolson,
    }
}

fn covariance_of(kind: SpdeCovariance, grid: &Grid) -> Covariance {
    match kind {
        SpdeCovariance::PowerLaw2 => Covariance::power_law2(grid),
        SpdeCovariance::PowerLaw4 => Covariance::power_law4(grid),
    }
}

/// # Safety
/// `params.potential` must be null or point to `params.nx` readable values.
unsafe fn build(params: &SpdeParams) -> Result<SpdeSimulator, (SpdeStatus, String)> {
    let grid = lift(Grid::new(params.nx))?;
    let potential = || -> Result<Vec<f64>, (SpdeStatus, String)> {
        if params.potential.is_null() {
            return Err(null("potential"));
        }
        // SAFETY: caller guarantees `nx` readable values.
        Ok(unsafe { std::slice::from_raw_parts(params.potential, params.nx) }.to_vec())
    };
    let nl = match params.nonlinearity {
        SpdeNonlinearity::Zero => Nonlinearity::Zero,
        SpdeNonlinearity::External => lift(Nonlinearity::external(&grid, potential()?))?,
        SpdeNonlinearity::Nonlocal => lift(Nonlinearity::nonlocal(&grid, potential()?))?,
        SpdeNonlinearity::CubicPlus => Nonlinearity::cubic(CubicSign::Plus),
        SpdeNonlinearity::CubicMinus => Nonlinearity::cubic(CubicSign::Minus),
    };
    let ctx = lift(StepContext::new(
        params.tau,
        params.alpha,
        nl,
        covariance_of(params.covariance, &grid),
    ))?;
    Ok(SpdeSimulator {
        stepper: Stepper::new(scheme_of(params.scheme), &ctx),
        path: NoisePath::new(params.seed, params.sample_index),
        coeffs: vec![Complex64::default(); params.nx],
        steps: 0,
        ctx,
    })
}

/// Creates a simulator with a zero initial state and writes its handle to
/// `*out`. On failure `*out` is set to null.
///
/// # Safety
/// `params` must point to a valid [`SpdeParams`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spde_simulator_new(params: *const SpdeParams, out: *mut *mut SpdeSimulator) -> SpdeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: checked non-null; caller guarantees validity.
        unsafe { *out = ptr::null_mut() };
        let params = unsafe { params.as_ref() }.ok_or_else(|| null("params"))?;
        let sim = unsafe { build(params) }?;
        unsafe { *out = Box::into_raw(Box::new(sim)) };
        Ok(())
    })
}

/// Releases a simulator. Null is ignored.
///
/// # Safety
/// `sim` must be null or a handle from [`spde_simulator_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spde_simulator_free(sim: *mut SpdeSimulator) {
    if !sim.is_null() {
        // SAFETY: the handle came from Box::into_raw in spde_simulator_new.
        drop(unsafe { Box::from_raw(sim) });
    }
}

/// Replaces the state with nodal values `re[j] + i·im[j]`, `j < len`.
/// The step counter, and so the position on the noise path, is kept.
///
/// # Safety
/// `sim` must be a live handle; `re` and `im` must each hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn spde_simulator_set_state(
    sim: *mut SpdeSimulator,
    re: *const f64,
    im: *const f64,
    len: usize,
) -> SpdeStatus {
    guard(|| {
        let sim = unsafe { sim.as_mut() }.ok_or_else(|| null("sim"))?;
        if re.is_null() || im.is_null() {
            return Err(null("state buffer"));
        }
        // SAFETY: caller guarantees `len` readable values in each buffer.
        let (re, im) = unsafe { (std::slice::from_raw_parts(re, len), std::slice::from_raw_parts(im, len)) };
        let values = re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect();
        let modes = lift(FieldState::new(sim.ctx.grid(), values).and_then(|f| f.to_modes()))?;
        sim.coeffs = modes.into_coeffs();
        Ok(())
    })
}

/// Advances `n_steps` steps. On divergence the state is left at the last
/// finite step and [`SpdeStatus::Diverged`] is returned.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn spde_simulator_step(sim: *mut SpdeSimulator, n_steps: u64) -> SpdeStatus {
    guard(|| {
        let sim = unsafe { sim.as_mut() }.ok_or_else(|| null("sim"))?;
        let (tau, alpha) = (sim.ctx.tau(), sim.ctx.alpha());
        for _ in 0..n_steps {
            let n = sim.steps;
            let driver = if sim.stepper.scheme() == Scheme::SplitExact {
                sim.path.exact_convolution_increment(n, tau, alpha, sim.ctx.covariance())
            } else {
                sim.path.sample_increment(n, tau, sim.ctx.covariance())
            };
            let driver = lift(driver)?;
            let mut next = sim.coeffs.clone();
            lift(sim.stepper.step(&mut next, driver.coeffs(), n))?;
            sim.coeffs = next;
            sim.steps += 1;
        }
        Ok(())
    })
}

/// Writes `M(u) = ‖u‖²` to `*out`.
///
/// # Safety
/// `sim` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spde_simulator_mass(sim: *const SpdeSimulator, out: *mut f64) -> SpdeStatus {
    guard(|| {
        let sim = unsafe { sim.as_ref() }.ok_or_else(|| null("sim"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        unsafe { *out = sim.coeffs.iter().map(|c| c.norm_sqr()).sum() };
        Ok(())
    })
}

/// Number of steps taken so far; 0 for a null handle.
///
/// # Safety
/// `sim` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spde_simulator_steps(sim: *const SpdeSimulator) -> u64 {
    unsafe { sim.as_ref() }.map_or(0, |s| s.steps)
}

/// Copies the nodal values into `re` and `im`, which must hold `len == nx`
/// values each.
///
/// # Safety
/// `sim` must be a live handle; `re` and `im` must be writable for `len`.
#[no_mangle]
pub unsafe extern "C" fn spde_simulator_get_nodes(
    sim: *const SpdeSimulator,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> SpdeStatus {
    guard(|| {
        let sim = unsafe { sim.as_ref() }.ok_or_else(|| null("sim"))?;
        if re.is_null() || im.is_null() {
            return Err(null("node buffer"));
        }
        let n = sim.coeffs.len();
        if len != n {
            return Err((SpdeStatus::GridMismatch, format!("buffer holds {len} values, grid has {n}")));
        }
        let mut nodes = sim.coeffs.clone();
        sim.ctx.grid().inverse_in_place(&mut nodes);
        // SAFETY: caller guarantees `len` writable values in each buffer.
        let (re, im) = unsafe { (std::slice::from_raw_parts_mut(re, n), std::slice::from_raw_parts_mut(im, n)) };
        for (j, c) in nodes.iter().enumerate() {
            re[j] = c.re;
            im[j] = c.im;
        }
        Ok(())
    })
}

/// Writes `Tr(Q) = Σ γ_k²` over the `nx` resolved modes to `*out`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spde_trace_q(kind: SpdeCovariance, nx: usize, out: *mut f64) -> SpdeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let grid = lift(Grid::new(nx))?;
        unsafe { *out = covariance_of(kind, &grid).trace() };
        Ok(())
    })
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn spde_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn spde_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version contains NUL"),
    };
    VERSION.as_ptr()
}
