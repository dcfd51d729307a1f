//! Monte Carlo experiment drivers: trace formula, strong order, order in
//! probability, cost benchmark and single-path simulation.
//!
//! Every sample `i` draws from `NoisePath::new(seed, i)`, samples run on the
//! rayon pool, and results are reduced in sample order, so output does not
//! depend on the number of workers.

pub mod config;
pub mod coupled;
pub mod output;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Result, SpdeError};
use crate::integrators::{integrate, native_driver, Scheme, Stepper};
use crate::noise::{NoisePath, DOMAIN_TANGENTS};
use crate::observables::{exp_moment_estimate, mass, symplectic_form, SampleStats, TraceRecord};
use crate::spectral::SpectralState;

pub use config::{steps_for, dyadic_level, Experiment, ExperimentConfig, InitialSpec, NonlinearityKind, PotentialSpec, RawConfig};
pub use coupled::{CoarseRun, CoupledPlan, RunOutcome};

/// Samples per deterministic reduction chunk in [`run_trace`].
const TRACE_CHUNK: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct TraceSeries {
    pub scheme: Scheme,
    pub records: Vec<TraceRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceReport {
    pub initial_mass: f64,
    pub trace_q: f64,
    pub series: Vec<TraceSeries>,
}

impl TraceReport {
    pub fn all_diverged(&self) -> bool {
        self.series.iter().all(|s| s.records.last().is_some_and(|r| r.n_samples == 0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StrongErrorRow {
    pub scheme: Scheme,
    pub tau: f64,
    /// Mean over non-diverged samples; `+∞` if none survived.
    pub mean_error: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub n_diverged: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StrongReport {
    pub rows: Vec<StrongErrorRow>,
    /// Least-squares slope of `ln(error)` against `ln(τ)` per scheme.
    pub slopes: Vec<(Scheme, f64)>,
}

impl StrongReport {
    pub fn slope(&self, scheme: Scheme) -> Option<f64> {
        self.slopes.iter().find(|(s, _)| *s == scheme).map(|&(_, v)| v)
    }

    pub fn all_diverged(&self) -> bool {
        self.rows.iter().all(|r| r.n_diverged == r.n_samples)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbOrderRow {
    pub tau: f64,
    pub delta: f64,
    pub c: f64,
    pub proportion: f64,
    pub n_samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbReport {
    pub rows: Vec<ProbOrderRow>,
    pub n_diverged: usize,
}

impl ProbReport {
    /// Looks up `P(τ, δ, C)`.
    pub fn proportion(&self, tau: f64, delta: f64, c: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.tau == tau && r.delta == delta && r.c == c)
            .map(|r| r.proportion)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchRow {
    pub scheme: Scheme,
    pub tau: f64,
    /// Step time summed over samples.
    pub wall_seconds: f64,
    /// `+∞` when any sample diverged.
    pub mean_final_error: f64,
    pub n_diverged: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub samples: usize,
}

impl BenchReport {
    pub fn all_diverged(&self) -> bool {
        self.rows.iter().all(|r| r.n_diverged == self.samples)
    }

    /// Total compute time recorded across all rows.
    pub fn total_seconds(&self) -> f64 {
        self.rows.iter().map(|r| r.wall_seconds).sum()
    }
}

/// Wall time at which `scheme` reaches mean error `target`, by log-log
/// interpolation between the two bracketing rows. `None` if no finite pair
/// brackets the target.
pub fn time_at_error(rows: &[BenchRow], scheme: Scheme, target: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.scheme == scheme && r.mean_final_error.is_finite() && r.mean_final_error > 0.0)
        .map(|r| (r.mean_final_error.ln(), r.wall_seconds.max(f64::MIN_POSITIVE).ln()))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let t = target.ln();
    pts.windows(2).find(|w| w[0].0 <= t && t <= w[1].0).map(|w| {
        let (e0, s0) = w[0];
        let (e1, s1) = w[1];
        if e1 == e0 {
            return s0.min(s1).exp();
        }
        (s0 + (t - e0) / (e1 - e0) * (s1 - s0)).exp()
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajRow {
    pub t: f64,
    pub mass: f64,
    pub h1_norm: f64,
    pub omega: f64,
}

#[derive(Clone, Debug)]
pub struct SimulateReport {
    pub scheme: Scheme,
    pub rows: Vec<TrajRow>,
    pub final_state: SpectralState,
    pub diverged_at: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpMomentRow {
    pub tau: f64,
    pub estimate: SampleStats,
}

fn expect(cfg: &ExperimentConfig, exp: Experiment) -> Result<()> {
    if cfg.experiment != exp {
        return Err(SpdeError::Config(format!(
            "configuration is for '{}', not '{}'",
            cfg.experiment, exp
        )));
    }
    cfg.validate()
}

/// Per-save-time partial sums of `m − predicted` over a chunk of samples.
#[derive(Clone, Debug)]
struct MassSums {
    alive: Vec<usize>,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl MassSums {
    fn new(len: usize) -> Self {
        MassSums {
            alive: vec![0; len],
            s1: vec![0.0; len],
            s2: vec![0.0; len],
        }
    }

    fn merge(&mut self, other: &MassSums) {
        for j in 0..self.alive.len() {
            self.alive[j] += other.alive[j];
            self.s1[j] += other.s1[j];
            self.s2[j] += other.s2[j];
        }
    }
}

/// Sample-mean mass against `M(u_0) + tα²Tr(Q)` for each scheme in turn.
pub fn run_trace(cfg: &ExperimentConfig) -> Result<TraceReport> {
    expect(cfg, Experiment::Trace)?;
    let tau = cfg.taus[0];
    let ctx = cfg.context(tau)?;
    let u0 = cfg.initial_state(ctx.grid())?;
    let n_steps = steps_for(cfg.t_final, tau)?;
    let initial_mass = mass(&u0);
    let trace_q = ctx.covariance().trace();
    let slope = cfg.alpha * cfg.alpha * trace_q;

    let mut save_steps: Vec<u64> = (0..=n_steps).step_by(cfg.save_stride as usize).collect();
    if *save_steps.last().unwrap() != n_steps {
        save_steps.push(n_steps);
    }
    let predicted: Vec<f64> = save_steps
        .iter()
        .map(|&n| initial_mass + n as f64 * tau * slope)
        .collect();

    let n_chunks = cfg.samples.div_ceil(TRACE_CHUNK);
    let mut series = Vec::with_capacity(cfg.schemes.len());
    for &scheme in &cfg.schemes {
        let chunks: Vec<MassSums> = (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let mut sums = MassSums::new(save_steps.len());
                let end = ((c + 1) * TRACE_CHUNK).min(cfg.samples);
                for i in c * TRACE_CHUNK..end {
                    let path = NoisePath::new(cfg.seed, i as u64);
                    let traj = integrate(scheme, &u0, &ctx, n_steps, &path, cfg.save_stride)?;
                    for (j, (_, u)) in traj.saved.iter().enumerate() {
                        let d = mass(u) - predicted[j];
                        sums.alive[j] += 1;
                        sums.s1[j] += d;
                        sums.s2[j] += d * d;
                    }
                }
                Ok(sums)
            })
            .collect::<Result<_>>()?;
        let mut total = MassSums::new(save_steps.len());
        for c in &chunks {
            total.merge(c);
        }
        let records = save_steps
            .iter()
            .enumerate()
            .map(|(j, &n)| {
                let m = total.alive[j];
                let (mean, se) = match m {
                    0 => (f64::NAN, f64::NAN),
                    1 => (predicted[j] + total.s1[j], 0.0),
                    _ => {
                        let mf = m as f64;
                        let var = ((total.s2[j] - total.s1[j] * total.s1[j] / mf) / (mf - 1.0)).max(0.0);
                        (predicted[j] + total.s1[j] / mf, (var / mf).sqrt())
                    }
                };
                TraceRecord {
                    t: n as f64 * tau,
                    sample_mean_mass: mean,
                    std_error: se,
                    predicted: predicted[j],
                    n_samples: m,
                    n_diverged: cfg.samples - m,
                }
            })
            .collect();
        series.push(TraceSeries { scheme, records });
    }
    Ok(TraceReport {
        initial_mass,
        trace_q,
        series,
    })
}

fn coupled_outcomes(cfg: &ExperimentConfig, plan: &CoupledPlan) -> Result<Vec<Vec<RunOutcome>>> {
    let ctx = cfg.context(cfg.tau_ref)?;
    let u0 = cfg.initial_state(ctx.grid())?;
    (0..cfg.samples)
        .into_par_iter()
        .map(|i| plan.run_sample(&u0, &NoisePath::new(cfg.seed, i as u64)))
        .collect()
}

fn levels(cfg: &ExperimentConfig) -> Result<Vec<u32>> {
    cfg.taus.iter().map(|&t| dyadic_level(t, cfg.tau_ref)).collect()
}

/// Least-squares slope of `ln y` against `ln x` over finite positive pairs.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Mean end-point error of each scheme against a Split reference at
/// `τ_ref` driven by the same Brownian path.
pub fn run_strong_order(cfg: &ExperimentConfig) -> Result<StrongReport> {
    expect(cfg, Experiment::StrongOrder)?;
    let lv = levels(cfg)?;
    let mut runs = Vec::new();
    for &scheme in &cfg.schemes {
        for &level in &lv {
            runs.push(CoarseRun {
                scheme,
                level,
                reference: 0,
            });
        }
    }
    let plan = CoupledPlan::new(&cfg.context(cfg.tau_ref)?, cfg.t_final, vec![Scheme::Split], runs, false)?;
    let outcomes = coupled_outcomes(cfg, &plan)?;

    let mut rows = Vec::new();
    for (r, run) in plan.runs().iter().enumerate() {
        let errors: Vec<f64> = outcomes
            .iter()
            .map(|o| o[r].final_error)
            .filter(|e| e.is_finite())
            .collect();
        let stats = SampleStats::from_samples(&errors);
        let n_diverged = cfg.samples - errors.len();
        rows.push(StrongErrorRow {
            scheme: run.scheme,
            tau: cfg.taus[lv.iter().position(|&l| l == run.level).unwrap()],
            mean_error: if errors.is_empty() { f64::INFINITY } else { stats.mean },
            std_error: stats.std_error,
            n_samples: cfg.samples,
            n_diverged,
        });
    }
    let slopes = cfg
        .schemes
        .iter()
        .map(|&s| {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.scheme == s)
                .map(|r| (r.tau, r.mean_error))
                .collect();
            (s, loglog_slope(&pts))
        })
        .collect();
    Ok(StrongReport { rows, slopes })
}

/// Fraction of samples whose maximal deviation from the coupled reference
/// reaches `Cτ^δ`, for the first configured scheme. Diverged samples count
/// as exceeding every threshold.
pub fn run_prob_order(cfg: &ExperimentConfig) -> Result<ProbReport> {
    expect(cfg, Experiment::ProbOrder)?;
    let lv = levels(cfg)?;
    let scheme = cfg.schemes[0];
    let runs = lv
        .iter()
        .map(|&level| CoarseRun {
            scheme,
            level,
            reference: 0,
        })
        .collect();
    let plan = CoupledPlan::new(&cfg.context(cfg.tau_ref)?, cfg.t_final, vec![Scheme::Split], runs, true)?;
    let outcomes = coupled_outcomes(cfg, &plan)?;

    let mut rows = Vec::new();
    for (r, &tau) in cfg.taus.iter().enumerate() {
        for &delta in &cfg.deltas {
            for &c in &cfg.c_values {
                let threshold = c * tau.powf(delta);
                let hits = outcomes.iter().filter(|o| !(o[r].max_error < threshold)).count();
                rows.push(ProbOrderRow {
                    tau,
                    delta,
                    c,
                    proportion: hits as f64 / cfg.samples as f64,
                    n_samples: cfg.samples,
                });
            }
        }
    }
    let n_diverged = outcomes.iter().filter(|o| o.iter().any(|x| x.diverged)).count();
    Ok(ProbReport { rows, n_diverged })
}

/// Step time and mean final error of each scheme against its own
/// reference at `τ_ref` on the same path.
pub fn run_bench(cfg: &ExperimentConfig) -> Result<BenchReport> {
    expect(cfg, Experiment::Bench)?;
    let lv = levels(cfg)?;
    let mut runs = Vec::new();
    for (i, &scheme) in cfg.schemes.iter().enumerate() {
        for &level in &lv {
            runs.push(CoarseRun {
                scheme,
                level,
                reference: i,
            });
        }
    }
    let plan = CoupledPlan::new(&cfg.context(cfg.tau_ref)?, cfg.t_final, cfg.schemes.clone(), runs, false)?;
    let outcomes = coupled_outcomes(cfg, &plan)?;

    let rows = plan
        .runs()
        .iter()
        .enumerate()
        .map(|(r, run)| {
            let n_diverged = outcomes.iter().filter(|o| !o[r].final_error.is_finite()).count();
            let mean_final_error = if n_diverged > 0 {
                f64::INFINITY
            } else {
                outcomes.iter().map(|o| o[r].final_error).sum::<f64>() / cfg.samples as f64
            };
            BenchRow {
                scheme: run.scheme,
                tau: cfg.taus[lv.iter().position(|&l| l == run.level).unwrap()],
                wall_seconds: outcomes.iter().map(|o| o[r].seconds).sum(),
                mean_final_error,
                n_diverged,
            }
        })
        .collect();
    Ok(BenchReport {
        rows,
        samples: cfg.samples,
    })
}

/// Two tangent vectors drawn from the tangent stream of `path`, damped by
/// `1/(1+k²)`.
fn seeded_tangents(path: &NoisePath, wavenumbers: &[f64]) -> Vec<Vec<Complex64>> {
    let n = wavenumbers.len();
    let mut normals = vec![0.0; 2 * n];
    (0..2)
        .map(|j| {
            path.fill_normals(DOMAIN_TANGENTS, j, &mut normals);
            wavenumbers
                .iter()
                .enumerate()
                .map(|(i, &k)| Complex64::new(normals[2 * i], normals[2 * i + 1]) / (1.0 + k * k))
                .collect()
        })
        .collect()
}

/// One path of the first configured scheme (sample 0 of `seed`) with mass,
/// `H¹` norm and `ω` of two propagated tangents at every save time.
pub fn run_simulate(cfg: &ExperimentConfig) -> Result<SimulateReport> {
    expect(cfg, Experiment::Simulate)?;
    let scheme = cfg.schemes[0];
    let tau = cfg.taus[0];
    let ctx = cfg.context(tau)?;
    let grid = ctx.grid().clone();
    let n_steps = steps_for(cfg.t_final, tau)?;
    let path = NoisePath::new(cfg.seed, 0);

    let mut u = cfg.initial_state(&grid)?.into_coeffs();
    let mut tangents = seeded_tangents(&path, grid.wavenumbers());
    let mut stepper = Stepper::new(scheme, &ctx);
    let mut driver = vec![Complex64::default(); u.len()];
    let mut aux = Vec::new();

    let row = |n: u64, u: &[Complex64], tangents: &[Vec<Complex64>]| -> Result<TrajRow> {
        let state = SpectralState::from_raw(&grid, u.to_vec());
        let xi = SpectralState::from_raw(&grid, tangents[0].clone());
        let eta = SpectralState::from_raw(&grid, tangents[1].clone());
        Ok(TrajRow {
            t: n as f64 * tau,
            mass: mass(&state),
            h1_norm: state.sobolev_norm(1)?,
            omega: symplectic_form(&xi, &eta),
        })
    };

    let mut rows = vec![row(0, &u, &tangents)?];
    let mut diverged_at = None;
    for n in 0..n_steps {
        native_driver(scheme, &path, n, &ctx, &mut aux, &mut driver);
        match stepper.step_with_tangents(&mut u, &mut tangents, &driver, n) {
            Ok(()) => {}
            Err(SpdeError::Diverged { step }) => {
                diverged_at = Some(step);
                break;
            }
            Err(e) => return Err(e),
        }
        if (n + 1) % cfg.save_stride == 0 || n + 1 == n_steps {
            rows.push(row(n + 1, &u, &tangents)?);
        }
    }
    Ok(SimulateReport {
        scheme,
        rows,
        final_state: SpectralState::from_raw(&grid, u),
        diverged_at,
    })
}

/// `E exp(μ‖u_N‖²)` at `T` for the first configured scheme at each step
/// size, over `cfg.samples` paths.
pub fn run_exp_moments(cfg: &ExperimentConfig, taus: &[f64], mu: f64) -> Result<Vec<ExpMomentRow>> {
    cfg.validate()?;
    let scheme = cfg.schemes[0];
    taus.iter()
        .map(|&tau| {
            let ctx = cfg.context(tau)?;
            let u0 = cfg.initial_state(ctx.grid())?;
            let n_steps = steps_for(cfg.t_final, tau)?;
            let finals: Vec<f64> = (0..cfg.samples)
                .into_par_iter()
                .map(|i| {
                    let traj = integrate(scheme, &u0, &ctx, n_steps, &NoisePath::new(cfg.seed, i as u64), n_steps)?;
                    Ok(if traj.diverged_at.is_some() {
                        f64::INFINITY
                    } else {
                        mass(traj.last())
                    })
                })
                .collect::<Result<_>>()?;
            Ok(ExpMomentRow {
                tau,
                estimate: exp_moment_estimate(&finals, mu)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(exp: Experiment) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::defaults(exp);
        cfg.nx = 16;
        cfg.samples = 8;
        cfg
    }

    #[test]
    fn loglog_slope_recovers_power_laws() {
        let pts: Vec<(f64, f64)> = (1..6).map(|i| (2f64.powi(-i), 3.0 * 2f64.powi(-i).powf(0.75))).collect();
        assert!((loglog_slope(&pts) - 0.75).abs() < 1e-12);
        assert!(loglog_slope(&pts[..1]).is_nan());
    }

    #[test]
    fn time_at_error_interpolates_in_log_space() {
        let row = |tau: f64, secs: f64, err: f64| BenchRow {
            scheme: Scheme::Split,
            tau,
            wall_seconds: secs,
            mean_final_error: err,
            n_diverged: 0,
        };
        let rows = vec![row(0.1, 1.0, 1e-2), row(0.01, 100.0, 1e-4)];
        let t = time_at_error(&rows, Scheme::Split, 1e-3).unwrap();
        assert!((t - 10.0).abs() < 1e-9);
        assert!(time_at_error(&rows, Scheme::Split, 1e-6).is_none());
        assert!(time_at_error(&rows, Scheme::CrankNicolson, 1e-3).is_none());
    }

    #[test]
    fn trace_with_zero_noise_is_flat() {
        let mut cfg = small(Experiment::Trace);
        cfg.alpha = 0.0;
        cfg.schemes = vec![Scheme::Split];
        let rep = run_trace(&cfg).unwrap();
        for r in &rep.series[0].records {
            assert_eq!(r.predicted, rep.initial_mass);
            assert!(r.std_error < 1e-10);
            assert!((r.sample_mean_mass - rep.initial_mass).abs() < 1e-10);
        }
        assert_eq!(rep.series[0].records.len(), 11);
    }

    #[test]
    fn runners_reject_the_wrong_experiment() {
        let cfg = small(Experiment::Trace);
        assert!(matches!(run_bench(&cfg), Err(SpdeError::Config(_))));
    }

    #[test]
    fn strong_rows_cover_every_scheme_and_step() {
        let mut cfg = small(Experiment::StrongOrder);
        cfg.schemes = vec![Scheme::Split, Scheme::SplitExact];
        cfg.taus = vec![0.25, 0.125];
        cfg.tau_ref = 1.0 / 32.0;
        let rep = run_strong_order(&cfg).unwrap();
        assert_eq!(rep.rows.len(), 4);
        assert!(rep.rows.iter().all(|r| r.mean_error > 0.0 && r.n_diverged == 0));
        assert!(rep.slope(Scheme::Split).unwrap().is_finite());
    }

    #[test]
    fn simulate_with_zero_noise_and_potential_keeps_mass() {
        let mut cfg = small(Experiment::Simulate);
        cfg.alpha = 0.0;
        cfg.nonlinearity = NonlinearityKind::Zero;
        cfg.taus = vec![0.05];
        let rep = run_simulate(&cfg).unwrap();
        assert_eq!(rep.rows.len(), 21);
        let m0 = rep.rows[0].mass;
        assert!(rep.rows.iter().all(|r| (r.mass - m0).abs() < 1e-10));
    }

    #[test]
    fn exp_moment_of_a_conserved_mass_is_exact() {
        let mut cfg = small(Experiment::Trace);
        cfg.alpha = 0.0;
        cfg.schemes = vec![Scheme::Split];
        let rows = run_exp_moments(&cfg, &[0.1, 0.05], 0.01).unwrap();
        let u0 = cfg.initial_state(&cfg.grid().unwrap()).unwrap();
        for r in rows {
            assert!((r.estimate.mean - (0.01 * mass(&u0)).exp()).abs() < 1e-10);
        }
    }
}
