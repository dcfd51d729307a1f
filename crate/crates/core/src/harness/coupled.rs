//! Coarse and reference trajectories driven by one Brownian path.
//!
//! Fine increments at `τ_ref` are generated a block of `2^R` at a time and
//! summed pairwise into levels `1..=R`, so the increment a coarse run at
//! `2^r τ_ref` consumes is bit-identical to [`crate::noise::aggregate_increments`]
//! over the same fine steps.

use std::time::Instant;

use num_complex::Complex64;

use crate::error::{Result, SpdeError};
use crate::integrators::{Scheme, StepContext, Stepper, DIVERGENCE_THRESHOLD};
use crate::noise::{add_assign, NoisePath, DOMAIN_CONVOLUTION};
use crate::spectral::{l2_distance, SpectralState};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CoarseRun {
    pub scheme: Scheme,
    pub level: u32,
    /// Index into [`CoupledPlan::references`].
    pub reference: usize,
}

#[derive(Clone, Debug)]
pub struct CoupledPlan {
    /// Contexts for levels `0..=R`; level 0 is the reference step.
    contexts: Vec<StepContext>,
    references: Vec<Scheme>,
    runs: Vec<CoarseRun>,
    n_blocks: u64,
    track_max: bool,
}

/// Outcome of one coarse run on one sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOutcome {
    /// `‖u_N − u_ref(T)‖`; `+∞` when either side diverged.
    pub final_error: f64,
    /// `max_n ‖u_n − u_ref(t_n)‖` when tracked, `+∞` on divergence.
    pub max_error: f64,
    /// Time spent inside the run's step calls.
    pub seconds: f64,
    pub diverged: bool,
}

impl CoupledPlan {
    pub fn new(
        reference_ctx: &StepContext,
        t_final: f64,
        references: Vec<Scheme>,
        runs: Vec<CoarseRun>,
        track_max: bool,
    ) -> Result<Self> {
        let max_level = runs.iter().map(|r| r.level).max().unwrap_or(0);
        if runs.iter().any(|r| r.reference >= references.len()) {
            return Err(SpdeError::param("coarse run refers to a missing reference"));
        }
        let tau_ref = reference_ctx.tau();
        let block_tau = tau_ref * f64::from(1u32 << max_level);
        let n_blocks = super::config::steps_for(t_final, block_tau)?;
        let mut contexts = vec![reference_ctx.clone()];
        for r in 1..=max_level {
            contexts.push(reference_ctx.with_tau(tau_ref * f64::from(1u32 << r))?);
        }
        Ok(CoupledPlan {
            contexts,
            references,
            runs,
            n_blocks,
            track_max,
        })
    }

    pub fn runs(&self) -> &[CoarseRun] {
        &self.runs
    }

    fn max_level(&self) -> u32 {
        self.contexts.len() as u32 - 1
    }

    /// Simulates all references and coarse runs on `path` from `u0`.
    pub fn run_sample(&self, u0: &SpectralState, path: &NoisePath) -> Result<Vec<RunOutcome>> {
        let base = &self.contexts[0];
        base.grid().check_same(u0.grid())?;
        let n = base.grid().num_modes();
        let block_len = 1usize << self.max_level();
        let zero = vec![Complex64::default(); n];

        let mut levels: Vec<Vec<Vec<Complex64>>> = (0..=self.max_level())
            .map(|r| vec![zero.clone(); block_len >> r])
            .collect();
        let mut aux = vec![0.0; 2 * n];
        let mut driver = zero.clone();

        let mut ref_steppers: Vec<Stepper> = self.references.iter().map(|&s| Stepper::new(s, base)).collect();
        let mut ref_states = vec![u0.coeffs().to_vec(); self.references.len()];
        let mut ref_dead = vec![false; self.references.len()];

        let mut steppers: Vec<Stepper> = self
            .runs
            .iter()
            .map(|r| Stepper::new(r.scheme, &self.contexts[r.level as usize]))
            .collect();
        let mut states = vec![u0.coeffs().to_vec(); self.runs.len()];
        let mut dead = vec![false; self.runs.len()];
        let mut max_err = vec![0.0f64; self.runs.len()];
        let mut seconds = vec![0.0f64; self.runs.len()];

        for b in 0..self.n_blocks {
            let first = b * block_len as u64;
            for (j, inc) in levels[0].iter_mut().enumerate() {
                path.increment_into(first + j as u64, base.tau(), base.covariance(), inc);
            }
            for r in 1..levels.len() {
                let (lower, upper) = levels.split_at_mut(r);
                let prev = &lower[r - 1];
                for (m, out) in upper[0].iter_mut().enumerate() {
                    out.copy_from_slice(&prev[2 * m]);
                    add_assign(out, &prev[2 * m + 1]);
                }
            }

            for j in 0..block_len {
                let fine_step = first + j as u64;
                for (i, stepper) in ref_steppers.iter_mut().enumerate() {
                    if ref_dead[i] {
                        continue;
                    }
                    let d = self.driver(stepper.scheme(), 0, fine_step, &levels[0][j], path, &mut aux, &mut driver);
                    ref_dead[i] = advance(stepper, &mut ref_states[i], d, fine_step)?;
                }
                for (i, run) in self.runs.iter().enumerate() {
                    let span = 1usize << run.level;
                    if dead[i] || (j + 1) % span != 0 {
                        continue;
                    }
                    let m = (j + 1) / span - 1;
                    let coarse_step = b * (block_len / span) as u64 + m as u64;
                    let d = self.driver(
                        run.scheme,
                        run.level,
                        coarse_step,
                        &levels[run.level as usize][m],
                        path,
                        &mut aux,
                        &mut driver,
                    );
                    let start = Instant::now();
                    dead[i] = advance(&mut steppers[i], &mut states[i], d, coarse_step)?;
                    seconds[i] += start.elapsed().as_secs_f64();
                    if self.track_max && !dead[i] && !ref_dead[run.reference] {
                        let e = l2_distance(&states[i], &ref_states[run.reference]);
                        max_err[i] = max_err[i].max(e);
                    }
                }
            }
        }

        for (s, d) in ref_states.iter().zip(ref_dead.iter_mut()) {
            *d = *d || out_of_bounds(base, s);
        }
        Ok(self
            .runs
            .iter()
            .enumerate()
            .map(|(i, run)| {
                let diverged = dead[i] || out_of_bounds(base, &states[i]);
                let lost = diverged || ref_dead[run.reference];
                RunOutcome {
                    final_error: if lost {
                        f64::INFINITY
                    } else {
                        l2_distance(&states[i], &ref_states[run.reference])
                    },
                    max_error: if lost { f64::INFINITY } else { max_err[i] },
                    seconds: seconds[i],
                    diverged,
                }
            })
            .collect())
    }

    /// The driver `scheme` consumes at `level`, built from the aggregated
    /// increment `inc`.
    #[allow(clippy::too_many_arguments)]
    fn driver<'a>(
        &self,
        scheme: Scheme,
        level: u32,
        step: u64,
        inc: &'a [Complex64],
        path: &NoisePath,
        aux: &mut [f64],
        out: &'a mut [Complex64],
    ) -> &'a [Complex64] {
        if scheme != Scheme::SplitExact {
            return inc;
        }
        let ctx = &self.contexts[level as usize];
        path.fill_normals(DOMAIN_CONVOLUTION + level, step, aux);
        ctx.convolution()
            .convolution_from_increment(inc, ctx.covariance().gamma(), aux, ctx.alpha(), out);
        out
    }
}

/// One step; returns whether the state is now dead.
fn advance(stepper: &mut Stepper, u: &mut [Complex64], driver: &[Complex64], step: u64) -> Result<bool> {
    match stepper.step(u, driver, step) {
        Ok(()) => Ok(false),
        Err(SpdeError::Diverged { .. }) => Ok(true),
        Err(e) => Err(e),
    }
}

fn out_of_bounds(ctx: &StepContext, coeffs: &[Complex64]) -> bool {
    let mut nodes = coeffs.to_vec();
    ctx.grid().inverse_in_place(&mut nodes);
    nodes.iter().any(|c| {
        let m = c.norm();
        !m.is_finite() || m > DIVERGENCE_THRESHOLD
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Nonlinearity;
    use crate::integrators::integrate;
    use crate::noise::{aggregate_increments, Covariance, Increment};
    use crate::spectral::{FieldState, Grid};

    fn setup(g: &Grid, tau: f64) -> (StepContext, SpectralState) {
        let ctx = StepContext::new(
            tau,
            1.5,
            Nonlinearity::nonlocal_fn(g, f64::cos).unwrap(),
            Covariance::power_law2(g),
        )
        .unwrap();
        let u0 = FieldState::from_fn(g, |x| Complex64::new(2.0 / (2.0 - x.cos()), 0.0))
            .unwrap()
            .to_modes()
            .unwrap();
        (ctx, u0)
    }

    #[test]
    fn level_zero_run_reproduces_the_reference() {
        let g = Grid::new(32).unwrap();
        let (ctx, u0) = setup(&g, 1.0 / 64.0);
        let plan = CoupledPlan::new(
            &ctx,
            1.0,
            vec![Scheme::Split],
            vec![
                CoarseRun {
                    scheme: Scheme::Split,
                    level: 0,
                    reference: 0,
                },
                CoarseRun {
                    scheme: Scheme::Split,
                    level: 2,
                    reference: 0,
                },
            ],
            true,
        )
        .unwrap();
        let out = plan.run_sample(&u0, &NoisePath::new(1, 3)).unwrap();
        assert_eq!(out[0].final_error, 0.0);
        assert_eq!(out[0].max_error, 0.0);
        assert!(out[1].final_error > 0.0 && out[1].final_error.is_finite());
        assert!(out[1].max_error >= out[1].final_error);

    }

    #[test]
    fn coarse_driver_equals_aggregated_fine_increments_bitwise() {
        // a coarse Split run at level 2 must equal a hand-driven run on
        // aggregate_increments of the fine path
        let g = Grid::new(16).unwrap();
        let (ctx, u0) = setup(&g, 1.0 / 16.0);
        let coarse_ctx = ctx.with_tau(0.25).unwrap();
        let path = NoisePath::new(8, 1);
        let mut u = u0.coeffs().to_vec();
        let mut stepper = Stepper::new(Scheme::Split, &coarse_ctx);
        for m in 0..4u64 {
            let block: Vec<Increment> = (0..4)
                .map(|j| Increment {
                    first_step: 4 * m + j,
                    steps: 1,
                    state: path.sample_increment(4 * m + j, 1.0 / 16.0, ctx.covariance()).unwrap(),
                })
                .collect();
            let agg = aggregate_increments(&block).unwrap();
            stepper.step(&mut u, agg.state.coeffs(), m).unwrap();
        }
        let plan = CoupledPlan::new(
            &ctx,
            1.0,
            vec![Scheme::Split],
            vec![CoarseRun {
                scheme: Scheme::Split,
                level: 2,
                reference: 0,
            }],
            false,
        )
        .unwrap();
        let out = plan.run_sample(&u0, &path).unwrap();
        let native_ref = integrate(Scheme::Split, &u0, &ctx, 16, &path, 16).unwrap();
        let expected = l2_distance(&u, native_ref.last().coeffs());
        assert_eq!(out[0].final_error, expected);
    }
}
