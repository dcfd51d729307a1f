//! Scalar diagnostics computed from states and Monte Carlo samples.

use serde::Serialize;

use crate::error::{Result, SpdeError};
use crate::spectral::SpectralState;

/// `M(u) = ‖u‖²_{L²} = Σ |c_k|²`.
pub fn mass(u: &SpectralState) -> f64 {
    u.norm_sqr()
}

/// `ω(ξ, η) = Im⟨ξ, η⟩_{L²}` with `⟨ξ, η⟩ = ∫ conj(ξ) η dx`.
pub fn symplectic_form(xi: &SpectralState, eta: &SpectralState) -> f64 {
    xi.coeffs()
        .iter()
        .zip(eta.coeffs())
        .map(|(a, b)| (a.conj() * b).im)
        .sum()
}

/// Sample mean and standard error of the mean (unbiased variance).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct SampleStats {
    pub mean: f64,
    pub std_error: f64,
    pub count: usize,
}

impl SampleStats {
    pub fn from_samples(xs: &[f64]) -> Self {
        let count = xs.len();
        if count == 0 {
            return SampleStats {
                mean: f64::NAN,
                std_error: f64::NAN,
                count,
            };
        }
        let mean = xs.iter().sum::<f64>() / count as f64;
        let std_error = if count > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
            (var / count as f64).sqrt()
        } else {
            0.0
        };
        SampleStats { mean, std_error, count }
    }

    /// Whether `[mean ± width·se]` overlaps `[other.mean ± width·other.se]`.
    pub fn overlaps(&self, other: &SampleStats, width: f64) -> bool {
        (self.mean - other.mean).abs() <= width * (self.std_error + other.std_error)
    }
}

/// Sample-mean mass at one save time against the trace-formula line
/// `M(u_0) + t α² Tr(Q)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceRecord {
    pub t: f64,
    pub sample_mean_mass: f64,
    pub std_error: f64,
    pub predicted: f64,
    /// Samples still finite at this time.
    pub n_samples: usize,
    /// Samples that had diverged by this time.
    pub n_diverged: usize,
}

impl TraceRecord {
    /// `|mean − predicted| / se`, with the standard error floored at a
    /// roundoff-sized fraction of the prediction so noiseless runs give 0.
    pub fn residual(&self) -> f64 {
        if self.n_samples == 0 {
            return f64::NAN;
        }
        let floor = 1e-12 * self.predicted.abs().max(1.0);
        (self.sample_mean_mass - self.predicted).abs() / self.std_error.max(floor)
    }
}

/// Largest normalized deviation from the trace-formula line over a series.
/// Times with no surviving samples are skipped.
pub fn trace_residual(records: &[TraceRecord]) -> f64 {
    records
        .iter()
        .map(TraceRecord::residual)
        .filter(|r| !r.is_nan())
        .fold(0.0, f64::max)
}

/// `ω` of two tangents at one step, alongside its initial value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SymplecticRecord {
    pub step: u64,
    pub omega_value: f64,
    pub omega_initial: f64,
}

impl SymplecticRecord {
    pub fn relative_drift(&self) -> f64 {
        (self.omega_value - self.omega_initial).abs() / self.omega_initial.abs()
    }
}

/// Sample mean of `exp(μ ‖u‖²)` with its standard error. Overflowing
/// summands make the estimate `+∞`.
pub fn exp_moment_estimate(squared_norms: &[f64], mu: f64) -> Result<SampleStats> {
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(SpdeError::param(format!("exponent must be finite and nonnegative, got {mu}")));
    }
    if squared_norms.is_empty() {
        return Err(SpdeError::param("no samples"));
    }
    let terms: Vec<f64> = squared_norms.iter().map(|m| (mu * m).exp()).collect();
    if terms.iter().any(|t| t.is_infinite()) {
        return Ok(SampleStats {
            mean: f64::INFINITY,
            std_error: f64::INFINITY,
            count: terms.len(),
        });
    }
    Ok(SampleStats::from_samples(&terms))
}
