//! Experiment configuration: a flat TOML key/value file resolved against
//! per-experiment defaults.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use serde::Deserialize;

use crate::dynamics::{CubicSign, Nonlinearity};
use crate::error::{Result, SpdeError};
use crate::integrators::{Scheme, StepContext};
use crate::noise::{Covariance, CovarianceKind};
use crate::spectral::{FieldState, Grid, SpectralState};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Trace,
    StrongOrder,
    ProbOrder,
    Bench,
    Simulate,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Trace => "trace",
            Experiment::StrongOrder => "strong-order",
            Experiment::ProbOrder => "prob-order",
            Experiment::Bench => "bench",
            Experiment::Simulate => "simulate",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = SpdeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "trace" => Ok(Experiment::Trace),
            "strong-order" => Ok(Experiment::StrongOrder),
            "prob-order" => Ok(Experiment::ProbOrder),
            "bench" => Ok(Experiment::Bench),
            "simulate" => Ok(Experiment::Simulate),
            other => Err(SpdeError::Config(format!("unknown experiment '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NonlinearityKind {
    Zero,
    External,
    Nonlocal,
    Cubic(CubicSign),
}

impl FromStr for NonlinearityKind {
    type Err = SpdeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "zero" | "none" => Ok(NonlinearityKind::Zero),
            "external" => Ok(NonlinearityKind::External),
            "nonlocal" => Ok(NonlinearityKind::Nonlocal),
            "cubic" | "cubic+" => Ok(NonlinearityKind::Cubic(CubicSign::Plus)),
            "cubic-" | "cubic-minus" => Ok(NonlinearityKind::Cubic(CubicSign::Minus)),
            other => Err(SpdeError::Config(format!("unknown nonlinearity '{other}'"))),
        }
    }
}

/// Real potential or interaction kernel on the nodes.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum PotentialSpec {
    /// `rational` = 3/(5 − 4cos x), `cos` = cos x, or a number for a constant.
    Preset(String),
    Constant(f64),
    Nodes(Vec<f64>),
}

impl PotentialSpec {
    fn nodes(&self, grid: &Grid) -> Result<Vec<f64>> {
        match self {
            PotentialSpec::Preset(name) => match name.trim() {
                "rational" | "three-over-five-minus-four-cos" => {
                    Ok(grid.nodes().map(|x| 3.0 / (5.0 - 4.0 * x.cos())).collect())
                }
                "cos" => Ok(grid.nodes().map(f64::cos).collect()),
                other => Err(SpdeError::Config(format!("unknown potential preset '{other}'"))),
            },
            PotentialSpec::Constant(c) => Ok(vec![*c; grid.num_modes()]),
            PotentialSpec::Nodes(v) if v.len() == grid.num_modes() => Ok(v.clone()),
            PotentialSpec::Nodes(v) => Err(SpdeError::Config(format!(
                "potential has {} nodes, grid has {}",
                v.len(),
                grid.num_modes()
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum InitialSpec {
    /// `two-over-two-minus-cos` or `one-over-one-plus-sin-squared`.
    Preset(String),
    /// Real node values.
    Nodes(Vec<f64>),
}

impl InitialSpec {
    pub fn state(&self, grid: &Grid) -> Result<SpectralState> {
        let field = match self {
            InitialSpec::Preset(name) => match name.trim() {
                "two-over-two-minus-cos" => FieldState::from_fn(grid, |x| Complex64::new(2.0 / (2.0 - x.cos()), 0.0))?,
                "one-over-one-plus-sin-squared" => {
                    FieldState::from_fn(grid, |x| Complex64::new(1.0 / (1.0 + x.sin().powi(2)), 0.0))?
                }
                other => return Err(SpdeError::Config(format!("unknown initial-value preset '{other}'"))),
            },
            InitialSpec::Nodes(v) => {
                if v.len() != grid.num_modes() {
                    return Err(SpdeError::Config(format!(
                        "u0 has {} nodes, grid has {}",
                        v.len(),
                        grid.num_modes()
                    )));
                }
                FieldState::new(grid, v.iter().map(|&x| Complex64::new(x, 0.0)).collect())?
            }
        };
        field.to_modes()
    }
}

/// The file as written: every key optional.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub experiment: Option<String>,
    pub scheme: Option<String>,
    pub schemes: Option<Vec<String>>,
    pub nx: Option<usize>,
    pub covariance: Option<String>,
    /// Custom spectrum, listed for k = −N/2, …, N/2 − 1.
    pub gamma: Option<Vec<f64>>,
    pub alpha: Option<f64>,
    pub nonlinearity: Option<String>,
    pub potential: Option<PotentialSpec>,
    pub u0: Option<InitialSpec>,
    #[serde(rename = "T", alias = "t_final")]
    pub t_final: Option<f64>,
    pub tau: Option<f64>,
    pub taus: Option<Vec<f64>>,
    pub tau_ref: Option<f64>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub save_stride: Option<u64>,
    pub dealias: Option<bool>,
    pub deltas: Option<Vec<f64>>,
    pub c_values: Option<Vec<f64>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| SpdeError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SpdeError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

/// Fully resolved experiment parameters.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub schemes: Vec<Scheme>,
    pub nx: usize,
    pub covariance: CovarianceKind,
    pub gamma: Option<Vec<f64>>,
    pub alpha: f64,
    pub nonlinearity: NonlinearityKind,
    pub potential: PotentialSpec,
    pub u0: InitialSpec,
    pub t_final: f64,
    /// Step sizes; a single entry for `trace` and `simulate`.
    pub taus: Vec<f64>,
    pub tau_ref: f64,
    pub samples: usize,
    pub seed: u64,
    pub save_stride: u64,
    pub dealias: bool,
    pub deltas: Vec<f64>,
    pub c_values: Vec<f64>,
}

fn dyadic(from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|e| 2f64.powi(-e)).collect()
}

impl ExperimentConfig {
    /// Desk-scale defaults for an experiment.
    pub fn defaults(experiment: Experiment) -> Self {
        let mut cfg = ExperimentConfig {
            experiment,
            schemes: vec![Scheme::Split],
            nx: 256,
            covariance: CovarianceKind::PowerLaw2,
            gamma: None,
            alpha: 1.0,
            nonlinearity: NonlinearityKind::Nonlocal,
            potential: PotentialSpec::Preset("cos".into()),
            u0: InitialSpec::Preset("two-over-two-minus-cos".into()),
            t_final: 1.0,
            taus: vec![0.1],
            tau_ref: 2f64.powi(-12),
            samples: 100,
            seed: 2021,
            save_stride: 1,
            dealias: false,
            deltas: vec![0.4, 0.5, 0.6],
            c_values: vec![10.0, 100.0, 1000.0],
        };
        match experiment {
            Experiment::Trace => {
                cfg.schemes = vec![
                    Scheme::Split,
                    Scheme::EulerMaruyama,
                    Scheme::SemiImplicitEuler,
                    Scheme::StochasticExponential,
                    Scheme::CrankNicolson,
                ];
                cfg.nonlinearity = NonlinearityKind::External;
                cfg.potential = PotentialSpec::Preset("rational".into());
                cfg.samples = 5000;
            }
            Experiment::StrongOrder => {
                cfg.alpha = 1.5;
                cfg.u0 = InitialSpec::Preset("one-over-one-plus-sin-squared".into());
                cfg.taus = dyadic(4, 9);
                cfg.tau_ref = 2f64.powi(-12);
            }
            Experiment::ProbOrder => {
                cfg.alpha = 1.5;
                cfg.taus = dyadic(6, 12);
                cfg.tau_ref = 2f64.powi(-14);
                cfg.samples = 50;
            }
            Experiment::Bench => {
                cfg.schemes = vec![
                    Scheme::Split,
                    Scheme::SemiImplicitEuler,
                    Scheme::StochasticExponential,
                    Scheme::CrankNicolson,
                ];
                cfg.alpha = 1.5;
                cfg.u0 = InitialSpec::Preset("one-over-one-plus-sin-squared".into());
                cfg.t_final = 2.0;
                cfg.taus = dyadic(4, 10);
                cfg.tau_ref = 2f64.powi(-13);
                cfg.samples = 20;
            }
            Experiment::Simulate => {
                cfg.taus = vec![0.01];
                cfg.samples = 1;
            }
        }
        cfg
    }

    /// Swaps desk-scale sample counts and resolutions for the full ones.
    pub fn paper_scale(mut self) -> Self {
        match self.experiment {
            Experiment::Trace => self.samples = 75_000,
            Experiment::StrongOrder => {
                self.nx = 1024;
                self.samples = 250;
                self.tau_ref = 2f64.powi(-16);
            }
            Experiment::ProbOrder => {
                self.taus = dyadic(6, 14);
                self.tau_ref = 2f64.powi(-16);
            }
            Experiment::Bench => {
                self.nx = 1024;
                self.samples = 100;
            }
            Experiment::Simulate => {}
        }
        self
    }

    /// Resolves a raw file for `experiment`. A conflicting `experiment` key
    /// is an error.
    pub fn resolve(experiment: Experiment, raw: &RawConfig, paper_scale: bool) -> Result<Self> {
        if let Some(e) = &raw.experiment {
            let named: Experiment = e.parse()?;
            if named != experiment {
                return Err(SpdeError::Config(format!(
                    "config is for '{named}' but '{experiment}' was requested"
                )));
            }
        }
        let mut cfg = Self::defaults(experiment);
        if paper_scale {
            cfg = cfg.paper_scale();
        }
        match (&raw.scheme, &raw.schemes) {
            (Some(_), Some(_)) => return Err(SpdeError::Config("give either 'scheme' or 'schemes'".into())),
            (Some(s), None) => cfg.schemes = vec![s.parse()?],
            (None, Some(list)) => {
                cfg.schemes = list.iter().map(|s| s.parse()).collect::<Result<_>>()?;
            }
            (None, None) => {}
        }
        if let Some(nx) = raw.nx {
            cfg.nx = nx;
        }
        if let Some(c) = &raw.covariance {
            cfg.covariance = match c.trim() {
                "power-law-2" => CovarianceKind::PowerLaw2,
                "power-law-4" => CovarianceKind::PowerLaw4,
                "custom" => CovarianceKind::Custom,
                other => return Err(SpdeError::Config(format!("unknown covariance '{other}'"))),
            };
        }
        cfg.gamma = raw.gamma.clone();
        if let Some(a) = raw.alpha {
            cfg.alpha = a;
        }
        if let Some(n) = &raw.nonlinearity {
            cfg.nonlinearity = n.parse()?;
            // the potential default follows the nonlinearity unless given
            cfg.potential = match cfg.nonlinearity {
                NonlinearityKind::External => PotentialSpec::Preset("rational".into()),
                _ => PotentialSpec::Preset("cos".into()),
            };
            if raw.u0.is_none() && matches!(experiment, Experiment::StrongOrder | Experiment::Bench) {
                cfg.u0 = match cfg.nonlinearity {
                    NonlinearityKind::Nonlocal => InitialSpec::Preset("one-over-one-plus-sin-squared".into()),
                    _ => InitialSpec::Preset("two-over-two-minus-cos".into()),
                };
            }
        }
        if let Some(p) = &raw.potential {
            cfg.potential = p.clone();
        }
        if let Some(u) = &raw.u0 {
            cfg.u0 = u.clone();
        }
        if let Some(t) = raw.t_final {
            cfg.t_final = t;
        } else if experiment == Experiment::Trace && cfg.nonlinearity != NonlinearityKind::External {
            cfg.t_final = 25.0;
        }
        match (raw.tau, &raw.taus) {
            (Some(_), Some(_)) => return Err(SpdeError::Config("give either 'tau' or 'taus'".into())),
            (Some(t), None) => cfg.taus = vec![t],
            (None, Some(ts)) => cfg.taus = ts.clone(),
            (None, None) => {}
        }
        if let Some(t) = raw.tau_ref {
            cfg.tau_ref = t;
        }
        if let Some(m) = raw.samples {
            cfg.samples = m;
        }
        if let Some(s) = raw.seed {
            cfg.seed = s;
        }
        if let Some(s) = raw.save_stride {
            cfg.save_stride = s;
        }
        if let Some(d) = raw.dealias {
            cfg.dealias = d;
        }
        if let Some(d) = &raw.deltas {
            cfg.deltas = d.clone();
        }
        if let Some(c) = &raw.c_values {
            cfg.c_values = c.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SpdeError::Config(m));
        if self.schemes.is_empty() {
            return bad("no schemes selected".into());
        }
        if self.nx < 4 || !self.nx.is_power_of_two() {
            return bad(format!("nx = {} must be a power of two, at least 4", self.nx));
        }
        if self.samples == 0 {
            return bad("samples must be at least 1".into());
        }
        if self.save_stride == 0 {
            return bad("save_stride must be at least 1".into());
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return bad(format!("alpha = {} must be finite and nonnegative", self.alpha));
        }
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return bad(format!("T = {} must be positive", self.t_final));
        }
        if self.taus.is_empty() {
            return bad("no step sizes given".into());
        }
        let coupled = matches!(
            self.experiment,
            Experiment::StrongOrder | Experiment::ProbOrder | Experiment::Bench
        );
        let mut all = self.taus.clone();
        if coupled {
            all.push(self.tau_ref);
        }
        for &tau in &all {
            if !(tau > 0.0 && tau < 1.0) {
                return bad(format!("step size {tau} must lie in (0, 1)"));
            }
            steps_for(self.t_final, tau)?;
        }
        if coupled {
            for &tau in &self.taus {
                dyadic_level(tau, self.tau_ref)?;
            }
        }
        if self.covariance == CovarianceKind::Custom && self.gamma.is_none() {
            return bad("covariance = \"custom\" needs a 'gamma' list".into());
        }
        if self.experiment == Experiment::ProbOrder
            && (self.deltas.is_empty() || self.c_values.iter().any(|c| !(*c > 0.0)))
        {
            return bad("prob-order needs deltas and positive c_values".into());
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.nx)
    }

    pub fn covariance(&self, grid: &Grid) -> Result<Covariance> {
        match self.covariance {
            CovarianceKind::PowerLaw2 => Ok(Covariance::power_law2(grid)),
            CovarianceKind::PowerLaw4 => Ok(Covariance::power_law4(grid)),
            CovarianceKind::Custom => {
                let listed = self.gamma.as_ref().ok_or_else(|| SpdeError::Config("missing gamma".into()))?;
                if listed.len() != grid.num_modes() {
                    return Err(SpdeError::Config(format!(
                        "gamma has {} entries, grid has {}",
                        listed.len(),
                        grid.num_modes()
                    )));
                }
                let half = grid.num_modes() as i64 / 2;
                Covariance::custom_fn(grid, |k| listed[(k + half) as usize])
            }
        }
    }

    pub fn nonlinearity(&self, grid: &Grid) -> Result<Nonlinearity> {
        match self.nonlinearity {
            NonlinearityKind::Zero => Ok(Nonlinearity::Zero),
            NonlinearityKind::External => Nonlinearity::external(grid, self.potential.nodes(grid)?),
            NonlinearityKind::Nonlocal => Nonlinearity::nonlocal(grid, self.potential.nodes(grid)?),
            NonlinearityKind::Cubic(sign) => Ok(Nonlinearity::cubic(sign)),
        }
    }

    pub fn initial_state(&self, grid: &Grid) -> Result<SpectralState> {
        self.u0.state(grid)
    }

    /// Step context at `tau` for this problem.
    pub fn context(&self, tau: f64) -> Result<StepContext> {
        let grid = self.grid()?;
        Ok(
            StepContext::new(tau, self.alpha, self.nonlinearity(&grid)?, self.covariance(&grid)?)?
                .with_dealias(self.dealias),
        )
    }
}

/// `T/τ` when it is an integer (to roundoff).
pub fn steps_for(t_final: f64, tau: f64) -> Result<u64> {
    let n = (t_final / tau).round();
    if n < 1.0 || (n * tau - t_final).abs() > 1e-12 * t_final {
        return Err(SpdeError::Config(format!("step {tau} does not divide T = {t_final}")));
    }
    Ok(n as u64)
}

/// `r` with `tau = 2^r · tau_ref`.
pub fn dyadic_level(tau: f64, tau_ref: f64) -> Result<u32> {
    let ratio = tau / tau_ref;
    let r = ratio.log2().round();
    if r < 0.0 || (2f64.powi(r as i32) - ratio).abs() > 1e-9 * ratio {
        return Err(SpdeError::NonDyadic(format!("{tau} is not a power-of-two multiple of {tau_ref}")));
    }
    Ok(r as u32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let raw = RawConfig::parse("").unwrap();
        let cfg = ExperimentConfig::resolve(Experiment::Trace, &raw, false).unwrap();
        assert_eq!(cfg.samples, 5000);
        assert_eq!(cfg.nx, 256);
        assert_eq!(cfg.t_final, 1.0);
        assert_eq!(cfg.taus, vec![0.1]);
        let paper = ExperimentConfig::resolve(Experiment::Trace, &raw, true).unwrap();
        assert_eq!(paper.samples, 75_000);
    }

    #[test]
    fn parses_all_keys() {
        let text = r#"
            experiment = "strong-order"
            schemes = ["split", "sexp"]
            nx = 64
            covariance = "power-law-4"
            alpha = 0.5
            nonlinearity = "external"
            potential = "rational"
            u0 = "two-over-two-minus-cos"
            T = 0.5
            taus = [0.125, 0.0625]
            tau_ref = 0.015625
            samples = 7
            seed = 99
            save_stride = 2
            dealias = true
        "#;
        let raw = RawConfig::parse(text).unwrap();
        let cfg = ExperimentConfig::resolve(Experiment::StrongOrder, &raw, false).unwrap();
        assert_eq!(cfg.schemes, vec![Scheme::Split, Scheme::StochasticExponential]);
        assert_eq!(cfg.covariance, CovarianceKind::PowerLaw4);
        assert_eq!(cfg.nonlinearity, NonlinearityKind::External);
        assert_eq!((cfg.samples, cfg.seed, cfg.save_stride), (7, 99, 2));
        assert!(cfg.dealias);
        assert!(cfg.context(0.125).unwrap().dealias());
    }

    #[test]
    fn rejects_bad_configs() {
        let cases = [
            "nx = 100",
            "samples = 0",
            "tau = 0.3",
            "tau = 1.5",
            "unknown_key = 1",
            "scheme = \"rk4\"",
            "experiment = \"bench\"",
            "covariance = \"custom\"",
            "alpha = -1.0",
        ];
        for text in cases {
            let raw = RawConfig::parse(text);
            let res = raw.and_then(|r| ExperimentConfig::resolve(Experiment::Trace, &r, false));
            assert!(res.is_err(), "{text}");
        }
        let raw = RawConfig::parse("taus = [0.1, 0.05]\ntau_ref = 0.01").unwrap();
        assert!(ExperimentConfig::resolve(Experiment::StrongOrder, &raw, false).is_err());
    }

    #[test]
    fn custom_spectrum_and_nodes() {
        let gamma: Vec<String> = (-4..4).map(|k: i32| format!("{}", if k == 1 { 1.0 } else { 0.0 })).collect();
        let u0: Vec<String> = (0..8).map(|_| "1.0".to_string()).collect();
        let text = format!(
            "nx = 8\ncovariance = \"custom\"\ngamma = [{}]\nu0 = [{}]\nnonlinearity = \"external\"\npotential = 2.0",
            gamma.join(","),
            u0.join(",")
        );
        let raw = RawConfig::parse(&text).unwrap();
        let cfg = ExperimentConfig::resolve(Experiment::Simulate, &raw, false).unwrap();
        let g = cfg.grid().unwrap();
        let cov = cfg.covariance(&g).unwrap();
        assert_eq!(cov.trace(), 1.0);
        assert_eq!(cov.gamma()[g.index_of(1).unwrap()], 1.0);
        let u = cfg.initial_state(&g).unwrap();
        assert!((u.norm_sqr() - 2.0 * std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn dyadic_levels() {
        assert_eq!(dyadic_level(0.25, 0.25).unwrap(), 0);
        assert_eq!(dyadic_level(2f64.powi(-4), 2f64.powi(-12)).unwrap(), 8);
        assert!(dyadic_level(0.3, 0.1).is_err());
        assert!(dyadic_level(0.05, 0.1).is_err());
        assert_eq!(steps_for(25.0, 0.1).unwrap(), 250);
        assert!(steps_for(1.0, 0.3).is_err());
    }
}
