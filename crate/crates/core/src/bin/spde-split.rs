use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spde_split::harness::output::{
    write_bench, write_file, write_prob, write_state, write_strong, write_trace, write_traj,
};
use spde_split::harness::{
    run_bench, run_prob_order, run_simulate, run_strong_order, run_trace, Experiment, ExperimentConfig, RawConfig,
};
use spde_split::SpdeError;

/// Monte Carlo experiments for stochastic nonlinear Schrödinger equations.
#[derive(Parser, Debug)]
#[command(name = "spde-split", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample-mean mass against the trace-formula line.
    Trace(Common),
    /// Strong end-point errors and fitted slopes.
    StrongOrder(Common),
    /// Proportion of samples exceeding C·tau^delta.
    ProbOrder(Common),
    /// Step time against mean final error.
    Bench(Common),
    /// One path with mass, H1 norm and symplectic form.
    Simulate(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Full-size sample counts and resolutions.
    #[arg(long)]
    paper_scale: bool,
}

enum Failure {
    Config(String),
    AllDiverged,
    Other(String),
}

impl From<SpdeError> for Failure {
    fn from(e: SpdeError) -> Self {
        match e {
            SpdeError::Config(_) | SpdeError::NonDyadic(_) => Failure::Config(e.to_string()),
            SpdeError::AllDiverged => Failure::AllDiverged,
            e => Failure::Other(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("{m}");
            ExitCode::from(2)
        }
        Err(Failure::AllDiverged) => {
            eprintln!("all samples diverged");
            ExitCode::from(3)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (experiment, common) = match cli.command {
        Command::Trace(c) => (Experiment::Trace, c),
        Command::StrongOrder(c) => (Experiment::StrongOrder, c),
        Command::ProbOrder(c) => (Experiment::ProbOrder, c),
        Command::Bench(c) => (Experiment::Bench, c),
        Command::Simulate(c) => (Experiment::Simulate, c),
    };
    let raw = match &common.config {
        Some(path) => RawConfig::load(path)?,
        None => RawConfig::default(),
    };
    let mut cfg = ExperimentConfig::resolve(experiment, &raw, common.paper_scale)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(samples) = common.samples {
        cfg.samples = samples;
    }
    cfg.validate()?;

    let out = &common.out;
    let written = match experiment {
        Experiment::Trace => {
            let rep = run_trace(&cfg)?;
            let path = write_file(out, "trace.csv", |f| write_trace(f, &rep))?;
            if rep.all_diverged() {
                return Err(Failure::AllDiverged);
            }
            vec![path]
        }
        Experiment::StrongOrder => {
            let rep = run_strong_order(&cfg)?;
            let path = write_file(out, "strong.csv", |f| write_strong(f, &rep))?;
            if rep.all_diverged() {
                return Err(Failure::AllDiverged);
            }
            for (scheme, slope) in &rep.slopes {
                println!("{scheme}: fitted slope {slope:.4}");
            }
            vec![path]
        }
        Experiment::ProbOrder => {
            let rep = run_prob_order(&cfg)?;
            let path = write_file(out, "prob.csv", |f| write_prob(f, &rep))?;
            if rep.n_diverged == cfg.samples {
                return Err(Failure::AllDiverged);
            }
            vec![path]
        }
        Experiment::Bench => {
            let rep = run_bench(&cfg)?;
            let path = write_file(out, "bench.csv", |f| write_bench(f, &rep))?;
            if rep.all_diverged() {
                return Err(Failure::AllDiverged);
            }
            vec![path]
        }
        Experiment::Simulate => {
            let rep = run_simulate(&cfg)?;
            let traj = write_file(out, "traj.csv", |f| write_traj(f, &rep))?;
            let state = write_file(out, "final_state.csv", |f| write_state(f, &rep))?;
            if let Some(step) = rep.diverged_at {
                eprintln!("diverged at step {step}");
                return Err(Failure::AllDiverged);
            }
            vec![traj, state]
        }
    };
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}
