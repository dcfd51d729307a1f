use std::fs;
use std::process::Command;

use spde_split::harness::output::{write_strong, write_trace, write_traj};
use spde_split::harness::{
    run_bench, run_prob_order, run_simulate, run_strong_order, run_trace, Experiment, ExperimentConfig,
    NonlinearityKind, RawConfig,
};
use spde_split::{Scheme, SpdeError};

const BIN: &str = env!("CARGO_BIN_EXE_spde-split");

fn small(exp: Experiment) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::defaults(exp);
    cfg.nx = 32;
    cfg.samples = 16;
    cfg
}

fn coupled(exp: Experiment) -> ExperimentConfig {
    let mut cfg = small(exp);
    cfg.taus = vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0];
    cfg.tau_ref = 1.0 / 128.0;
    cfg
}

#[test]
fn trace_output_does_not_depend_on_worker_count() {
    let mut cfg = small(Experiment::Trace);
    cfg.samples = 300;
    let csv = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let rep = pool.install(|| run_trace(&cfg)).unwrap();
        let mut buf = Vec::new();
        write_trace(&mut buf, &rep).unwrap();
        buf
    };
    let one = csv(1);
    assert_eq!(one, csv(3));
    assert_eq!(one, csv(1));
}

#[test]
fn strong_rows_are_reproducible_bitwise() {
    let cfg = coupled(Experiment::StrongOrder);
    let csv = || {
        let mut buf = Vec::new();
        write_strong(&mut buf, &run_strong_order(&cfg).unwrap()).unwrap();
        buf
    };
    assert_eq!(csv(), csv());
}

#[test]
fn deterministic_problem_gives_first_order_errors() {
    // α = 0 with an external potential: only the deterministic splitting error
    let mut cfg = coupled(Experiment::StrongOrder);
    cfg.alpha = 0.0;
    cfg.nonlinearity = NonlinearityKind::External;
    cfg.potential = spde_split::harness::PotentialSpec::Preset("rational".into());
    cfg.samples = 1;
    cfg.tau_ref = 1.0 / 1024.0;
    let rep = run_strong_order(&cfg).unwrap();
    let slope = rep.slope(Scheme::Split).unwrap();
    assert!((slope - 1.0).abs() < 0.15, "slope {slope}");
}

#[test]
fn proportions_fall_as_the_threshold_grows() {
    let mut cfg = coupled(Experiment::ProbOrder);
    cfg.c_values = vec![0.01, 0.1, 1.0, 10.0];
    let rep = run_prob_order(&cfg).unwrap();
    for &tau in &cfg.taus {
        for &delta in &cfg.deltas {
            let ps: Vec<f64> = cfg.c_values.iter().map(|&c| rep.proportion(tau, delta, c).unwrap()).collect();
            assert!(ps.windows(2).all(|w| w[0] >= w[1]), "{ps:?}");
            assert!(ps.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }
    assert_eq!(rep.proportion(cfg.taus[0], 0.5, 0.01), Some(1.0));
}

fn bench_cfg(samples: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::defaults(Experiment::Bench);
    cfg.nx = 64;
    cfg.samples = samples;
    cfg.taus = vec![1.0 / 64.0, 1.0 / 128.0];
    cfg.tau_ref = 1.0 / 512.0;
    cfg
}

#[test]
fn bench_errors_shrink_with_the_step() {
    let mut cfg = bench_cfg(4);
    cfg.alpha = 0.5;
    let rep = run_bench(&cfg).unwrap();
    for s in [Scheme::Split, Scheme::CrankNicolson] {
        let e: Vec<f64> = rep.rows.iter().filter(|r| r.scheme == s).map(|r| r.mean_final_error).collect();
        assert!(e[1] < e[0], "{s}: {e:?}");
    }
}

#[test]
fn simulate_is_reproducible_and_keeps_omega() {
    let mut cfg = small(Experiment::Simulate);
    cfg.alpha = 0.0;
    cfg.t_final = 1.0;
    let csv = || {
        let mut buf = Vec::new();
        write_traj(&mut buf, &run_simulate(&cfg).unwrap()).unwrap();
        buf
    };
    assert_eq!(csv(), csv());
    let rep = run_simulate(&cfg).unwrap();
    let w0 = rep.rows[0].omega;
    assert!(rep.rows.iter().all(|r| (r.omega - w0).abs() <= 1e-9 * w0.abs()));
}

#[test]
fn config_errors_are_reported_as_such() {
    let raw = RawConfig::parse("tau = 0.3").unwrap();
    assert!(matches!(
        ExperimentConfig::resolve(Experiment::Trace, &raw, false),
        Err(SpdeError::Config(_))
    ));
    let raw = RawConfig::parse("taus = [0.1, 0.05]\ntau_ref = 0.01").unwrap();
    assert!(matches!(
        ExperimentConfig::resolve(Experiment::StrongOrder, &raw, false),
        Err(SpdeError::NonDyadic(_))
    ));
}

fn write_config(dir: &std::path::Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("cfg.toml");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn cli_writes_csv_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "nx = 32\nschemes = [\"split\", \"cn\"]\n");
    let run = |out: &str| {
        let status = Command::new(BIN)
            .args(["trace", "--config"])
            .arg(&cfg)
            .args(["--samples", "40", "--seed", "5", "--out"])
            .arg(dir.path().join(out))
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        fs::read_to_string(dir.path().join(out).join("trace.csv")).unwrap()
    };
    let a = run("a");
    assert_eq!(a, run("b"));
    assert!(a.starts_with("scheme,t,mean_mass,std_error,predicted,n_diverged\n"));
    assert_eq!(a.lines().count(), 1 + 2 * 11);
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |sub: &str, text: &str| {
        let cfg = write_config(dir.path(), text);
        Command::new(BIN)
            .args([sub, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path())
            .output()
            .unwrap()
            .status
            .code()
    };
    assert_eq!(code("trace", "nx = 32\nsamples = 4\n"), Some(0));
    assert_eq!(code("trace", "tau = 0.3\n"), Some(2));
    assert_eq!(code("trace", "bogus_key = 1\n"), Some(2));
    assert_eq!(code("strong-order", "experiment = \"trace\"\n"), Some(2));
    assert_eq!(code("simulate", "nx = 32\nscheme = \"em\"\nT = 25\ntau = 0.1\n"), Some(3));
    assert_eq!(
        code("trace", "nx = 32\nsamples = 4\nschemes = [\"em\"]\nT = 25\nnonlinearity = \"nonlocal\"\n"),
        Some(3)
    );
    let state = fs::read_to_string(dir.path().join("final_state.csv")).unwrap();
    assert!(state.starts_with("k,re,im\n"));
}
