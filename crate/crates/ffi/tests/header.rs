use std::path::{Path, PathBuf};
use std::process::Command;

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/spde_split.h")
}

#[test]
fn header_declares_the_api() {
    let text = std::fs::read_to_string(header()).unwrap();
    for needle in [
        "#ifndef SPDE_SPLIT_H",
        "typedef struct SpdeSimulator SpdeSimulator;",
        "typedef struct SpdeParams {",
        "SPDE_STATUS_DIVERGED = 5,",
        "enum SpdeStatus spde_simulator_new(const struct SpdeParams *params, struct SpdeSimulator **out);",
        "void spde_simulator_free(struct SpdeSimulator *sim);",
        "enum SpdeStatus spde_simulator_step(struct SpdeSimulator *sim, uint64_t n_steps);",
        "const char *spde_last_error_message(void);",
        "enum SpdeStatus spde_trace_q(enum SpdeCovariance kind, size_t nx, double *out);",
    ] {
        assert!(text.contains(needle), "header lacks `{needle}`");
    }
}

const SMOKE: &str = r#"
#include <math.h>
#include <stdio.h>
#include "spde_split.h"

int main(void) {
    double kernel[64], re[64], im[64];
    for (int j = 0; j < 64; j++) {
        double x = 2.0 * M_PI * j / 64.0;
        kernel[j] = cos(x);
        re[j] = 2.0 / (2.0 - cos(x));
        im[j] = 0.0;
    }
    SpdeParams p = {64, 0.01, 0.0, SPDE_SCHEME_SPLIT, SPDE_COVARIANCE_POWER_LAW2,
                    SPDE_NONLINEARITY_NONLOCAL, kernel, 1, 0};
    SpdeSimulator *sim = NULL;
    if (spde_simulator_new(&p, &sim) != SPDE_STATUS_OK) return 1;
    if (spde_simulator_set_state(sim, re, im, 64) != SPDE_STATUS_OK) return 2;
    double m0, m1;
    spde_simulator_mass(sim, &m0);
    if (spde_simulator_step(sim, 100) != SPDE_STATUS_OK) return 3;
    spde_simulator_mass(sim, &m1);
    spde_simulator_free(sim);
    if (fabs(m1 - m0) > 1e-10 * m0) return 4;
    p.nx = 63;
    if (spde_simulator_new(&p, &sim) != SPDE_STATUS_INVALID_ARGUMENT) return 5;
    printf("%s\n", spde_last_error_message());
    return 0;
}
"#;

/// Directory holding the library artifacts of this build.
fn artifact_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_the_static_library() {
    let lib = artifact_dir().join("libspde_split_ffi.a");
    assert!(lib.exists(), "missing {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let bin = dir.path().join("smoke");
    std::fs::write(&src, SMOKE).unwrap();
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let out = Command::new(cc)
        .arg("-std=c99")
        .arg("-D_DEFAULT_SOURCE")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert!(String::from_utf8_lossy(&run.stdout).contains("power of two"));
}
