//! Compiles a small C program against the generated header and the static
//! library, then runs it.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <math.h>
#include "dpvote.h"

int main(void) {
    double s = 0.0;
    if (dpv_sum_sensitivity(9, &s) != DPV_STATUS_OK || s != 6.0) return 1;
    uint64_t rounds = 0;
    if (dpv_budget_schedule(200, 5000.0, 1e-5, 1.0, &rounds) != DPV_STATUS_OK) return 2;
    if (rounds < 1300 || rounds > 1302) return 3;
    DpvLedger *l = NULL;
    if (dpv_ledger_new(1e-5, DPV_GRID_STANDARD, &l) != DPV_STATUS_OK) return 4;
    dpv_ledger_compose_vote_sum(l, 200, 5000.0);
    double eps = 0.0, order = 0.0;
    if (dpv_ledger_epsilon(l, DPV_TRACK_INDEPENDENT, &eps, &order) != DPV_STATUS_OK) return 5;
    dpv_ledger_free(l);
    if (fabs(eps - 0.02716) > 0.0002716) return 6;
    if (dpv_sum_sensitivity(0, &s) != DPV_STATUS_INVALID_ARGUMENT) return 7;
    char msg[128];
    if (dpv_last_error_message(msg, sizeof msg) == 0) return 8;
    printf("ok %llu %.6f\n", (unsigned long long)rounds, eps);
    return 0;
}
"#;

#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let include = manifest.join("include");
    assert!(include.join("dpvote.h").exists(), "header not generated");
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|p| p.parent()).unwrap().to_path_buf();
    let lib = profile_dir.join("libdpvote_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let tmp = tempdir();
    let src = tmp.join("smoke.c");
    let bin = tmp.join("smoke");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("C compiler available");
    assert!(status.success(), "C compilation failed");
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "C program exited with {:?}", run.status.code());
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok "));
}

fn tempdir() -> PathBuf {
    let d = std::env::temp_dir().join(format!("dpvote-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}
