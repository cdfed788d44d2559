use std::ffi::{c_char, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use jtwpd_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { jtwpd_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

#[test]
fn handles_round_trip() {
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(jtwpd_config_new(2.0, 4.0, 0.0, 40, &mut cfg), JtwpdStatus::Ok);
        assert_eq!(jtwpd_config_set_run(cfg, 12, 0.0, false), JtwpdStatus::Ok);
        let mut hash = [0 as c_char; 65];
        assert_eq!(jtwpd_config_hash(cfg, hash.as_mut_ptr(), hash.len()), JtwpdStatus::Ok);
        assert_eq!(jtwpd_config_hash(cfg, hash.as_mut_ptr(), 10), JtwpdStatus::Dimension);

        let mut series = ptr::null_mut();
        assert_eq!(jtwpd_keldysh_run(cfg, &mut series), JtwpdStatus::Ok);
        let n = jtwpd_series_len(series);
        let mut y = vec![0.0; n];
        assert_eq!(jtwpd_series_copy(series, JtwpdQuantity::YMean, y.as_mut_ptr(), n), JtwpdStatus::Ok);
        assert!((y[n - 1] + 2.0 * 2f64.sqrt()).abs() < 0.05, "{}", y[n - 1]);
        assert_eq!(jtwpd_series_copy(series, JtwpdQuantity::Current, y.as_mut_ptr(), n), JtwpdStatus::InvalidArgument);
        assert_eq!(jtwpd_series_copy(series, JtwpdQuantity::YVar, y.as_mut_ptr(), n - 1), JtwpdStatus::Dimension);

        let mut traj = ptr::null_mut();
        assert_eq!(jtwpd_trajectory_run(cfg, 3, JtwpdBackend::Sector, &mut traj), JtwpdStatus::Ok);
        assert_eq!(jtwpd_trajectory_len(traj), n);
        let mut yt = vec![0.0; n];
        assert_eq!(jtwpd_trajectory_copy(traj, JtwpdQuantity::YMean, yt.as_mut_ptr(), n), JtwpdStatus::Ok);
        assert!((yt[n - 1] - y[n - 1]).abs() < 0.05);
        assert_eq!(jtwpd_trajectory_copy(traj, JtwpdQuantity::Current, yt.as_mut_ptr(), n), JtwpdStatus::InvalidArgument);

        jtwpd_trajectory_free(traj);
        jtwpd_series_free(series);
        jtwpd_config_free(cfg);
        jtwpd_config_free(ptr::null_mut());
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(jtwpd_config_new(-1.0, 4.0, 0.0, 40, &mut cfg), JtwpdStatus::InvalidArgument);
        assert!(cfg.is_null());
        assert!(last_error().contains("g_tau"));
        assert_eq!(jtwpd_config_new(1.0, 4.0, 0.0, 0, &mut cfg), JtwpdStatus::InvalidArgument);
        assert_eq!(jtwpd_config_new(1.0, 4.0, 0.0, 40, ptr::null_mut()), JtwpdStatus::NullPointer);
        assert_eq!(jtwpd_keldysh_run(ptr::null(), ptr::null_mut()), JtwpdStatus::NullPointer);
        let text = CString::new("not toml").unwrap();
        assert_eq!(jtwpd_config_from_toml(text.as_ptr(), &mut cfg), JtwpdStatus::InvalidArgument);

        assert_eq!(jtwpd_config_new(1.0, 4.0, 40.0, 20, &mut cfg), JtwpdStatus::Ok);
        assert_eq!(jtwpd_config_set_nonlinearity(cfg, 5.0, 0.01, 3.0), JtwpdStatus::InvalidArgument);
        let mut traj = ptr::null_mut();
        assert_eq!(jtwpd_trajectory_run(cfg, 0, JtwpdBackend::Sector, &mut traj), JtwpdStatus::Numerical);
        assert!(last_error().contains("time step"));
        jtwpd_config_free(cfg);

        let (ph, va) = ([2.0, 3.0], [0.0, 1.0]);
        let (mut thr, mut fid) = (0.0, 0.0);
        assert_eq!(jtwpd_optimize_threshold(ph.as_ptr(), 2, va.as_ptr(), 2, &mut thr, &mut fid), JtwpdStatus::Ok);
        assert_eq!(fid, 1.0);
        assert_eq!(jtwpd_optimize_threshold(ph.as_ptr(), 0, va.as_ptr(), 2, &mut thr, &mut fid), JtwpdStatus::InvalidArgument);
    }
}

#[test]
fn config_text_round_trips() {
    let cfg = jtwpd::model::DetectorConfig::new(1.5, 6.0, 1.0, 50);
    let text = CString::new(cfg.to_toml()).unwrap();
    unsafe {
        let mut h = ptr::null_mut();
        assert_eq!(jtwpd_config_from_toml(text.as_ptr(), &mut h), JtwpdStatus::Ok);
        let mut hash = [0 as c_char; 65];
        assert_eq!(jtwpd_config_hash(h, hash.as_mut_ptr(), 65), JtwpdStatus::Ok);
        let got: String = hash[..64].iter().map(|&c| c as u8 as char).collect();
        assert_eq!(got, cfg.config_hash());
        jtwpd_config_free(h);
    }
}

#[test]
fn header_compiles_and_links_from_c() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; header check not run");
        return;
    };
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libjtwpd_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "jtwpd.h"
int main(void) {
    JtwpdConfig *cfg = NULL;
    if (jtwpd_config_new(2.0, 4.0, 0.0, 30, &cfg) != JtwpdStatus_Ok) return 1;
    if (jtwpd_config_set_run(cfg, 10, 0.0, false) != JtwpdStatus_Ok) return 2;
    JtwpdSeries *s = NULL;
    if (jtwpd_keldysh_run(cfg, &s) != JtwpdStatus_Ok) return 3;
    size_t n = jtwpd_series_len(s);
    double *y = malloc(n * sizeof(double));
    if (jtwpd_series_copy(s, JtwpdQuantity_YMean, y, n) != JtwpdStatus_Ok) return 4;
    printf("%.6f\n", y[n - 1]);
    JtwpdConfig *bad = NULL;
    if (jtwpd_config_new(1.0, -4.0, 0.0, 30, &bad) != JtwpdStatus_InvalidArgument) return 5;
    char msg[128];
    jtwpd_last_error(msg, sizeof msg);
    printf("%s\n", msg);
    free(y);
    jtwpd_series_free(s);
    jtwpd_config_free(cfg);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("main");
    let status = Command::new(cc)
        .arg(&src)
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    let text = String::from_utf8(out.stdout).unwrap();
    let y: f64 = text.lines().next().unwrap().parse().unwrap();
    assert!((y + 2.0 * 2f64.sqrt()).abs() < 0.05, "{y}");
    assert!(text.contains("gamma_tau"));
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}
