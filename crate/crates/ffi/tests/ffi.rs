use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use qfe_ffi::*;

fn last_error() -> String {
    let p = qfe_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn fisher_values() {
    let mut m = QfeFisherMatrix::default();
    let st = unsafe { qfe_fisher_matrix(QfeProbe::Noon2, std::f64::consts::PI / 16.0, 1.0, &mut m) };
    assert_eq!(st, QfeStatus::Ok);
    assert!((m.f_pp - 4.0).abs() < 1e-9 && (m.f_pv + 2.0).abs() < 1e-9 && (m.f_vv - 3.0).abs() < 1e-9);

    let mut f = 0.0;
    let st = unsafe { qfe_effective_fisher(QfeProbe::Noon2, 0.39, 1.0, &mut f) };
    assert_eq!(st, QfeStatus::Ok);
    assert!((f - 4.0).abs() < 1e-2);

    let mut v = 0.0;
    let st = unsafe {
        qfe_crb_variance(
            QfeProbe::Noon2,
            std::f64::consts::PI / 8.0,
            1.0,
            800,
            QfeConvention::PerShot,
            &mut v,
        )
    };
    assert_eq!(st, QfeStatus::Ok);
    assert!((v - 1.0 / 1600.0).abs() < 1e-12);
}

#[test]
fn errors_set_status_and_message() {
    let mut f = 0.0;
    let st = unsafe { qfe_effective_fisher(QfeProbe::Single, 0.1, 1.5, &mut f) };
    assert_eq!(st, QfeStatus::Domain);
    assert!(last_error().contains("visibility"));

    let st = unsafe { qfe_crb_variance(QfeProbe::Single, 0.1, 0.0, 100, QfeConvention::PerShot, &mut f) };
    assert_eq!(st, QfeStatus::Numerical);

    let st = unsafe { qfe_effective_fisher(QfeProbe::Single, 0.1, 0.5, ptr::null_mut()) };
    assert_eq!(st, QfeStatus::NullPointer);

    let mut buf = [0.0; 2];
    let st = unsafe { qfe_outcome_probabilities(QfeProbe::Noon2, 0.1, 0.5, buf.as_mut_ptr(), buf.len()) };
    assert_eq!(st, QfeStatus::BufferTooSmall);
}

#[test]
fn probabilities_sum_to_one() {
    let n = qfe_probe_settings(QfeProbe::Noon2);
    let mut buf = vec![0.0; n];
    let st = unsafe { qfe_outcome_probabilities(QfeProbe::Noon2, 0.4, 0.8, buf.as_mut_ptr(), n) };
    assert_eq!(st, QfeStatus::Ok);
    assert!((buf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn function_handles() {
    let xs = [0.0, 1.0, 2.0, 3.0];
    let ys = [0.0, 1.0, 2.0, 3.0];
    let mut f: *mut QfeFunction = ptr::null_mut();
    assert_eq!(
        unsafe { qfe_function_new(xs.as_ptr(), ys.as_ptr(), ptr::null(), 4, &mut f) },
        QfeStatus::Ok
    );
    assert_eq!(unsafe { qfe_function_len(f) }, 4);

    let rx: Vec<f64> = (0..=3000).map(|i| i as f64 * 1e-3).collect();
    let mut r: *mut QfeFunction = ptr::null_mut();
    assert_eq!(
        unsafe { qfe_function_new(rx.as_ptr(), rx.as_ptr(), ptr::null(), rx.len(), &mut r) },
        QfeStatus::Ok
    );

    let mut d = f64::NAN;
    assert_eq!(
        unsafe { qfe_delta_squared(f, r, QfeMethod::NearestNeighbour, &mut d) },
        QfeStatus::Ok
    );
    assert!((d - 1.0 / 12.0).abs() < 1e-3);
    assert_eq!(
        unsafe { qfe_delta_squared(f, r, QfeMethod::Linear, &mut d) },
        QfeStatus::Ok
    );
    assert!(d.abs() < 1e-24);

    let targets = [0.5, 2.25];
    let mut out = [0.0; 2];
    assert_eq!(
        unsafe { qfe_function_interpolate(f, QfeMethod::Linear, targets.as_ptr(), 2, out.as_mut_ptr()) },
        QfeStatus::Ok
    );
    assert_eq!(out, [0.5, 2.25]);
    let outside = [4.0];
    assert_eq!(
        unsafe { qfe_function_interpolate(f, QfeMethod::Linear, outside.as_ptr(), 1, out.as_mut_ptr()) },
        QfeStatus::Range
    );

    let mut s: *mut QfeFunction = ptr::null_mut();
    assert_eq!(unsafe { qfe_function_select_subset(f, 2, &mut s) }, QfeStatus::Ok);
    assert_eq!(unsafe { qfe_function_len(s) }, 2);

    let bad = [0.0, 0.0];
    let mut g: *mut QfeFunction = ptr::null_mut();
    assert_eq!(
        unsafe { qfe_function_new(bad.as_ptr(), bad.as_ptr(), ptr::null(), 2, &mut g) },
        QfeStatus::InvalidArgument
    );
    assert!(g.is_null());

    unsafe {
        qfe_function_free(f);
        qfe_function_free(r);
        qfe_function_free(s);
        qfe_function_free(ptr::null_mut());
    }
}

#[test]
fn estimator_handle() {
    let mut e: *mut QfeEstimator = ptr::null_mut();
    assert_eq!(
        unsafe { qfe_estimator_new(QfeProbe::Noon2, 128, 64, &mut e) },
        QfeStatus::Ok
    );
    let counts = [192u64, 138, 8, 62];
    let mut p = QfePointEstimate::default();
    assert_eq!(
        unsafe { qfe_estimator_estimate(e, counts.as_ptr(), 4, &mut p) },
        QfeStatus::Ok
    );
    assert_eq!(p.n_shots, 400);
    assert!((p.phi_b - std::f64::consts::PI / 16.0).abs() < 0.1);
    assert!(p.var_phi > 0.0);

    assert_eq!(
        unsafe { qfe_estimator_set_support(e, 0.0, 10.0, 0.0, 1.0) },
        QfeStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { qfe_estimator_set_support(e, -0.5, 1.0, 0.0, 1.0) },
        QfeStatus::Ok
    );
    unsafe { qfe_estimator_free(e) };
}

#[test]
fn campaign_handle() {
    let cfg = CString::new(
        "mode = crb\nreference_mode = exact\nn_points = 20\nn_s_values = 2, 5, 10, 20\nmc_reps = 10\nprobes = noon2\nn_resources = 800\n",
    )
    .unwrap();
    let mut c: *mut QfeCampaign = ptr::null_mut();
    assert_eq!(unsafe { qfe_campaign_run(cfg.as_ptr(), &mut c) }, QfeStatus::Ok);
    assert_eq!(unsafe { qfe_campaign_len(c) }, 8);
    let mut row = QfeCampaignRow {
        probe: QfeProbe::Single,
        n_resources: 0,
        method: QfeMethod::Linear,
        n_s: 0,
        delta2_mean: 0.0,
        delta2_std: 0.0,
        failed: true,
    };
    assert_eq!(unsafe { qfe_campaign_row(c, 0, &mut row) }, QfeStatus::Ok);
    assert_eq!(
        (row.probe, row.n_resources, row.method, row.n_s, row.failed),
        (QfeProbe::Noon2, 800, QfeMethod::NearestNeighbour, 2, false)
    );
    assert!(row.delta2_mean > 0.0);
    assert_eq!(unsafe { qfe_campaign_row(c, 8, &mut row) }, QfeStatus::Range);
    unsafe { qfe_campaign_free(c) };

    let bad = CString::new("seed = 1\nseed = 2\n").unwrap();
    let mut c: *mut QfeCampaign = ptr::null_mut();
    assert_eq!(unsafe { qfe_campaign_run(bad.as_ptr(), &mut c) }, QfeStatus::Config);
    assert!(last_error().contains("line 2"));
}

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include").join("qfe.h")
}

#[test]
fn header_declares_api() {
    let text = std::fs::read_to_string(header()).expect("header generated by build script");
    for name in [
        "qfe_last_error_message",
        "qfe_fisher_matrix",
        "qfe_effective_fisher",
        "qfe_crb_variance",
        "qfe_outcome_probabilities",
        "qfe_function_new",
        "qfe_delta_squared",
        "qfe_estimator_estimate",
        "qfe_campaign_run",
        "qfe_campaign_row",
        "typedef struct QfeFunction QfeFunction",
        "QFE_STATUS_OK = 0",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
}

#[test]
fn c_program_links_against_static_lib() {
    let exe = std::env::current_exe().unwrap();
    let target_dir = exe.parent().and_then(|d| d.parent()).unwrap();
    let lib = target_dir.join("libqfe_ffi.a");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if !lib.exists() || Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "qfe.h"
int main(void) {
    double f = 0.0;
    if (qfe_effective_fisher(QFE_PROBE_NOON2, 0.39269908169872414, 1.0, &f) != QFE_STATUS_OK) return 1;
    if (qfe_effective_fisher(QFE_PROBE_NOON2, 0.1, 2.0, &f) != QFE_STATUS_DOMAIN) return 2;
    if (qfe_last_error_message() == NULL) return 3;
    printf("%.6f\n", f);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("main");
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "4.000000");
}
