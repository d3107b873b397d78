use std::ffi::{CStr, CString};
use std::ptr;

use famo::famo::{FamoConfig, FamoState};
use famo::problems::{make_quadratic_bank, MultiTaskProblem, QuadraticBankSpec};
use famo_ffi::*;

fn last_error() -> String {
    let p = famo_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn softmax_and_projection() {
    let mut out = [0.0; 3];
    assert_eq!(unsafe { famo_softmax([0.0, 0.0, 0.0].as_ptr(), 3, out.as_mut_ptr()) }, FamoStatus::Ok);
    assert!(out.iter().all(|&z| (z - 1.0 / 3.0).abs() < 1e-15));
    assert!(famo_last_error().is_null());
    assert_eq!(unsafe { famo_project_simplex([0.6, 0.6, 0.0].as_ptr(), 3, out.as_mut_ptr()) }, FamoStatus::Ok);
    assert_eq!(out, [0.5, 0.5, 0.0]);
}

#[test]
fn null_and_bad_inputs_report_errors() {
    let mut out = [0.0; 2];
    assert_eq!(unsafe { famo_softmax(ptr::null(), 2, out.as_mut_ptr()) }, FamoStatus::NullPointer);
    assert!(last_error().contains("xi"));
    let bad = [f64::NAN, 0.0];
    assert_eq!(unsafe { famo_softmax(bad.as_ptr(), 2, out.as_mut_ptr()) }, FamoStatus::InvalidInput);
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { famo_weighter_new(0, ptr::null(), ptr::null(), &mut h) }, FamoStatus::InvalidInput);
    assert!(h.is_null());
    let cfg = FamoWeighterConfig { beta: -1.0, ..famo_weighter_config_default() };
    assert_eq!(unsafe { famo_weighter_new(2, &cfg, ptr::null(), &mut h) }, FamoStatus::Config);
    assert_eq!(unsafe { famo_weighter_update(ptr::null_mut(), out.as_ptr(), out.as_ptr()) }, FamoStatus::NullPointer);
    unsafe { famo_weighter_free(ptr::null_mut()) };
}

#[test]
fn min_norm_of_orthonormal_rows() {
    let rows = [1.0, 0.0, 0.0, 1.0];
    let (mut w, mut d, mut gap) = ([0.0; 2], [0.0; 2], 1.0);
    let s = unsafe { famo_min_norm(rows.as_ptr(), 2, 2, w.as_mut_ptr(), d.as_mut_ptr(), &mut gap) };
    assert_eq!(s, FamoStatus::Ok);
    assert!((w[0] - 0.5).abs() < 1e-9 && (d[1] - 0.5).abs() < 1e-9 && gap <= 1e-8);
    assert_eq!(unsafe { famo_min_norm(rows.as_ptr(), 0, 2, w.as_mut_ptr(), ptr::null_mut(), ptr::null_mut()) }, FamoStatus::InvalidInput);
}

/// A caller-driven loop through the C interface retraces `FamoState`.
#[test]
fn weighter_loop_matches_famo_state() {
    let bank = make_quadratic_bank(&QuadraticBankSpec::random(3, 5, 4)).unwrap();
    let lr = 1e-2;
    let mut state = FamoState::with_sgd(&bank, vec![1.0; 5], lr, FamoConfig::default()).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { famo_weighter_new(3, ptr::null(), bank.min_losses().as_ptr(), &mut h) }, FamoStatus::Ok);
    assert_eq!(unsafe { famo_weighter_num_tasks(h) }, 3);
    let mut theta = vec![1.0; 5];
    for _ in 0..100 {
        let prev = bank.losses(&theta);
        let mut w = [0.0; 3];
        assert_eq!(unsafe { famo_weighter_weights(h, prev.as_ptr(), w.as_mut_ptr()) }, FamoStatus::Ok);
        let d = bank.weighted_gradient(&theta, &w);
        theta.iter_mut().zip(&d).for_each(|(t, g)| *t -= lr * g);
        let curr = bank.losses(&theta);
        assert_eq!(unsafe { famo_weighter_update(h, prev.as_ptr(), curr.as_ptr()) }, FamoStatus::Ok);
        state.step(&bank).unwrap();
    }
    let mut z = [0.0; 3];
    assert_eq!(unsafe { famo_weighter_logit_weights(h, z.as_mut_ptr()) }, FamoStatus::Ok);
    assert_eq!(theta, state.theta());
    assert_eq!(z.as_slice(), state.weighting().weights().as_slice());
    unsafe { famo_weighter_free(h) };
}

#[test]
fn run_json_round_trip() {
    let cfg = CString::new(
        r#"{"problem":{"name":"random_quadratic","k":2,"m":3,"seed":1},"method":{"name":"famo"},
            "updater":{"kind":"sgd","lr":0.01},"steps":5,"record_time":false}"#,
    )
    .unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { famo_run_json(cfg.as_ptr(), &mut out) }, FamoStatus::Ok);
    let text = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_owned();
    unsafe { famo_string_free(out) };
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["steps_completed"], 5);
    assert_eq!(v["total_grad_evals"], 5);

    let bad = CString::new(r#"{"steps":1}"#).unwrap();
    assert_eq!(unsafe { famo_run_json(bad.as_ptr(), &mut out) }, FamoStatus::Config);
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(famo_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
