use std::ffi::{CStr, CString};
use std::ptr;
use twogroups_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(tg_last_error_message()) }.to_string_lossy().into_owned()
}

fn illustration() -> *mut TgModel {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { tg_model_new_normal(0.9, 2.5, 0.5, 1.0, &mut m) }, TgStatus::Ok);
    assert!(!m.is_null());
    m
}

#[test]
fn exceedance_matches_the_library() {
    let m = illustration();
    let mut p = 0.0;
    assert_eq!(unsafe { tg_exceedance(m, 3.5, 1.0, 2.8, TgTail::Upper, &mut p) }, TgStatus::Ok);
    let direct = twogroups::posterior::exceedance(&twogroups::TwoGroupsModel::illustration(), 3.5, 1.0, 2.8, twogroups::Tail::Upper).unwrap();
    assert_eq!(p, direct);
    assert!((p - 0.5059929).abs() < 1e-6);

    let mut fdr = 0.0;
    assert_eq!(unsafe { tg_local_fdr(m, 3.5, 1.0, &mut fdr) }, TgStatus::Ok);
    assert!((fdr - 0.0325556).abs() < 1e-6);
    let mut tail = 0.0;
    assert_eq!(unsafe { tg_marginal_upper_tail(m, 3.5, 1.0, &mut tail) }, TgStatus::Ok);
    assert!((tail - 0.0209202).abs() < 1e-6);
    let mut avg = 0.0;
    assert_eq!(unsafe { tg_population_averaged_exceedance(m, 3.5, 2.0, 1.0, TgTail::Upper, &mut avg) }, TgStatus::Ok);
    assert!((avg - 0.9512857).abs() < 1e-6);
    unsafe { tg_model_free(m) };
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { tg_model_new_normal(1.5, 2.5, 0.5, 1.0, &mut m) }, TgStatus::InvalidInput);
    assert!(m.is_null());
    assert!(last_error().contains("p0"));

    let model = illustration();
    let mut out = 0.0;
    assert_eq!(unsafe { tg_local_fdr(model, f64::NAN, 1.0, &mut out) }, TgStatus::InvalidInput);
    assert_eq!(unsafe { tg_local_fdr(ptr::null(), 1.0, 1.0, &mut out) }, TgStatus::NullPointer);
    assert!(last_error().contains("model"));
    assert_eq!(unsafe { tg_local_fdr(model, 1.0, 1.0, ptr::null_mut()) }, TgStatus::NullPointer);
    // Far enough out that both log densities are -inf.
    assert_eq!(unsafe { tg_local_fdr(model, 1e200, 1.0, &mut out) }, TgStatus::DegeneratePoint);
    assert_eq!(unsafe { tg_local_fdr(model, 1.0, 1.0, &mut out) }, TgStatus::Ok);
    assert_eq!(last_error(), "");
    unsafe { tg_model_free(model) };
}

#[test]
fn config_round_trip() {
    let m = illustration();
    let mut text = ptr::null_mut();
    assert_eq!(unsafe { tg_model_to_config(m, &mut text) }, TgStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { tg_model_from_config(text, &mut back) }, TgStatus::Ok);
    let mut again = ptr::null_mut();
    assert_eq!(unsafe { tg_model_to_config(back, &mut again) }, TgStatus::Ok);
    assert_eq!(unsafe { CStr::from_ptr(text) }, unsafe { CStr::from_ptr(again) });
    unsafe {
        tg_string_free(text);
        tg_string_free(again);
        tg_model_free(back);
        tg_model_free(m);
    }

    let bad = CString::new("p0 = 0.9\ng.kind = cauchy\n").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { tg_model_from_config(bad.as_ptr(), &mut out) }, TgStatus::Parse);
    assert!(last_error().contains(":2:"), "{}", last_error());
}

#[test]
fn grid_model_and_empirical_null() {
    let support = [1.0, 2.0, 3.0];
    let weights = [0.25, 0.5, 0.25];
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { tg_model_new_grid(0.8, support.as_ptr(), weights.as_ptr(), 3, 1.0, &mut g) }, TgStatus::Ok);
    let mut e = ptr::null_mut();
    assert_eq!(unsafe { tg_model_with_empirical_null(g, 0.1, 1.2, &mut e) }, TgStatus::Ok);
    let (mut a, mut b) = (0.0, 0.0);
    unsafe {
        tg_marginal_density(g, 0.5, 1.0, &mut a);
        tg_marginal_density(e, 0.5, 1.0, &mut b);
    }
    assert!(a > 0.0 && b > 0.0 && a != b);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { tg_model_new_grid(0.8, ptr::null(), weights.as_ptr(), 3, 1.0, &mut out) }, TgStatus::NullPointer);
    unsafe {
        tg_model_free(g);
        tg_model_free(e);
    }
}

#[test]
fn fit_through_the_abi() {
    let (panel, _) = twogroups::TwoGroupsModel::illustration()
        .sample_panel(3000, &twogroups::SamplingVariances::Common(1.0), 11)
        .unwrap();
    let z = panel.z_values();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { tg_fit_parametric(z.as_ptr(), ptr::null(), z.len(), 1.0, &mut m) }, TgStatus::Ok);
    let mut p0 = 0.0;
    assert_eq!(unsafe { tg_model_p0(m, &mut p0) }, TgStatus::Ok);
    assert!(p0 > 0.8 && p0 < 0.97);
    unsafe { tg_model_free(m) };

    let mut none = ptr::null_mut();
    assert_eq!(unsafe { tg_fit_parametric(z.as_ptr(), ptr::null(), 5, 1.0, &mut none) }, TgStatus::InsufficientData);
}

#[test]
fn version_and_tail_fdr() {
    let v = unsafe { CStr::from_ptr(tg_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
    let m = illustration();
    let mut fdr = 0.0;
    assert_eq!(unsafe { tg_tail_fdr(m, 3.5, 1.0, TgTail::Upper, &mut fdr) }, TgStatus::Ok);
    assert!((fdr - 0.0100079).abs() < 1e-6);
    unsafe { tg_model_free(m) };
}

#[test]
fn header_is_current() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/twogroups.h")).unwrap();
    for name in [
        "tg_model_new_normal",
        "tg_model_new_grid",
        "tg_model_from_config",
        "tg_model_to_config",
        "tg_exceedance",
        "tg_fit_parametric",
        "tg_last_error_message",
        "typedef struct TgModel TgModel",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
