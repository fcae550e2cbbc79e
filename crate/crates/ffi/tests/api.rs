use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use ddnc::*;

fn last_error() -> String {
    let p = ddnc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

unsafe fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = CStr::from_ptr(p).to_string_lossy().into_owned();
    ddnc_string_free(p);
    s
}

#[test]
fn demo_pipeline_round_trip() {
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(ddnc_pipeline_from_demo(1, &mut p), DdncStatus::Ok);
        let mut d = ptr::null_mut();
        assert_eq!(ddnc_simulate(p, &mut d), DdncStatus::Ok);
        assert_eq!(ddnc_dataset_len(d), 10);
        let mut r = ptr::null_mut();
        assert_eq!(ddnc_synthesize(p, d, &mut r), DdncStatus::Ok);
        let (mut rows, mut cols) = (0, 0);
        assert_eq!(
            ddnc_result_gain_shape(r, &mut rows, &mut cols),
            DdncStatus::Ok
        );
        assert_eq!((rows, cols), (1, 3));
        let mut k = [0.0; 3];
        assert_eq!(
            ddnc_result_gain(r, ptr::null_mut(), 0),
            DdncStatus::NullArgument
        );
        assert_eq!(
            ddnc_result_gain(r, k.as_mut_ptr(), 2),
            DdncStatus::BufferTooSmall
        );
        assert_eq!(ddnc_result_gain(r, k.as_mut_ptr(), 3), DdncStatus::Ok);
        assert!((k[2] + 9.8).abs() < 1e-4);

        let mut c = ptr::null_mut();
        assert_eq!(ddnc_certify(p, r, ptr::null(), &mut c), DdncStatus::Ok);
        let (mut gamma, mut empty) = (0.0, true);
        assert_eq!(
            ddnc_certificate_gamma(c, &mut gamma, &mut empty),
            DdncStatus::Ok
        );
        assert!(!empty && gamma > 0.0);
        let mut s = ptr::null_mut();
        assert_eq!(ddnc_certificate_json(c, &mut s), DdncStatus::Ok);
        assert!(take_string(s).contains("\"kind\": \"roa\""));
        assert_eq!(ddnc_result_json(r, &mut s), DdncStatus::Ok);
        assert!(take_string(s).contains("sin(x1)"));

        ddnc_certificate_free(c);
        ddnc_result_free(r);
        ddnc_dataset_free(d);
        ddnc_pipeline_free(p);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(
            ddnc_pipeline_from_demo(11, &mut p),
            DdncStatus::InvalidInput
        );
        assert!(last_error().contains("demo id"));
        assert!(p.is_null());

        let bad =
            CString::new("[model]\nname = \"nowhere\"\n[synthesis]\nmode = \"exact\"\n").unwrap();
        assert_eq!(
            ddnc_pipeline_from_toml(bad.as_ptr(), &mut p),
            DdncStatus::InvalidInput
        );
        assert!(last_error().contains("nowhere"));
        assert_eq!(
            ddnc_pipeline_from_toml(ptr::null(), &mut p),
            DdncStatus::NullArgument
        );

        let cfg = std::fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../core/configs/example04.toml"
        ))
        .unwrap()
        .replace("mode = \"verify\"", "mode = \"exact\"")
        .replace(
            "gain = [[0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0]]",
            "",
        );
        let cfg = CString::new(cfg).unwrap();
        assert_eq!(
            ddnc_pipeline_from_toml(cfg.as_ptr(), &mut p),
            DdncStatus::Ok
        );
        let mut d = ptr::null_mut();
        assert_eq!(ddnc_simulate(p, &mut d), DdncStatus::Ok);
        let mut r = ptr::null_mut();
        assert_eq!(ddnc_synthesize(p, d, &mut r), DdncStatus::Infeasible);
        assert!(r.is_null());

        assert_eq!(ddnc_pipeline_set_seed(p, 5), DdncStatus::Ok);
        ddnc_pipeline_free_then_null(p);
        ddnc_dataset_free(d);

        let mut diverging = ptr::null_mut();
        let text = CString::new(
            "seed = 2\n[model]\nname = \"cubic-square\"\n[experiment]\nhorizon = 50\n[synthesis]\nmode = \"minnorm\"\n",
        )
        .unwrap();
        assert_eq!(
            ddnc_pipeline_from_toml(text.as_ptr(), &mut diverging),
            DdncStatus::Ok
        );
        assert_eq!(ddnc_simulate(diverging, &mut d), DdncStatus::Divergence);
        ddnc_pipeline_free(diverging);
    }
}

unsafe fn ddnc_pipeline_free_then_null(p: *mut DdncPipeline) {
    ddnc_pipeline_free(p);
    ddnc_pipeline_free(ptr::null_mut());
}

#[test]
fn recorded_csv_data_are_loaded_and_averaged() {
    use ddnc_core::cli::{demo_config, Pipeline};
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(demo_config(8).unwrap()).unwrap();
    let runs = p.simulate().unwrap();
    let files: Vec<CString> = runs
        .iter()
        .take(3)
        .enumerate()
        .map(|(i, t)| {
            let path = dir.path().join(format!("r{i}.csv"));
            t.save(&path).unwrap();
            CString::new(path.to_str().unwrap()).unwrap()
        })
        .collect();
    let ptrs: Vec<_> = files.iter().map(|c| c.as_ptr()).collect();
    unsafe {
        let mut h = ptr::null_mut();
        assert_eq!(ddnc_pipeline_from_demo(8, &mut h), DdncStatus::Ok);
        let mut d = ptr::null_mut();
        assert_eq!(
            ddnc_dataset_load(h, ptrs.as_ptr(), ptrs.len(), &mut d),
            DdncStatus::Ok
        );
        assert_eq!(ddnc_dataset_len(d), 30);
        ddnc_dataset_free(d);
        ddnc_pipeline_free(h);
    }
}

#[test]
fn probability_bound_matches_closed_form() {
    let (mut b, mut p) = (0.0, 0.0);
    let s = unsafe { ddnc_prob_bound_bounded(0.01, 1e-4 / 3.0, 30, 100, 4e-5, 1, &mut b, &mut p) };
    assert_eq!(s, DdncStatus::Ok);
    assert!((b - 0.0348).abs() < 1e-3 && (p - 0.9948).abs() < 1e-3);
    let s = unsafe { ddnc_prob_bound_bounded(0.01, 1e-4 / 3.0, 30, 0, 4e-5, 1, &mut b, &mut p) };
    assert_eq!(s, DdncStatus::InvalidInput);
    let v = unsafe { CStr::from_ptr(ddnc_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_is_valid_c_and_cpp() {
    let header = Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/include/ddnc.h"));
    let text = std::fs::read_to_string(header).unwrap();
    for name in [
        "ddnc_synthesize",
        "ddnc_certify",
        "DDNC_STATUS_INFEASIBLE = 3",
        "typedef struct DdncPipeline",
    ] {
        assert!(text.contains(name), "{name} missing from the header");
    }
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let Ok(o) = Command::new(compiler)
            .args(["-fsyntax-only", "-x", lang, "-Wall", "-Werror"])
            .arg(header)
            .output()
        else {
            continue;
        };
        assert!(
            o.status.success(),
            "{compiler}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
}
