use std::ffi::{CStr, CString};
use std::ptr;

use pipn_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(pipn_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn build_predict_save_load() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(pipn_model_build(0.125, PipnPooling::Max, 7, &mut model), PipnStatus::Ok);
        let mut count = 0u64;
        assert_eq!(pipn_model_param_count(model, &mut count), PipnStatus::Ok);
        assert!(count > 0);

        let xy = [0.5, 0.5, -0.6, 0.2, 0.9, -0.9];
        let mut uv = [0.0; 6];
        assert_eq!(pipn_model_predict(model, xy.as_ptr(), 3, uv.as_mut_ptr()), PipnStatus::Ok);
        assert!(uv.iter().all(|v| v.is_finite() && v.abs() <= 1.0));

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("m.ckpt").to_str().unwrap()).unwrap();
        assert_eq!(pipn_model_save(model, path.as_ptr()), PipnStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(pipn_model_load(path.as_ptr(), &mut loaded), PipnStatus::Ok);
        let mut again = [0.0; 6];
        assert_eq!(pipn_model_predict(loaded, xy.as_ptr(), 3, again.as_mut_ptr()), PipnStatus::Ok);
        assert_eq!(uv, again);
        pipn_model_free(model);
        pipn_model_free(loaded);
        pipn_model_free(ptr::null_mut());
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(pipn_model_build(0.3, PipnPooling::Max, 1, &mut model), PipnStatus::InvalidArgument);
        assert!(last_error().contains("0.3"), "{}", last_error());
        assert!(model.is_null());
        assert_eq!(pipn_model_build(1.0, PipnPooling::Max, 1, ptr::null_mut()), PipnStatus::NullPointer);
        assert_eq!(pipn_model_param_count(ptr::null(), ptr::null_mut()), PipnStatus::NullPointer);

        let missing = CString::new("/nonexistent/model.ckpt").unwrap();
        assert_eq!(pipn_model_load(missing.as_ptr(), &mut model), PipnStatus::Io);
        let dir = tempfile::tempdir().unwrap();
        let junk = dir.path().join("junk.ckpt");
        std::fs::write(&junk, b"not a checkpoint").unwrap();
        let junk = CString::new(junk.to_str().unwrap()).unwrap();
        assert_eq!(pipn_model_load(junk.as_ptr(), &mut model), PipnStatus::Format);
        assert!(last_error().contains("magic"));

        let mut w = 0.0;
        assert_eq!(pipn_weight_sensor(PipnSchedule::ExpDecay, 50.0, 800.0, 0, &mut w), PipnStatus::Ok);
        assert_eq!(w, 50.0);
        assert!(last_error().is_empty());
        assert_eq!(pipn_weight_sensor(PipnSchedule::ExpDecay, 50.0, 800.0, 10_000, &mut w), PipnStatus::Ok);
        assert_eq!(w, 1.0);
        assert_eq!(pipn_weight_sensor(PipnSchedule::LogDecay, 6.25, -1.0, 0, &mut w), PipnStatus::InvalidArgument);
    }
}

#[test]
fn dataset_generation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"dataset": {"points": 80, "sensors": 9, "resolution": {"n_ring": 48, "n_layers": 12}}}"#).unwrap();
    let cfg = CString::new(cfg.to_str().unwrap()).unwrap();
    let out = CString::new(dir.path().join("data").to_str().unwrap()).unwrap();
    let filter = CString::new("shape=5;side=2.0;per_shape=2").unwrap();
    let mut n = 0usize;
    let status = unsafe { pipn_generate_dataset(cfg.as_ptr(), out.as_ptr(), filter.as_ptr(), 3, &mut n) };
    assert_eq!(status, PipnStatus::Ok, "{}", last_error());
    assert_eq!(n, 2);
    assert!(dir.path().join("data/manifest.json").exists());
}

#[test]
fn header_declares_the_interface() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/pipn.h")).unwrap();
    for name in ["pipn_model_build", "pipn_model_predict", "pipn_last_error", "PIPN_STATUS_OK", "typedef struct PipnModel PipnModel"] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/pipn.h");
    match std::process::Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header]).output() {
        Ok(out) => assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr)),
        Err(_) => eprintln!("no C compiler found, skipping"),
    }
}
