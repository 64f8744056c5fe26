//! C interface to `pipn`.
//!
//! Models are opaque handles created by `pipn_model_build` or
//! `pipn_model_load` and released with `pipn_model_free`. Every fallible
//! function returns a [`PipnStatus`]; on failure `pipn_last_error` gives a
//! message for the calling thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use pipn::autodiff::PoolKind;
use pipn::cli::{generate_dataset, ExperimentConfig};
use pipn::io::{read_json, Checkpoint};
use pipn::model::{build_pipn, ArchDescriptor};
use pipn::training::{AdamState, WeightSchedule};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Failed = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipnPooling {
    Max = 0,
    Average = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipnSchedule {
    ConstantEqual = 0,
    ConstantHigh = 1,
    ExpDecay = 2,
    LogDecay = 3,
}

/// Opaque model handle: network weights with optimizer state, as stored in
/// a checkpoint.
pub struct PipnModel {
    checkpoint: Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

type Outcome = Result<(), (PipnStatus, String)>;

fn guard(f: impl FnOnce() -> Outcome) -> PipnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            PipnStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PipnStatus::Panic
        }
    }
}

fn null(what: &str) -> (PipnStatus, String) {
    (PipnStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl ToString) -> (PipnStatus, String) {
    (PipnStatus::InvalidArgument, msg.to_string())
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, (PipnStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

fn io_status(e: pipn::io::IoError) -> (PipnStatus, String) {
    let status = match e {
        pipn::io::IoError::Format { .. } | pipn::io::IoError::Json { .. } | pipn::io::IoError::Csv { .. } => {
            PipnStatus::Format
        }
        _ => PipnStatus::Io,
    };
    (status, e.to_string())
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn pipn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a freshly initialized model.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn pipn_model_build(n_s: f64, pooling: PipnPooling, seed: u64, out: *mut *mut PipnModel) -> PipnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let pooling = match pooling {
            PipnPooling::Max => PoolKind::Max,
            PipnPooling::Average => PoolKind::Average,
        };
        let arch = ArchDescriptor::new(n_s, pooling).map_err(invalid)?;
        let model = build_pipn(arch, seed).map_err(invalid)?;
        let adam = AdamState::new(&model.params);
        let handle = Box::new(PipnModel { checkpoint: Checkpoint { model, adam, epoch: 0, root_seed: seed } });
        *out = Box::into_raw(handle);
        Ok(())
    })
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pipn_model_load(path: *const c_char, out: *mut *mut PipnModel) -> PipnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path, "path")?;
        let checkpoint = Checkpoint::load(&path).map_err(io_status)?;
        *out = Box::into_raw(Box::new(PipnModel { checkpoint }));
        Ok(())
    })
}

/// Writes the model as a checkpoint file.
///
/// # Safety
/// `model` must come from this library and `path` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn pipn_model_save(model: *const PipnModel, path: *const c_char) -> PipnStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let path = path_arg(path, "path")?;
        model.checkpoint.save(&path).map_err(io_status)
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pipn_model_free(model: *mut PipnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of trainable parameters.
///
/// # Safety
/// `model` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pipn_model_param_count(model: *const PipnModel, out: *mut u64) -> PipnStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = model.checkpoint.model.params.parameter_count() as u64;
        Ok(())
    })
}

/// Predicts `(u, v)` at `n_points` points. `xy` holds `x0, y0, x1, y1, ...`
/// and `uv_out` receives `u0, v0, u1, v1, ...`; both have `2 * n_points`
/// entries.
///
/// # Safety
/// The arrays must be valid for `2 * n_points` doubles.
#[no_mangle]
pub unsafe extern "C" fn pipn_model_predict(
    model: *const PipnModel,
    xy: *const f64,
    n_points: usize,
    uv_out: *mut f64,
) -> PipnStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if xy.is_null() {
            return Err(null("xy"));
        }
        if uv_out.is_null() {
            return Err(null("uv_out"));
        }
        if n_points == 0 {
            return Err(invalid("n_points must be positive"));
        }
        let coords: Vec<[f64; 2]> = std::slice::from_raw_parts(xy, 2 * n_points)
            .chunks_exact(2)
            .map(|c| [c[0], c[1]])
            .collect();
        let pred = model.checkpoint.model.forward_values(&coords).map_err(|e| (PipnStatus::Failed, e.to_string()))?;
        let out = std::slice::from_raw_parts_mut(uv_out, 2 * n_points);
        for (dst, p) in out.chunks_exact_mut(2).zip(&pred) {
            dst.copy_from_slice(p);
        }
        Ok(())
    })
}

/// Sensor-loss weight of a schedule at `epoch`. `omega` and `r` are the
/// schedule's weight and rate; both are ignored by `ConstantEqual` and `r`
/// by `ConstantHigh`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pipn_weight_sensor(kind: PipnSchedule, omega: f64, r: f64, epoch: u64, out: *mut f64) -> PipnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let schedule = match kind {
            PipnSchedule::ConstantEqual => WeightSchedule::ConstantEqual,
            PipnSchedule::ConstantHigh => WeightSchedule::ConstantHigh { omega_0: omega },
            PipnSchedule::ExpDecay => WeightSchedule::ExpDecay { omega_1: omega, r_1: r },
            PipnSchedule::LogDecay => WeightSchedule::LogDecay { omega_2: omega, r_2: r },
        };
        schedule.validate().map_err(invalid)?;
        *out = schedule.weight_sensor(epoch as usize);
        Ok(())
    })
}

/// Generates a dataset as `pipn gen-data` does. `config_path` may be null
/// for the default config; `out_dir` and `filter` override it when not
/// null. `generated` receives the number of geometries written.
///
/// # Safety
/// Non-null strings must be NUL-terminated; `generated` may be null.
#[no_mangle]
pub unsafe extern "C" fn pipn_generate_dataset(
    config_path: *const c_char,
    out_dir: *const c_char,
    filter: *const c_char,
    seed: u64,
    generated: *mut usize,
) -> PipnStatus {
    guard(|| {
        let mut cfg: ExperimentConfig = if config_path.is_null() {
            ExperimentConfig::default()
        } else {
            read_json(&path_arg(config_path, "config_path")?).map_err(io_status)?
        };
        if !out_dir.is_null() {
            cfg.dataset.dir = path_arg(out_dir, "out_dir")?;
        }
        if !filter.is_null() {
            cfg.dataset.filter = CStr::from_ptr(filter).to_str().map_err(|_| invalid("filter is not UTF-8"))?.to_string();
        }
        cfg.train.seed = seed;
        let manifest = generate_dataset(&cfg).map_err(|e| match e {
            pipn::cli::CliError::Io(io) => io_status(io),
            other => invalid(other),
        })?;
        if let Some(g) = generated.as_mut() {
            *g = manifest.succeeded().count();
        }
        Ok(())
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pipn_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}
