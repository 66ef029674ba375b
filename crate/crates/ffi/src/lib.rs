//! C interface to the `mott` simulation toolkit.
//!
//! Objects are opaque handles created by `*_new`-style functions and
//! released with the matching `*_free`. Fallible functions return a
//! [`MottStatus`]; on failure [`mott_last_error`] describes the error.
//! Strings returned through `char **` are owned by the caller and must be
//! released with [`mott_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use mott::bounds::closed_form_bound;
use mott::config::{ExperimentConfig, ExperimentKind};
use mott::env::{palm_poisson, MarkedConfiguration, NuLaw};
use mott::experiments::{self, RunOutput};
use mott::geometry::{Boundary, BoxGeometry, PointSet};
use mott::rng::replica_rng;
use mott::walk::{escape_rate, rate, NeighborIndex, RateModel};
use mott::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MottStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    OutOfRange = 3,
    InvalidParameter = 4,
    InvalidArgument = 5,
    InsufficientData = 6,
    Numerical = 7,
    StuckWalker = 8,
    CapViolation = 9,
    DensityBound = 10,
    Config = 11,
    Io = 12,
    Panic = 13,
}

impl From<&Error> for MottStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidParameter(_) => MottStatus::InvalidParameter,
            Error::InvalidArgument(_) => MottStatus::InvalidArgument,
            Error::InsufficientData(_) => MottStatus::InsufficientData,
            Error::Numerical(_) => MottStatus::Numerical,
            Error::StuckWalker { .. } => MottStatus::StuckWalker,
            Error::CapViolation { .. } => MottStatus::CapViolation,
            Error::DensityBound { .. } => MottStatus::DensityBound,
            Error::Config { .. } => MottStatus::Config,
            Error::Io(_) => MottStatus::Io,
        }
    }
}

/// Experiment configuration.
pub struct MottConfig {
    inner: ExperimentConfig,
}

/// Finished experiment: tables, summary and outcome.
pub struct MottRun {
    inner: RunOutput,
}

/// Marked point configuration in a box.
pub struct MottEnv {
    inner: MarkedConfiguration,
}

/// Mean-field hopping rates at a fixed inverse temperature.
pub struct MottRateModel {
    inner: RateModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("NUL bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(MottStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(MottStatus::from(&e), e.to_string())
    }
}

type FfiResult<T> = std::result::Result<T, Failure>;

fn guard(f: impl FnOnce() -> FfiResult<()>) -> MottStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MottStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            MottStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(MottStatus::NullPointer, format!("`{what}` is NULL"))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn borrow_mut<'a, T>(p: *mut T, what: &str) -> FfiResult<&'a mut T> {
    unsafe { p.as_mut() }.ok_or_else(|| null(what))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Failure(MottStatus::InvalidUtf8, format!("`{what}` is not valid UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> FfiResult<()> {
    if out.is_null() {
        return Err(null("out"));
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: &str) -> FfiResult<()> {
    if out.is_null() {
        return Err(null("out"));
    }
    let c = CString::new(s).map_err(|_| Failure(MottStatus::InvalidArgument, "string contains NUL".into()))?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

unsafe fn put_value<T>(out: *mut T, value: T) -> FfiResult<()> {
    if out.is_null() {
        return Err(null("out"));
    }
    unsafe { *out = value };
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(unsafe { Box::from_raw(p) });
    }
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn mott_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn mott_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Release a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn mott_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Default configuration of the named experiment (`mott-scan`, `perc-rc`,
/// `palm-check`, `domination-check` or `bound-compare`).
///
/// # Safety
/// `experiment` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mott_config_new(experiment: *const c_char, out: *mut *mut MottConfig) -> MottStatus {
    guard(|| {
        let name = unsafe { read_str(experiment, "experiment") }?;
        let kind = ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Failure(MottStatus::InvalidArgument, format!("unknown experiment `{name}`")))?;
        unsafe { put(out, MottConfig { inner: ExperimentConfig::new(kind) }) }
    })
}

/// Parse and validate a TOML configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mott_config_parse(toml: *const c_char, out: *mut *mut MottConfig) -> MottStatus {
    guard(|| {
        let text = unsafe { read_str(toml, "toml") }?;
        let inner = ExperimentConfig::parse(text)?;
        unsafe { put(out, MottConfig { inner }) }
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mott_config_set_seed(cfg: *mut MottConfig, seed: u64) -> MottStatus {
    guard(|| {
        unsafe { borrow_mut(cfg, "cfg") }?.inner.seed = seed;
        Ok(())
    })
}

/// Number of environment replicas (or per-point replicas, depending on the
/// experiment).
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mott_config_set_replicas(cfg: *mut MottConfig, replicas: usize) -> MottStatus {
    guard(|| {
        let c = unsafe { borrow_mut(cfg, "cfg") }?;
        let mut next = c.inner.clone();
        next.sizes.replicas = replicas;
        next.validate()?;
        c.inner = next;
        Ok(())
    })
}

/// Effective configuration as TOML.
///
/// # Safety
/// `cfg` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mott_config_to_toml(cfg: *const MottConfig, out: *mut *mut c_char) -> MottStatus {
    guard(|| {
        let text = unsafe { borrow(cfg, "cfg") }?.inner.to_toml()?;
        unsafe { put_string(out, &text) }
    })
}

/// # Safety
/// `cfg` must be NULL or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn mott_config_free(cfg: *mut MottConfig) {
    unsafe { free(cfg) }
}

/// Run the configured experiment. Statistical rejections and invariant
/// violations are reported through [`mott_run_exit_code`], not the status.
///
/// # Safety
/// `cfg` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mott_run_experiment(cfg: *const MottConfig, out: *mut *mut MottRun) -> MottStatus {
    guard(|| {
        let c = unsafe { borrow(cfg, "cfg") }?;
        let inner = experiments::run(&c.inner)?;
        unsafe { put(out, MottRun { inner }) }
    })
}

/// 0 pass, 1 statistical rejection, 2 invariant violation; -1 for NULL.
///
/// # Safety
/// `run` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mott_run_exit_code(run: *const MottRun) -> i32 {
    unsafe { run.as_ref() }.map_or(-1, |r| r.inner.outcome.exit_code())
}

/// Summary document as JSON.
///
/// # Safety
/// `run` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mott_run_summary_json(run: *const MottRun, out: *mut *mut c_char) -> MottStatus {
    guard(|| {
        let r = unsafe { borrow(run, "run") }?;
        let text = serde_json::to_string_pretty(&r.inner.summary)
            .map_err(|e| Failure(MottStatus::Numerical, e.to_string()))?;
        unsafe { put_string(out, &text) }
    })
}

/// Number of CSV tables; 0 for NULL.
///
/// # Safety
/// `run` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mott_run_table_count(run: *const MottRun) -> usize {
    unsafe { run.as_ref() }.map_or(0, |r| r.inner.tables.len())
}

/// File name and CSV text of table `index`.
///
/// # Safety
/// `run` must be a live handle; `name` and `csv` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mott_run_table(
    run: *const MottRun,
    index: usize,
    name: *mut *mut c_char,
    csv: *mut *mut c_char,
) -> MottStatus {
    guard(|| {
        let r = unsafe { borrow(run, "run") }?;
        let (n, text) = r.inner.tables.get(index).ok_or_else(|| {
            Failure(MottStatus::OutOfRange, format!("table {index} of {}", r.inner.tables.len()))
        })?;
        if name.is_null() || csv.is_null() {
            return Err(null("name/csv"));
        }
        unsafe {
            put_string(name, n)?;
            if let Err(e) = put_string(csv, text) {
                mott_string_free(*name);
                *name = ptr::null_mut();
                return Err(e);
            }
        }
        Ok(())
    })
}

/// Write the tables and `summary.json` into `dir`, creating it if needed.
///
/// # Safety
/// `run` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mott_run_write(run: *const MottRun, dir: *const c_char) -> MottStatus {
    guard(|| {
        let r = unsafe { borrow(run, "run") }?;
        let d = unsafe { read_str(dir, "dir") }?;
        r.inner.write(Path::new(d))?;
        Ok(())
    })
}

/// # Safety
/// `run` must be NULL or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn mott_run_free(run: *mut MottRun) {
    unsafe { free(run) }
}

fn cube(d: usize, side: f64, periodic: bool) -> FfiResult<BoxGeometry> {
    let b = if periodic { Boundary::Periodic } else { Boundary::Open };
    Ok(BoxGeometry::cube(d, side, b)?)
}

/// Palm version of the marked Poisson process on the periodic cube of side
/// `side`, marks with density proportional to `|E|^alpha` on `[-1, 1]`.
/// The origin is point 0.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mott_env_palm_poisson(
    rho: f64,
    side: f64,
    d: usize,
    alpha: f64,
    seed: u64,
    out: *mut *mut MottEnv,
) -> MottStatus {
    guard(|| {
        let geom = cube(d, side, true)?;
        let nu = NuLaw::with_alpha(alpha)?;
        let inner = palm_poisson(rho, &geom, &nu, &mut replica_rng(seed, 0))?;
        unsafe { put(out, MottEnv { inner }) }
    })
}

/// Configuration from `n` points (`coords` holds `n * d` values, row-major)
/// and their marks, in a cube of side `side` centered at the origin.
/// `origin` is the index of the distinguished point, or -1 for none.
///
/// # Safety
/// `coords` must hold `n * d` and `energies` `n` readable values; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn mott_env_from_arrays(
    coords: *const f64,
    energies: *const f64,
    n: usize,
    d: usize,
    side: f64,
    periodic: bool,
    origin: i64,
    out: *mut *mut MottEnv,
) -> MottStatus {
    guard(|| {
        if n > 0 && (coords.is_null() || energies.is_null()) {
            return Err(null("coords/energies"));
        }
        let total = n
            .checked_mul(d)
            .ok_or_else(|| Failure(MottStatus::OutOfRange, "n * d overflows".into()))?;
        let (xs, es) = if n == 0 {
            (Vec::new(), Vec::new())
        } else {
            unsafe { (std::slice::from_raw_parts(coords, total).to_vec(), std::slice::from_raw_parts(energies, n).to_vec()) }
        };
        let origin = match origin {
            -1 => None,
            o if o >= 0 && (o as u64) < n as u64 => Some(o as usize),
            o => return Err(Failure(MottStatus::OutOfRange, format!("origin {o} outside 0..{n}"))),
        };
        let geom = cube(d, side, periodic)?;
        let inner = MarkedConfiguration::new(PointSet::from_flat(d, xs)?, es, geom, origin)?;
        unsafe { put(out, MottEnv { inner }) }
    })
}

/// Number of points; 0 for NULL.
///
/// # Safety
/// `env` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mott_env_len(env: *const MottEnv) -> usize {
    unsafe { env.as_ref() }.map_or(0, |e| e.inner.len())
}

/// Dimension; 0 for NULL.
///
/// # Safety
/// `env` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mott_env_dim(env: *const MottEnv) -> usize {
    unsafe { env.as_ref() }.map_or(0, |e| e.inner.dim())
}

/// Coordinates (`dim` values into `coords`) and mark of point `i`.
///
/// # Safety
/// `env` must be a live handle, `coords` must have room for `dim` values
/// and `energy` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mott_env_point(env: *const MottEnv, i: usize, coords: *mut f64, energy: *mut f64) -> MottStatus {
    guard(|| {
        let e = &unsafe { borrow(env, "env") }?.inner;
        if i >= e.len() {
            return Err(Failure(MottStatus::OutOfRange, format!("point {i} of {}", e.len())));
        }
        if coords.is_null() {
            return Err(null("coords"));
        }
        unsafe {
            std::slice::from_raw_parts_mut(coords, e.dim()).copy_from_slice(e.point(i));
            put_value(energy, e.energy(i))
        }
    })
}

/// # Safety
/// `env` must be NULL or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn mott_env_free(env: *mut MottEnv) {
    unsafe { free(env) }
}

/// Mean-field rates `exp(-|x-y| - beta u(E_x, E_y))`, truncated at `r_cut`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mott_rate_model_new(beta: f64, r_cut: f64, out: *mut *mut MottRateModel) -> MottStatus {
    guard(|| {
        let inner = RateModel::mean_field(beta, r_cut)?;
        unsafe { put(out, MottRateModel { inner }) }
    })
}

/// # Safety
/// `model` must be NULL or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn mott_rate_model_free(model: *mut MottRateModel) {
    unsafe { free(model) }
}

fn check_index(env: &MarkedConfiguration, i: usize) -> FfiResult<()> {
    if i < env.len() {
        Ok(())
    } else {
        Err(Failure(MottStatus::OutOfRange, format!("point {i} of {}", env.len())))
    }
}

/// Jump rate from point `x` to point `y` (zero for `x == y`).
///
/// # Safety
/// `model` and `env` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mott_rate(
    model: *const MottRateModel,
    env: *const MottEnv,
    x: usize,
    y: usize,
    out: *mut f64,
) -> MottStatus {
    guard(|| {
        let m = &unsafe { borrow(model, "model") }?.inner;
        let e = &unsafe { borrow(env, "env") }?.inner;
        check_index(e, x)?;
        check_index(e, y)?;
        unsafe { put_value(out, rate(x, y, e, m)) }
    })
}

/// Escape rate of point `x` over neighbours within the cutoff.
///
/// # Safety
/// `model` and `env` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mott_escape_rate(
    model: *const MottRateModel,
    env: *const MottEnv,
    x: usize,
    out: *mut f64,
) -> MottStatus {
    guard(|| {
        let m = &unsafe { borrow(model, "model") }?.inner;
        let e = &unsafe { borrow(env, "env") }?.inner;
        check_index(e, x)?;
        m.check_geometry(e)?;
        let index = NeighborIndex::new(e, m.r_cut());
        unsafe { put_value(out, escape_rate(x, e, m, &index)) }
    })
}

/// `c1 beta^c2 exp(-c beta^((alpha+1)/(alpha+1+d)))`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mott_closed_form_bound(
    beta: f64,
    alpha: f64,
    d: usize,
    c1: f64,
    c2: f64,
    c: f64,
    out: *mut f64,
) -> MottStatus {
    guard(|| {
        let v = closed_form_bound(beta, alpha, d, c1, c2, c)?;
        unsafe { put_value(out, v) }
    })
}
