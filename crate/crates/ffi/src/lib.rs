//! C interface to the wzgalerkin solvers.
//!
//! Every fallible function returns a [`WzgStatus`]; on failure the message is
//! available from [`wzg_last_error`] on the same thread. Objects are handed
//! out as opaque pointers and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use wzgalerkin::harness::{self, ConvergenceReport, ExperimentConfig, ExperimentKind};
use wzgalerkin::heat::{solve_she_fem_final, solve_she_spectral_final};
use wzgalerkin::noise::{sample_cell_increments, spatial_covariance};
use wzgalerkin::rng::StreamKey;
use wzgalerkin::wave::solve_swe_spectral_final;
use wzgalerkin::wong_zakai::{regularize, RegularizedNoise};
use wzgalerkin::{DriftSpec, Error, Grid};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WzgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotNested = 3,
    HurstOutOfRange = 4,
    NotSymmetric = 5,
    CholeskyBreakdown = 6,
    OutOfDomain = 7,
    NonFinite = 8,
    DegenerateFit = 9,
    Config = 10,
    Io = 11,
    Json = 12,
    Panic = 13,
}

impl From<&Error> for WzgStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidArgument(_) => Self::InvalidArgument,
            Error::NotNested(_) => Self::NotNested,
            Error::HurstOutOfRange(..) => Self::HurstOutOfRange,
            Error::NotSymmetric { .. } => Self::NotSymmetric,
            Error::CholeskyBreakdown { .. } => Self::CholeskyBreakdown,
            Error::OutOfDomain { .. } => Self::OutOfDomain,
            Error::NonFinite(_) => Self::NonFinite,
            Error::DegenerateFit(_) => Self::DegenerateFit,
            Error::Config(_) => Self::Config,
            Error::Io(_) => Self::Io,
            Error::Json(_) => Self::Json,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: WzgStatus, msg: impl Into<String>) -> WzgStatus {
    set_error(msg);
    status
}

/// Runs `f`, translating library errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), WzgStatus>) -> WzgStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => WzgStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(WzgStatus::Panic, msg)
        }
    }
}

fn lib<T>(r: wzgalerkin::Result<T>) -> Result<T, WzgStatus> {
    r.map_err(|e| fail(WzgStatus::from(&e), e.to_string()))
}

fn non_null<'a, T>(p: *const T, what: &str) -> Result<&'a T, WzgStatus> {
    // SAFETY: the caller promises that non-null pointers point at live objects.
    unsafe { p.as_ref() }.ok_or_else(|| fail(WzgStatus::NullPointer, format!("{what} is null")))
}

/// # Safety
/// `p` must be null (only when `len == 0`) or valid for `len` reads.
unsafe fn slice_in<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], WzgStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(WzgStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be valid for `len` writes.
unsafe fn slice_out<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], WzgStatus> {
    if p.is_null() {
        return Err(fail(WzgStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn write_out<T>(out: *mut *mut T, value: T) -> Result<(), WzgStatus> {
    if out.is_null() {
        return Err(fail(WzgStatus::NullPointer, "output handle is null"));
    }
    // SAFETY: checked non-null; the caller provides writable storage for one pointer.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

/// Opaque space-time grid.
pub struct WzgGrid(Grid);

/// Opaque regularized noise field.
pub struct WzgNoise(RegularizedNoise);

/// Opaque experiment report.
pub struct WzgReport {
    report: ConvergenceReport,
    json: CString,
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn wzg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wzg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Uniform grid with `m` time slabs on `[0, t_final]` and `n` space cells on `[0, 1]`.
///
/// # Safety
/// `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn wzg_grid_new(t_final: f64, m: usize, n: usize, out: *mut *mut WzgGrid) -> WzgStatus {
    guard(|| write_out(out, WzgGrid(lib(Grid::new(t_final, m, n))?)))
}

/// # Safety
/// `grid` must be null or a handle from [`wzg_grid_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wzg_grid_free(grid: *mut WzgGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Samples the cell increments of the noise with Hurst index `hurst` on
/// `grid` for stream `(seed, sample)` and regularizes them.
///
/// # Safety
/// `grid` must be a live handle and `out` valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn wzg_noise_sample(grid: *const WzgGrid, hurst: f64, seed: u64, sample: u64, out: *mut *mut WzgNoise) -> WzgStatus {
    guard(|| {
        let g = &non_null(grid, "grid")?.0;
        let cov = lib(spatial_covariance(g, hurst))?;
        let inc = lib(sample_cell_increments(g, &cov, StreamKey::new(seed, sample)))?;
        write_out(out, WzgNoise(regularize(&inc)))
    })
}

/// # Safety
/// `noise` must be null or a handle from [`wzg_noise_sample`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wzg_noise_free(noise: *mut WzgNoise) {
    if !noise.is_null() {
        drop(Box::from_raw(noise));
    }
}

/// Value of the regularized noise at `(t, x)` in the closed domain.
///
/// # Safety
/// `noise` must be a live handle and `value` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn wzg_noise_evaluate(noise: *const WzgNoise, t: f64, x: f64, value: *mut f64) -> WzgStatus {
    guard(|| {
        let v = lib(non_null(noise, "noise")?.0.evaluate(t, x))?;
        slice_out(value, 1, "value")?[0] = v;
        Ok(())
    })
}

/// Spectral solution of the regularized heat equation at the final time,
/// without drift. Writes `n_modes` sine coefficients to `out`.
///
/// # Safety
/// `u0` must hold `u0_len` values (or be null with `u0_len == 0`) and `out` must hold `n_modes`.
#[no_mangle]
pub unsafe extern "C" fn wzg_she_spectral(noise: *const WzgNoise, u0: *const f64, u0_len: usize, n_modes: usize, out: *mut f64) -> WzgStatus {
    guard(|| {
        let xi = &non_null(noise, "noise")?.0;
        let u0 = slice_in(u0, u0_len, "u0")?;
        let out = slice_out(out, n_modes, "out")?;
        let s = lib(solve_she_spectral_final(xi, u0, &DriftSpec::Zero, n_modes, 1))?;
        out.copy_from_slice(&s.coeffs);
        Ok(())
    })
}

/// Spectral solution of the regularized wave equation at the final time,
/// without drift. Writes displacement and velocity coefficients.
///
/// # Safety
/// Input arrays must hold their stated lengths; `out_u` and `out_v` must hold `n_modes` values.
#[no_mangle]
pub unsafe extern "C" fn wzg_swe_spectral(
    noise: *const WzgNoise,
    u0: *const f64,
    u0_len: usize,
    v0: *const f64,
    v0_len: usize,
    n_modes: usize,
    out_u: *mut f64,
    out_v: *mut f64,
) -> WzgStatus {
    guard(|| {
        let xi = &non_null(noise, "noise")?.0;
        let u0 = slice_in(u0, u0_len, "u0")?;
        let v0 = slice_in(v0, v0_len, "v0")?;
        let out_u = slice_out(out_u, n_modes, "out_u")?;
        let out_v = slice_out(out_v, n_modes, "out_v")?;
        let s = lib(solve_swe_spectral_final(xi, u0, v0, &DriftSpec::Zero, n_modes, 1))?;
        out_u.copy_from_slice(&s.u);
        out_v.copy_from_slice(&s.v);
        Ok(())
    })
}

/// Linear finite element solution of the regularized heat equation at the
/// final time on the noise mesh, from and to interior nodal values (`n - 1` each).
///
/// # Safety
/// `u0` and `out` must each hold `n - 1` values for the noise mesh size `n`.
#[no_mangle]
pub unsafe extern "C" fn wzg_she_fem(noise: *const WzgNoise, u0: *const f64, substeps: usize, out: *mut f64) -> WzgStatus {
    guard(|| {
        let xi = &non_null(noise, "noise")?.0;
        let interior = xi.grid().n() - 1;
        let u0 = slice_in(u0, interior, "u0")?;
        let out = slice_out(out, interior, "out")?;
        let s = lib(solve_she_fem_final(xi, u0, &DriftSpec::Zero, substeps))?;
        out.copy_from_slice(&s.nodal);
        Ok(())
    })
}

/// Runs an experiment by name (`she-wz`, `swe-wz`, `she-fem`, `swe-spectral`,
/// `noise-isometry`, `lemma-checks`, `norm-scaling`, `structure`) with an
/// optional JSON configuration layered over its defaults.
///
/// # Safety
/// `kind` must be a NUL-terminated string, `config_json` null or NUL-terminated,
/// and `out` valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn wzg_run_experiment(kind: *const c_char, config_json: *const c_char, out: *mut *mut WzgReport) -> WzgStatus {
    guard(|| {
        let utf8 = |p: *const c_char, what: &str| -> Result<String, WzgStatus> {
            CStr::from_ptr(p).to_str().map(str::to_owned).map_err(|_| fail(WzgStatus::InvalidArgument, format!("{what} is not UTF-8")))
        };
        if kind.is_null() {
            return Err(fail(WzgStatus::NullPointer, "kind is null"));
        }
        let name = utf8(kind, "kind")?;
        let kind: ExperimentKind = serde_json::from_value(serde_json::Value::String(name.clone()))
            .map_err(|_| fail(WzgStatus::InvalidArgument, format!("unknown experiment {name:?}")))?;
        let cfg = if config_json.is_null() {
            ExperimentConfig::default_for(kind)
        } else {
            lib(ExperimentConfig::from_json_str(&utf8(config_json, "config")?, kind))?
        };
        let report = lib(harness::run(kind, &cfg))?;
        let json = CString::new(lib(serde_json::to_string(&report).map_err(Error::from))?).expect("JSON has no NUL");
        write_out(out, WzgReport { report, json })
    })
}

/// 1 when every check of the report passed, 0 otherwise (or for a null report).
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wzg_report_passed(report: *const WzgReport) -> i32 {
    report.as_ref().is_some_and(|r| r.report.passed()) as i32
}

/// The report as JSON, owned by the report.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wzg_report_json(report: *const WzgReport) -> *const c_char {
    report.as_ref().map_or(ptr::null(), |r| r.json.as_ptr())
}

/// # Safety
/// `report` must be null or a handle from [`wzg_run_experiment`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wzg_report_free(report: *mut WzgReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
