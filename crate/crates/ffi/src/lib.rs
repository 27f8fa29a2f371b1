//! C ABI over the `comprsma` optimizer.
//!
//! Objects are opaque handles created by `cr_*_new`/`cr_*_sample`/... and
//! released with the matching `cr_*_free`. Every fallible call returns a
//! [`CrStatus`]; on failure [`cr_last_error`] describes the problem. Output
//! arrays are caller-allocated: pass a buffer and its capacity, the required
//! length is always written to `len`.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use comprsma::baselines::{pga_oracle, run_benchmark};
use comprsma::channel::{dump_scenario, load_scenario, sample_scenario, ChannelRealization};
use comprsma::harness::ExperimentSpec;
use comprsma::rate::{RateReport, Scheme, Variables};
use comprsma::CoreError;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Shape = 4,
    NumericFault = 5,
    Parse = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// The four compared schemes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrScheme {
    RsmaMa = 0,
    RsmaFpa = 1,
    SdmaMa = 2,
    SdmaFpa = 3,
}

/// Optimizer, scenario and experiment settings.
pub struct CrConfig {
    spec: ExperimentSpec,
}

/// One channel realization.
pub struct CrScenario {
    real: ChannelRealization,
}

/// Best point found by an optimizer run.
pub struct CrResult {
    vars: Variables,
    report: RateReport,
    feasible: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &CoreError) -> CrStatus {
    match e {
        CoreError::Shape(_) => CrStatus::Shape,
        CoreError::Config { .. } => CrStatus::Config,
        CoreError::NumericFault(_) => CrStatus::NumericFault,
        CoreError::Parse { .. } => CrStatus::Parse,
        CoreError::Io(_) => CrStatus::Io,
    }
}

struct Fail(CrStatus, String);

impl From<CoreError> for Fail {
    fn from(e: CoreError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(CrStatus::NullPointer, format!("`{what}` is null"))
}

/// Runs `f`, catching panics and recording the error message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CrStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CrStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            CrStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(CrStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn copy_out<T: Copy>(src: &[T], buf: *mut T, cap: usize, len: *mut usize) -> Result<(), Fail> {
    if len.is_null() {
        return Err(null("len"));
    }
    *len = src.len();
    if src.is_empty() {
        return Ok(());
    }
    if cap < src.len() {
        return Err(Fail(
            CrStatus::BufferTooSmall,
            format!("buffer holds {cap}, need {}", src.len()),
        ));
    }
    if buf.is_null() {
        return Err(null("buf"));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

fn scheme_of(s: CrScheme) -> Scheme {
    match s {
        CrScheme::RsmaMa => Scheme::RSMA_MA,
        CrScheme::RsmaFpa => Scheme::RSMA_FPA,
        CrScheme::SdmaMa => Scheme::SDMA_MA,
        CrScheme::SdmaFpa => Scheme::SDMA_FPA,
    }
}

fn scheme_arg(s: c_int) -> Result<Scheme, Fail> {
    let k = match s {
        0 => CrScheme::RsmaMa,
        1 => CrScheme::RsmaFpa,
        2 => CrScheme::SdmaMa,
        3 => CrScheme::SdmaFpa,
        _ => return Err(Fail(CrStatus::InvalidArgument, format!("unknown scheme {s}"))),
    };
    Ok(scheme_of(k))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn cr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn cr_status_str(status: CrStatus) -> *const c_char {
    let s: &'static [u8] = match status {
        CrStatus::Ok => b"ok\0",
        CrStatus::NullPointer => b"null pointer\0",
        CrStatus::InvalidArgument => b"invalid argument\0",
        CrStatus::Config => b"config error\0",
        CrStatus::Shape => b"shape error\0",
        CrStatus::NumericFault => b"numeric fault\0",
        CrStatus::Parse => b"parse error\0",
        CrStatus::Io => b"i/o error\0",
        CrStatus::BufferTooSmall => b"buffer too small\0",
        CrStatus::Panic => b"internal panic\0",
    };
    s.as_ptr().cast()
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn cr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// New config holding the defaults.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cr_config_new(out: *mut *mut CrConfig) -> CrStatus {
    guard(|| put(out, CrConfig { spec: ExperimentSpec::default() }))
}

/// Sets one `key = value` setting, using the config-file keys.
///
/// # Safety
/// `cfg` must come from [`cr_config_new`]; `key` and `value` must be
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn cr_config_set(cfg: *mut CrConfig, key: *const c_char, value: *const c_char) -> CrStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("cfg"))?;
        let key = str_arg(key, "key")?;
        let value = str_arg(value, "value")?;
        cfg.spec.set(key, value)?;
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from [`cr_config_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn cr_config_free(cfg: *mut CrConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Samples a realization from the scenario settings of `cfg` (defaults when
/// `cfg` is null).
///
/// # Safety
/// `cfg` must be null or a live config; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cr_scenario_sample(cfg: *const CrConfig, seed: u64, out: *mut *mut CrScenario) -> CrStatus {
    guard(|| {
        let params = cfg.as_ref().map(|c| c.spec.scenario.clone()).unwrap_or_default();
        let real = sample_scenario(&params, seed)?;
        put(out, CrScenario { real })
    })
}

/// Parses a realization from the text format written by [`cr_scenario_dump`].
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cr_scenario_load(text: *const c_char, out: *mut *mut CrScenario) -> CrStatus {
    guard(|| {
        let real = load_scenario(str_arg(text, "text")?)?;
        put(out, CrScenario { real })
    })
}

/// Writes the realization as text, NUL-terminated. `len` receives the
/// required size including the terminator.
///
/// # Safety
/// `s` must be a live scenario; `buf` must hold `cap` bytes; `len` must
/// be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cr_scenario_dump(s: *const CrScenario, buf: *mut c_char, cap: usize, len: *mut usize) -> CrStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("scenario"))?;
        let mut bytes = dump_scenario(&s.real).into_bytes();
        bytes.push(0);
        let bytes: Vec<c_char> = bytes.into_iter().map(|b| b as c_char).collect();
        copy_out(&bytes, buf, cap, len)
    })
}

/// BS count, antennas per BS and user count.
///
/// # Safety
/// `s` must be a live scenario; the outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cr_scenario_dims(
    s: *const CrScenario,
    n_bs: *mut usize,
    n_antennas: *mut usize,
    n_users: *mut usize,
) -> CrStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("scenario"))?;
        if n_bs.is_null() || n_antennas.is_null() || n_users.is_null() {
            return Err(null("dims"));
        }
        *n_bs = s.real.n_bs();
        *n_antennas = s.real.n_antennas();
        *n_users = s.real.n_users();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn cr_scenario_free(s: *mut CrScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Runs the meta-learning optimizer for `scheme` (a [`CrScheme`] value).
///
/// # Safety
/// `s` must be a live scenario, `cfg` null or a live config, `out` valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn cr_optimize(
    s: *const CrScenario,
    cfg: *const CrConfig,
    scheme: c_int,
    out: *mut *mut CrResult,
) -> CrStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("scenario"))?;
        let meta = cfg.as_ref().map(|c| c.spec.meta.clone()).unwrap_or_default();
        let o = run_benchmark(&s.real, scheme_arg(scheme)?, &meta)?;
        put(
            out,
            CrResult {
                vars: o.vars,
                report: o.report,
                feasible: o.feasible,
            },
        )
    })
}

/// Runs the multi-start projected gradient ascent oracle.
///
/// # Safety
/// As [`cr_optimize`].
#[no_mangle]
pub unsafe extern "C" fn cr_oracle(
    s: *const CrScenario,
    cfg: *const CrConfig,
    scheme: c_int,
    starts: usize,
    out: *mut *mut CrResult,
) -> CrStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("scenario"))?;
        let meta = cfg.as_ref().map(|c| c.spec.meta.clone()).unwrap_or_default();
        let (vars, report) = pga_oracle(&s.real, &meta, scheme_arg(scheme)?, starts)?;
        let feasible = report.is_feasible();
        put(out, CrResult { vars, report, feasible })
    })
}

/// # Safety
/// `r` must be a live result; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cr_result_sum_rate(r: *const CrResult, out: *mut f64) -> CrStatus {
    guard(|| {
        let r = r.as_ref().ok_or_else(|| null("result"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = r.report.sum_rate;
        Ok(())
    })
}

/// 1 if the result satisfies every constraint, 0 if not, -1 for null.
///
/// # Safety
/// `r` must be a live result or null.
#[no_mangle]
pub unsafe extern "C" fn cr_result_feasible(r: *const CrResult) -> c_int {
    match r.as_ref() {
        Some(r) => c_int::from(r.feasible),
        None => -1,
    }
}

/// Per-user total rates.
///
/// # Safety
/// `r` must be a live result; `buf` must hold `cap` values.
#[no_mangle]
pub unsafe extern "C" fn cr_result_user_rates(r: *const CrResult, buf: *mut f64, cap: usize, len: *mut usize) -> CrStatus {
    guard(|| {
        let r = r.as_ref().ok_or_else(|| null("result"))?;
        copy_out(&r.report.user_rate, buf, cap, len)
    })
}

/// Common-rate portions.
///
/// # Safety
/// As [`cr_result_user_rates`].
#[no_mangle]
pub unsafe extern "C" fn cr_result_common(r: *const CrResult, buf: *mut f64, cap: usize, len: *mut usize) -> CrStatus {
    guard(|| {
        let r = r.as_ref().ok_or_else(|| null("result"))?;
        copy_out(&r.vars.common, buf, cap, len)
    })
}

/// Antenna positions as `x0, y0, x1, y1, …` (m).
///
/// # Safety
/// As [`cr_result_user_rates`].
#[no_mangle]
pub unsafe extern "C" fn cr_result_positions(r: *const CrResult, buf: *mut f64, cap: usize, len: *mut usize) -> CrStatus {
    guard(|| {
        let r = r.as_ref().ok_or_else(|| null("result"))?;
        let flat: Vec<f64> = r.vars.positions.iter().flatten().copied().collect();
        copy_out(&flat, buf, cap, len)
    })
}

/// Precoders as interleaved `re, im` pairs, BS by BS, each an
/// `I × (K+1)` matrix in row-major order with the common column first.
///
/// # Safety
/// As [`cr_result_user_rates`].
#[no_mangle]
pub unsafe extern "C" fn cr_result_precoders(r: *const CrResult, buf: *mut f64, cap: usize, len: *mut usize) -> CrStatus {
    guard(|| {
        let r = r.as_ref().ok_or_else(|| null("result"))?;
        let mut flat = Vec::new();
        for p in &r.vars.precoders {
            for i in 0..p.rows() {
                for s in 0..p.cols() {
                    let z = p.get(i, s);
                    flat.push(z.re);
                    flat.push(z.im);
                }
            }
        }
        copy_out(&flat, buf, cap, len)
    })
}

/// # Safety
/// `r` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn cr_result_free(r: *mut CrResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}
