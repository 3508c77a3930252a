//! C ABI for the mfh-pon simulator.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free`. Every fallible call returns an [`MfhStatus`]
//! and leaves a message for [`mfh_last_error`] on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use mfh_pon::config::{self, ConfigError, RunConfig};
use mfh_pon::des::SimTime;
use mfh_pon::dwba::Scheme;
use mfh_pon::harness::{self, HarnessError, SummaryRow};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MfhStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    ValidationError = 4,
    /// A model invariant broke during a run.
    InvariantViolation = 5,
    Io = 6,
    OutOfRange = 7,
    Panic = 8,
}

/// Per-row statistic selector for [`mfh_results_stat`]. Delays are in ps.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MfhStat {
    Samples = 0,
    Min = 1,
    P1 = 2,
    P25 = 3,
    P50 = 4,
    P75 = 5,
    P99 = 6,
    P99999 = 7,
    Max = 8,
    Mean = 9,
    OfferedLoadBps = 10,
    GuaranteedBps = 11,
}

/// Opaque run configuration.
pub struct MfhConfig {
    inner: RunConfig,
}

/// Opaque pooled results of one run.
pub struct MfhResults {
    rows: Vec<SummaryRow>,
    classes: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

struct Failure(MfhStatus, String);

fn config_status(e: &ConfigError) -> MfhStatus {
    match e {
        ConfigError::Io { .. } => MfhStatus::Io,
        ConfigError::Parse(_) => MfhStatus::ParseError,
        ConfigError::Validation { .. } => MfhStatus::ValidationError,
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure(config_status(&e), e.to_string())
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let status = match &e {
            HarnessError::Config(c) => config_status(c),
            HarnessError::Sim { .. } if e.exit_code() == 2 => MfhStatus::InvariantViolation,
            HarnessError::Sim { .. } => MfhStatus::ValidationError,
            HarnessError::Io { .. } | HarnessError::Csv(_) => MfhStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MfhStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MfhStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MfhStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(MfhStatus::NullArgument, "null string argument".into()));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(MfhStatus::InvalidUtf8, "argument is not UTF-8".into()))
}

unsafe fn handle<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure(MfhStatus::NullArgument, "null handle".into()))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(MfhStatus::NullArgument, "null output pointer".into()));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Validates `next` and swaps it in only if it is valid.
fn commit(cfg: &mut MfhConfig, next: RunConfig) -> Result<(), Failure> {
    next.validate()?;
    next.derive()?;
    cfg.inner = next;
    Ok(())
}

/// The shipped preset. Never null.
#[no_mangle]
pub extern "C" fn mfh_config_default() -> *mut MfhConfig {
    Box::into_raw(Box::new(MfhConfig {
        inner: RunConfig::default(),
    }))
}

/// Loads an INI file (overlaid on the preset) or a `.json` sidecar.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mfh_config_from_file(path: *const c_char, out: *mut *mut MfhConfig) -> MfhStatus {
    guard(|| {
        let path = text(path)?;
        let inner = config::load_config(Path::new(path))?;
        emit(out, MfhConfig { inner })
    })
}

/// Parses INI text overlaid on the preset.
///
/// # Safety
/// `ini` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mfh_config_from_str(ini: *const c_char, out: *mut *mut MfhConfig) -> MfhStatus {
    guard(|| {
        let inner = RunConfig::from_ini_str(text(ini)?)?;
        emit(out, MfhConfig { inner })
    })
}

/// # Safety
/// `cfg` must come from this library; `name` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mfh_config_set_scheme(cfg: *mut MfhConfig, name: *const c_char) -> MfhStatus {
    guard(|| {
        let cfg = handle(cfg)?;
        let scheme: Scheme = text(name)?
            .parse()
            .map_err(|e: String| Failure(MfhStatus::ParseError, e))?;
        let mut next = cfg.inner.clone();
        next.scheme = scheme;
        commit(cfg, next)
    })
}

/// # Safety
/// `cfg` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn mfh_config_set_b_factor(cfg: *mut MfhConfig, b: f64) -> MfhStatus {
    guard(|| {
        let cfg = handle(cfg)?;
        let mut next = cfg.inner.clone();
        next.b_factor = b;
        commit(cfg, next)
    })
}

/// Simulated seconds per replication.
///
/// # Safety
/// `cfg` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn mfh_config_set_duration(cfg: *mut MfhConfig, seconds: f64) -> MfhStatus {
    guard(|| {
        let cfg = handle(cfg)?;
        if !(seconds.is_finite() && seconds > 0.0) {
            return Err(Failure(MfhStatus::ValidationError, "duration must be positive".into()));
        }
        let mut next = cfg.inner.clone();
        next.sim_duration = SimTime::from_secs_f64(seconds);
        commit(cfg, next)
    })
}

/// # Safety
/// `cfg` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn mfh_config_set_replications(cfg: *mut MfhConfig, replications: u32) -> MfhStatus {
    guard(|| {
        let cfg = handle(cfg)?;
        let mut next = cfg.inner.clone();
        next.replications = replications;
        commit(cfg, next)
    })
}

/// # Safety
/// `cfg` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn mfh_config_set_seed(cfg: *mut MfhConfig, seed: u64) -> MfhStatus {
    guard(|| {
        let cfg = handle(cfg)?;
        cfg.inner.base_seed = seed;
        Ok(())
    })
}

/// Resolved configuration as JSON; free with [`mfh_string_free`]. Null on error.
///
/// # Safety
/// `cfg` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn mfh_config_json(cfg: *const MfhConfig) -> *mut c_char {
    let mut json = ptr::null_mut();
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| Failure(MfhStatus::NullArgument, "null handle".into()))?;
        json = CString::new(cfg.inner.to_json()?).unwrap_or_default().into_raw();
        Ok(())
    });
    json
}

/// # Safety
/// `cfg` must come from this library and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn mfh_config_free(cfg: *mut MfhConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs every replication and pools the results.
///
/// # Safety
/// `cfg` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mfh_run(cfg: *const MfhConfig, out: *mut *mut MfhResults) -> MfhStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| Failure(MfhStatus::NullArgument, "null handle".into()))?;
        let result = harness::run_scenario(&cfg.inner)?;
        let classes = result
            .rows
            .iter()
            .map(|r| CString::new(r.class.clone()).unwrap_or_default())
            .collect();
        emit(
            out,
            MfhResults {
                rows: result.rows,
                classes,
            },
        )
    })
}

/// Number of rows (one per MFH ONU plus the conventional class). 0 for null.
///
/// # Safety
/// `res` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn mfh_results_row_count(res: *const MfhResults) -> usize {
    res.as_ref().map_or(0, |r| r.rows.len())
}

/// Class label of row `row`, e.g. `mfh-onu0` or `conventional`. Owned by `res`.
///
/// # Safety
/// `res` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn mfh_results_row_class(res: *const MfhResults, row: usize) -> *const c_char {
    match res.as_ref().and_then(|r| r.classes.get(row)) {
        Some(c) => c.as_ptr(),
        None => ptr::null(),
    }
}

/// Reads one statistic. A row with no samples reports `Samples` as 0 and
/// `OutOfRange` for the delay statistics.
///
/// # Safety
/// `res` must come from this library; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mfh_results_stat(res: *const MfhResults, row: usize, stat: MfhStat, value: *mut f64) -> MfhStatus {
    guard(|| {
        let res = res.as_ref().ok_or_else(|| Failure(MfhStatus::NullArgument, "null handle".into()))?;
        if value.is_null() {
            return Err(Failure(MfhStatus::NullArgument, "null output pointer".into()));
        }
        let r = res
            .rows
            .get(row)
            .ok_or_else(|| Failure(MfhStatus::OutOfRange, format!("row {row} of {}", res.rows.len())))?;
        let ps = |t: SimTime| t.as_ps() as f64;
        let v = match (stat, r.summary.as_ref()) {
            (MfhStat::OfferedLoadBps, _) => r.offered_load_bps as f64,
            (MfhStat::GuaranteedBps, _) => r.guaranteed_bps as f64,
            (MfhStat::Samples, s) => s.map_or(0.0, |s| s.count as f64),
            (_, None) => return Err(Failure(MfhStatus::OutOfRange, format!("{} has no samples", r.class))),
            (MfhStat::Min, Some(s)) => ps(s.min),
            (MfhStat::P1, Some(s)) => ps(s.p1),
            (MfhStat::P25, Some(s)) => ps(s.p25),
            (MfhStat::P50, Some(s)) => ps(s.p50),
            (MfhStat::P75, Some(s)) => ps(s.p75),
            (MfhStat::P99, Some(s)) => ps(s.p99),
            (MfhStat::P99999, Some(s)) => ps(s.p99_999),
            (MfhStat::Max, Some(s)) => ps(s.max),
            (MfhStat::Mean, Some(s)) => s.mean_ps,
        };
        *value = v;
        Ok(())
    })
}

/// Results in the CLI's CSV format; free with [`mfh_string_free`]. Null on error.
///
/// # Safety
/// `res` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn mfh_results_csv(res: *const MfhResults) -> *mut c_char {
    let mut csv = ptr::null_mut();
    guard(|| {
        let res = res.as_ref().ok_or_else(|| Failure(MfhStatus::NullArgument, "null handle".into()))?;
        csv = CString::new(harness::csv_string(&res.rows)?).unwrap_or_default().into_raw();
        Ok(())
    });
    csv
}

/// # Safety
/// `res` must come from this library and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn mfh_results_free(res: *mut MfhResults) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// # Safety
/// `s` must come from a string-returning call of this library. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn mfh_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message for the last failed call on this thread, empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn mfh_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn mfh_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
