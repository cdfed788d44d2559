//! C interface to the detector simulator.
//!
//! Objects live behind opaque handles that the caller frees with the matching
//! `*_free` function. Every fallible call returns a [`JtwpdStatus`]; the
//! message of the most recent failure on the calling thread is available from
//! [`jtwpd_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use jtwpd::conveyor::{run_trajectory_with, BackendKind, RunOptions, TrajectoryRecord};
use jtwpd::detection::optimize_threshold;
use jtwpd::keldysh::{run_keldysh, MomentSeries};
use jtwpd::model::{DetectorConfig, PhotonInput};
use jtwpd::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JtwpdStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad argument, configuration or parse failure.
    InvalidArgument = 2,
    Numerical = 3,
    Truncation = 4,
    Dimension = 5,
    Io = 6,
    /// A Rust panic was caught at the boundary.
    Internal = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JtwpdBackend {
    Mps = 0,
    Sector = 1,
}

/// Columns available from a series or a trajectory.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JtwpdQuantity {
    Time = 0,
    YMean = 1,
    YVar = 2,
    XMean = 3,
    /// Homodyne current; trajectories with a monitored probe only.
    Current = 4,
}

/// Detector configuration.
pub struct JtwpdConfig {
    inner: DetectorConfig,
}

/// Master-equation moment series.
pub struct JtwpdSeries {
    inner: MomentSeries,
}

/// One simulated trajectory.
pub struct JtwpdTrajectory {
    inner: TrajectoryRecord,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn remember(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> JtwpdStatus {
    match err {
        Error::Domain(_) | Error::Config(_) | Error::Parse(_) => JtwpdStatus::InvalidArgument,
        Error::Numerical { .. } => JtwpdStatus::Numerical,
        Error::Truncation { .. } => JtwpdStatus::Truncation,
        Error::Dimension(_) => JtwpdStatus::Dimension,
        Error::Io { .. } => JtwpdStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), JtwpdStatus>) -> JtwpdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => JtwpdStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            remember("internal panic".into());
            JtwpdStatus::Internal
        }
    }
}

fn fail(err: Error) -> JtwpdStatus {
    let s = status_of(&err);
    remember(err.to_string());
    s
}

fn null(what: &str) -> JtwpdStatus {
    remember(format!("{what} is null"));
    JtwpdStatus::NullPointer
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, JtwpdStatus> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, JtwpdStatus> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), JtwpdStatus> {
    let slot = deref_mut(out, "output pointer")?;
    *slot = Box::into_raw(Box::new(value));
    Ok(())
}

/// Copies the message of the last failure on this thread into `buf` as a
/// NUL-terminated string, truncating if needed. Returns the full message
/// length excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn jtwpd_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Creates a configuration with uniform coupling, no Kerr terms and a step
/// count covering the photon transit.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jtwpd_config_new(
    g_tau: f64,
    gamma_tau: f64,
    kappa_a_tau: f64,
    n_sites: usize,
    out: *mut *mut JtwpdConfig,
) -> JtwpdStatus {
    guard(|| {
        if n_sites == 0 || !(gamma_tau > 0.0) {
            return Err(fail(Error::Config(format!("need n_sites > 0 and gamma_tau > 0, got {n_sites} and {gamma_tau}"))));
        }
        let cfg = DetectorConfig::new(g_tau, gamma_tau, kappa_a_tau, n_sites);
        cfg.validate().map_err(fail)?;
        put(out, JtwpdConfig { inner: cfg })
    })
}

/// Parses a TOML configuration.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jtwpd_config_from_toml(text: *const c_char, out: *mut *mut JtwpdConfig) -> JtwpdStatus {
    guard(|| {
        if text.is_null() {
            return Err(null("text"));
        }
        let s = CStr::from_ptr(text).to_str().map_err(|e| fail(Error::Parse(e.to_string())))?;
        let cfg = DetectorConfig::from_toml(s).map_err(fail)?;
        cfg.validate().map_err(fail)?;
        put(out, JtwpdConfig { inner: cfg })
    })
}

/// Sets `g/χ` (infinity disables the cross-Kerr term), `|K|/κ_a` and the
/// sign of `K`.
///
/// # Safety
/// `cfg` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn jtwpd_config_set_nonlinearity(
    cfg: *mut JtwpdConfig,
    chi_ratio: f64,
    kerr_ratio: f64,
    kerr_sign: f64,
) -> JtwpdStatus {
    guard(|| {
        let c = deref_mut(cfg, "cfg")?;
        let next = c.inner.clone().with_nonlinearity(chi_ratio, kerr_ratio, kerr_sign);
        next.validate().map_err(fail)?;
        c.inner = next;
        Ok(())
    })
}

/// Sets the probe Fock dimension, the extra simulated time after transit and
/// whether the input is vacuum.
///
/// # Safety
/// `cfg` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn jtwpd_config_set_run(cfg: *mut JtwpdConfig, probe_dim: usize, tail: f64, vacuum: bool) -> JtwpdStatus {
    guard(|| {
        let c = deref_mut(cfg, "cfg")?;
        if !(tail >= 0.0) {
            return Err(fail(Error::Config(format!("tail must be nonnegative, got {tail}"))));
        }
        let mut next = c.inner.clone().with_probe_dim(probe_dim).with_tail(tail);
        next.input = if vacuum { PhotonInput::Vacuum } else { PhotonInput::SinglePhoton };
        next.validate().map_err(fail)?;
        c.inner = next;
        Ok(())
    })
}

/// Writes the hex config hash (64 characters plus NUL) into `buf`.
///
/// # Safety
/// `cfg` must come from this library and `buf` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn jtwpd_config_hash(cfg: *const JtwpdConfig, buf: *mut c_char, len: usize) -> JtwpdStatus {
    guard(|| {
        let c = deref(cfg, "cfg")?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let h = c.inner.config_hash();
        if len <= h.len() {
            return Err(fail(Error::Dimension(format!("buffer of {len} bytes cannot hold {} characters", h.len() + 1))));
        }
        std::ptr::copy_nonoverlapping(h.as_ptr().cast::<c_char>(), buf, h.len());
        *buf.add(h.len()) = 0;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn jtwpd_config_free(cfg: *mut JtwpdConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Integrates the master equation over the configuration's sample grid.
///
/// # Safety
/// `cfg` must come from this library and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn jtwpd_keldysh_run(cfg: *const JtwpdConfig, out: *mut *mut JtwpdSeries) -> JtwpdStatus {
    guard(|| {
        let c = deref(cfg, "cfg")?;
        let s = run_keldysh(&c.inner, c.inner.fock_dims.probe).map_err(fail)?;
        put(out, JtwpdSeries { inner: s })
    })
}

/// # Safety
/// `series` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn jtwpd_series_len(series: *const JtwpdSeries) -> usize {
    series.as_ref().map_or(0, |s| s.inner.len())
}

fn copy_column(col: Option<&[f64]>, buf: *mut f64, len: usize) -> Result<(), JtwpdStatus> {
    let col = col.ok_or_else(|| fail(Error::Domain("quantity not available for this object".into())))?;
    if buf.is_null() {
        return Err(null("buf"));
    }
    if len < col.len() {
        return Err(fail(Error::Dimension(format!("buffer holds {len} values, need {}", col.len()))));
    }
    unsafe { std::ptr::copy_nonoverlapping(col.as_ptr(), buf, col.len()) };
    Ok(())
}

/// Copies one column into `buf`, which must hold at least
/// `jtwpd_series_len` values.
///
/// # Safety
/// `series` must come from this library and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn jtwpd_series_copy(
    series: *const JtwpdSeries,
    quantity: JtwpdQuantity,
    buf: *mut f64,
    len: usize,
) -> JtwpdStatus {
    guard(|| {
        let s = &deref(series, "series")?.inner;
        let col = match quantity {
            JtwpdQuantity::Time => Some(&s.t[..]),
            JtwpdQuantity::YMean => Some(&s.y_mean[..]),
            JtwpdQuantity::YVar => Some(&s.y_var[..]),
            JtwpdQuantity::XMean => Some(&s.x_mean[..]),
            JtwpdQuantity::Current => None,
        };
        copy_column(col, buf, len)
    })
}

/// # Safety
/// `series` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn jtwpd_series_free(series: *mut JtwpdSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

/// Simulates one trajectory with the given seed.
///
/// # Safety
/// `cfg` must come from this library and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn jtwpd_trajectory_run(
    cfg: *const JtwpdConfig,
    seed: u64,
    backend: JtwpdBackend,
    out: *mut *mut JtwpdTrajectory,
) -> JtwpdStatus {
    guard(|| {
        let c = deref(cfg, "cfg")?;
        let backend = match backend {
            JtwpdBackend::Mps => BackendKind::Mps,
            JtwpdBackend::Sector => BackendKind::Sector,
        };
        let opts = RunOptions::default().with_backend(backend);
        let rec = run_trajectory_with(&c.inner, &c.inner.wavepacket(), seed, &opts).map_err(fail)?;
        put(out, JtwpdTrajectory { inner: rec })
    })
}

/// # Safety
/// `traj` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn jtwpd_trajectory_len(traj: *const JtwpdTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.inner.len())
}

/// # Safety
/// `traj` must come from this library and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn jtwpd_trajectory_copy(
    traj: *const JtwpdTrajectory,
    quantity: JtwpdQuantity,
    buf: *mut f64,
    len: usize,
) -> JtwpdStatus {
    guard(|| {
        let r = &deref(traj, "traj")?.inner;
        let col = match quantity {
            JtwpdQuantity::Time => Some(&r.t[..]),
            JtwpdQuantity::YMean => Some(&r.y_mean[..]),
            JtwpdQuantity::YVar => Some(&r.y_var[..]),
            JtwpdQuantity::XMean => Some(&r.x_mean[..]),
            JtwpdQuantity::Current => r.j_hom.as_deref(),
        };
        copy_column(col, buf, len)
    })
}

/// # Safety
/// `traj` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn jtwpd_trajectory_free(traj: *mut JtwpdTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Picks the threshold maximizing the assignment fidelity of two score sets.
///
/// # Safety
/// The score arrays must hold `n_photon` and `n_vacuum` doubles; the outputs
/// must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn jtwpd_optimize_threshold(
    photon: *const f64,
    n_photon: usize,
    vacuum: *const f64,
    n_vacuum: usize,
    threshold: *mut f64,
    fidelity: *mut f64,
) -> JtwpdStatus {
    guard(|| {
        if photon.is_null() || vacuum.is_null() {
            return Err(null("scores"));
        }
        let (p, v) = (std::slice::from_raw_parts(photon, n_photon), std::slice::from_raw_parts(vacuum, n_vacuum));
        let choice = optimize_threshold(p, v).map_err(fail)?;
        *deref_mut(threshold, "threshold")? = choice.threshold;
        *deref_mut(fidelity, "fidelity")? = choice.fidelity;
        Ok(())
    })
}
