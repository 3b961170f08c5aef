//! C ABI over the simulation core.
//!
//! A [`CfScenario`] bundles one network realization: large-scale fading,
//! pilot book, estimator bank and the normalized powers. It is created by
//! [`cf_scenario_generate`] or [`cf_scenario_from_beta`], released by
//! [`cf_scenario_free`], and passed by pointer to every other call.
//!
//! Every fallible function returns a [`CfStatus`]. On failure a description
//! is kept per thread and can be read with [`cf_last_error`]. Matrices cross
//! the boundary column-major, `M x K`, index `k * M + m`. Panics never unwind
//! into C; they are reported as `CF_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cellfree::chest::{build_bank, Estimator, LmmseBank};
use cellfree::netgen::{build_large_scale, noise_power_w, place_network, LargeScale, PowerBudget, PropagationParams, ShadowingMode};
use cellfree::perf::{downlink_sinr_all, uplink_model, uplink_sinr_all, DownlinkPower, UplinkPower};
use cellfree::pilots::{random_pilot_book, PilotBook};
use cellfree::power::{build_cone_problem, downlink_maxmin, target_sinr_iterate, uplink_maxmin, BisectionSpec, TargetSpec};
use cellfree::Error;
use nalgebra::DMatrix;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    DimensionMismatch = 3,
    NotPositiveSemidefinite = 4,
    NonFinite = 5,
    IterationCap = 6,
    NumericalFailure = 7,
    BracketFailure = 8,
    Config = 9,
    Io = 10,
    Panic = 11,
}

/// Channel estimator codes accepted by the scenario constructors.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CfEstimator {
    Lmmse = 0,
    Suboptimal = 1,
}

/// Opaque network realization.
pub struct CfScenario {
    ls: LargeScale,
    pilots: PilotBook,
    bank: LmmseBank,
    rho_u: f64,
    rho_d: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CfStatus {
    match e {
        Error::InvalidInput(_) => CfStatus::InvalidInput,
        Error::DimensionMismatch(_) => CfStatus::DimensionMismatch,
        Error::NotPositiveSemidefinite { .. } => CfStatus::NotPositiveSemidefinite,
        Error::NonFinite(_) => CfStatus::NonFinite,
        Error::IterationCap { .. } => CfStatus::IterationCap,
        Error::NumericalFailure { .. } => CfStatus::NumericalFailure,
        Error::BracketFailure(_) => CfStatus::BracketFailure,
        Error::Config(_) => CfStatus::Config,
        Error::Io { .. } | Error::Csv { .. } => CfStatus::Io,
    }
}

struct Fail(CfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(CfStatus::NullPointer, format!("{what} is null"))
}

fn bad_len(what: &str, got: usize, want: usize) -> Fail {
    Fail(CfStatus::DimensionMismatch, format!("{what} has length {got}, expected {want}"))
}

/// Runs `body`, converting errors and panics into a status and a message.
fn guard(body: impl FnOnce() -> Result<(), Fail>) -> CfStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => CfStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            CfStatus::Panic
        }
    }
}

unsafe fn scenario<'a>(s: *const CfScenario) -> Result<&'a CfScenario, Fail> {
    s.as_ref().ok_or_else(|| null("scenario"))
}

unsafe fn input<'a>(p: *const f64, len: usize, want: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    if len != want {
        return Err(bad_len(what, len, want));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn output<'a>(p: *mut f64, len: usize, want: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    if len != want {
        return Err(bad_len(what, len, want));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn estimator(code: u32) -> Result<Estimator, Fail> {
    match code {
        c if c == CfEstimator::Lmmse as u32 => Ok(Estimator::Lmmse),
        c if c == CfEstimator::Suboptimal as u32 => Ok(Estimator::Suboptimal),
        c => Err(Fail(CfStatus::InvalidInput, format!("unknown estimator code {c}"))),
    }
}

fn rel_tol_spec(rel_tol: f64) -> Result<BisectionSpec, Fail> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Fail(CfStatus::InvalidInput, format!("rel_tol must lie in (0, 1), got {rel_tol}")));
    }
    Ok(BisectionSpec { rel_tol, ..BisectionSpec::default() })
}

/// Message describing the last failure on the calling thread, or null if
/// none. Valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Draws a network on a `area_side_m` square with the default propagation
/// model and random pilots. Powers are in watts; `correlated` selects
/// correlated shadowing. Deterministic in `seed`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn cf_scenario_generate(
    num_aps: usize,
    num_users: usize,
    tau: usize,
    area_side_m: f64,
    correlated: bool,
    pilot_w: f64,
    uplink_w: f64,
    downlink_w: f64,
    estimator_kind: u32,
    seed: u64,
    out: *mut *mut CfScenario,
) -> CfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let params = PropagationParams::default();
        let geom = place_network(num_aps, num_users, area_side_m, seed)?;
        let mode = if correlated { ShadowingMode::Correlated } else { ShadowingMode::Uncorrelated };
        let ls = build_large_scale(&geom, &params, mode, seed)?;
        let pilots = random_pilot_book(tau, num_users, seed)?;
        let budget = PowerBudget::from_watts(pilot_w, uplink_w, downlink_w, noise_power_w(&params))?;
        let bank = build_bank(estimator(estimator_kind)?, &ls, &pilots, budget.rho_p)?;
        *out = Box::into_raw(Box::new(CfScenario { ls, pilots, bank, rho_u: budget.rho_u, rho_d: budget.rho_d }));
        Ok(())
    })
}

/// Builds a scenario from a caller-supplied `M x K` large-scale matrix
/// (column-major) and noise-normalized powers. Pilots are random, drawn from
/// `seed`.
///
/// # Safety
/// `beta` must point to `beta_len` readable doubles and `out` to writable
/// storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn cf_scenario_from_beta(
    beta: *const f64,
    beta_len: usize,
    num_aps: usize,
    num_users: usize,
    tau: usize,
    rho_p: f64,
    rho_u: f64,
    rho_d: f64,
    estimator_kind: u32,
    seed: u64,
    out: *mut *mut CfScenario,
) -> CfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let b = input(beta, beta_len, num_aps * num_users, "beta")?;
        for (name, v) in [("rho_p", rho_p), ("rho_u", rho_u), ("rho_d", rho_d)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Fail(CfStatus::InvalidInput, format!("{name} must be positive, got {v}")));
            }
        }
        let ls = LargeScale::from_beta(DMatrix::from_column_slice(num_aps, num_users, b))?;
        let pilots = random_pilot_book(tau, num_users, seed)?;
        let bank = build_bank(estimator(estimator_kind)?, &ls, &pilots, rho_p)?;
        *out = Box::into_raw(Box::new(CfScenario { ls, pilots, bank, rho_u, rho_d }));
        Ok(())
    })
}

/// Releases a scenario. Null is ignored.
///
/// # Safety
/// `s` must be null or a pointer returned by a scenario constructor that has
/// not been freed.
#[no_mangle]
pub unsafe extern "C" fn cf_scenario_free(s: *mut CfScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Number of APs, or 0 for a null scenario.
///
/// # Safety
/// `s` must be null or a live scenario.
#[no_mangle]
pub unsafe extern "C" fn cf_scenario_num_aps(s: *const CfScenario) -> usize {
    s.as_ref().map_or(0, |s| s.ls.num_aps())
}

/// Number of users, or 0 for a null scenario.
///
/// # Safety
/// `s` must be null or a live scenario.
#[no_mangle]
pub unsafe extern "C" fn cf_scenario_num_users(s: *const CfScenario) -> usize {
    s.as_ref().map_or(0, |s| s.ls.num_users())
}

/// Copies the large-scale fading matrix into `out` (`M * K` doubles).
///
/// # Safety
/// `s` must be a live scenario and `out` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cf_scenario_beta(s: *const CfScenario, out: *mut f64, len: usize) -> CfStatus {
    guard(|| {
        let s = scenario(s)?;
        output(out, len, s.ls.beta().len(), "out")?.copy_from_slice(s.ls.beta().as_slice());
        Ok(())
    })
}

/// Copies the estimate variances `gamma_mk` into `out` (`M * K` doubles).
///
/// # Safety
/// `s` must be a live scenario and `out` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cf_scenario_gamma(s: *const CfScenario, out: *mut f64, len: usize) -> CfStatus {
    guard(|| {
        let s = scenario(s)?;
        output(out, len, s.bank.gamma().len(), "out")?.copy_from_slice(s.bank.gamma().as_slice());
        Ok(())
    })
}

/// Uplink SINR of every user under power coefficients `eta` (length K).
///
/// # Safety
/// `s` must be a live scenario; `eta` and `out_sinr` must point to
/// `num_users` doubles.
#[no_mangle]
pub unsafe extern "C" fn cf_uplink_sinr(
    s: *const CfScenario,
    eta: *const f64,
    out_sinr: *mut f64,
    num_users: usize,
) -> CfStatus {
    guard(|| {
        let s = scenario(s)?;
        let k = s.ls.num_users();
        let eta = UplinkPower::new(input(eta, num_users, k, "eta")?.to_vec())?;
        let out = output(out_sinr, num_users, k, "out_sinr")?;
        out.copy_from_slice(&uplink_sinr_all(&s.ls, &s.pilots, &s.bank, s.rho_u, &eta)?);
        Ok(())
    })
}

/// Downlink SINR of every user under the `M x K` coefficient matrix `eta`.
///
/// # Safety
/// `s` must be a live scenario; `eta` must point to `eta_len` doubles and
/// `out_sinr` to `num_users` doubles.
#[no_mangle]
pub unsafe extern "C" fn cf_downlink_sinr(
    s: *const CfScenario,
    eta: *const f64,
    eta_len: usize,
    out_sinr: *mut f64,
    num_users: usize,
) -> CfStatus {
    guard(|| {
        let s = scenario(s)?;
        let (m, k) = (s.ls.num_aps(), s.ls.num_users());
        let eta = input(eta, eta_len, m * k, "eta")?;
        let eta = DownlinkPower::new(DMatrix::from_column_slice(m, k, eta), &s.bank)?;
        let out = output(out_sinr, num_users, k, "out_sinr")?;
        out.copy_from_slice(&downlink_sinr_all(&s.ls, &s.pilots, &s.bank, s.rho_d, &eta)?);
        Ok(())
    })
}

/// Uplink max-min power control. Writes the optimal coefficients and the
/// max-min SINR.
///
/// # Safety
/// `s` must be a live scenario, `out_eta` must point to `num_users` doubles
/// and `out_t` to one double.
#[no_mangle]
pub unsafe extern "C" fn cf_uplink_maxmin(
    s: *const CfScenario,
    rel_tol: f64,
    out_eta: *mut f64,
    num_users: usize,
    out_t: *mut f64,
) -> CfStatus {
    guard(|| {
        let s = scenario(s)?;
        let out = output(out_eta, num_users, s.ls.num_users(), "out_eta")?;
        let t = out_t.as_mut().ok_or_else(|| null("out_t"))?;
        let res = uplink_maxmin(&s.ls, &s.pilots, &s.bank, s.rho_u, &rel_tol_spec(rel_tol)?)?;
        out.copy_from_slice(res.power.as_slice());
        *t = res.t_star;
        Ok(())
    })
}

/// Downlink max-min power control through the cone program. Writes the
/// `M x K` coefficients and the max-min SINR.
///
/// # Safety
/// `s` must be a live scenario, `out_eta` must point to `eta_len` doubles and
/// `out_t` to one double.
#[no_mangle]
pub unsafe extern "C" fn cf_downlink_maxmin(
    s: *const CfScenario,
    rel_tol: f64,
    out_eta: *mut f64,
    eta_len: usize,
    out_t: *mut f64,
) -> CfStatus {
    guard(|| {
        let s = scenario(s)?;
        let out = output(out_eta, eta_len, s.ls.num_aps() * s.ls.num_users(), "out_eta")?;
        let t = out_t.as_mut().ok_or_else(|| null("out_t"))?;
        let cone = build_cone_problem(&s.ls, &s.pilots, &s.bank, s.rho_d)?;
        let res = downlink_maxmin(&cone, &rel_tol_spec(rel_tol)?)?;
        out.copy_from_slice(res.power.matrix().as_slice());
        *t = res.t_star;
        Ok(())
    })
}

/// Distributed target-SINR power control. `delta` holds one linear target
/// per user. `out_converged` reports whether every target was met within
/// `epsilon`; unreachable targets are not an error.
///
/// # Safety
/// `s` must be a live scenario; `delta`, `out_eta` and `out_sinr` must point
/// to `num_users` doubles and `out_converged` to one bool.
#[no_mangle]
pub unsafe extern "C" fn cf_target_sinr(
    s: *const CfScenario,
    delta: *const f64,
    num_users: usize,
    epsilon: f64,
    max_iters: usize,
    out_eta: *mut f64,
    out_sinr: *mut f64,
    out_converged: *mut bool,
) -> CfStatus {
    guard(|| {
        let s = scenario(s)?;
        let k = s.ls.num_users();
        let delta = input(delta, num_users, k, "delta")?.to_vec();
        let eta = output(out_eta, num_users, k, "out_eta")?;
        let sinr = output(out_sinr, num_users, k, "out_sinr")?;
        let conv = out_converged.as_mut().ok_or_else(|| null("out_converged"))?;
        let model = uplink_model(&s.ls, &s.pilots, &s.bank, s.rho_u)?;
        let spec = TargetSpec { delta, epsilon, max_iters, drop_fraction: 0.0 };
        let res = target_sinr_iterate(&model, s.rho_u, &spec)?;
        eta.copy_from_slice(&res.eta);
        sinr.copy_from_slice(&res.sinr);
        *conv = res.converged;
        Ok(())
    })
}
