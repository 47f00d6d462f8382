//! C interface to `qfe`.
//!
//! Every function returns a [`QfeStatus`]; results go through out-pointers.
//! On failure the message is kept per thread and read with
//! [`qfe_last_error_message`]. Objects are opaque handles released with the
//! matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use qfe::bayes::{estimate_point, EstimatorConfig, PriorSupport};
use qfe::campaign::{run_campaign, CampaignResult};
use qfe::config::parse_config;
use qfe::interp::{delta_squared, interpolate, select_subset, InterpolationMethod, SampledFunction};
use qfe::measurement::{
    crb_variance_for_resources, effective_phase_fisher, fisher_matrix, probability_vector, PhasePoint, ProbeKind,
    ProbeModel, ResourceConvention,
};
use qfe::sim::CountRecord;
use qfe::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QfeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Range = 4,
    /// Unidentifiable phase, normalization or quadrature failure.
    Numerical = 5,
    Io = 6,
    Config = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QfeProbe {
    Single = 0,
    Noon2 = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QfeMethod {
    NearestNeighbour = 0,
    Linear = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QfeConvention {
    PerShot = 0,
    PerResource = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QfeFisherMatrix {
    pub f_pp: f64,
    pub f_pv: f64,
    pub f_vv: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QfePointEstimate {
    pub phi_b: f64,
    pub var_phi: f64,
    pub vis_b: f64,
    pub var_vis: f64,
    pub boundary_mass: f64,
    pub n_shots: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QfeCampaignRow {
    pub probe: QfeProbe,
    pub n_resources: u64,
    pub method: QfeMethod,
    pub n_s: usize,
    pub delta2_mean: f64,
    pub delta2_std: f64,
    /// Set when the row failed; the numbers are then NaN.
    pub failed: bool,
}

/// Opaque sampled function `x -> phi` with optional variances.
pub struct QfeFunction(SampledFunction);

/// Opaque Bayesian estimator configuration for one probe.
pub struct QfeEstimator {
    probe: ProbeModel,
    config: EstimatorConfig,
}

/// Opaque campaign result.
pub struct QfeCampaign(CampaignResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> QfeStatus {
    match e {
        Error::Domain(_) => QfeStatus::Domain,
        Error::Range(_) => QfeStatus::Range,
        Error::Unidentifiable | Error::Normalization { .. } | Error::Quadrature { .. } => QfeStatus::Numerical,
        Error::Io(_) | Error::Csv(_) => QfeStatus::Io,
        Error::Config { .. } => QfeStatus::Config,
        _ => QfeStatus::InvalidArgument,
    }
}

struct Fail(QfeStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(name: &str) -> Fail {
    Fail(QfeStatus::NullPointer, format!("`{name}` is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> QfeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QfeStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            QfeStatus::Panic
        }
    }
}

fn probe_kind(p: QfeProbe) -> ProbeKind {
    match p {
        QfeProbe::Single => ProbeKind::SinglePhoton,
        QfeProbe::Noon2 => ProbeKind::Noon2,
    }
}

fn probe_code(p: ProbeKind) -> QfeProbe {
    match p {
        ProbeKind::SinglePhoton => QfeProbe::Single,
        ProbeKind::Noon2 => QfeProbe::Noon2,
    }
}

fn method(m: QfeMethod) -> InterpolationMethod {
    match m {
        QfeMethod::NearestNeighbour => InterpolationMethod::NearestNeighbour,
        QfeMethod::Linear => InterpolationMethod::Linear,
    }
}

fn out_ref<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Fail> {
    // SAFETY: caller promises `p` is null or valid for writes.
    unsafe { p.as_mut() }.ok_or_else(|| null(name))
}

fn in_slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    // SAFETY: caller promises `len` readable elements at `p`.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

fn out_slice<'a, T>(p: *mut T, len: usize, name: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(name));
    }
    // SAFETY: caller promises `len` writable elements at `p`.
    Ok(unsafe { std::slice::from_raw_parts_mut(p, len) })
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn qfe_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qfe_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Number of projection settings of a probe.
#[no_mangle]
pub extern "C" fn qfe_probe_settings(probe: QfeProbe) -> usize {
    ProbeModel::new(probe_kind(probe)).settings().len()
}

/// Writes the outcome probabilities into `out[0..len]`; `len` must be at
/// least [`qfe_probe_settings`].
///
/// # Safety
/// `out` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn qfe_outcome_probabilities(
    probe: QfeProbe,
    phi: f64,
    vis: f64,
    out: *mut f64,
    len: usize,
) -> QfeStatus {
    guard(|| {
        let p = probability_vector(&ProbeModel::new(probe_kind(probe)), PhasePoint::new(phi, vis)?)?;
        if len < p.len() {
            return Err(Fail(
                QfeStatus::BufferTooSmall,
                format!("need {} entries, got {len}", p.len()),
            ));
        }
        out_slice(out, len, "out")?[..p.len()].copy_from_slice(&p);
        Ok(())
    })
}

/// Per-shot Fisher matrix in (phase, visibility).
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qfe_fisher_matrix(
    probe: QfeProbe,
    phi: f64,
    vis: f64,
    out: *mut QfeFisherMatrix,
) -> QfeStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let m = fisher_matrix(&ProbeModel::new(probe_kind(probe)), PhasePoint::new(phi, vis)?)?;
        *out = QfeFisherMatrix {
            f_pp: m.f_pp,
            f_pv: m.f_pv,
            f_vv: m.f_vv,
        };
        Ok(())
    })
}

/// Per-shot phase Fisher information with the visibility as nuisance.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qfe_effective_fisher(probe: QfeProbe, phi: f64, vis: f64, out: *mut f64) -> QfeStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = effective_phase_fisher(&ProbeModel::new(probe_kind(probe)), PhasePoint::new(phi, vis)?)?;
        Ok(())
    })
}

/// Cramér–Rao phase variance for a resource budget.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qfe_crb_variance(
    probe: QfeProbe,
    phi: f64,
    vis: f64,
    n_resources: u64,
    convention: QfeConvention,
    out: *mut f64,
) -> QfeStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let conv = match convention {
            QfeConvention::PerShot => ResourceConvention::PerShot,
            QfeConvention::PerResource => ResourceConvention::PerResource,
        };
        *out = crb_variance_for_resources(
            &ProbeModel::new(probe_kind(probe)),
            PhasePoint::new(phi, vis)?,
            n_resources,
            conv,
        )?;
        Ok(())
    })
}

/// Builds a sampled function from `len` points; `variances` may be null.
///
/// # Safety
/// `xs`, `phis` and a non-null `variances` must hold `len` readable values;
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qfe_function_new(
    xs: *const f64,
    phis: *const f64,
    variances: *const f64,
    len: usize,
    out: *mut *mut QfeFunction,
) -> QfeStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let vars = if variances.is_null() {
            None
        } else {
            Some(in_slice(variances, len, "variances")?.to_vec())
        };
        let f = SampledFunction::new(
            in_slice(xs, len, "xs")?.to_vec(),
            in_slice(phis, len, "phis")?.to_vec(),
            vars,
            "ffi",
        )?;
        *out = Box::into_raw(Box::new(QfeFunction(f)));
        Ok(())
    })
}

/// # Safety
/// `f` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qfe_function_free(f: *mut QfeFunction) {
    if !f.is_null() {
        // SAFETY: handle was created by Box::into_raw.
        drop(unsafe { Box::from_raw(f) });
    }
}

/// Number of points, 0 for a null handle.
///
/// # Safety
/// `f` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qfe_function_len(f: *const QfeFunction) -> usize {
    unsafe { f.as_ref() }.map_or(0, |f| f.0.len())
}

/// Evenly spread subset of `n_s` points.
///
/// # Safety
/// `f` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qfe_function_select_subset(
    f: *const QfeFunction,
    n_s: usize,
    out: *mut *mut QfeFunction,
) -> QfeStatus {
    guard(|| {
        let f = unsafe { f.as_ref() }.ok_or_else(|| null("f"))?;
        let out = out_ref(out, "out")?;
        *out = Box::into_raw(Box::new(QfeFunction(select_subset(&f.0, n_s)?)));
        Ok(())
    })
}

/// Evaluates the interpolant at `n` targets.
///
/// # Safety
/// `f` must be a live handle; `targets` and `out` must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn qfe_function_interpolate(
    f: *const QfeFunction,
    m: QfeMethod,
    targets: *const f64,
    n: usize,
    out: *mut f64,
) -> QfeStatus {
    guard(|| {
        let f = unsafe { f.as_ref() }.ok_or_else(|| null("f"))?;
        let r = interpolate(&f.0, method(m), in_slice(targets, n, "targets")?)?;
        out_slice(out, n, "out")?.copy_from_slice(r.values());
        Ok(())
    })
}

/// δ² of `points` interpolated onto the grid of `reference`.
///
/// # Safety
/// Both handles must be live; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qfe_delta_squared(
    points: *const QfeFunction,
    reference: *const QfeFunction,
    m: QfeMethod,
    out: *mut f64,
) -> QfeStatus {
    guard(|| {
        let p = unsafe { points.as_ref() }.ok_or_else(|| null("points"))?;
        let r = unsafe { reference.as_ref() }.ok_or_else(|| null("reference"))?;
        let out = out_ref(out, "out")?;
        let est = interpolate(&p.0, method(m), r.0.xs())?;
        *out = delta_squared(&est, &r.0)?;
        Ok(())
    })
}

/// Estimator on the probe's fundamental domain with an `n_phi × n_vis` grid.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qfe_estimator_new(
    probe: QfeProbe,
    n_phi: usize,
    n_vis: usize,
    out: *mut *mut QfeEstimator,
) -> QfeStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = Box::into_raw(Box::new(QfeEstimator {
            probe: ProbeModel::new(probe_kind(probe)),
            config: EstimatorConfig {
                support: None,
                resolution: (n_phi, n_vis),
            },
        }));
        Ok(())
    })
}

/// Replaces the prior support.
///
/// # Safety
/// `e` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qfe_estimator_set_support(
    e: *mut QfeEstimator,
    phi_lo: f64,
    phi_hi: f64,
    vis_lo: f64,
    vis_hi: f64,
) -> QfeStatus {
    guard(|| {
        let e = out_ref(e, "e")?;
        let s = PriorSupport {
            phi: (phi_lo, phi_hi),
            vis: (vis_lo, vis_hi),
        };
        s.validate(&e.probe)?;
        e.config.support = Some(s);
        Ok(())
    })
}

/// Posterior means and variances from one count vector.
///
/// # Safety
/// `e` must be a live handle, `counts` must hold `n` values and `out` must be
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qfe_estimator_estimate(
    e: *const QfeEstimator,
    counts: *const u64,
    n: usize,
    out: *mut QfePointEstimate,
) -> QfeStatus {
    guard(|| {
        let e = unsafe { e.as_ref() }.ok_or_else(|| null("e"))?;
        let out = out_ref(out, "out")?;
        let rec = CountRecord::new(0.0, in_slice(counts, n, "counts")?.to_vec())?;
        let p = estimate_point(&rec, &e.probe, &e.config)?;
        *out = QfePointEstimate {
            phi_b: p.summary.phi_b,
            var_phi: p.summary.var_phi,
            vis_b: p.summary.vis_b,
            var_vis: p.summary.var_vis,
            boundary_mass: p.boundary_mass,
            n_shots: p.n_shots,
        };
        Ok(())
    })
}

/// # Safety
/// `e` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qfe_estimator_free(e: *mut QfeEstimator) {
    if !e.is_null() {
        drop(unsafe { Box::from_raw(e) });
    }
}

/// Runs a campaign from configuration text.
///
/// # Safety
/// `config` must be a NUL-terminated UTF-8 string; `out` must be valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn qfe_campaign_run(config: *const c_char, out: *mut *mut QfeCampaign) -> QfeStatus {
    guard(|| {
        if config.is_null() {
            return Err(null("config"));
        }
        let out = out_ref(out, "out")?;
        let text = unsafe { CStr::from_ptr(config) }
            .to_str()
            .map_err(|e| Fail(QfeStatus::InvalidArgument, format!("config is not UTF-8: {e}")))?;
        let cfg = parse_config(text)?;
        let run = run_campaign(&cfg.campaign, cfg.hash())?;
        *out = Box::into_raw(Box::new(QfeCampaign(run.result)));
        Ok(())
    })
}

/// Number of rows, 0 for a null handle.
///
/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qfe_campaign_len(c: *const QfeCampaign) -> usize {
    unsafe { c.as_ref() }.map_or(0, |c| c.0.rows.len())
}

/// Copies row `i`.
///
/// # Safety
/// `c` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qfe_campaign_row(c: *const QfeCampaign, i: usize, out: *mut QfeCampaignRow) -> QfeStatus {
    guard(|| {
        let c = unsafe { c.as_ref() }.ok_or_else(|| null("c"))?;
        let out = out_ref(out, "out")?;
        let r =
            c.0.rows
                .get(i)
                .ok_or_else(|| Fail(QfeStatus::Range, format!("row {i} of {}", c.0.rows.len())))?;
        *out = QfeCampaignRow {
            probe: probe_code(r.probe),
            n_resources: r.n_resources,
            method: match r.method {
                InterpolationMethod::NearestNeighbour => QfeMethod::NearestNeighbour,
                InterpolationMethod::Linear => QfeMethod::Linear,
            },
            n_s: r.n_s,
            delta2_mean: r.delta2_mean,
            delta2_std: r.delta2_std,
            failed: r.failure.is_some(),
        };
        Ok(())
    })
}

/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qfe_campaign_free(c: *mut QfeCampaign) {
    if !c.is_null() {
        drop(unsafe { Box::from_raw(c) });
    }
}
