//! C ABI for `kobarrier`.
//!
//! Specs and barriers are opaque handles owned by the caller and released
//! with their `_free` function. Every call returns a [`KoStatus`]; on
//! failure the message is available from [`ko_last_error_message`] on the
//! same thread. Strings returned through out-pointers are freed with
//! [`ko_string_free`]. Panics are caught and reported as `KO_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use kobarrier::barrier::{
    build_annulus_profile, build_subsolution_p, build_supersolution, build_supersolution_bounded,
    build_supersolution_gradient, Barrier, GluedSubsolution, DEFAULT_GLUING_RATE,
};
use kobarrier::cli::{build_report, BarrierArgs, BarrierChoice, Command, Flags, SpecFile, GEOMETRY_TRIALS};
use kobarrier::heisenberg::{group_op, koranyi, GroupMode, Point};
use kobarrier::ko::{decide_ko, decide_ko_hat, Verdict};
use kobarrier::profile::ProblemSpec;
use kobarrier::transforms::{big_k, big_k_inverse};
use kobarrier::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Malformed spec document or out-of-range constant.
    Spec = 3,
    /// Argument outside the domain of the operation.
    Domain = 4,
    /// Quadrature, root finding or a sigma search gave up.
    Numerical = 5,
    Invalid = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KoVerdictCode {
    Holds = 0,
    Fails = 1,
    Inconclusive = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KoBarrierKind {
    Super = 0,
    SuperBounded = 1,
    SuperGradient = 2,
    /// Glued subsolution; `eps` in the parameters is ignored (chosen
    /// automatically).
    Sub = 3,
    /// Annulus `[R/2, R]` with `R = t1`, boundary values `eps` and `eta`.
    Annulus = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KoGroupMode {
    Multiply = 0,
    InverseOfFirstThenMultiply = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KoBarrierParams {
    pub eps: f64,
    pub eta: f64,
    pub t0: f64,
    pub t1: f64,
    pub btilde: f64,
    pub ceiling: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KoKoranyi {
    pub r: f64,
    pub psi: f64,
}

/// Parsed problem spec.
pub struct KoSpec {
    spec: ProblemSpec,
    file: SpecFile,
}

enum Inner {
    Plain(Barrier),
    Sub(GluedSubsolution),
}

/// Constructed barrier.
pub struct KoBarrier(Inner);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> KoStatus {
    match e {
        Error::Syntax { .. } | Error::NonConstantExponent { .. } | Error::Spec(_) | Error::Missing(_) => KoStatus::Spec,
        Error::Domain(_) | Error::Singular(_) | Error::VanishingGradient(_) | Error::Overflow(_) => KoStatus::Domain,
        Error::Quadrature(_) | Error::Bracket(_) | Error::SigmaExhausted { .. } => KoStatus::Numerical,
        Error::DimensionMismatch { .. } | Error::Invalid(_) | Error::Io(_) => KoStatus::Invalid,
    }
}

/// Runs `f`, turning errors and panics into a status and the thread's
/// last error message.
fn guard(f: impl FnOnce() -> Result<(), (KoStatus, String)>) -> KoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            KoStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside kobarrier".into());
            KoStatus::Panic
        }
    }
}

fn lib<T>(r: kobarrier::Result<T>) -> Result<T, (KoStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn non_null<'a, T>(p: *const T, what: &str) -> Result<&'a T, (KoStatus, String)> {
    // SAFETY: callers pass either null or a pointer obtained from this
    // library (handles) or to a live value of `T`.
    unsafe { p.as_ref() }.ok_or_else(|| (KoStatus::NullPointer, format!("{what} is null")))
}

fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (KoStatus, String)> {
    // SAFETY: as for `non_null`, for writable out-parameters.
    unsafe { p.as_mut() }.ok_or_else(|| (KoStatus::NullPointer, format!("{what} is null")))
}

fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (KoStatus, String)> {
    if p.is_null() {
        return Err((KoStatus::NullPointer, format!("{what} is null")));
    }
    // SAFETY: non-null and NUL-terminated per the caller contract.
    unsafe { CStr::from_ptr(p) }.to_str().map_err(|e| (KoStatus::InvalidUtf8, format!("{what}: {e}")))
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Parses a JSON problem spec into `*out`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ko_spec_from_json(json: *const c_char, out: *mut *mut KoSpec) -> KoStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let file = lib(SpecFile::from_json(c_str(json, "json")?))?;
        let spec = lib(file.to_problem())?;
        *out = Box::into_raw(Box::new(KoSpec { spec, file }));
        Ok(())
    })
}

/// # Safety
/// `spec` must be null or a handle from [`ko_spec_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ko_spec_free(spec: *mut KoSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Decides the KO condition, or its hat form when `hat` is true (which
/// needs a difference-form spec).
///
/// # Safety
/// `spec` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ko_decide(spec: *const KoSpec, hat: bool, out: *mut KoVerdictCode) -> KoStatus {
    guard(|| {
        let spec = &non_null(spec, "spec")?.spec;
        let out = out_ptr(out, "out")?;
        let v = if hat { lib(decide_ko_hat(spec))? } else { decide_ko(spec) };
        *out = match v.verdict {
            Verdict::Holds => KoVerdictCode::Holds,
            Verdict::Fails => KoVerdictCode::Fails,
            Verdict::Inconclusive => KoVerdictCode::Inconclusive,
        };
        Ok(())
    })
}

/// `K(t)`.
///
/// # Safety
/// `spec` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ko_big_k(spec: *const KoSpec, t: f64, out: *mut f64) -> KoStatus {
    guard(|| {
        let spec = &non_null(spec, "spec")?.spec;
        *out_ptr(out, "out")? = lib(big_k(spec, t))?;
        Ok(())
    })
}

/// `K^{-1}(u)`.
///
/// # Safety
/// `spec` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ko_big_k_inverse(spec: *const KoSpec, u: f64, out: *mut f64) -> KoStatus {
    guard(|| {
        let spec = &non_null(spec, "spec")?.spec;
        *out_ptr(out, "out")? = lib(big_k_inverse(spec, u))?;
        Ok(())
    })
}

/// Builds a barrier of the given kind into `*out`.
///
/// # Safety
/// `spec` must be a live handle, `params` and `out` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ko_barrier_build(
    spec: *const KoSpec,
    kind: KoBarrierKind,
    params: *const KoBarrierParams,
    out: *mut *mut KoBarrier,
) -> KoStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let spec = &non_null(spec, "spec")?.spec;
        let p = non_null(params, "params")?;
        let inner = match kind {
            KoBarrierKind::Super => Inner::Plain(lib(build_supersolution(spec, p.eps, p.eta, p.t0, p.t1, p.btilde))?),
            KoBarrierKind::SuperBounded => {
                Inner::Plain(lib(build_supersolution_bounded(spec, p.eps, p.eta, p.t0, p.t1, p.btilde, p.ceiling))?)
            }
            KoBarrierKind::SuperGradient => {
                Inner::Plain(lib(build_supersolution_gradient(spec, p.eps, p.eta, p.t0, p.t1))?)
            }
            KoBarrierKind::Sub => Inner::Sub(lib(build_subsolution_p(spec, None, DEFAULT_GLUING_RATE))?),
            KoBarrierKind::Annulus => Inner::Plain(lib(build_annulus_profile(spec, p.t1, p.eps, p.eta))?),
        };
        *out = Box::into_raw(Box::new(KoBarrier(inner)));
        Ok(())
    })
}

/// Supersolution with the blow-up construction; shorthand for
/// [`ko_barrier_build`] with `KoBarrierKind::Super`.
///
/// # Safety
/// As for [`ko_barrier_build`].
#[no_mangle]
pub unsafe extern "C" fn ko_barrier_build_super(
    spec: *const KoSpec,
    params: *const KoBarrierParams,
    out: *mut *mut KoBarrier,
) -> KoStatus {
    ko_barrier_build(spec, KoBarrierKind::Super, params, out)
}

fn barrier_of(b: &KoBarrier) -> &Barrier {
    match &b.0 {
        Inner::Plain(b) => b,
        Inner::Sub(s) => s.barrier(),
    }
}

/// Writes `(alpha, alpha', alpha'')` at `t` into `out[0..3]`.
///
/// # Safety
/// `barrier` must be a live handle and `out` point to 3 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ko_barrier_eval(barrier: *const KoBarrier, t: f64, out: *mut f64) -> KoStatus {
    guard(|| {
        let b = non_null(barrier, "barrier")?;
        if out.is_null() {
            return Err((KoStatus::NullPointer, "out is null".into()));
        }
        let jet = match &b.0 {
            Inner::Plain(b) => lib(b.jet(t))?,
            Inner::Sub(s) => lib(s.jet(t))?,
        };
        ptr::copy_nonoverlapping(jet.as_ptr(), out, 3);
        Ok(())
    })
}

/// End of the barrier's domain: blow-up time, ceiling time, outer radius,
/// or infinity for the subsolution.
///
/// # Safety
/// `barrier` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ko_barrier_t_end(barrier: *const KoBarrier, out: *mut f64) -> KoStatus {
    guard(|| {
        *out_ptr(out, "out")? = barrier_of(non_null(barrier, "barrier")?).t_end();
        Ok(())
    })
}

/// Final sigma of the construction (NaN when there is none).
///
/// # Safety
/// `barrier` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ko_barrier_sigma(barrier: *const KoBarrier, out: *mut f64) -> KoStatus {
    guard(|| {
        let b = non_null(barrier, "barrier")?;
        *out_ptr(out, "out")? = match &b.0 {
            Inner::Plain(b) => b.sigma().unwrap_or(f64::NAN),
            Inner::Sub(s) => s.sigma,
        };
        Ok(())
    })
}

/// Gluing radius of a subsolution; `KO_STATUS_INVALID` for other kinds.
///
/// # Safety
/// `barrier` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ko_barrier_t_sigma(barrier: *const KoBarrier, out: *mut f64) -> KoStatus {
    guard(|| {
        let b = non_null(barrier, "barrier")?;
        let out = out_ptr(out, "out")?;
        match &b.0 {
            Inner::Sub(s) => {
                *out = s.t_sigma;
                Ok(())
            }
            Inner::Plain(_) => Err((KoStatus::Invalid, "t_sigma exists only for the subsolution".into())),
        }
    })
}

/// # Safety
/// `barrier` must be null or a handle from [`ko_barrier_build`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ko_barrier_free(barrier: *mut KoBarrier) {
    if !barrier.is_null() {
        drop(Box::from_raw(barrier));
    }
}

unsafe fn point(m: usize, coords: *const f64, what: &str) -> Result<Point, (KoStatus, String)> {
    if coords.is_null() {
        return Err((KoStatus::NullPointer, format!("{what} is null")));
    }
    let c = std::slice::from_raw_parts(coords, 2 * m + 1);
    lib(Point::from_coords(m, c))
}

/// Koranyi gauge and density of `coords` (length `2m + 1`), measured from
/// `base` when it is non-null.
///
/// # Safety
/// `coords` (and `base` if non-null) must point to `2m + 1` doubles; `out`
/// must be valid.
#[no_mangle]
pub unsafe extern "C" fn ko_koranyi(m: usize, coords: *const f64, base: *const f64, out: *mut KoKoranyi) -> KoStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let q = point(m, coords, "coords")?;
        let b = if base.is_null() { None } else { Some(point(m, base, "base")?) };
        let k = lib(koranyi(&q, b.as_ref()))?;
        *out = KoKoranyi { r: k.r, psi: k.psi };
        Ok(())
    })
}

/// `a o b` (or `a^{-1} o b`) on `H^m`, written to `out[0..2m+1]`.
///
/// # Safety
/// `a`, `b` and `out` must each point to `2m + 1` doubles.
#[no_mangle]
pub unsafe extern "C" fn ko_group_op(
    m: usize,
    a: *const f64,
    b: *const f64,
    mode: KoGroupMode,
    out: *mut f64,
) -> KoStatus {
    guard(|| {
        if out.is_null() {
            return Err((KoStatus::NullPointer, "out is null".into()));
        }
        let (a, b) = (point(m, a, "a")?, point(m, b, "b")?);
        let mode = match mode {
            KoGroupMode::Multiply => GroupMode::Multiply,
            KoGroupMode::InverseOfFirstThenMultiply => GroupMode::InverseOfFirstThenMultiply,
        };
        let c = lib(group_op(&a, &b, mode))?.coords();
        ptr::copy_nonoverlapping(c.as_ptr(), out, c.len());
        Ok(())
    })
}

fn command_named(name: &str) -> Option<Command> {
    let spec = PathBuf::new();
    let args = BarrierArgs::default();
    Some(match name {
        "validate" => Command::Validate { spec },
        "ko" => Command::Ko { spec },
        "build-super" => Command::BuildSuper { spec, args },
        "build-super-bounded" => Command::BuildSuperBounded { spec, args },
        "build-super-gradient" => Command::BuildSuperGradient { spec, args },
        "build-sub" => Command::BuildSub { spec, args },
        "annulus" => Command::Annulus { spec, args },
        "verify" => Command::Verify { spec, barrier: BarrierChoice::Auto, args },
        "geometry" => Command::Geometry { spec: Some(spec), m: 1, trials: GEOMETRY_TRIALS },
        "full-report" => Command::FullReport { spec, args },
        _ => return None,
    })
}

/// Runs a CLI command (`"validate"`, `"ko"`, `"verify"`, `"full-report"`,
/// ...) with default parameters on `spec` and returns the JSON report in
/// `*out_json`, to be released with [`ko_string_free`]. The report's own
/// `status` field carries certificate failures; the return value is
/// non-`Ok` only when no report could be produced.
///
/// # Safety
/// `spec` must be a live handle, `command` a NUL-terminated string and
/// `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ko_run_report_json(
    spec: *const KoSpec,
    command: *const c_char,
    seed: u64,
    out_json: *mut *mut c_char,
) -> KoStatus {
    guard(|| {
        let out = out_ptr(out_json, "out_json")?;
        *out = ptr::null_mut();
        let spec = non_null(spec, "spec")?;
        let name = c_str(command, "command")?;
        let command = command_named(name).ok_or_else(|| (KoStatus::Invalid, format!("unknown command {name:?}")))?;
        let flags = Flags { seed, ..Flags::default() };
        let (report, _, _) = build_report(&command, &flags, Some(Ok(spec.file.clone())));
        *out = to_c_string(report.to_json());
        if out.is_null() {
            return Err((KoStatus::Panic, "report could not be converted".into()));
        }
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ko_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn ko_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}
