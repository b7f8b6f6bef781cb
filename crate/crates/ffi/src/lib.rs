//! C interface to `twinheat`.
//!
//! Objects are opaque handles created by `twh_*_new` / `twh_control` and
//! released with the matching `twh_*_free`. Every fallible call returns a
//! [`TwhStatus`]; on failure the message is kept per thread and can be read
//! with [`twh_last_error_message`]. Arrays are passed as pointer + length,
//! and output buffers that are too small yield `TWH_STATUS_BUFFER_TOO_SMALL`
//! with the required length written to the length out-parameter; passing a
//! null buffer with capacity 0 just queries that length.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use twinheat::control::ControlSignal;
use twinheat::grid::{Coefficients, ControlRegion, Grid1D};
use twinheat::operators::EigenBasis;
use twinheat::sim::{run_simultaneous, Method, RunOptions, Setup, SimultaneousRun};
use twinheat::specineq::{estimate_constant_lp, simultaneous_constant};
use twinheat::spectral::SpectralCutoff;
use twinheat::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwhStatus {
    Ok = 0,
    InvalidArgument = 1,
    EmptyRegion = 2,
    Resolution = 3,
    Unsupported = 4,
    Numerical = 5,
    SingularGramian = 6,
    Infeasible = 7,
    Config = 8,
    Io = 9,
    NullPointer = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

/// Which operator a query refers to.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwhFamily {
    Dirichlet = 0,
    Neumann = 1,
    /// The periodic operator on the doubled domain.
    Double = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwhMethod {
    Hum = 0,
    Lr = 1,
}

/// Opaque: grid, coefficients, doubled domain and eigenbases.
pub struct TwhSetup {
    inner: Setup,
}

/// Opaque: result of one simultaneous-control run.
pub struct TwhRun {
    inner: SimultaneousRun,
}

/// Scalar summary of a run. Norms are relative to the initial norms.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TwhReport {
    pub final_u_l2: f64,
    pub final_v_l2: f64,
    pub control_cost: f64,
    pub dirichlet_trace_residual: f64,
    pub neumann_flux_residual: f64,
    pub route_gap: f64,
    pub tolerance: f64,
    pub within_tolerance: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> TwhStatus {
    match err {
        Error::InvalidArgument(_) => TwhStatus::InvalidArgument,
        Error::EmptyRegion => TwhStatus::EmptyRegion,
        Error::Resolution(_) => TwhStatus::Resolution,
        Error::Unsupported(_) => TwhStatus::Unsupported,
        Error::Numerical(_) => TwhStatus::Numerical,
        Error::SingularGramian { .. } => TwhStatus::SingularGramian,
        Error::Infeasible(_) => TwhStatus::Infeasible,
        Error::Config(_) | Error::Json(_) => TwhStatus::Config,
        Error::Io(_) => TwhStatus::Io,
    }
}

struct Fail(TwhStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(TwhStatus::NullPointer, format!("{what} is null"))
}

/// Runs `body`, turning errors and panics into a status plus message.
fn guard(body: impl FnOnce() -> Result<(), Fail>) -> TwhStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => TwhStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            TwhStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be null or point to `len` readable values.
unsafe fn input<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

/// Copies `src` into `(dst, cap)` and reports the length through `len_out`.
/// A null `dst` with `cap = 0` is a pure length query.
///
/// # Safety
/// `dst` must be null or writable for `cap` values; `len_out` null or writable.
unsafe fn output<T: Copy>(
    src: &[T],
    dst: *mut T,
    cap: usize,
    len_out: *mut usize,
) -> Result<(), Fail> {
    if !len_out.is_null() {
        *len_out = src.len();
    }
    // An empty buffer only asks for the length.
    if src.is_empty() || (dst.is_null() && cap == 0) {
        return Ok(());
    }
    if dst.is_null() {
        return Err(null("output buffer"));
    }
    if cap < src.len() {
        return Err(Fail(
            TwhStatus::BufferTooSmall,
            format!("buffer holds {cap} values, {} needed", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

/// # Safety
/// `mask` must point to `n` bytes.
unsafe fn region_from(setup: &Setup, mask: *const u8) -> Result<ControlRegion, Fail> {
    let g = &setup.grid;
    let bits = input(mask, g.n(), "mask")?;
    Ok(ControlRegion::from_mask(
        bits.iter().map(|&b| b != 0).collect(),
        g.h(),
    )?)
}

fn basis_of(setup: &Setup, family: TwhFamily) -> &EigenBasis {
    match family {
        TwhFamily::Dirichlet => &setup.dirichlet,
        TwhFamily::Neumann => &setup.neumann,
        TwhFamily::Double => setup.extended.basis(),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn twh_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `cap`). Returns the full message length including the NUL,
/// or 0 when no error has been recorded.
///
/// # Safety
/// `buf` must be null or writable for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn twh_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n - 1) = 0;
        }
        bytes.len()
    })
}

/// Builds a setup on `[0, length]` with `n` cells. `kappa` (n values, cell
/// density) and `a` (n + 1 values, face diffusion) may be null for 1.
///
/// # Safety
/// Non-null arrays must have the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn twh_setup_new(
    n: usize,
    length: f64,
    kappa: *const f64,
    a: *const f64,
    out: *mut *mut TwhSetup,
) -> TwhStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let kappa = if kappa.is_null() {
            vec![1.0; n]
        } else {
            input(kappa, n, "kappa")?.to_vec()
        };
        let a = if a.is_null() {
            vec![1.0; n + 1]
        } else {
            input(a, n + 1, "a")?.to_vec()
        };
        let grid = Grid1D::from_density(n, length, kappa.clone())?;
        let coeffs = Coefficients::new(kappa, a)?;
        let setup = Setup::new(grid, coeffs)?;
        *out = Box::into_raw(Box::new(TwhSetup { inner: setup }));
        Ok(())
    })
}

/// # Safety
/// `setup` must be null or a handle from [`twh_setup_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn twh_setup_free(setup: *mut TwhSetup) {
    if !setup.is_null() {
        drop(Box::from_raw(setup));
    }
}

/// Number of cells of the base grid; 0 for a null handle.
///
/// # Safety
/// `setup` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn twh_setup_cells(setup: *const TwhSetup) -> usize {
    setup.as_ref().map_or(0, |s| s.inner.grid.n())
}

/// Ascending eigenvalues of one operator (n values, 2n for the double).
///
/// # Safety
/// `setup` must be a live handle; `out` writable for `cap` values; `len`
/// null or writable.
#[no_mangle]
pub unsafe extern "C" fn twh_eigenvalues(
    setup: *const TwhSetup,
    family: TwhFamily,
    out: *mut f64,
    cap: usize,
    len: *mut usize,
) -> TwhStatus {
    guard(|| {
        let s = &setup.as_ref().ok_or_else(|| null("setup"))?.inner;
        output(basis_of(s, family).eigenvalues(), out, cap, len)
    })
}

/// Exact discrete spectral-inequality constant for frequencies ≤ `lambda` on
/// the region `mask` (n bytes, nonzero = inside). For `TWH_FAMILY_DOUBLE`
/// the simultaneous constant is computed on the lifted region. `constant`
/// is +inf when the restriction is rank deficient.
///
/// # Safety
/// `setup` must be a live handle, `mask` readable for n bytes, the outputs
/// writable (`modes` may be null).
#[no_mangle]
pub unsafe extern "C" fn twh_spectral_constant(
    setup: *const TwhSetup,
    family: TwhFamily,
    lambda: f64,
    mask: *const u8,
    constant: *mut f64,
    modes: *mut usize,
) -> TwhStatus {
    guard(|| {
        let s = &setup.as_ref().ok_or_else(|| null("setup"))?.inner;
        if constant.is_null() {
            return Err(null("constant"));
        }
        let region = region_from(s, mask)?;
        let estimate = match family {
            TwhFamily::Double => simultaneous_constant(&s.double, &s.extended, lambda, &region)?,
            _ => {
                let basis = basis_of(s, family);
                estimate_constant_lp(basis, &SpectralCutoff::new(basis, lambda), &region)?
            }
        };
        *constant = estimate.constant;
        if !modes.is_null() {
            *modes = estimate.mode_count;
        }
        Ok(())
    })
}

/// Steers `(u0, v0)` (n values each) to zero at `horizon` with one control
/// supported on `mask`. `steps = 0` selects the default step count.
///
/// # Safety
/// `setup` must be a live handle, `u0`/`v0` readable for n values, `mask`
/// for n bytes, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn twh_control(
    setup: *const TwhSetup,
    u0: *const f64,
    v0: *const f64,
    mask: *const u8,
    horizon: f64,
    method: TwhMethod,
    steps: usize,
    out: *mut *mut TwhRun,
) -> TwhStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let s = &setup.as_ref().ok_or_else(|| null("setup"))?.inner;
        let n = s.grid.n();
        let u0 = input(u0, n, "u0")?;
        let v0 = input(v0, n, "v0")?;
        let region = region_from(s, mask)?;
        let method = match method {
            TwhMethod::Hum => Method::Hum,
            TwhMethod::Lr => Method::Lr,
        };
        let mut opts = RunOptions::default();
        if steps > 0 {
            opts.steps = steps;
        }
        let run = run_simultaneous(s, u0, v0, &region, horizon, method, &opts)?;
        *out = Box::into_raw(Box::new(TwhRun { inner: run }));
        Ok(())
    })
}

/// # Safety
/// `run` must be null or a handle from [`twh_control`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn twh_run_free(run: *mut TwhRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// # Safety
/// `run` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn twh_run_report(run: *const TwhRun, out: *mut TwhReport) -> TwhStatus {
    guard(|| {
        let r = &run.as_ref().ok_or_else(|| null("run"))?.inner.report;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = TwhReport {
            final_u_l2: r.final_u_l2,
            final_v_l2: r.final_v_l2,
            control_cost: r.control_cost,
            dirichlet_trace_residual: r.dirichlet_trace_residual,
            neumann_flux_residual: r.neumann_flux_residual,
            route_gap: r.route_gap,
            tolerance: r.tolerance,
            within_tolerance: r.within_tolerance,
        };
        Ok(())
    })
}

/// # Safety
/// `run` must be null or a live handle that outlives `'a`.
unsafe fn shared<'a>(run: *const TwhRun) -> Result<&'a ControlSignal, Fail> {
    run.as_ref()
        .map(|r| &r.inner.shared_signal)
        .ok_or_else(|| null("run"))
}

/// Node times of the shared control (steps + 1 values).
///
/// # Safety
/// `run` must be a live handle; `out` writable for `cap` values; `len` null
/// or writable.
#[no_mangle]
pub unsafe extern "C" fn twh_run_control_times(
    run: *const TwhRun,
    out: *mut f64,
    cap: usize,
    len: *mut usize,
) -> TwhStatus {
    guard(|| output(shared(run)?.times(), out, cap, len))
}

/// Base-grid cell indices carrying the shared control.
///
/// # Safety
/// As for [`twh_run_control_times`].
#[no_mangle]
pub unsafe extern "C" fn twh_run_control_cells(
    run: *const TwhRun,
    out: *mut usize,
    cap: usize,
    len: *mut usize,
) -> TwhStatus {
    guard(|| output(shared(run)?.cells(), out, cap, len))
}

/// Shared control values, row-major `steps × cells`.
///
/// # Safety
/// As for [`twh_run_control_times`].
#[no_mangle]
pub unsafe extern "C" fn twh_run_control_values(
    run: *const TwhRun,
    out: *mut f64,
    cap: usize,
    len: *mut usize,
) -> TwhStatus {
    guard(|| {
        let flat: Vec<f64> = shared(run)?.values().iter().flatten().copied().collect();
        output(&flat, out, cap, len)
    })
}

/// Final Dirichlet and Neumann states (n values each).
///
/// # Safety
/// `run` must be a live handle; `u`, `v` writable for `cap` values each.
#[no_mangle]
pub unsafe extern "C" fn twh_run_final_states(
    run: *const TwhRun,
    u: *mut f64,
    v: *mut f64,
    cap: usize,
) -> TwhStatus {
    guard(|| {
        let r = &run.as_ref().ok_or_else(|| null("run"))?.inner;
        output(r.dirichlet.final_state(), u, cap, ptr::null_mut())?;
        output(r.neumann.final_state(), v, cap, ptr::null_mut())
    })
}
