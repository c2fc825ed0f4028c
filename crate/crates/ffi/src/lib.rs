//! C ABI for the bound, root and exterior-algebra routines of `lyapdim`.
//!
//! Every function returns a [`LyapdimStatus`]. On failure the message is
//! available from [`lyapdim_last_error`] until the next call on the same
//! thread. Root sets are opaque handles released with [`lyapdim_roots_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, UnwindSafe};
use std::ptr;

use lyapdim::bounds::{self, DimensionBound, LambdaMode};
use lyapdim::charroots::{self, CharProblem, RootSet};
use lyapdim::{cocycle, tensor, DenseMatrix, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LyapdimStatus {
    Ok = 0,
    InvalidInput = 1,
    DimensionMismatch = 2,
    DegenerateMetric = 3,
    DomainViolation = 4,
    Blowup = 5,
    NonConvergence = 6,
    NeedsMoreRoots = 7,
    Io = 8,
    NullPointer = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

impl From<&Error> for LyapdimStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidInput(_) => Self::InvalidInput,
            Error::DimensionMismatch { .. } => Self::DimensionMismatch,
            Error::DegenerateMetric(_) => Self::DegenerateMetric,
            Error::DomainViolation { .. } => Self::DomainViolation,
            Error::Blowup { .. } => Self::Blowup,
            Error::NonConvergence(_) => Self::NonConvergence,
            Error::NeedsMoreRoots(_) => Self::NeedsMoreRoots,
            Error::Io(_) => Self::Io,
        }
    }
}

/// Result record of the bound functions.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapdimBound {
    pub d_star: f64,
    pub m: usize,
    pub gamma: f64,
    pub p_star: f64,
    pub kappa_opt: f64,
    /// NaN when no rescaling was applied.
    pub scale_opt: f64,
    pub slope: f64,
}

impl From<&DimensionBound> for LyapdimBound {
    fn from(b: &DimensionBound) -> Self {
        Self {
            d_star: b.d_star,
            m: b.m,
            gamma: b.gamma,
            p_star: b.p_star,
            kappa_opt: b.kappa_opt,
            scale_opt: b.scale_opt.unwrap_or(f64::NAN),
            slope: b.slope,
        }
    }
}

/// Opaque set of characteristic roots.
pub struct LyapdimRootSet {
    inner: RootSet,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard<F>(f: F) -> LyapdimStatus
where
    F: FnOnce() -> Result<(), (LyapdimStatus, String)> + UnwindSafe,
{
    match catch_unwind(f) {
        Ok(Ok(())) => {
            set_error(String::new());
            LyapdimStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            LyapdimStatus::Panic
        }
    }
}

fn lift(e: Error) -> (LyapdimStatus, String) {
    ((&e).into(), e.to_string())
}

fn null() -> (LyapdimStatus, String) {
    (LyapdimStatus::NullPointer, "null pointer argument".into())
}

/// Message of the last failed call on this thread; empty after success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn lyapdim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Root `p ≥ −1` of `p e^{p+1} = c`.
///
/// # Safety
/// `out` must be null or point to writable storage for one `double`.
#[no_mangle]
pub unsafe extern "C" fn lyapdim_lambert_root(c: f64, out: *mut f64) -> LyapdimStatus {
    guard(|| {
        let out = unsafe { out.as_mut() }.ok_or_else(null)?;
        *out = bounds::lambert_root(c).map_err(lift)?;
        Ok(())
    })
}

fn write_bound(out: *mut LyapdimBound, b: lyapdim::Result<DimensionBound>) -> Result<(), (LyapdimStatus, String)> {
    let out = unsafe { out.as_mut() }.ok_or_else(null)?;
    *out = (&b.map_err(lift)?).into();
    Ok(())
}

/// Minimum over `ϰ > 0` of `(a + b e^{ϰτ})/ϰ + 1`.
///
/// # Safety
/// `out` must be null or point to a writable `LyapdimBound`.
#[no_mangle]
pub unsafe extern "C" fn lyapdim_scalar_bound(tau: f64, a: f64, b: f64, out: *mut LyapdimBound) -> LyapdimStatus {
    guard(|| write_bound(out, bounds::scalar_bound(&bounds::BoundProblem::new(tau, a, b))))
}

/// Mackey-Glass bound. `tight` selects `max |F′|` over the absorbing ball;
/// `scaled` also optimizes the time rescaling.
///
/// # Safety
/// `out` must be null or point to a writable `LyapdimBound`.
#[no_mangle]
pub unsafe extern "C" fn lyapdim_mackey_glass_bound(
    beta: f64,
    gamma: f64,
    k: f64,
    tau: f64,
    tight: bool,
    scaled: bool,
    out: *mut LyapdimBound,
) -> LyapdimStatus {
    let mode = if tight { LambdaMode::Tight } else { LambdaMode::Rough };
    guard(move || {
        let b = if scaled {
            bounds::mackey_glass_scaled(beta, gamma, k, tau, mode)
        } else {
            bounds::mackey_glass_bound(beta, gamma, k, tau, mode)
        };
        write_bound(out, b)
    })
}

/// Bound for the forced delayed oscillator.
///
/// # Safety
/// `out` must be null or point to a writable `LyapdimBound`.
#[no_mangle]
pub unsafe extern "C" fn lyapdim_suarez_schopf_bound(
    alpha: f64,
    gamma: f64,
    tau: f64,
    scaled: bool,
    out: *mut LyapdimBound,
) -> LyapdimStatus {
    guard(move || {
        let b = if scaled {
            bounds::suarez_schopf_scaled(alpha, gamma, tau)
        } else {
            bounds::suarez_schopf_bound(alpha, gamma, tau)
        };
        write_bound(out, b)
    })
}

/// Roots of `p = a + b e^{−τp}` with the `count` largest real parts.
///
/// # Safety
/// `out` must be null or point to writable storage for one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn lyapdim_roots_new(
    a: f64,
    b: f64,
    tau: f64,
    count: usize,
    out: *mut *mut LyapdimRootSet,
) -> LyapdimStatus {
    guard(|| {
        let out = unsafe { out.as_mut() }.ok_or_else(null)?;
        *out = ptr::null_mut();
        let prob = CharProblem::new(a, b, tau).map_err(lift)?;
        let inner = charroots::char_roots(&prob, count).map_err(lift)?;
        *out = Box::into_raw(Box::new(LyapdimRootSet { inner }));
        Ok(())
    })
}

/// # Safety
/// `set` must be null or a handle from [`lyapdim_roots_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lyapdim_roots_free(set: *mut LyapdimRootSet) {
    if !set.is_null() {
        drop(unsafe { Box::from_raw(set) });
    }
}

/// Number of roots held; zero for a null handle.
///
/// # Safety
/// `set` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lyapdim_roots_len(set: *const LyapdimRootSet) -> usize {
    unsafe { set.as_ref() }.map_or(0, |s| s.inner.len())
}

/// Root `index` (0-based) in nonincreasing order of real part.
///
/// # Safety
/// `set` must be a live handle; the output pointers must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn lyapdim_roots_get(
    set: *const LyapdimRootSet,
    index: usize,
    re: *mut f64,
    im: *mut f64,
    residual: *mut f64,
) -> LyapdimStatus {
    guard(|| {
        let s = unsafe { set.as_ref() }.ok_or_else(null)?;
        let (re, im) = unsafe { (re.as_mut(), im.as_mut()) };
        let (re, im) = (re.ok_or_else(null)?, im.ok_or_else(null)?);
        let root = s
            .inner
            .roots
            .get(index)
            .ok_or_else(|| (LyapdimStatus::InvalidInput, format!("index {index} out of range")))?;
        *re = root.re;
        *im = root.im;
        if let Some(r) = unsafe { residual.as_mut() } {
            *r = s.inner.residuals[index];
        }
        Ok(())
    })
}

/// Kaplan-Yorke value of the root real parts.
///
/// # Safety
/// `set` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lyapdim_roots_local_dimension(set: *const LyapdimRootSet, out: *mut f64) -> LyapdimStatus {
    guard(|| {
        let s = unsafe { set.as_ref() }.ok_or_else(null)?;
        let out = unsafe { out.as_mut() }.ok_or_else(null)?;
        *out = charroots::local_dimension(&s.inner).map_err(lift)?;
        Ok(())
    })
}

/// Number of roots with positive real part.
///
/// # Safety
/// `set` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lyapdim_roots_unstable_count(set: *const LyapdimRootSet, out: *mut usize) -> LyapdimStatus {
    guard(|| {
        let s = unsafe { set.as_ref() }.ok_or_else(null)?;
        let out = unsafe { out.as_mut() }.ok_or_else(null)?;
        *out = charroots::unstable_count(&s.inner).map_err(lift)?;
        Ok(())
    })
}

/// Kaplan-Yorke dimension of `len` exponents, saturating at `len`.
///
/// # Safety
/// `lambdas` must point to `len` readable doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn lyapdim_kaplan_yorke(lambdas: *const f64, len: usize, out: *mut f64) -> LyapdimStatus {
    guard(|| {
        if lambdas.is_null() {
            return Err(null());
        }
        let out = unsafe { out.as_mut() }.ok_or_else(null)?;
        let l = unsafe { std::slice::from_raw_parts(lambdas, len) };
        if l.iter().any(|x| !x.is_finite()) {
            return Err((LyapdimStatus::InvalidInput, "nonfinite exponent".into()));
        }
        *out = cocycle::kaplan_yorke(l, len);
        Ok(())
    })
}

/// Multiplicative compound of a row-major `n×n` matrix, written row-major
/// into `out`, which must hold `binomial(n, m)²` doubles.
///
/// # Safety
/// `matrix` must point to `n·n` readable doubles and `out` to `out_len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lyapdim_compound(
    matrix: *const f64,
    n: usize,
    m: usize,
    out: *mut f64,
    out_len: usize,
) -> LyapdimStatus {
    guard(|| {
        if matrix.is_null() || out.is_null() {
            return Err(null());
        }
        let size = tensor::binomial(n, m);
        if out_len < size * size {
            return Err((LyapdimStatus::BufferTooSmall, format!("need {} doubles", size * size)));
        }
        let data = unsafe { std::slice::from_raw_parts(matrix, n * n) };
        let c = tensor::compound_multiplicative(&DenseMatrix::from_row_slice(n, n, data), m).map_err(lift)?;
        let dst = unsafe { std::slice::from_raw_parts_mut(out, size * size) };
        for r in 0..size {
            for col in 0..size {
                dst[r * size + col] = c[(r, col)];
            }
        }
        Ok(())
    })
}
