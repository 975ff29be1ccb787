//! C ABI over the dpvote toolkit.
//!
//! Every function returns a [`DpvStatus`]; results go through out-pointers.
//! On failure the thread-local message is available from
//! [`dpv_last_error_message`]. Stateful objects are opaque handles created by
//! `*_new` and released by the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use dpvote::accountant::{self, OrderGrid, PrivacyLedger, Track};
use dpvote::aggregate::{self, AggregationParams, TernaryGradient};
use dpvote::compress::{self, CountSketch};
use dpvote::grad::DenseGradient;
use dpvote::rng::stream;
use dpvote::Error;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NonFinite = 3,
    DimensionMismatch = 4,
    BudgetInfeasible = 5,
    Panic = 6,
}

/// Order grid for [`dpv_ledger_new`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpvGrid {
    Standard = 0,
    Integer = 1,
}

/// Accounting track for [`dpv_ledger_epsilon`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpvTrack {
    Independent = 0,
    Dependent = 1,
    DependentUncapped = 2,
}

/// Opaque RDP ledger.
pub struct DpvLedger {
    inner: PrivacyLedger,
}

/// Opaque count sketch.
pub struct DpvSketch {
    inner: CountSketch,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DpvStatus {
    match e {
        Error::NonFinite { .. } => DpvStatus::NonFinite,
        Error::DimensionMismatch { .. } => DpvStatus::DimensionMismatch,
        Error::BudgetInfeasible(_) | Error::InfiniteBudget => DpvStatus::BudgetInfeasible,
        _ => DpvStatus::InvalidArgument,
    }
}

struct Fail(DpvStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(DpvStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DpvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            DpvStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DpvStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be null or valid for `len` reads.
unsafe fn input<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(unsafe { slice::from_raw_parts(p, len) })
}

/// # Safety
/// `p` must be null or valid for `len` writes.
unsafe fn output<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(unsafe { slice::from_raw_parts_mut(p, len) })
}

/// # Safety
/// `p` must be null or valid for one write.
unsafe fn put<T>(p: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    unsafe { p.write(v) };
    Ok(())
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`) and returns its full length without the NUL; 0 when
/// the last call succeeded.
///
/// # Safety
/// `buf` must be null or valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn dpv_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            if !buf.is_null() && len > 0 {
                unsafe { *buf = 0 };
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            unsafe {
                ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

/// ℓ₂ sensitivity `2√k` of the vote sum.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn dpv_sum_sensitivity(k: usize, out: *mut f64) -> DpvStatus {
    guard(|| {
        if k == 0 {
            return Err(Fail(DpvStatus::InvalidArgument, "k must be >= 1".into()));
        }
        unsafe { put(out, aggregate::sum_sensitivity(k), "out") }
    })
}

/// Gaussian-mechanism RDP `s²λ/(2σ²)`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn dpv_gaussian_rdp(sensitivity: f64, sigma: f64, order: f64, out: *mut f64) -> DpvStatus {
    guard(|| {
        let v = accountant::gaussian_rdp(sensitivity, sigma, order)?;
        unsafe { put(out, v, "out") }
    })
}

/// ε after `rounds` vote aggregations on the standard order grid.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn dpv_epsilon_after(k: usize, sigma: f64, delta: f64, rounds: u64, out: *mut f64) -> DpvStatus {
    guard(|| {
        let v = accountant::epsilon_after(k, sigma, delta, rounds, &OrderGrid::standard())?;
        unsafe { put(out, v, "out") }
    })
}

/// Largest number of vote aggregations within `epsilon_target` on the
/// standard order grid.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn dpv_budget_schedule(
    k: usize,
    sigma: f64,
    delta: f64,
    epsilon_target: f64,
    out: *mut u64,
) -> DpvStatus {
    guard(|| {
        let v = accountant::budget_schedule(k, sigma, delta, epsilon_target, &OrderGrid::standard())?;
        unsafe { put(out, v, "out") }
    })
}

/// Top-k stochastic sign compression of `grad[0..dim]` into dense votes
/// `out[0..dim]` in {-1, 0, +1}. Randomness comes from `seed`.
///
/// # Safety
/// `grad` must be valid for `dim` reads and `out` for `dim` writes.
#[no_mangle]
pub unsafe extern "C" fn dpv_topk_sto_sign(
    grad: *const f64,
    dim: usize,
    c: f64,
    k: usize,
    seed: u64,
    out: *mut i8,
) -> DpvStatus {
    guard(|| {
        let g = DenseGradient::new(unsafe { input(grad, dim, "grad") }?.to_vec())?;
        let votes = compress::topk_sto_sign(&g, c, k, &mut stream(seed))?;
        let out = unsafe { output(out, dim, "out") }?;
        out.fill(0);
        for &(j, s) in votes.entries() {
            out[j] = s;
        }
        Ok(())
    })
}

/// Compresses `teachers` row-major gradients of length `dim`, sums the
/// votes, adds `N(0, σ²)` per coordinate and thresholds at `±β·teachers`.
/// Writes the ternary result to `out` and, when `noisy_sums` is not null,
/// the noisy tallies.
///
/// # Safety
/// `grads` must be valid for `teachers·dim` reads, `out` for `dim` writes and
/// `noisy_sums` null or valid for `dim` writes.
#[no_mangle]
pub unsafe extern "C" fn dpv_dp_topk_agg(
    grads: *const f64,
    teachers: usize,
    dim: usize,
    sigma: f64,
    beta: f64,
    k: usize,
    c: f64,
    seed: u64,
    out: *mut i8,
    noisy_sums: *mut f64,
) -> DpvStatus {
    guard(|| {
        let total = teachers.checked_mul(dim).ok_or_else(|| Fail(DpvStatus::InvalidArgument, "size overflow".into()))?;
        if dim == 0 {
            return Err(Fail(DpvStatus::InvalidArgument, "dim must be >= 1".into()));
        }
        let flat = unsafe { input(grads, total, "grads") }?;
        let gradients: Vec<DenseGradient> =
            flat.chunks(dim).map(|row| DenseGradient::new(row.to_vec())).collect::<dpvote::Result<_>>()?;
        let p = AggregationParams { teachers, sigma, beta, k, c };
        let (result, sums) = aggregate::dp_topk_agg(&gradients, &p, &mut stream(seed))?;
        unsafe { output(out, dim, "out") }?.copy_from_slice(result.values());
        if !noisy_sums.is_null() {
            unsafe { output(noisy_sums, dim, "noisy_sums") }?.copy_from_slice(sums.noisy());
        }
        Ok(())
    })
}

/// Probability `q̃` that the thresholded noisy tally differs from `outcome`.
///
/// # Safety
/// `sums` must be valid for `dim` reads and `outcome` for `dim` reads.
#[no_mangle]
pub unsafe extern "C" fn dpv_outcome_probability(
    sums: *const f64,
    outcome: *const i8,
    dim: usize,
    teachers: usize,
    beta: f64,
    sigma: f64,
    out: *mut f64,
) -> DpvStatus {
    guard(|| {
        let s = unsafe { input(sums, dim, "sums") }?;
        let o = TernaryGradient::new(unsafe { input(outcome, dim, "outcome") }?.to_vec())?;
        let q = accountant::outcome_probability(s, teachers, beta, sigma, &o)?;
        unsafe { put(out, q, "out") }
    })
}

/// Creates an empty ledger.
///
/// # Safety
/// `out` must be valid for one write. Release the handle with [`dpv_ledger_free`].
#[no_mangle]
pub unsafe extern "C" fn dpv_ledger_new(delta: f64, grid: DpvGrid, out: *mut *mut DpvLedger) -> DpvStatus {
    guard(|| {
        let g = match grid {
            DpvGrid::Standard => OrderGrid::standard(),
            DpvGrid::Integer => OrderGrid::integer(),
        };
        let ledger = PrivacyLedger::new(g, delta)?;
        unsafe { put(out, Box::into_raw(Box::new(DpvLedger { inner: ledger })), "out") }
    })
}

/// # Safety
/// `ledger` must be null or a handle from [`dpv_ledger_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dpv_ledger_free(ledger: *mut DpvLedger) {
    if !ledger.is_null() {
        drop(unsafe { Box::from_raw(ledger) });
    }
}

/// # Safety
/// `ledger` must be null or a live handle.
unsafe fn ledger_mut<'a>(ledger: *mut DpvLedger) -> Result<&'a mut PrivacyLedger, Fail> {
    unsafe { ledger.as_mut() }.map(|l| &mut l.inner).ok_or_else(|| null("ledger"))
}

/// Records one data-independent vote aggregation.
///
/// # Safety
/// `ledger` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dpv_ledger_compose_vote_sum(ledger: *mut DpvLedger, k: usize, sigma: f64) -> DpvStatus {
    guard(|| {
        let l = unsafe { ledger_mut(ledger) }?;
        l.compose(accountant::Mechanism::vote_sum(k, sigma))?;
        Ok(())
    })
}

/// Records one vote aggregation with outcome probability `q_tilde` on all tracks.
///
/// # Safety
/// `ledger` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dpv_ledger_compose_data_dependent(
    ledger: *mut DpvLedger,
    k: usize,
    sigma: f64,
    q_tilde: f64,
) -> DpvStatus {
    guard(|| {
        let l = unsafe { ledger_mut(ledger) }?;
        l.compose_data_dependent(k, sigma, q_tilde)?;
        Ok(())
    })
}

/// ε and the minimizing order of one track.
///
/// # Safety
/// `ledger` must be a live handle; `epsilon` valid for one write; `order`
/// null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn dpv_ledger_epsilon(
    ledger: *const DpvLedger,
    track: DpvTrack,
    epsilon: *mut f64,
    order: *mut f64,
) -> DpvStatus {
    guard(|| {
        let l = unsafe { ledger.as_ref() }.ok_or_else(|| null("ledger"))?;
        let t = match track {
            DpvTrack::Independent => Track::Independent,
            DpvTrack::Dependent => Track::Dependent,
            DpvTrack::DependentUncapped => Track::DependentUncapped,
        };
        let (eps, lambda) = l.inner.epsilon(t);
        unsafe { put(epsilon, eps, "epsilon") }?;
        if !order.is_null() {
            unsafe { put(order, lambda, "order") }?;
        }
        Ok(())
    })
}

/// Number of composed aggregations.
///
/// # Safety
/// `ledger` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn dpv_ledger_rounds(ledger: *const DpvLedger, out: *mut u64) -> DpvStatus {
    guard(|| {
        let l = unsafe { ledger.as_ref() }.ok_or_else(|| null("ledger"))?;
        unsafe { put(out, l.inner.rounds(), "out") }
    })
}

/// Creates an all-zero `rows × width` sketch of `dim`-vectors with hashes
/// derived from `seed`.
///
/// # Safety
/// `out` must be valid for one write. Release with [`dpv_sketch_free`].
#[no_mangle]
pub unsafe extern "C" fn dpv_sketch_new(
    dim: usize,
    rows: usize,
    width: usize,
    seed: u64,
    out: *mut *mut DpvSketch,
) -> DpvStatus {
    guard(|| {
        let s = CountSketch::new(dim, rows, width, seed)?;
        unsafe { put(out, Box::into_raw(Box::new(DpvSketch { inner: s })), "out") }
    })
}

/// # Safety
/// `sketch` must be null or a handle from [`dpv_sketch_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dpv_sketch_free(sketch: *mut DpvSketch) {
    if !sketch.is_null() {
        drop(unsafe { Box::from_raw(sketch) });
    }
}

/// Adds `values[0..dim]` into the sketch.
///
/// # Safety
/// `sketch` must be a live handle and `values` valid for `dim` reads.
#[no_mangle]
pub unsafe extern "C" fn dpv_sketch_add(sketch: *mut DpvSketch, values: *const f64, dim: usize) -> DpvStatus {
    guard(|| {
        let s = unsafe { sketch.as_mut() }.ok_or_else(|| null("sketch"))?;
        let g = DenseGradient::new(unsafe { input(values, dim, "values") }?.to_vec())?;
        s.inner.add_dense(&g)?;
        Ok(())
    })
}

/// `dst += src` for sketches of the same shape and seed.
///
/// # Safety
/// Both must be live handles.
#[no_mangle]
pub unsafe extern "C" fn dpv_sketch_merge(dst: *mut DpvSketch, src: *const DpvSketch) -> DpvStatus {
    guard(|| {
        if ptr::eq(dst.cast_const(), src) {
            let d = unsafe { dst.as_mut() }.ok_or_else(|| null("dst"))?;
            let copy = d.inner.clone();
            d.inner.merge(&copy)?;
            return Ok(());
        }
        let src = unsafe { src.as_ref() }.ok_or_else(|| null("src"))?;
        let d = unsafe { dst.as_mut() }.ok_or_else(|| null("dst"))?;
        d.inner.merge(&src.inner)?;
        Ok(())
    })
}

/// Median-of-rows estimate of every coordinate into `out[0..dim]`.
///
/// # Safety
/// `sketch` must be a live handle and `out` valid for `dim` writes.
#[no_mangle]
pub unsafe extern "C" fn dpv_sketch_unsketch(sketch: *const DpvSketch, out: *mut f64, dim: usize) -> DpvStatus {
    guard(|| {
        let s = unsafe { sketch.as_ref() }.ok_or_else(|| null("sketch"))?;
        if dim != s.inner.dim() {
            return Err(Error::DimensionMismatch { expected: s.inner.dim(), actual: dim }.into());
        }
        unsafe { output(out, dim, "out") }?.copy_from_slice(s.inner.unsketch().values());
        Ok(())
    })
}
