use std::ffi::CStr;
use std::ptr;

use dpvote_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as std::ffi::c_char; 256];
    let n = unsafe { dpv_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let s = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned();
    assert!(s.len() <= n);
    s
}

#[test]
fn scalar_functions() {
    let mut v = 0.0;
    assert_eq!(unsafe { dpv_sum_sensitivity(4, &mut v) }, DpvStatus::Ok);
    assert_eq!(v, 4.0);
    assert_eq!(unsafe { dpv_gaussian_rdp(2.0, 2.0, 3.0, &mut v) }, DpvStatus::Ok);
    assert_eq!(v, 1.5);
    assert_eq!(unsafe { dpv_epsilon_after(200, 5000.0, 1e-5, 1, &mut v) }, DpvStatus::Ok);
    assert!((v - 0.02716).abs() <= 0.01 * 0.02716);
    let mut rounds = 0u64;
    assert_eq!(unsafe { dpv_budget_schedule(200, 5000.0, 1e-5, 1.0, &mut rounds) }, DpvStatus::Ok);
    assert!((1300..=1302).contains(&rounds));
    assert_eq!(last_error(), "");
}

#[test]
fn errors_set_status_and_message() {
    let mut v = 0.0;
    assert_eq!(unsafe { dpv_sum_sensitivity(0, &mut v) }, DpvStatus::InvalidArgument);
    assert!(last_error().contains("k"));
    assert_eq!(unsafe { dpv_sum_sensitivity(1, ptr::null_mut()) }, DpvStatus::NullPointer);
    assert_eq!(last_error(), "out is null");
    let g = [1.0, f64::NAN];
    let mut out = [0i8; 2];
    assert_eq!(unsafe { dpv_topk_sto_sign(g.as_ptr(), 2, 1.0, 1, 0, out.as_mut_ptr()) }, DpvStatus::NonFinite);
    assert_eq!(unsafe { dpv_gaussian_rdp(1.0, 0.0, 2.0, &mut v) }, DpvStatus::BudgetInfeasible);
    assert_eq!(unsafe { dpv_gaussian_rdp(1.0, -1.0, 2.0, &mut v) }, DpvStatus::InvalidArgument);
    let mut needed = unsafe { dpv_last_error_message(ptr::null_mut(), 0) };
    assert!(needed > 0);
    let mut tiny = [0 as std::ffi::c_char; 4];
    needed = unsafe { dpv_last_error_message(tiny.as_mut_ptr(), 4) };
    assert_eq!(unsafe { CStr::from_ptr(tiny.as_ptr()) }.to_bytes().len(), 3.min(needed));
}

#[test]
fn compression_and_aggregation() {
    let g = [0.0, -3.0, 0.5, 2.0];
    let mut a = [9i8; 4];
    let mut b = [9i8; 4];
    assert_eq!(unsafe { dpv_topk_sto_sign(g.as_ptr(), 4, 1.0, 2, 7, a.as_mut_ptr()) }, DpvStatus::Ok);
    assert_eq!(unsafe { dpv_topk_sto_sign(g.as_ptr(), 4, 1.0, 2, 7, b.as_mut_ptr()) }, DpvStatus::Ok);
    assert_eq!(a, b);
    assert_eq!((a[0], a[2]), (0, 0));
    assert!(a[1] != 0 && a[3] != 0);

    let teachers = 50;
    let row = [1.0, -1.0, 0.0];
    let grads: Vec<f64> = (0..teachers).flat_map(|_| row).collect();
    let mut out = [0i8; 3];
    let mut sums = [0.0; 3];
    let st = unsafe {
        dpv_dp_topk_agg(grads.as_ptr(), teachers, 3, 1e-9, 0.5, 2, 1.0, 3, out.as_mut_ptr(), sums.as_mut_ptr())
    };
    assert_eq!(st, DpvStatus::Ok);
    assert_eq!(out, [1, -1, 0]);
    assert!((sums[0] - 50.0).abs() < 1e-6 && (sums[1] + 50.0).abs() < 1e-6);

    let mut q = 0.0;
    let st = unsafe { dpv_outcome_probability(sums.as_ptr(), out.as_ptr(), 3, teachers, 0.5, 1.0, &mut q) };
    assert_eq!(st, DpvStatus::Ok);
    assert!(q < 1e-30);
    let st = unsafe {
        dpv_dp_topk_agg(grads.as_ptr(), teachers, 0, 1.0, 0.5, 1, 1.0, 3, out.as_mut_ptr(), ptr::null_mut())
    };
    assert_eq!(st, DpvStatus::InvalidArgument);
}

#[test]
fn ledger_handle() {
    let mut l: *mut DpvLedger = ptr::null_mut();
    assert_eq!(unsafe { dpv_ledger_new(1e-5, DpvGrid::Standard, &mut l) }, DpvStatus::Ok);
    assert!(!l.is_null());
    assert_eq!(unsafe { dpv_ledger_compose_vote_sum(l, 200, 5000.0) }, DpvStatus::Ok);
    assert_eq!(unsafe { dpv_ledger_compose_data_dependent(l, 200, 5000.0, 1.0) }, DpvStatus::Ok);
    let (mut rounds, mut eps, mut order) = (0u64, 0.0, 0.0);
    assert_eq!(unsafe { dpv_ledger_rounds(l, &mut rounds) }, DpvStatus::Ok);
    assert_eq!(rounds, 2);
    assert_eq!(unsafe { dpv_ledger_epsilon(l, DpvTrack::Independent, &mut eps, &mut order) }, DpvStatus::Ok);
    let mut direct = 0.0;
    unsafe { dpv_epsilon_after(200, 5000.0, 1e-5, 2, &mut direct) };
    assert_eq!(eps, direct);
    assert!(order > 1.0);
    assert_eq!(unsafe { dpv_ledger_compose_data_dependent(l, 200, 5000.0, 2.0) }, DpvStatus::InvalidArgument);
    assert_eq!(unsafe { dpv_ledger_compose_vote_sum(ptr::null_mut(), 1, 1.0) }, DpvStatus::NullPointer);
    unsafe { dpv_ledger_free(l) };
    unsafe { dpv_ledger_free(ptr::null_mut()) };
    assert_eq!(unsafe { dpv_ledger_new(0.0, DpvGrid::Integer, &mut l) }, DpvStatus::InvalidArgument);
}

#[test]
fn sketch_handle_is_linear() {
    let d = 64;
    let (mut a, mut b, mut c): (*mut DpvSketch, *mut DpvSketch, *mut DpvSketch) =
        (ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(dpv_sketch_new(d, 5, 32, 11, &mut a), DpvStatus::Ok);
        assert_eq!(dpv_sketch_new(d, 5, 32, 11, &mut b), DpvStatus::Ok);
        assert_eq!(dpv_sketch_new(d, 5, 32, 11, &mut c), DpvStatus::Ok);
    }
    let x: Vec<f64> = (0..d).map(|i| (i % 3) as f64 - 1.0).collect();
    let y: Vec<f64> = (0..d).map(|i| if i == 5 { 40.0 } else { 0.0 }).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p + q).collect();
    unsafe {
        assert_eq!(dpv_sketch_add(a, x.as_ptr(), d), DpvStatus::Ok);
        assert_eq!(dpv_sketch_add(b, y.as_ptr(), d), DpvStatus::Ok);
        assert_eq!(dpv_sketch_merge(a, b), DpvStatus::Ok);
        assert_eq!(dpv_sketch_add(c, xy.as_ptr(), d), DpvStatus::Ok);
    }
    let (mut ea, mut ec) = (vec![0.0; d], vec![0.0; d]);
    unsafe {
        assert_eq!(dpv_sketch_unsketch(a, ea.as_mut_ptr(), d), DpvStatus::Ok);
        assert_eq!(dpv_sketch_unsketch(c, ec.as_mut_ptr(), d), DpvStatus::Ok);
        assert_eq!(dpv_sketch_unsketch(c, ec.as_mut_ptr(), d - 1), DpvStatus::DimensionMismatch);
        assert_eq!(dpv_sketch_add(a, x.as_ptr(), d - 1), DpvStatus::DimensionMismatch);
    }
    assert_eq!(ea, ec);
    assert!((ea[5] - 40.0).abs() < 5.0);
    unsafe {
        assert_eq!(dpv_sketch_merge(c, c), DpvStatus::Ok);
        let mut twice = vec![0.0; d];
        dpv_sketch_unsketch(c, twice.as_mut_ptr(), d);
        for (t, e) in twice.iter().zip(&ec) {
            assert_eq!(*t, 2.0 * e);
        }
        dpv_sketch_free(a);
        dpv_sketch_free(b);
        dpv_sketch_free(c);
    }
}
