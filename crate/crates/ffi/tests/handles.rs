use std::ffi::{CStr, CString};
use std::ptr;

use specpred_ffi::*;

fn toy(n: usize, start: u8) -> Vec<u8> {
    let mut bits = vec![0u8; n];
    let status = unsafe { sp_generate_synthetic(3, n, start, 0.0, 0, bits.as_mut_ptr()) };
    assert_eq!(status, SpStatus::Ok);
    bits
}

fn last_error() -> String {
    let p = sp_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn estimate(bits: &[u8], variant: SpVariant, order: usize) -> *mut SpModel {
    let mut model = ptr::null_mut();
    let status = unsafe { sp_model_estimate(bits.as_ptr(), bits.len(), variant, order, 0, &mut model) };
    assert_eq!(status, SpStatus::Ok, "{}", last_error());
    assert!(!model.is_null());
    model
}

#[test]
fn synthetic_blocks() {
    assert_eq!(toy(7, 1), vec![1, 1, 1, 0, 0, 0, 1]);
}

#[test]
fn estimate_predict_free() {
    let model = estimate(&toy(120, 1), SpVariant::Full, 3);
    let mut n = 0;
    assert_eq!(unsafe { sp_model_num_states(model, &mut n) }, SpStatus::Ok);
    assert_eq!(n, 8);

    // 110 (most recent first): the block of ones has one slot left
    let sensed = [1u8, 1, 0];
    let (mut prob, mut hard) = (0.0, 9u8);
    let status = unsafe { sp_model_predict(model, sensed.as_ptr(), 3, 1, &mut prob, &mut hard) };
    assert_eq!(status, SpStatus::Ok);
    assert_eq!((prob, hard), (1.0, 1));

    let mut curve = [0.0; 4];
    let status = unsafe { sp_model_active_curve(model, sensed.as_ptr(), 3, 4, curve.as_mut_ptr()) };
    assert_eq!(status, SpStatus::Ok);
    assert_eq!(curve, [1.0, 0.0, 0.0, 0.0]);
    unsafe { sp_model_free(model) };
}

#[test]
fn save_load_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let bits = toy(200, 1);
    let model = estimate(&bits, SpVariant::Smart, 4);
    let path = CString::new(dir.path().join("m.markov").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { sp_model_save(model, path.as_ptr()) }, SpStatus::Ok);

    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { sp_model_load(path.as_ptr(), &mut loaded) }, SpStatus::Ok);
    let sensed = [0u8, 1, 1, 1];
    for h in 1..=6 {
        let (mut a, mut b) = (0.0, 0.0);
        unsafe {
            sp_model_predict(model, sensed.as_ptr(), 4, h, &mut a, ptr::null_mut());
            sp_model_predict(loaded, sensed.as_ptr(), 4, h, &mut b, ptr::null_mut());
        }
        assert_eq!(a, b);
    }
    unsafe {
        sp_model_free(model);
        sp_model_free(loaded);
    }
}

#[test]
fn finetune_returns_new_handle() {
    let bits = toy(300, 1);
    let model = estimate(&bits, SpVariant::Full, 2);
    let mut tuned = ptr::null_mut();
    let status = unsafe { sp_model_finetune(model, bits.as_ptr(), bits.len(), 2, 5, 0.01, &mut tuned) };
    assert_eq!(status, SpStatus::Ok, "{}", last_error());
    assert!(!tuned.is_null() && tuned != model);
    unsafe {
        sp_model_free(tuned);
        sp_model_free(model);
    }
}

#[test]
fn errors_are_reported() {
    let mut model = ptr::null_mut();
    let bits = [0u8, 1, 2];
    let status = unsafe { sp_model_estimate(bits.as_ptr(), 3, SpVariant::Full, 1, 0, &mut model) };
    assert_eq!(status, SpStatus::InvalidArgument);
    assert!(model.is_null());
    assert!(!last_error().is_empty());

    let status = unsafe { sp_model_estimate(ptr::null(), 5, SpVariant::Full, 1, 0, &mut model) };
    assert_eq!(status, SpStatus::NullPointer);
    assert!(last_error().contains("bits"));

    let status = unsafe { sp_model_num_states(ptr::null(), ptr::null_mut()) };
    assert_eq!(status, SpStatus::NullPointer);

    let short = [1u8, 0];
    let status = unsafe { sp_model_estimate(short.as_ptr(), 2, SpVariant::Full, 3, 0, &mut model) };
    assert_eq!(status, SpStatus::TraceTooShort);

    let path = CString::new("/nonexistent/model.markov").unwrap();
    assert_eq!(unsafe { sp_model_load(path.as_ptr(), &mut model) }, SpStatus::Io);

    // success clears the message
    let m = estimate(&toy(30, 1), SpVariant::Full, 2);
    assert!(sp_last_error_message().is_null());
    let sensed = [1u8, 1, 1];
    let status = unsafe { sp_model_predict(m, sensed.as_ptr(), 3, 1, ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(status, SpStatus::InvalidArgument, "sensing longer than the order");
    unsafe {
        sp_model_free(m);
        sp_model_free(ptr::null_mut());
    }
}
