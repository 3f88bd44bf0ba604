use std::ffi::{CStr, CString};
use std::ptr;

use mvgp_ffi::*;

fn last_error() -> String {
    let p = mvgp_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

/// Two separable views of 24 rows, row-major.
fn arrays() -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = 24;
    let y: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let x1: Vec<f64> = (0..n).flat_map(|i| [y[i] + 0.1 * i as f64 / n as f64, (i % 5) as f64 * 0.2]).collect();
    let x2: Vec<f64> = (0..n).map(|i| 0.8 * y[i] + 0.05 * (i % 3) as f64).collect();
    (x1, x2, y)
}

unsafe fn dataset(labels: bool) -> *mut MvgpDataset {
    let (x1, x2, y) = arrays();
    let dims = [2usize, 1];
    let feats = [x1.as_ptr(), x2.as_ptr()];
    let mut ds = ptr::null_mut();
    let lab = if labels { y.as_ptr() } else { ptr::null() };
    assert_eq!(mvgp_dataset_new(24, 2, dims.as_ptr(), feats.as_ptr(), lab, &mut ds), MvgpStatus::Ok);
    ds
}

fn options(a: &[f64], b: &[f64]) -> MvgpTrainOptions {
    MvgpTrainOptions {
        seed: 3,
        max_iters: 0,
        cv_repeats: 2,
        a_values: a.as_ptr(),
        a_len: a.len(),
        b_values: b.as_ptr(),
        b_len: b.len(),
    }
}

#[test]
fn train_and_predict_through_handles() {
    unsafe {
        let ds = dataset(true);
        let (mut n, mut k) = (0, 0);
        assert_eq!(mvgp_dataset_shape(ds, &mut n, &mut k), MvgpStatus::Ok);
        assert_eq!((n, k), (24, 2));
        let (a, b) = ([0.0, 0.5, 1.0], [2.0]);
        let opts = options(&a, &b);
        let method = CString::new("mvgp1").unwrap();
        let mut model = ptr::null_mut();
        assert_eq!(mvgp_train(ds, method.as_ptr(), &opts, &mut model), MvgpStatus::Ok);
        let (mut ta, mut tb) = (f64::NAN, f64::NAN);
        assert_eq!(mvgp_model_tradeoff(model, &mut ta, &mut tb), MvgpStatus::Ok);
        assert!(a.contains(&ta) && tb == 2.0);

        let query = dataset(false);
        let mut scores = vec![0.0; 24];
        let mut labels = vec![0.0; 24];
        assert_eq!(mvgp_model_predict(model, query, scores.as_mut_ptr(), labels.as_mut_ptr(), 24), MvgpStatus::Ok);
        let (_, _, y) = arrays();
        assert_eq!(labels, y);
        assert!(scores.iter().zip(&labels).all(|(s, l)| s.signum() == *l));
        assert_eq!(mvgp_model_predict(model, query, scores.as_mut_ptr(), ptr::null_mut(), 23), MvgpStatus::InvalidArgument);

        mvgp_model_free(model);
        mvgp_dataset_free(query);
        mvgp_dataset_free(ds);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let ds = dataset(true);
        let mut model = ptr::null_mut();
        let bad = CString::new("svm").unwrap();
        assert_eq!(mvgp_train(ds, bad.as_ptr(), ptr::null(), &mut model), MvgpStatus::InvalidArgument);
        assert!(last_error().contains("unknown method"));
        assert!(model.is_null());

        let gp = CString::new("gp1").unwrap();
        assert_eq!(mvgp_train(ptr::null(), gp.as_ptr(), ptr::null(), &mut model), MvgpStatus::NullPointer);

        let y = [1.0, 0.5];
        let x = [0.0, 1.0];
        let mut d2 = ptr::null_mut();
        let dims = [1usize];
        let feats = [x.as_ptr()];
        assert_eq!(mvgp_dataset_new(2, 1, dims.as_ptr(), feats.as_ptr(), y.as_ptr(), &mut d2), MvgpStatus::DataError);
        assert!(last_error().contains("not +1 or -1"));

        let missing = CString::new("/nonexistent/model.json").unwrap();
        assert_eq!(mvgp_model_load(missing.as_ptr(), &mut model), MvgpStatus::DataError);
        mvgp_dataset_free(ds);
    }
}

#[test]
fn file_trained_model_saves_and_loads() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("v.csv");
    let mut text = String::from("f0,label\n");
    for i in 0..20 {
        let y = if i % 2 == 0 { 1 } else { -1 };
        text.push_str(&format!("{},{y}\n", y as f64 + 0.03 * i as f64));
    }
    std::fs::write(&csv, text).unwrap();
    let path = CString::new(csv.to_str().unwrap()).unwrap();
    let paths = [path.as_ptr()];
    let method = CString::new("gp1").unwrap();
    let out = CString::new(dir.path().join("m.json").to_str().unwrap()).unwrap();
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(mvgp_train_files(paths.as_ptr(), 1, ptr::null(), method.as_ptr(), ptr::null(), &mut model), MvgpStatus::Ok);
        assert_eq!(mvgp_model_save(model, out.as_ptr()), MvgpStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(mvgp_model_load(out.as_ptr(), &mut loaded), MvgpStatus::Ok);
        // A model without file references cannot be saved.
        let mut ds = ptr::null_mut();
        assert_eq!(mvgp_dataset_load(paths.as_ptr(), 1, ptr::null(), &mut ds), MvgpStatus::Ok);
        let mut s1 = vec![0.0; 20];
        let mut s2 = vec![0.0; 20];
        assert_eq!(mvgp_model_predict(model, ds, s1.as_mut_ptr(), ptr::null_mut(), 20), MvgpStatus::Ok);
        assert_eq!(mvgp_model_predict(loaded, ds, s2.as_mut_ptr(), ptr::null_mut(), 20), MvgpStatus::Ok);
        assert_eq!(s1, s2);
        assert_eq!(mvgp_model_save(loaded, out.as_ptr()), MvgpStatus::InvalidArgument);
        mvgp_model_free(loaded);
        mvgp_model_free(model);
        mvgp_dataset_free(ds);
        mvgp_model_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_the_interface() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/mvgp.h")).unwrap();
    for name in ["mvgp_train", "mvgp_model_predict", "mvgp_last_error", "MVGP_STATUS_OK", "typedef struct MvgpModel MvgpModel"] {
        assert!(header.contains(name), "{name} missing from header");
    }
    let version = unsafe { CStr::from_ptr(mvgp_version()) };
    assert_eq!(version.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
