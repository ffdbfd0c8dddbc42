use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use csrnet_ffi::*;

fn last_error() -> String {
    let p = csrnet_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

unsafe fn small_model(backend: CsrnetBackend) -> *mut CsrnetModel {
    let mut m = ptr::null_mut();
    assert_eq!(csrnet_model_new(backend as u32, &mut m), CsrnetStatus::Ok);
    let relu = CsrnetActivation::Relu as u32;
    let none = CsrnetActivation::None as u32;
    assert_eq!(csrnet_model_add_sparse(m, 16, 0.5, relu, 0.9, true), CsrnetStatus::Ok);
    assert_eq!(csrnet_model_add_dense(m, 3, none, 0.9, true), CsrnetStatus::Ok);
    m
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(csrnet_version()) };
    assert_eq!(v.to_str().unwrap(), csrnet::VERSION);
}

#[test]
fn train_and_round_trip() {
    unsafe {
        let m = small_model(CsrnetBackend::Sparse);
        assert_eq!(csrnet_model_compile(m, 8, 10, 7), CsrnetStatus::Ok);
        let mut ds = ptr::null_mut();
        assert_eq!(
            csrnet_dataset_synthetic(3, 8, 40, 10, 0.5, 3, &mut ds),
            CsrnetStatus::Ok
        );
        let mut loss = [0.0f64; 5];
        let mut acc = [0.0f64; 5];
        let st = csrnet_train(m, ds, 5, 10, 0.05, 1, true, loss.as_mut_ptr(), acc.as_mut_ptr());
        assert_eq!(st, CsrnetStatus::Ok, "{}", last_error());
        assert!(loss[4] < loss[0]);
        assert!(acc.iter().all(|a| (0.0..=1.0).contains(a)));

        let mut density = 0.0;
        assert_eq!(csrnet_model_density(m, &mut density), CsrnetStatus::Ok);
        assert!(density > 0.0 && density < 1.0);

        let x: Vec<f32> = (0..16).map(|i| i as f32 * 0.1).collect();
        let mut y1 = [0.0f32; 6];
        assert_eq!(
            csrnet_model_feedforward(m, x.as_ptr(), 8, 2, y1.as_mut_ptr(), 6),
            CsrnetStatus::Ok
        );

        let dir = tempfile::tempdir().unwrap();
        let cdir = CString::new(dir.path().to_str().unwrap()).unwrap();
        assert_eq!(csrnet_model_save(m, cdir.as_ptr()), CsrnetStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(
            csrnet_model_load(cdir.as_ptr(), &mut loaded),
            CsrnetStatus::Ok,
            "{}",
            last_error()
        );
        let mut y2 = [0.0f32; 6];
        assert_eq!(
            csrnet_model_feedforward(loaded, x.as_ptr(), 8, 2, y2.as_mut_ptr(), 6),
            CsrnetStatus::Ok
        );
        assert_eq!(y1, y2);

        let mut count = 0;
        assert_eq!(csrnet_model_layer_count(loaded, &mut count), CsrnetStatus::Ok);
        assert_eq!(count, 2);
        let mut n = 0;
        assert_eq!(
            csrnet_model_layer_weights(loaded, 0, ptr::null_mut(), 0, &mut n),
            CsrnetStatus::Ok
        );
        assert_eq!(n, 16 * 8);
        let mut w = vec![0.0f32; n];
        assert_eq!(
            csrnet_model_layer_weights(loaded, 0, w.as_mut_ptr(), n, &mut n),
            CsrnetStatus::Ok
        );
        let nnz = w.iter().filter(|&&v| v != 0.0).count();
        assert!(nnz > 0 && nnz <= 64);

        csrnet_model_free(loaded);
        csrnet_model_free(m);
        csrnet_dataset_free(ds);
    }
}

#[test]
fn dataset_from_arrays() {
    unsafe {
        let x = [0.0f32, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0];
        let labels = [0u32, 1, 0, 1];
        let mut ds = ptr::null_mut();
        let st = csrnet_dataset_from_arrays(
            2,
            2,
            x.as_ptr(),
            labels.as_ptr(),
            4,
            ptr::null(),
            ptr::null(),
            0,
            &mut ds,
        );
        assert_eq!(st, CsrnetStatus::Ok, "{}", last_error());
        csrnet_dataset_free(ds);

        let bad = [0u32, 5, 0, 1];
        let st = csrnet_dataset_from_arrays(2, 2, x.as_ptr(), bad.as_ptr(), 4, ptr::null(), ptr::null(), 0, &mut ds);
        assert_eq!(st, CsrnetStatus::InvalidArgument);
        assert!(last_error().contains("label 5"));
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        assert_eq!(csrnet_model_new(9, &mut ptr::null_mut()), CsrnetStatus::InvalidArgument);
        assert_eq!(
            csrnet_model_compile(ptr::null_mut(), 4, 4, 1),
            CsrnetStatus::NullPointer
        );
        assert!(last_error().contains("model"));

        let m = small_model(CsrnetBackend::Masked);
        let mut y = [0.0f32; 3];
        let x = [0.0f32; 8];
        assert_eq!(
            csrnet_model_feedforward(m, x.as_ptr(), 8, 1, y.as_mut_ptr(), 3),
            CsrnetStatus::State
        );
        assert_eq!(
            csrnet_model_add_sparse(m, 4, 0.5, 7, 0.0, false),
            CsrnetStatus::InvalidArgument
        );
        assert_eq!(csrnet_model_add_dropout(m, 1.5), CsrnetStatus::Ok);
        assert_eq!(csrnet_model_compile(m, 8, 4, 1), CsrnetStatus::InvalidArgument);
        csrnet_model_free(m);

        let missing = CString::new("/nonexistent/csrnet").unwrap();
        let mut out = ptr::null_mut();
        assert_eq!(csrnet_model_load(missing.as_ptr(), &mut out), CsrnetStatus::Io);
        assert_eq!(
            csrnet_dataset_load_cifar10(missing.as_ptr(), &mut ptr::null_mut()),
            CsrnetStatus::Io
        );
        assert!(out.is_null());
    }
}

#[test]
fn header_compiles_as_c() {
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"csrnet.h\"\nint main(void) { CsrnetModel *m = 0; \
         return csrnet_model_new(CSRNET_BACKEND_SPARSE, &m) == CSRNET_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let status = match Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .status()
    {
        Ok(s) => s,
        Err(e) => {
            eprintln!("skipping: no C compiler ({e})");
            return;
        }
    };
    assert!(status.success());
}
