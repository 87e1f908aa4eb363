use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use effdim_ffi::*;

fn last_error() -> String {
    let p = effdim_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn effective_dimensionality_and_errors() {
    let eig = [3.0, 1.0, 0.0];
    let mut out = 0.0;
    let s = unsafe { effdim_effective_dimensionality(eig.as_ptr(), 3, 1.0, false, &mut out) };
    assert_eq!(s, EffdimStatus::Ok);
    assert!((out - 1.25).abs() < 1e-15);
    assert!(effdim_last_error_message().is_null());

    let s = unsafe { effdim_effective_dimensionality(eig.as_ptr(), 3, -1.0, false, &mut out) };
    assert_eq!(s, EffdimStatus::InvalidArgument);
    assert!(last_error().contains("z"));

    let s = unsafe { effdim_effective_dimensionality(ptr::null(), 3, 1.0, false, &mut out) };
    assert_eq!(s, EffdimStatus::NullPointer);
}

#[test]
fn eigenvalues_are_descending() {
    let m = [2.0, 1.0, 1.0, 2.0];
    let mut eig = [0.0; 2];
    assert_eq!(unsafe { effdim_symmetric_eigenvalues(m.as_ptr(), 2, eig.as_mut_ptr()) }, EffdimStatus::Ok);
    assert!((eig[0] - 3.0).abs() < 1e-12 && (eig[1] - 1.0).abs() < 1e-12);
}

#[test]
fn linear_model_round_trip() {
    // identity features: posterior mean is y·v/(v+σ²)
    let phi = [1.0, 0.0, 0.0, 1.0];
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { effdim_linear_model_new(phi.as_ptr(), 2, 2, 1.0, 1.0, &mut model) }, EffdimStatus::Ok);
    let y = [2.0, -4.0];
    let mut mean = [0.0; 2];
    let s = unsafe { effdim_linear_model_posterior_mean(model, y.as_ptr(), 2, mean.as_mut_ptr(), 2) };
    assert_eq!(s, EffdimStatus::Ok);
    assert!((mean[0] - 1.0).abs() < 1e-12 && (mean[1] + 2.0).abs() < 1e-12);
    let mut c = 0.0;
    assert_eq!(unsafe { effdim_linear_model_contraction(model, &mut c) }, EffdimStatus::Ok);
    assert!((c - 1.0).abs() < 1e-12);
    let s = unsafe { effdim_linear_model_posterior_mean(model, y.as_ptr(), 2, mean.as_mut_ptr(), 3) };
    assert_eq!(s, EffdimStatus::InvalidArgument);
    unsafe { effdim_linear_model_free(model) };
    let s = unsafe { effdim_linear_model_new(phi.as_ptr(), 2, 2, 0.0, 1.0, &mut model) };
    assert_eq!(s, EffdimStatus::InvalidArgument);
}

#[test]
fn mlp_train_measure_save_load() {
    let mut data = ptr::null_mut();
    assert_eq!(unsafe { effdim_dataset_two_spirals(200, 0.3, 1, &mut data) }, EffdimStatus::Ok);
    assert_eq!(unsafe { effdim_dataset_len(data) }, 200);
    let hidden = [8usize, 8];
    let mut mlp = ptr::null_mut();
    let s = unsafe { effdim_mlp_new(2, 1, hidden.as_ptr(), 2, EffdimActivation::Tanh, true, 3, &mut mlp) };
    assert_eq!(s, EffdimStatus::Ok);
    let count = unsafe { effdim_mlp_param_count(mlp) };
    assert_eq!(count, 2 * 8 + 8 + 8 * 8 + 8 + 8 + 1);

    let mut loss = f64::NAN;
    assert_eq!(unsafe { effdim_mlp_train(mlp, data, 0.01, 200, 4, &mut loss) }, EffdimStatus::Ok);
    assert!(loss.is_finite() && loss < 0.7);
    let mut acc = 0.0;
    assert_eq!(unsafe { effdim_mlp_accuracy(mlp, data, &mut acc) }, EffdimStatus::Ok);
    assert!(acc > 0.5);

    let mut m = EffdimMeasures::default();
    let s = unsafe { effdim_mlp_measures(mlp, data, data, 0.0, 1.0, 9, false, &mut m) };
    assert_eq!(s, EffdimStatus::Ok);
    assert!((m.z_used - 1.0 / 200.0).abs() < 1e-15);
    assert!(m.n_eff_hessian > 0.0 && m.n_eff_hessian <= count as f64);
    assert!(m.pac_bayes.is_nan());

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.ckpt").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { effdim_mlp_save(mlp, path.as_ptr()) }, EffdimStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { effdim_mlp_load(path.as_ptr(), &mut loaded) }, EffdimStatus::Ok);
    let (mut a, mut b) = (vec![0.0; count], vec![0.0; count]);
    assert_eq!(unsafe { effdim_mlp_get_params(mlp, a.as_mut_ptr(), count) }, EffdimStatus::Ok);
    assert_eq!(unsafe { effdim_mlp_get_params(loaded, b.as_mut_ptr(), count) }, EffdimStatus::Ok);
    assert_eq!(a, b);

    let missing = CString::new(dir.path().join("none.ckpt").to_str().unwrap()).unwrap();
    let mut none = ptr::null_mut();
    assert_eq!(unsafe { effdim_mlp_load(missing.as_ptr(), &mut none) }, EffdimStatus::Io);
    assert!(none.is_null());

    unsafe {
        effdim_mlp_free(loaded);
        effdim_mlp_free(mlp);
        effdim_dataset_free(data);
        effdim_mlp_free(ptr::null_mut());
    }
}

#[test]
fn header_compiles_as_c() {
    let header_dir = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        r#"#include "effdim.h"
int main(void) {
    double eig[2] = {1.0, 2.0};
    double out = 0.0;
    EffdimMlp *mlp = NULL;
    size_t hidden[1] = {4};
    if (effdim_effective_dimensionality(eig, 2, 1.0, false, &out) != EFFDIM_STATUS_OK) return 1;
    if (effdim_mlp_new(2, 1, hidden, 1, EFFDIM_ACTIVATION_ELU, true, 0, &mlp) != EFFDIM_STATUS_OK) return 1;
    effdim_mlp_free(mlp);
    return effdim_last_error_message() == NULL ? 0 : 1;
}
"#,
    )
    .unwrap();
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    match Command::new(&cc).args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I", header_dir]).arg(&src).output() {
        Ok(o) => assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr)),
        Err(e) => eprintln!("skipping C compile check: {cc} unavailable ({e})"),
    }
}
