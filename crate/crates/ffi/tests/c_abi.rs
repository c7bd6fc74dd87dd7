use std::ffi::{CStr, CString};
use std::ptr;

use kanlab_ffi::*;

fn last_error() -> String {
    let p = kan_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn new_model(kind: KanModelKind, widths: &[usize]) -> *mut KanModel {
    let mut m = ptr::null_mut();
    let st = unsafe { kan_model_new(kind as u32, widths.as_ptr(), widths.len(), 4, 3, 7, &mut m) };
    assert_eq!(st, KanStatus::Ok);
    assert!(!m.is_null());
    m
}

#[test]
fn build_run_and_free() {
    for kind in [KanModelKind::SineKan, KanModelKind::FourierKan, KanModelKind::BSplineKan, KanModelKind::Mlp] {
        let m = new_model(kind, &[3, 5, 2]);
        unsafe {
            assert_eq!(kan_model_d_in(m), 3);
            assert_eq!(kan_model_d_out(m), 2);
            assert_eq!(kan_model_num_layers(m), 2);
            assert!(kan_model_param_count(m) > 0);
            let x = [0.1, -0.2, 0.3, 0.4, 0.5, -0.6];
            let mut y = [0.0; 4];
            assert_eq!(kan_model_forward(m, x.as_ptr(), 6, 2, y.as_mut_ptr(), 4), KanStatus::Ok);
            assert!(y.iter().all(|v| v.is_finite()));
            kan_model_free(m);
        }
    }
}

#[test]
fn save_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.ckpt").to_str().unwrap()).unwrap();
    let m = new_model(KanModelKind::SineKan, &[2, 3, 1]);
    let x = [0.25, -0.75];
    let (mut a, mut b) = ([0.0], [0.0]);
    unsafe {
        assert_eq!(kan_model_save(m, path.as_ptr()), KanStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(kan_model_load(path.as_ptr(), &mut back), KanStatus::Ok);
        kan_model_forward(m, x.as_ptr(), 2, 1, a.as_mut_ptr(), 1);
        kan_model_forward(back, x.as_ptr(), 2, 1, b.as_mut_ptr(), 1);
        kan_model_free(m);
        kan_model_free(back);
    }
    assert_eq!(a, b);
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut m = ptr::null_mut();
        let w = [3usize, 2];
        assert_eq!(kan_model_new(99, w.as_ptr(), 2, 4, 3, 0, &mut m), KanStatus::InvalidArgument);
        assert!(last_error().contains("unknown model kind"));
        assert_eq!(kan_model_new(0, ptr::null(), 2, 4, 3, 0, &mut m), KanStatus::NullPointer);

        let missing = CString::new("/nonexistent/dir/m.ckpt").unwrap();
        assert_eq!(kan_model_load(missing.as_ptr(), &mut m), KanStatus::Io);

        let m = new_model(KanModelKind::Mlp, &[3, 2]);
        let x = [0.0; 5];
        let mut y = [0.0; 2];
        assert_eq!(kan_model_forward(m, x.as_ptr(), 5, 1, y.as_mut_ptr(), 2), KanStatus::Shape);
        assert_eq!(kan_model_d_in(ptr::null()), 0);
        kan_model_free(m);
        kan_model_free(ptr::null_mut());
    }
}

#[test]
fn cost_models_and_phases() {
    let mut f = 0u64;
    unsafe {
        assert_eq!(kan_layer_flops(KanModelKind::SineKan as u32, 1, 784, 128, 8, 0, &mut f), KanStatus::Ok);
        assert_eq!(f, 1_681_024);
        assert_eq!(kan_layer_flops(KanModelKind::BSplineKan as u32, 1, 784, 128, 8, 3, &mut f), KanStatus::Ok);
        assert_eq!(f, 2_978_544);
        assert_eq!(kan_layer_flops(KanModelKind::BSplineKan as u32, 1, 784, 128, 8, 0, &mut f), KanStatus::InvalidArgument);

        let mut r = 0.0;
        assert_eq!(kan_scale_ratio(1, &mut r), KanStatus::Ok);
        assert!((r - 1.971860).abs() < 1e-6);
        let mut p = [0.0; 1];
        assert_eq!(kan_grid_phases(1, p.as_mut_ptr(), 1), KanStatus::Ok);
        assert!((p[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert_eq!(kan_grid_phases(2, p.as_mut_ptr(), 1), KanStatus::Shape);
    }
}

#[test]
fn header_is_generated() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/kanlab.h")).unwrap();
    for sym in ["kan_model_new", "kan_model_forward", "kan_model_free", "kan_layer_flops", "KAN_STATUS_OK", "typedef struct KanModel KanModel"] {
        assert!(h.contains(sym), "{sym}");
    }
}
