use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use np_shape_ffi::*;

fn curve(spec: &str, n: usize) -> *mut NpCurve {
    let s = CString::new(spec).unwrap();
    let mut c = ptr::null_mut();
    let st = unsafe { np_curve_new(s.as_ptr(), n, &mut c) };
    assert_eq!(st, NpStatus::Ok);
    assert!(!c.is_null());
    c
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(np_last_error_message()) }.to_string_lossy().into_owned()
}

#[test]
fn curve_round_trip() {
    let c = curve("circle:2", 64);
    unsafe {
        assert_eq!(np_curve_len(c), 64);
        let mut xy = vec![0.0; 128];
        assert_eq!(np_curve_nodes(c, xy.as_mut_ptr(), xy.len()), NpStatus::Ok);
        for k in 0..64 {
            assert!((xy[2 * k].hypot(xy[2 * k + 1]) - 2.0).abs() < 1e-14);
        }
        let (mut a, mut l) = (0.0, 0.0);
        assert_eq!(np_curve_measure(c, &mut a, &mut l), NpStatus::Ok);
        assert!((a - 4.0 * std::f64::consts::PI).abs() < 1e-12);
        assert!((l - 4.0 * std::f64::consts::PI).abs() < 1e-12);
        assert_eq!(np_curve_nodes(c, xy.as_mut_ptr(), 127), NpStatus::BufferTooSmall);
        np_curve_free(c);
    }
}

#[test]
fn bad_specs_report_codes_and_messages() {
    let mut c = ptr::null_mut();
    let s = CString::new("ellipse:1").unwrap();
    assert_eq!(unsafe { np_curve_new(s.as_ptr(), 64, &mut c) }, NpStatus::InvalidArgument);
    assert!(c.is_null());
    assert!(last_error().contains("ellipse"));
    let s = CString::new("circle:-1").unwrap();
    assert_eq!(unsafe { np_curve_new(s.as_ptr(), 64, &mut c) }, NpStatus::InvalidCurve);
    assert_eq!(unsafe { np_curve_new(ptr::null(), 64, &mut c) }, NpStatus::NullPointer);
    let s = CString::new("circle:1").unwrap();
    assert_eq!(unsafe { np_curve_new(s.as_ptr(), 64, ptr::null_mut()) }, NpStatus::NullPointer);
    // A success clears the message.
    let c = curve("circle:1", 32);
    assert_eq!(last_error(), "");
    unsafe { np_curve_free(c) };
}

#[test]
fn null_handles_are_harmless() {
    unsafe {
        np_curve_free(ptr::null_mut());
        np_spectrum_free(ptr::null_mut());
        assert_eq!(np_curve_len(ptr::null()), 0);
        assert_eq!(np_spectrum_len(ptr::null()), 0);
    }
}

#[test]
fn ellipse_spectrum_through_the_abi() {
    let c = curve("ellipse:1,0.5", 128);
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(np_spectrum_new(c, &mut s), NpStatus::Ok);
        let n = np_spectrum_len(s);
        assert_eq!(n, 128);
        let (mut re, mut im) = (vec![0.0; n], vec![0.0; n]);
        assert_eq!(np_spectrum_values(s, re.as_mut_ptr(), im.as_mut_ptr(), n), NpStatus::Ok);
        assert!((re[0] - 0.5).abs() < 1e-12);
        for target in [1.0 / 6.0, -1.0 / 6.0, 1.0 / 18.0, -1.0 / 18.0] {
            assert!(re.iter().any(|v| (v - target).abs() < 1e-10), "{target}");
        }
        assert!(im.iter().all(|v| v.abs() < 1e-8));
        np_spectrum_free(s);
        np_curve_free(c);
    }
}

#[test]
fn cluster_derivative_buffer_protocol() {
    let c = curve("ellipse:1,0.5", 128);
    let theta = CString::new("dilation").unwrap();
    unsafe {
        let mut m = 0usize;
        assert_eq!(
            np_cluster_derivative(c, 1.0 / 6.0, 0.05, theta.as_ptr(), &mut m, ptr::null_mut(), 0),
            NpStatus::BufferTooSmall
        );
        assert_eq!(m, 1);
        let mut d = [f64::NAN];
        assert_eq!(np_cluster_derivative(c, 1.0 / 6.0, 0.05, theta.as_ptr(), &mut m, d.as_mut_ptr(), 1), NpStatus::Ok);
        assert!(d[0].abs() < 1e-7, "dilation derivative {}", d[0]);
        assert_eq!(np_cluster_derivative(c, 0.3, 0.01, theta.as_ptr(), &mut m, d.as_mut_ptr(), 1), NpStatus::Cluster);
        let bad = CString::new("wobble").unwrap();
        assert_eq!(np_cluster_derivative(c, 1.0 / 6.0, 0.05, bad.as_ptr(), &mut m, d.as_mut_ptr(), 1), NpStatus::InvalidArgument);
        np_curve_free(c);
    }
}

#[test]
fn sphere_eigenvalues_are_exact() {
    unsafe {
        for k in 0..=10u32 {
            let (mut p, mut q, mut d) = (0i64, 0i64, 0u64);
            assert_eq!(np_sphere_eigenvalue(3, k, &mut p, &mut q, &mut d), NpStatus::Ok);
            assert_eq!((p, q, d), (1, 2 * (2 * k as i64 + 1), 2 * k as u64 + 1));
        }
        let (mut p, mut q, mut d) = (0i64, 0i64, 0u64);
        assert_eq!(np_sphere_eigenvalue(2, 1, &mut p, &mut q, &mut d), NpStatus::InvalidArgument);
    }
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(np_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/np_shape.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in ["np_curve_new", "np_spectrum_values", "np_cluster_derivative", "np_sphere_eigenvalue", "NP_STATUS_BUFFER_TOO_SMALL"]
    {
        assert!(text.contains(f), "{f} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"np_shape.h\"\nint main(void) { NpCurve *c = 0; return np_curve_new(\"circle:1\", 32, &c) == NP_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let Ok(out) = Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
    else {
        eprintln!("no C compiler; header syntax check skipped");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
