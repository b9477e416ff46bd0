//! C ABI for np-shape.
//!
//! Objects are opaque handles created by `*_new` and released by the
//! matching `*_free`. Every fallible call returns an [`NpStatus`]; the text
//! of the most recent error on the calling thread is available from
//! [`np_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use np_shape::cli::config::ThetaSpec;
use np_shape::geometry2d::{build_curve, Curve, CurveKind};
use np_shape::layer2d::LayerOperators;
use np_shape::shapederiv::cluster_derivative_matrix;
use np_shape::spectral::{extract_cluster, solve_spectrum, Spectrum};
use np_shape::sphere3d::np_eigenvalue;
use np_shape::Error;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidCurve = 3,
    Cluster = 4,
    Numerical = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// A sampled closed curve.
pub struct NpCurve {
    curve: Curve,
}

/// Eigenvalues of K* on a curve, sorted by decreasing real part.
pub struct NpSpectrum {
    spectrum: Spectrum,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> NpStatus {
    match e {
        Error::InvalidCurve(_) | Error::SelfIntersection { .. } => NpStatus::InvalidCurve,
        Error::NotIsolated { .. } | Error::EmptyCluster { .. } | Error::UnsupportedEigenvalue(_) | Error::HalfEigenvalue => {
            NpStatus::Cluster
        }
        Error::Eigensolver(_) | Error::ComplexEigenvalue(_) | Error::RankDeficient { .. } | Error::Degenerate(_) => {
            NpStatus::Numerical
        }
        _ => NpStatus::InvalidArgument,
    }
}

fn fail(status: NpStatus, msg: &str) -> NpStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> Result<(), NpStatus>) -> NpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            NpStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => fail(NpStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: np_shape::Result<T>) -> Result<T, NpStatus> {
    r.map_err(|e| fail(status_of(&e), &e.to_string()))
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, NpStatus> {
    if s.is_null() {
        return Err(fail(NpStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(s).to_str().map_err(|_| fail(NpStatus::InvalidArgument, "string is not UTF-8"))
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), NpStatus> {
    if p.is_null() {
        Err(fail(NpStatus::NullPointer, &format!("null {what}")))
    } else {
        Ok(())
    }
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn np_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn np_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a curve from a specification such as `ellipse:1,0.5` sampled at
/// `n` nodes.
///
/// # Safety
/// `spec` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn np_curve_new(spec: *const c_char, n: usize, out: *mut *mut NpCurve) -> NpStatus {
    guard(|| {
        non_null(out, "output pointer")?;
        *out = ptr::null_mut();
        let kind: CurveKind = lift(read_str(spec)?.parse())?;
        let curve = lift(build_curve(&kind, n))?;
        *out = Box::into_raw(Box::new(NpCurve { curve }));
        Ok(())
    })
}

/// # Safety
/// `c` must be null or a handle from [`np_curve_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn np_curve_free(c: *mut NpCurve) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Node count, 0 for a null handle.
///
/// # Safety
/// `c` must be null or a live curve handle.
#[no_mangle]
pub unsafe extern "C" fn np_curve_len(c: *const NpCurve) -> usize {
    c.as_ref().map_or(0, |c| c.curve.len())
}

/// Writes the nodes as interleaved x, y pairs; `len` counts doubles and must
/// be at least twice the node count.
///
/// # Safety
/// `c` must be a live curve handle and `xy` must point to `len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn np_curve_nodes(c: *const NpCurve, xy: *mut f64, len: usize) -> NpStatus {
    guard(|| {
        non_null(c, "curve")?;
        non_null(xy, "buffer")?;
        let nodes = (*c).curve.nodes();
        if len < 2 * nodes.len() {
            return Err(fail(NpStatus::BufferTooSmall, &format!("need {} doubles, got {len}", 2 * nodes.len())));
        }
        let dst = std::slice::from_raw_parts_mut(xy, 2 * nodes.len());
        for (k, p) in nodes.iter().enumerate() {
            dst[2 * k] = p.x;
            dst[2 * k + 1] = p.y;
        }
        Ok(())
    })
}

/// Enclosed area and perimeter.
///
/// # Safety
/// `c` must be a live curve handle; `area` and `length` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn np_curve_measure(c: *const NpCurve, area: *mut f64, length: *mut f64) -> NpStatus {
    guard(|| {
        non_null(c, "curve")?;
        non_null(area, "area")?;
        non_null(length, "length")?;
        *area = (*c).curve.area();
        *length = (*c).curve.length();
        Ok(())
    })
}

/// Eigenvalues of K* on the curve.
///
/// # Safety
/// `c` must be a live curve handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn np_spectrum_new(c: *const NpCurve, out: *mut *mut NpSpectrum) -> NpStatus {
    guard(|| {
        non_null(c, "curve")?;
        non_null(out, "output pointer")?;
        *out = ptr::null_mut();
        let ops = LayerOperators::assemble(&(*c).curve);
        let spectrum = lift(solve_spectrum(&ops.kstar))?;
        *out = Box::into_raw(Box::new(NpSpectrum { spectrum }));
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a handle from [`np_spectrum_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn np_spectrum_free(s: *mut NpSpectrum) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Eigenvalue count, 0 for a null handle.
///
/// # Safety
/// `s` must be null or a live spectrum handle.
#[no_mangle]
pub unsafe extern "C" fn np_spectrum_len(s: *const NpSpectrum) -> usize {
    s.as_ref().map_or(0, |s| s.spectrum.len())
}

/// Copies real and imaginary parts, each buffer holding `len` doubles.
///
/// # Safety
/// `s` must be a live spectrum handle; `re` and `im` must point to `len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn np_spectrum_values(s: *const NpSpectrum, re: *mut f64, im: *mut f64, len: usize) -> NpStatus {
    guard(|| {
        non_null(s, "spectrum")?;
        non_null(re, "re buffer")?;
        non_null(im, "im buffer")?;
        let v = (*s).spectrum.values();
        if len < v.len() {
            return Err(fail(NpStatus::BufferTooSmall, &format!("need {} doubles, got {len}", v.len())));
        }
        let (re, im) = (std::slice::from_raw_parts_mut(re, v.len()), std::slice::from_raw_parts_mut(im, v.len()));
        for (k, z) in v.iter().enumerate() {
            re[k] = z.re;
            im[k] = z.im;
        }
        Ok(())
    })
}

/// Derivative matrix of the eigenvalue cluster in (lambda - delta,
/// lambda + delta) along the named perturbation field (`normal-bump`,
/// `dilation`, `param:1,2,1,3`, ...). The m x m matrix is written row-major
/// into `out`, which holds `cap` doubles; `m` receives the cluster size even
/// when the buffer is too small.
///
/// # Safety
/// `c` must be a live curve handle, `theta` a NUL-terminated string, `m` a
/// valid pointer and `out` must point to `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn np_cluster_derivative(
    c: *const NpCurve,
    lambda: f64,
    delta: f64,
    theta: *const c_char,
    m: *mut usize,
    out: *mut f64,
    cap: usize,
) -> NpStatus {
    guard(|| {
        non_null(c, "curve")?;
        non_null(m, "size pointer")?;
        let curve = &(*c).curve;
        let spec: ThetaSpec = lift(read_str(theta)?.parse())?;
        let field = spec.build(curve);
        let ops = LayerOperators::assemble(curve);
        let sp = lift(solve_spectrum(&ops.kstar))?;
        let cluster = lift(extract_cluster(&sp, lambda, delta, &ops.s, curve))?;
        let cd = lift(cluster_derivative_matrix(curve, &ops, &cluster, &field))?;
        *m = cd.m;
        if cap < cd.m * cd.m {
            return Err(fail(NpStatus::BufferTooSmall, &format!("need {} doubles, got {cap}", cd.m * cd.m)));
        }
        non_null(out, "matrix buffer")?;
        let dst = std::slice::from_raw_parts_mut(out, cd.m * cd.m);
        for (i, row) in cd.d_a.iter().enumerate() {
            dst[i * cd.m..(i + 1) * cd.m].copy_from_slice(row);
        }
        Ok(())
    })
}

/// k-th NP eigenvalue of the unit sphere in R^n as the fraction num / den,
/// with its multiplicity.
///
/// # Safety
/// `num`, `den` and `multiplicity` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn np_sphere_eigenvalue(n: u32, k: u32, num: *mut i64, den: *mut i64, multiplicity: *mut u64) -> NpStatus {
    guard(|| {
        non_null(num, "numerator")?;
        non_null(den, "denominator")?;
        non_null(multiplicity, "multiplicity")?;
        let e = lift(np_eigenvalue(n, k))?;
        *num = *e.lambda.numer();
        *den = *e.lambda.denom();
        *multiplicity = e.multiplicity;
        Ok(())
    })
}
