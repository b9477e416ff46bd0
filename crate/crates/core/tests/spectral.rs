use np_shape::geometry2d::{build_curve, Curve, CurveKind};
use np_shape::layer2d::LayerOperators;
use np_shape::spectral::{cluster_contour, extract_cluster, plasmonic_eps, riesz_projector, solve_spectrum, Spectrum};
use np_shape::Error;

fn spectrum(spec: &str, n: usize) -> (Curve, LayerOperators, Spectrum) {
    let c = build_curve(&spec.parse::<CurveKind>().unwrap(), n).unwrap();
    let ops = LayerOperators::assemble(&c);
    let sp = solve_spectrum(&ops.kstar).unwrap();
    (c, ops, sp)
}

#[test]
fn circle_spectrum_is_half_and_zeros() {
    let (_, _, sp) = spectrum("circle:1.3", 64);
    let v = sp.real_values();
    assert!((v[0] - 0.5).abs() < 1e-13);
    assert!(v[1..].iter().all(|x| x.abs() < 1e-13));
    assert!(sp.values().iter().all(|z| z.im.abs() < 1e-12));
}

#[test]
fn ellipse_with_ratio_three_has_powers_of_one_half() {
    // a = 3, b = 1: eigenvalues +-(1/2)((a - b) / (a + b))^k = +-(1/2)^(k + 1).
    let (_, _, sp) = spectrum("ellipse:3,1", 256);
    let v = sp.real_values();
    assert!((v[0] - 0.5).abs() < 1e-12);
    for k in 1..=6 {
        let e = 0.5f64.powi(k + 1);
        for target in [e, -e] {
            let hit = v.iter().map(|x| (x - target).abs()).fold(f64::INFINITY, f64::min);
            assert!(hit < 1e-10, "k = {k}, target {target}, closest {hit}");
        }
    }
}

#[test]
fn sorted_by_decreasing_real_part() {
    let (_, _, sp) = spectrum("kite", 64);
    let v = sp.real_values();
    assert!(v.windows(2).all(|w| w[0] >= w[1]));
    assert!(v.iter().all(|x| x.abs() <= 0.5 + 1e-10));
}

#[test]
fn cluster_basis_is_orthonormal_and_mean_free() {
    let (c, ops, sp) = spectrum("ellipse:1,0.5", 128);
    let cl = extract_cluster(&sp, 1.0 / 6.0, 0.02, &ops.s, &c).unwrap();
    assert_eq!(cl.m(), 1);
    assert!((cl.lambdas[0] - 1.0 / 6.0).abs() < 1e-12);
    assert!(cl.mean_residuals[0] < 1e-10);
    assert!(cl.residuals[0] < 1e-10);
}

#[test]
fn cluster_errors() {
    let (c, ops, sp) = spectrum("ellipse:1,0.5", 64);
    assert!(matches!(extract_cluster(&sp, 0.3, 0.01, &ops.s, &c), Err(Error::EmptyCluster { .. })));
    assert!(matches!(extract_cluster(&sp, 1.0 / 6.0, 0.0, &ops.s, &c), Err(Error::InvalidArgument(_))));
    assert!(matches!(extract_cluster(&sp, 0.05, 0.1, &ops.s, &c), Err(Error::NotIsolated { .. })));
    assert!(matches!(extract_cluster(&sp, 1.0 / 6.0 + 0.05, 0.05, &ops.s, &c), Err(Error::NotIsolated { .. })));
    assert!(extract_cluster(&sp, 1.0 / 6.0, 0.01, &ops.kstar, &c).is_err());
}

#[test]
fn riesz_projector_has_cluster_rank() {
    let (c, ops, sp) = spectrum("ellipse:1,0.5", 96);
    let cl = extract_cluster(&sp, -1.0 / 18.0, 0.01, &ops.s, &c).unwrap();
    let (center, r, _) = cluster_contour(&sp, &cl);
    let p = riesz_projector(&ops.kstar, center, r, 64).unwrap();
    assert!(p.idempotency_residual() < 1e-8);
    assert_eq!(p.rank(1e-6).unwrap(), 1);
    let back = p.apply(&cl.basis[0]).unwrap();
    let dev = back.iter().zip(&cl.basis[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(dev < 1e-8);
}

#[test]
fn plasmonic_permittivity() {
    assert_eq!(plasmonic_eps(0.0).unwrap(), 1.0);
    assert!((plasmonic_eps(1.0 / 6.0).unwrap() - 2.0).abs() < 1e-15);
    assert!((plasmonic_eps(-1.0 / 6.0).unwrap() - 0.5).abs() < 1e-15);
    assert!(matches!(plasmonic_eps(0.5), Err(Error::HalfEigenvalue)));
}
