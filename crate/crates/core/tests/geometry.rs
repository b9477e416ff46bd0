use std::f64::consts::PI;

use np_shape::geometry2d::{build_curve, perturb, surface_divergence, Curve, CurveKind, PerturbationField};
use np_shape::{Error, Vec2};

fn curve(spec: &str, n: usize) -> Curve {
    build_curve(&spec.parse::<CurveKind>().unwrap(), n).unwrap()
}

#[test]
fn ellipse_area_and_circle_length() {
    let e = curve("ellipse:1.3,0.4", 128);
    assert!((e.area() - PI * 1.3 * 0.4).abs() < 1e-13);
    let c = curve("circle:0.7", 64);
    assert!((c.length() - 2.0 * PI * 0.7).abs() < 1e-13);
}

#[test]
fn kite_area_from_green_formula() {
    // int x dy over t in [0, 2 pi] with x = cos t + 0.65 cos 2t - 0.65 and
    // dy = 1.5 cos t dt leaves only 1.5 int cos^2 t = 1.5 pi.
    let k = curve("kite", 256);
    assert!((k.area() - 1.5 * PI).abs() < 1e-12);
}

#[test]
fn star_area_from_polar_formula() {
    let k = curve("star:1,0.2,4,0.1,3", 128);
    let oracle = PI * 1.0 + 0.5 * PI * (0.2f64.powi(2) + 0.1f64.powi(2));
    assert!((k.area() - oracle).abs() < 1e-13);
}

#[test]
fn circle_geometry_is_exact() {
    let r = 2.5;
    let c = curve("circle:2.5", 32);
    for i in 0..c.len() {
        let x = c.nodes()[i];
        assert!((c.curvature()[i] - 1.0 / r).abs() < 1e-14);
        assert!((c.normal()[i] - x * (1.0 / r)).norm() < 1e-14);
        assert!((c.normal()[i].dot(c.tangent()[i])).abs() < 1e-15);
    }
}

#[test]
fn similarity_scales_area_length_and_curvature() {
    let k = curve("kite", 128);
    let s = 1.7;
    let m = k.similarity(s, 0.9, Vec2::new(-3.0, 2.0)).unwrap();
    assert!((m.area() - s * s * k.area()).abs() < 1e-11);
    assert!((m.length() - s * k.length()).abs() < 1e-11);
    for i in 0..k.len() {
        assert!((m.curvature()[i] - k.curvature()[i] / s).abs() < 1e-11);
    }
    assert!(matches!(k.similarity(0.0, 0.0, Vec2::ZERO), Err(Error::InvalidArgument(_))));
}

#[test]
fn dilation_perturbation_rescales_the_curve() {
    let e = curve("ellipse:1,0.5", 64);
    let t = 0.3;
    let p = perturb(&e, &PerturbationField::dilation(&e), t).unwrap();
    assert!((p.area() - (1.0 + t).powi(2) * e.area()).abs() < 1e-13);
    for (a, b) in p.nodes().iter().zip(e.nodes()) {
        assert!((*a - *b * (1.0 + t)).norm() < 1e-14);
    }
}

#[test]
fn surface_divergence_of_dilation_is_one() {
    let k = curve("kite", 64);
    let d = surface_divergence(&k, &PerturbationField::dilation(&k)).unwrap();
    assert!(d.iter().all(|v| (v - 1.0).abs() < 1e-12));
}

#[test]
fn rejects_bad_node_counts_and_shapes() {
    let kind: CurveKind = "ellipse:1,0.5".parse().unwrap();
    assert!(matches!(build_curve(&kind, 15), Err(Error::InvalidCurve(_))));
    assert!(matches!(build_curve(&kind, 8), Err(Error::InvalidCurve(_))));
    assert!(matches!(build_curve(&CurveKind::Circle { r: -1.0 }, 32), Err(Error::InvalidCurve(_))));
    assert!(matches!(build_curve(&CurveKind::star_cos(1.0, &[(3, 1.5)]), 64), Err(Error::InvalidCurve(_))));
}

#[test]
fn rejects_clockwise_samples() {
    let e = curve("ellipse:1,0.5", 32);
    let flip = |v: &[Vec2]| v.iter().map(|p| Vec2::new(p.x, -p.y)).collect::<Vec<_>>();
    let d1: Vec<Vec2> = e.params().iter().map(|t| Vec2::new(-t.sin(), 0.5 * t.cos())).collect();
    let d2: Vec<Vec2> = e.params().iter().map(|t| Vec2::new(-t.cos(), -0.5 * t.sin())).collect();
    let r = Curve::from_samples("mirror".into(), flip(e.nodes()), flip(&d1), flip(&d2));
    assert!(matches!(r, Err(Error::InvalidCurve(_))));
}

#[test]
fn parses_and_prints_curve_specs() {
    for spec in ["circle:1", "ellipse:1,0.5", "kite", "star:1,0.2,4"] {
        let k: CurveKind = spec.parse().unwrap();
        let again: CurveKind = k.to_string().parse().unwrap();
        assert_eq!(k, again);
    }
    for bad in ["square", "ellipse:1", "circle:x", "star:1,0.2"] {
        assert!(bad.parse::<CurveKind>().is_err(), "{bad} should not parse");
    }
}
