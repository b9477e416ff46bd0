use std::f64::consts::PI;

use np_shape::geometry2d::{build_curve, Curve, CurveKind};
use np_shape::layer2d::{eval_potential, EvalStatus, LayerOperators, PotentialKind};
use np_shape::spectral::max_abs_diff;
use np_shape::{Error, Vec2};

fn curve(spec: &str, n: usize) -> Curve {
    build_curve(&spec.parse::<CurveKind>().unwrap(), n).unwrap()
}

fn max_dev(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn single_layer_on_circle_matches_fourier_multipliers() {
    let r: f64 = 1.8;
    let c = curve("circle:1.8", 64);
    let ops = LayerOperators::assemble(&c);
    let s1 = ops.s.apply(&vec![1.0; c.len()]).unwrap();
    assert!(max_dev(&s1, &vec![-r * r.ln(); c.len()]) < 1e-12);
    for n in [1usize, 2, 5, 11] {
        let f: Vec<f64> = c.params().iter().map(|t| (n as f64 * t).cos()).collect();
        let want: Vec<f64> = f.iter().map(|v| r * v / (2.0 * n as f64)).collect();
        assert!(max_dev(&ops.s.apply(&f).unwrap(), &want) < 1e-12, "mode {n}");
    }
}

#[test]
fn kstar_on_circle_averages_the_density() {
    let c = curve("circle:0.6", 48);
    let ops = LayerOperators::assemble(&c);
    let f: Vec<f64> = c.params().iter().map(|t| 2.0 + (3.0 * t).sin()).collect();
    // K*[f] = (1 / (4 pi r)) int f ds = mean(f) / 2.
    assert!(max_dev(&ops.kstar.apply(&f).unwrap(), &vec![1.0; c.len()]) < 1e-13);
}

#[test]
fn calderon_identity_on_kite() {
    let c = curve("kite", 128);
    let ops = LayerOperators::assemble(&c);
    let ks = ops.k.matrix() * ops.s.matrix();
    let sk = ops.s.matrix() * ops.kstar.matrix();
    assert!(max_abs_diff(&ks, &sk) < 1e-8);
}

#[test]
fn double_layer_of_one_is_indicator() {
    let c = curve("ellipse:1,0.6", 128);
    let one = vec![1.0; c.len()];
    let inside = eval_potential(&c, &one, Vec2::new(0.2, -0.1), PotentialKind::Double).unwrap();
    let outside = eval_potential(&c, &one, Vec2::new(2.0, 1.0), PotentialKind::Double).unwrap();
    assert!((inside.value - 1.0).abs() < 1e-12);
    assert!(outside.value.abs() < 1e-12);
    assert_eq!(inside.status, EvalStatus::Ok);
}

#[test]
fn single_layer_potential_far_field_is_logarithmic() {
    let c = curve("kite", 64);
    let psi: Vec<f64> = c.params().iter().map(|t| 1.0 + 0.3 * t.cos()).collect();
    let total = c.integrate(&psi);
    let x = Vec2::new(400.0, 300.0);
    let v = eval_potential(&c, &psi, x, PotentialKind::Single).unwrap().value;
    let far = -total * x.norm().ln() / (2.0 * PI);
    assert!((v - far).abs() < 1e-2 * far.abs());
}

#[test]
fn flags_points_near_the_boundary() {
    let c = curve("circle:1", 32);
    let psi = vec![1.0; c.len()];
    let r = eval_potential(&c, &psi, Vec2::new(1.0 + 1e-3, 0.0), PotentialKind::Single).unwrap();
    assert_eq!(r.status, EvalStatus::NearBoundary);
}

#[test]
fn rejects_mismatched_density() {
    let c = curve("circle:1", 32);
    let ops = LayerOperators::assemble(&c);
    assert!(matches!(ops.s.apply(&[1.0; 31]), Err(Error::LengthMismatch { expected: 32, got: 31 })));
    assert!(eval_potential(&c, &[1.0; 3], Vec2::ZERO, PotentialKind::Single).is_err());
}
