use np_shape::geometry2d::{build_curve, perturb, Curve, CurveKind, PerturbationField};
use np_shape::layer2d::LayerOperators;
use np_shape::shapederiv::{
    branch_derivatives, cluster_derivative_matrix, dlambda, pohozaev_lambda, symmetric_function, window_eigenvalues,
};
use np_shape::spectral::{extract_cluster, solve_spectrum, EigenCluster};
use np_shape::{Error, Vec2};

const D4_CLUSTER: f64 = 0.16033085261670812;

fn setup(spec: &str, n: usize, target: f64, delta: f64) -> (Curve, LayerOperators, EigenCluster) {
    let c = build_curve(&spec.parse::<CurveKind>().unwrap(), n).unwrap();
    let ops = LayerOperators::assemble(&c);
    let sp = solve_spectrum(&ops.kstar).unwrap();
    let cl = extract_cluster(&sp, target, delta, &ops.s, &c).unwrap();
    (c, ops, cl)
}

/// Sum over all h-subsets of the product of their members.
fn subset_sum(h: usize, v: &[f64]) -> f64 {
    (0u32..1 << v.len())
        .filter(|mask| mask.count_ones() as usize == h)
        .map(|mask| (0..v.len()).filter(|i| mask & (1 << i) != 0).map(|i| v[i]).product::<f64>())
        .sum()
}

#[test]
fn symmetric_functions_of_one_two_three() {
    let v = [1.0, 2.0, 3.0];
    assert_eq!(symmetric_function(1, &v).unwrap(), 6.0);
    assert_eq!(symmetric_function(2, &v).unwrap(), 11.0);
    assert_eq!(symmetric_function(3, &v).unwrap(), 6.0);
    assert!(matches!(symmetric_function(0, &v), Err(Error::OutOfRange { .. })));
    assert!(matches!(symmetric_function(4, &v), Err(Error::OutOfRange { .. })));
}

#[test]
fn symmetric_functions_match_subset_enumeration() {
    let v = [0.3, -1.2, 0.7, 2.5, -0.4, 0.9];
    for h in 1..=v.len() {
        let got = symmetric_function(h, &v).unwrap();
        assert!((got - subset_sum(h, &v)).abs() < 1e-12, "h = {h}");
    }
}

#[test]
fn simple_eigenvalue_derivative_matches_finite_difference() {
    let (c, ops, cl) = setup("ellipse:1,0.5", 128, 1.0 / 6.0, 0.02);
    let theta = PerturbationField::from_fn("bump", &c, |t, _| Vec2::new(0.3 * (2.0 * t).cos(), 0.2 * t.sin()));
    let cd = cluster_derivative_matrix(&c, &ops, &cl, &theta).unwrap();
    let h = 1e-4;
    let at = |t: f64| {
        let p = perturb(&c, &theta, t).unwrap();
        window_eigenvalues(&p, 1.0 / 6.0 - 0.02, 1.0 / 6.0 + 0.02).unwrap()[0]
    };
    let fd = (at(h) - at(-h)) / (2.0 * h);
    assert!((cd.trace() - fd).abs() < 1e-6 * fd.abs().max(1e-3), "formula {} vs fd {fd}", cd.trace());
    assert!((dlambda(&cd, 1).unwrap() - cd.trace()).abs() < 1e-15);
}

#[test]
fn dilation_leaves_eigenvalues_fixed() {
    let c = build_curve(&CurveKind::Kite, 128).unwrap();
    let target = solve_spectrum(&LayerOperators::assemble(&c).kstar).unwrap().real_values()[1];
    let (c, ops, cl) = setup("kite", 128, target, 1e-3);
    let cd = cluster_derivative_matrix(&c, &ops, &cl, &PerturbationField::dilation(&c)).unwrap();
    assert!(cd.max_abs() < 1e-9);
}

#[test]
fn d4_symmetric_field_keeps_the_pair_together() {
    let (c, ops, cl) = setup("star:1,0.2,4", 128, D4_CLUSTER, 0.01);
    assert_eq!(cl.m(), 2);
    let a: Vec<f64> = c.params().iter().map(|t| 1.0 + 0.5 * (4.0 * t).cos()).collect();
    let cd = cluster_derivative_matrix(&c, &ops, &cl, &PerturbationField::normal(&c, &a)).unwrap();
    let b = branch_derivatives(&cd).unwrap();
    assert!((b[0] - b[1]).abs() < 1e-8 * b[1].abs().max(1e-3), "branches {b:?}");
    assert!(cd.asymmetry() < 1e-12);
}

#[test]
fn quarter_turn_symmetric_field_splits_the_pair() {
    let (c, ops, cl) = setup("star:1,0.2,4", 128, D4_CLUSTER, 0.01);
    let a: Vec<f64> = c.params().iter().map(|t| (2.0 * t).cos()).collect();
    let cd = cluster_derivative_matrix(&c, &ops, &cl, &PerturbationField::normal(&c, &a)).unwrap();
    let b = branch_derivatives(&cd).unwrap();
    assert!((b[1] - b[0]).abs() > 1e-3, "branches {b:?}");
}

#[test]
fn pohozaev_recovers_ellipse_eigenvalues() {
    for target in [1.0 / 6.0, -1.0 / 6.0, 1.0 / 54.0] {
        let (c, ops, cl) = setup("ellipse:1,0.5", 128, target, 1e-3);
        for r in pohozaev_lambda(&c, &ops, &cl).unwrap() {
            assert!((r.lambda_recovered - target).abs() < 1e-9, "target {target}: {}", r.lambda_recovered);
        }
    }
}

#[test]
fn half_eigenvalue_takes_fast_path() {
    let (c, ops, cl) = setup("ellipse:1,0.5", 64, 0.5, 1e-3);
    let theta = PerturbationField::from_fn("wave", &c, |t, _| Vec2::new((3.0 * t).cos(), 0.0));
    let cd = cluster_derivative_matrix(&c, &ops, &cl, &theta).unwrap();
    assert!(cd.fast_path);
    assert_eq!(cd.max_abs(), 0.0);
}
