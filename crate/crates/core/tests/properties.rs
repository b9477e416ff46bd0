use std::f64::consts::PI;
use std::sync::OnceLock;

use proptest::prelude::*;

use np_shape::geometry2d::{build_curve, perturb, Curve, CurveKind, PerturbationField};
use np_shape::layer2d::LayerOperators;
use np_shape::shapederiv::{cluster_derivative_matrix, symmetric_function};
use np_shape::spectral::{extract_cluster, solve_spectrum, EigenCluster};
use np_shape::sphere3d::{np_eigenvalue, sphere_cluster_derivative, HarmonicBasis, SphereGrid};
use np_shape::Vec2;

struct Fixture {
    curve: Curve,
    ops: LayerOperators,
    cluster: EigenCluster,
}

fn ellipse() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let curve = build_curve(&CurveKind::Ellipse { a: 1.0, b: 0.5 }, 64).unwrap();
        let ops = LayerOperators::assemble(&curve);
        let sp = solve_spectrum(&ops.kstar).unwrap();
        let cluster = extract_cluster(&sp, 1.0 / 6.0, 0.02, &ops.s, &curve).unwrap();
        Fixture { curve, ops, cluster }
    })
}

fn sphere() -> &'static (SphereGrid, HarmonicBasis) {
    static S: OnceLock<(SphereGrid, HarmonicBasis)> = OnceLock::new();
    S.get_or_init(|| {
        let grid = SphereGrid::new(16, 32).unwrap();
        let basis = HarmonicBasis::new(&grid, 2);
        (grid, basis)
    })
}

fn trig_field(c: &Curve, coef: &[f64; 4]) -> PerturbationField {
    let [a, b, p, q] = *coef;
    PerturbationField::from_fn("trig", c, move |t, _| {
        Vec2::new(a * (2.0 * t).cos() + b * t.sin(), p * (3.0 * t).sin() + q * t.cos())
    })
}

fn d_a(f: &Fixture, theta: &PerturbationField) -> f64 {
    cluster_derivative_matrix(&f.curve, &f.ops, &f.cluster, theta).unwrap().d_a[0][0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ellipse_area_is_pi_ab(a in 0.3f64..3.0, b in 0.3f64..3.0) {
        let c = build_curve(&CurveKind::Ellipse { a, b }, 128).unwrap();
        prop_assert!((c.area() - PI * a * b).abs() < 1e-11 * a * b);
    }

    #[test]
    fn similarity_scales_area_and_length(s in 0.2f64..5.0, angle in -PI..PI, dx in -4.0f64..4.0, dy in -4.0f64..4.0) {
        let c = build_curve(&CurveKind::Kite, 64).unwrap();
        let m = c.similarity(s, angle, Vec2::new(dx, dy)).unwrap();
        prop_assert!((m.area() - s * s * c.area()).abs() < 1e-11 * s * s);
        prop_assert!((m.length() - s * c.length()).abs() < 1e-11 * s);
    }

    #[test]
    fn dilations_compose(s in -0.4f64..0.4, t in -0.4f64..0.4) {
        let c = build_curve(&CurveKind::Kite, 32).unwrap();
        let once = perturb(&c, &PerturbationField::dilation(&c), s).unwrap();
        let twice = perturb(&once, &PerturbationField::dilation(&once), t).unwrap();
        let direct = perturb(&c, &PerturbationField::dilation(&c), (1.0 + s) * (1.0 + t) - 1.0).unwrap();
        for (a, b) in twice.nodes().iter().zip(direct.nodes()) {
            prop_assert!((*a - *b).norm() < 1e-13);
        }
    }

    #[test]
    fn symmetric_function_of_equal_values(x in -2.0f64..2.0, m in 1usize..8) {
        let v = vec![x; m];
        for h in 1..=m {
            let binom = (0..h).fold(1.0, |r, i| r * (m - i) as f64 / (i + 1) as f64);
            let want = binom * x.powi(h as i32);
            prop_assert!((symmetric_function(h, &v).unwrap() - want).abs() < 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn sphere_eigenvalue_formula(n in 3u32..12, k in 0u32..40) {
        let e = np_eigenvalue(n, k).unwrap();
        let lam = *e.lambda.numer() as f64 / *e.lambda.denom() as f64;
        prop_assert!((lam - (n as f64 - 2.0) / (2.0 * (2.0 * k as f64 + n as f64 - 2.0))).abs() < 1e-15);
        prop_assert!(lam > 0.0 && lam <= 0.5);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn cluster_derivative_is_linear_in_the_field(
        u in prop::array::uniform4(-1.0f64..1.0),
        v in prop::array::uniform4(-1.0f64..1.0),
        s in -2.0f64..2.0,
    ) {
        let f = ellipse();
        let w = [u[0] + s * v[0], u[1] + s * v[1], u[2] + s * v[2], u[3] + s * v[3]];
        let lhs = d_a(f, &trig_field(&f.curve, &w));
        let rhs = d_a(f, &trig_field(&f.curve, &u)) + s * d_a(f, &trig_field(&f.curve, &v));
        prop_assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn tangential_fields_do_not_move_the_cluster(c1 in -1.0f64..1.0, c2 in -1.0f64..1.0, k in 1usize..6) {
        let f = ellipse();
        let g: Vec<f64> = f.curve.params().iter().map(|t| c1 * (k as f64 * t).cos() + c2 * (k as f64 * t).sin()).collect();
        prop_assert!(d_a(f, &PerturbationField::tangential(&f.curve, &g)).abs() < 1e-9);
    }

    #[test]
    fn sphere_cluster_derivative_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let (grid, basis) = sphere();
        let q1: Vec<f64> = (0..grid.len()).map(|p| grid.cos_theta[p / grid.n_phi]).collect();
        let q2: Vec<f64> = (0..grid.len()).map(|p| grid.phi[p % grid.n_phi].cos()).collect();
        let mix: Vec<f64> = q1.iter().zip(&q2).map(|(x, y)| a * x + b * y).collect();
        let d1 = sphere_cluster_derivative(grid, basis, &q1).unwrap().matrix;
        let d2 = sphere_cluster_derivative(grid, basis, &q2).unwrap().matrix;
        let dm = sphere_cluster_derivative(grid, basis, &mix).unwrap().matrix;
        for i in 0..basis.dim() {
            for j in 0..basis.dim() {
                prop_assert!((dm[i][j] - a * d1[i][j] - b * d2[i][j]).abs() < 1e-10);
            }
        }
    }
}
