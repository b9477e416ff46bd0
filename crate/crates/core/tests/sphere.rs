use num_rational::Ratio;

use np_shape::sphere3d::{
    gauss_legendre, legendre, np_eigenvalue, random_band_limited, single_layer_multiplier, sphere_cluster_derivative,
    HarmonicBasis, SphereGrid,
};
use np_shape::Error;

/// Number of monomials of exact degree k in n variables, by enumeration.
fn monomials(n: usize, k: usize) -> u64 {
    if n == 1 {
        return 1;
    }
    (0..=k).map(|first| monomials(n - 1, k - first)).sum()
}

#[test]
fn three_dimensional_eigenvalues() {
    for k in 0..=12u32 {
        let e = np_eigenvalue(3, k).unwrap();
        assert_eq!(e.lambda, Ratio::new(1, 2 * (2 * k as i64 + 1)));
        assert_eq!(e.multiplicity, 2 * k as u64 + 1);
    }
}

#[test]
fn multiplicity_counts_harmonic_polynomials() {
    for n in 3..=7u32 {
        for k in 0..=8u32 {
            let nu = n as usize;
            let ku = k as usize;
            let want = monomials(nu, ku) - if ku >= 2 { monomials(nu, ku - 2) } else { 0 };
            assert_eq!(np_eigenvalue(n, k).unwrap().multiplicity, want, "n = {n}, k = {k}");
        }
    }
}

#[test]
fn eigenvalues_decrease_towards_zero() {
    for n in 3..=6u32 {
        let v: Vec<Ratio<i64>> = (0..20).map(|k| np_eigenvalue(n, k).unwrap().lambda).collect();
        assert_eq!(v[0], Ratio::new(1, 2));
        assert!(v.windows(2).all(|w| w[0] > w[1]));
    }
    assert!(matches!(np_eigenvalue(2, 1), Err(Error::InvalidArgument(_))));
}

#[test]
fn gauss_legendre_is_exact_for_low_degree() {
    let (x, w) = gauss_legendre(6);
    for p in 0..12 {
        let q: f64 = x.iter().zip(&w).map(|(a, b)| a.powi(p) * b).sum();
        let want = if p % 2 == 0 { 2.0 / (p as f64 + 1.0) } else { 0.0 };
        assert!((q - want).abs() < 1e-14, "degree {p}");
    }
}

#[test]
fn legendre_polynomials() {
    for t in [-0.9, -0.2, 0.0, 0.4, 1.0] {
        assert!((legendre(2, t) - 0.5 * (3.0 * t * t - 1.0)).abs() < 1e-15);
        assert!((legendre(3, t) - 0.5 * (5.0 * t * t * t - 3.0 * t)).abs() < 1e-15);
    }
    assert!((legendre(17, 1.0) - 1.0).abs() < 1e-14);
}

#[test]
fn single_layer_multiplier_is_reciprocal_odd() {
    for k in 0..8 {
        assert!((single_layer_multiplier(k) - 1.0 / (2 * k + 1) as f64).abs() < 1e-11, "k = {k}");
    }
}

#[test]
fn uniform_normal_field_moves_nothing() {
    // A uniform normal dilation of the unit sphere moves no eigenvalue.
    let grid = SphereGrid::new(24, 48).unwrap();
    let basis = HarmonicBasis::new(&grid, 3);
    let d = sphere_cluster_derivative(&grid, &basis, &vec![1.0; grid.len()]).unwrap();
    assert!(d.matrix.iter().flatten().all(|v| v.abs() < 1e-10));
}

#[test]
fn cluster_trace_vanishes_for_random_fields() {
    let grid = SphereGrid::new(24, 48).unwrap();
    for k in 1..=4 {
        let basis = HarmonicBasis::new(&grid, k);
        let q = random_band_limited(&grid, 6, 40 + k as u64);
        let d = sphere_cluster_derivative(&grid, &basis, &q).unwrap();
        let scale = q.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        assert!(d.trace.abs() < 1e-10 * scale, "k = {k}: trace {}", d.trace);
    }
}

#[test]
fn rejects_tiny_grids() {
    assert!(SphereGrid::new(1, 8).is_err());
    assert!(SphereGrid::new(8, 2).is_err());
}
