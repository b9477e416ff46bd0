//! Closed-form Neumann-Poincare data on the unit sphere: eigenvalues and
//! multiplicities in any dimension, and for the two-sphere in R^3 the
//! spherical-harmonic identities behind the criticality of the ball.

use std::f64::consts::PI;
use std::io::Write;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Eigenvalue (n - 2) / (2 (2k + n - 2)) of K* on the unit sphere in R^n,
/// with the dimension of degree-k harmonics as its multiplicity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SphereEigen {
    pub lambda: Ratio<i64>,
    pub multiplicity: u64,
}

fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r
}

pub fn np_eigenvalue(n: u32, k: u32) -> Result<SphereEigen> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!("sphere dimension must be at least 3, got {n}")));
    }
    let (n64, k64) = (n as u64, k as u64);
    let lambda = Ratio::new((n as i64) - 2, 2 * (2 * k as i64 + n as i64 - 2));
    let multiplicity = match k {
        0 => 1,
        1 => n64,
        _ => (binomial(k64 + n64 - 1, n64 - 1) - binomial(k64 + n64 - 3, n64 - 1)) as u64,
    };
    Ok(SphereEigen { lambda, multiplicity })
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for l in 2..=m {
                let p2 = ((2 * l - 1) as f64 * z * p1 - (l - 1) as f64 * p0) / l as f64;
                p0 = p1;
                p1 = p2;
            }
            let pm = if m == 1 { 1.0 } else { p0 };
            let p = if m == 0 { 1.0 } else { p1 };
            dp = m as f64 * (z * p - pm) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        x[m - 1 - i] = -z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[m - 1 - i] = w[i];
    }
    (x, w)
}

/// Product quadrature on the unit sphere: Gauss-Legendre in cos(polar angle)
/// times the trapezoid rule in azimuth. Node p = a * n_phi + b.
#[derive(Clone, Debug)]
pub struct SphereGrid {
    pub n_theta: usize,
    pub n_phi: usize,
    pub cos_theta: Vec<f64>,
    pub phi: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SphereGrid {
    pub fn new(n_theta: usize, n_phi: usize) -> Result<Self> {
        if n_theta < 2 || n_phi < 4 {
            return Err(Error::InvalidArgument("sphere grid needs at least 2 x 4 nodes".into()));
        }
        let (x, wx) = gauss_legendre(n_theta);
        let phi: Vec<f64> = (0..n_phi).map(|b| 2.0 * PI * b as f64 / n_phi as f64).collect();
        let dphi = 2.0 * PI / n_phi as f64;
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        for a in 0..n_theta {
            for _ in 0..n_phi {
                weights.push(wx[a] * dphi);
            }
        }
        Ok(SphereGrid { n_theta, n_phi, cos_theta: x, phi, weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
    /// Polar and azimuthal angle of node p.
    pub fn angles(&self, p: usize) -> (f64, f64) {
        (self.cos_theta[p / self.n_phi].acos(), self.phi[p % self.n_phi])
    }
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.weights).map(|(a, b)| a * b).sum()
    }

    /// Writes columns theta_polar, phi_azimuth, weight, value.
    pub fn write_csv<W: Write>(&self, field: &[f64], out: W) -> Result<()> {
        if field.len() != self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), got: field.len() });
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["theta_polar", "phi_azimuth", "weight", "value"])?;
        for (p, v) in field.iter().enumerate() {
            let (th, ph) = self.angles(p);
            w.write_record([th, ph, self.weights[p], *v].iter().map(|x| format!("{x:e}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Orthonormal associated Legendre functions without the Condon-Shortley
/// phase, P(l, m) for 0 <= m <= l <= lmax, and their polar-angle
/// derivatives, at x = cos(theta) with sin(theta) > 0.
struct Legendre {
    lmax: usize,
    p: Vec<f64>,
    dp: Vec<f64>,
}

impl Legendre {
    fn idx(l: usize, m: usize) -> usize {
        l * (l + 1) / 2 + m
    }

    fn new(lmax: usize, x: f64) -> Self {
        let s = (1.0 - x * x).sqrt();
        let size = Self::idx(lmax, lmax) + 1;
        let mut p = vec![0.0; size];
        p[0] = 1.0 / (4.0 * PI).sqrt();
        for m in 1..=lmax {
            let mf = m as f64;
            p[Self::idx(m, m)] = ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s * p[Self::idx(m - 1, m - 1)];
        }
        for m in 0..lmax {
            p[Self::idx(m + 1, m)] = (2.0 * m as f64 + 3.0).sqrt() * x * p[Self::idx(m, m)];
        }
        for m in 0..=lmax {
            for l in m + 2..=lmax {
                let (lf, mf) = (l as f64, m as f64);
                let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
                let b = (((lf - 1.0).powi(2) - mf * mf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt();
                p[Self::idx(l, m)] = a * (x * p[Self::idx(l - 1, m)] - b * p[Self::idx(l - 2, m)]);
            }
        }
        let mut dp = vec![0.0; size];
        for l in 0..=lmax {
            for m in 0..=l {
                let (lf, mf) = (l as f64, m as f64);
                let prev = if l > m {
                    ((2.0 * lf + 1.0) * (lf * lf - mf * mf) / (2.0 * lf - 1.0)).sqrt() * p[Self::idx(l - 1, m)]
                } else {
                    0.0
                };
                dp[Self::idx(l, m)] = -(-lf * x * p[Self::idx(l, m)] + prev) / s;
            }
        }
        Legendre { lmax, p, dp }
    }

    fn get(&self, l: usize, m: usize) -> (f64, f64) {
        debug_assert!(l <= self.lmax);
        let i = Self::idx(l, m);
        (self.p[i], self.dp[i])
    }
}

/// The 2k + 1 real orthonormal spherical harmonics of degree k on a grid,
/// ordered m = -k..=k, with their surface-gradient components.
#[derive(Clone, Debug)]
pub struct HarmonicBasis {
    pub k: usize,
    /// values[i][p]
    pub values: Vec<Vec<f64>>,
    /// Polar component d Y / d theta.
    pub grad_theta: Vec<Vec<f64>>,
    /// Azimuthal component (1 / sin theta) d Y / d phi.
    pub grad_phi: Vec<Vec<f64>>,
}

impl HarmonicBasis {
    pub fn new(grid: &SphereGrid, k: usize) -> Self {
        let d = 2 * k + 1;
        let np = grid.len();
        let mut values = vec![vec![0.0; np]; d];
        let mut grad_theta = vec![vec![0.0; np]; d];
        let mut grad_phi = vec![vec![0.0; np]; d];
        let r2 = std::f64::consts::SQRT_2;
        for a in 0..grid.n_theta {
            let x = grid.cos_theta[a];
            let s = (1.0 - x * x).sqrt();
            let leg = Legendre::new(k, x);
            for b in 0..grid.n_phi {
                let p = a * grid.n_phi + b;
                let ph = grid.phi[b];
                for (i, m) in (-(k as i64)..=k as i64).enumerate() {
                    let am = m.unsigned_abs() as usize;
                    let (pl, dpl) = leg.get(k, am);
                    let mf = am as f64;
                    let (val, dth, dph) = if m == 0 {
                        (pl, dpl, 0.0)
                    } else if m > 0 {
                        let (sn, cs) = (mf * ph).sin_cos();
                        (r2 * pl * cs, r2 * dpl * cs, -r2 * pl * mf * sn / s)
                    } else {
                        let (sn, cs) = (mf * ph).sin_cos();
                        (r2 * pl * sn, r2 * dpl * sn, r2 * pl * mf * cs / s)
                    };
                    values[i][p] = val;
                    grad_theta[i][p] = dth;
                    grad_phi[i][p] = dph;
                }
            }
        }
        HarmonicBasis { k, values, grad_theta, grad_phi }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// |grad_S Y_i|^2 at node p.
    pub fn grad_sq(&self, i: usize, p: usize) -> f64 {
        self.grad_theta[i][p].powi(2) + self.grad_phi[i][p].powi(2)
    }

    fn grad_dot(&self, i: usize, j: usize, p: usize) -> f64 {
        self.grad_theta[i][p] * self.grad_theta[j][p] + self.grad_phi[i][p] * self.grad_phi[j][p]
    }

    /// Normal derivative on the unit sphere of the solid harmonic
    /// r^k Y_i, by a Richardson-extrapolated central difference in r.
    pub fn solid_normal_derivative(&self, i: usize, p: usize) -> f64 {
        let y = self.values[i][p];
        let k = self.k as i32;
        let q = |h: f64| ((1.0 + h).powi(k) - (1.0 - h).powi(k)) / (2.0 * h) * y;
        let (h1, h2) = (1e-3, 5e-4);
        (4.0 * q(h2) - q(h1)) / 3.0
    }

    /// max |<Y_i, Y_j> - delta_ij| and max |<grad Y_i, grad Y_j> - k(k+1) delta_ij|.
    pub fn orthonormality(&self, grid: &SphereGrid) -> (f64, f64) {
        let d = self.dim();
        let kk = (self.k * (self.k + 1)) as f64;
        let (mut e0, mut e1): (f64, f64) = (0.0, 0.0);
        for i in 0..d {
            for j in 0..d {
                let delta = if i == j { 1.0 } else { 0.0 };
                let mut g0 = 0.0;
                let mut g1 = 0.0;
                for p in 0..grid.len() {
                    g0 += grid.weights[p] * self.values[i][p] * self.values[j][p];
                    g1 += grid.weights[p] * self.grad_dot(i, j, p);
                }
                e0 = e0.max((g0 - delta).abs());
                e1 = e1.max((g1 - kk * delta).abs());
            }
        }
        (e0, e1)
    }
}

fn check_grid(grid: &SphereGrid, basis: &HarmonicBasis) -> Result<()> {
    if basis.values.first().map(|v| v.len()) != Some(grid.len()) {
        return Err(Error::LengthMismatch { expected: grid.len(), got: basis.values.first().map_or(0, |v| v.len()) });
    }
    Ok(())
}

/// sup over nodes of |sum_i Y_i^2 - (2k + 1) / (4 pi)|.
pub fn unsold_check(grid: &SphereGrid, basis: &HarmonicBasis) -> Result<f64> {
    check_grid(grid, basis)?;
    let target = basis.dim() as f64 / (4.0 * PI);
    Ok((0..grid.len()).map(|p| (basis.values.iter().map(|y| y[p] * y[p]).sum::<f64>() - target).abs()).fold(0.0, f64::max))
}

/// Pointwise deviations of sum |grad_S Y_i|^2 = k(k+1) sum Y_i^2 and
/// sum (nu . grad P_i)^2 = k^2 sum Y_i^2.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GradientDeviation {
    pub surface_gradient: f64,
    pub normal_derivative: f64,
}

pub fn gradient_identities(grid: &SphereGrid, basis: &HarmonicBasis) -> Result<GradientDeviation> {
    check_grid(grid, basis)?;
    let k = basis.k as f64;
    let d = basis.dim();
    let mut out = GradientDeviation { surface_gradient: 0.0, normal_derivative: 0.0 };
    for p in 0..grid.len() {
        let sy: f64 = (0..d).map(|i| basis.values[i][p].powi(2)).sum();
        let sg: f64 = (0..d).map(|i| basis.grad_sq(i, p)).sum();
        let sn: f64 = (0..d).map(|i| basis.solid_normal_derivative(i, p).powi(2)).sum();
        out.surface_gradient = out.surface_gradient.max((sg - k * (k + 1.0) * sy).abs());
        out.normal_derivative = out.normal_derivative.max((sn - k * k * sy).abs());
    }
    Ok(out)
}

/// The (theta . nu)-weighted matrix of the cluster derivative integrand for
/// the degree-k eigenspace, and its trace.
#[derive(Clone, Debug, Serialize)]
pub struct SphereClusterDerivative {
    pub k: usize,
    pub matrix: Vec<Vec<f64>>,
    pub trace: f64,
    pub max_off_diagonal: f64,
}

/// Entries int q (-grad Y_i . grad Y_j + eps (nu . grad P_i)(nu . grad P_j)),
/// eps = (1/2 + lambda_k) / (1/2 - lambda_k) = (k + 1) / k. Degree 0 is the
/// 1/2 eigenvalue and returns zero.
pub fn sphere_cluster_derivative(grid: &SphereGrid, basis: &HarmonicBasis, q: &[f64]) -> Result<SphereClusterDerivative> {
    check_grid(grid, basis)?;
    if q.len() != grid.len() {
        return Err(Error::LengthMismatch { expected: grid.len(), got: q.len() });
    }
    let k = basis.k;
    let d = basis.dim();
    if k == 0 {
        return Ok(SphereClusterDerivative { k, matrix: vec![vec![0.0]], trace: 0.0, max_off_diagonal: 0.0 });
    }
    let eig = np_eigenvalue(3, k as u32)?;
    let lam = *eig.lambda.numer() as f64 / *eig.lambda.denom() as f64;
    let eps = (0.5 + lam) / (0.5 - lam);
    let kf = k as f64;
    let mut matrix = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in i..d {
            let mut s = 0.0;
            for p in 0..grid.len() {
                let dn = kf * kf * basis.values[i][p] * basis.values[j][p];
                s += grid.weights[p] * q[p] * (-basis.grad_dot(i, j, p) + eps * dn);
            }
            matrix[i][j] = s;
            matrix[j][i] = s;
        }
    }
    let trace = (0..d).map(|i| matrix[i][i]).sum();
    let mut max_off_diagonal: f64 = 0.0;
    for (i, row) in matrix.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if i != j {
                max_off_diagonal = max_off_diagonal.max(v.abs());
            }
        }
    }
    Ok(SphereClusterDerivative { k, matrix, trace, max_off_diagonal })
}

/// Random combination of harmonics of degree <= lmax with coefficients
/// uniform in [-1, 1], reproducible from the seed.
pub fn random_band_limited(grid: &SphereGrid, lmax: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = vec![0.0; grid.len()];
    for l in 0..=lmax {
        let b = HarmonicBasis::new(grid, l);
        for y in &b.values {
            let c: f64 = rng.random_range(-1.0..1.0);
            for (a, v) in f.iter_mut().zip(y) {
                *a += c * v;
            }
        }
    }
    f
}

/// Legendre polynomial P_k(t).
pub fn legendre(k: usize, t: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, t);
    if k == 0 {
        return 1.0;
    }
    for l in 2..=k {
        let p2 = ((2 * l - 1) as f64 * t * p1 - (l - 1) as f64 * p0) / l as f64;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || (depth < 46 && delta.abs() <= 15.0 * tol) {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Eigenvalue of the unit-sphere single layer on degree-k harmonics:
/// (1/2) int_{-1}^{1} P_k(t) / sqrt(2 - 2t) dt. The substitution
/// t = 1 - v^2 / 2 removes the endpoint singularity.
pub fn single_layer_multiplier(k: usize) -> f64 {
    0.5 * adaptive_simpson(&|v: f64| legendre(k, 1.0 - 0.5 * v * v), 0.0, 2.0, 1e-15)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FunkHeckeResidual {
    pub k: usize,
    /// |(2k + 1) s_k - 1| where S[Y] = s_k Y.
    pub single_layer: f64,
    /// |(1/2 - k s_k) - lambda_k|, the K* eigenvalue recovered through the
    /// interior normal-derivative jump.
    pub kstar: f64,
}

pub fn funk_hecke_single_layer(k: usize) -> Result<FunkHeckeResidual> {
    let s = single_layer_multiplier(k);
    let eig = np_eigenvalue(3, k as u32)?;
    let lam = *eig.lambda.numer() as f64 / *eig.lambda.denom() as f64;
    Ok(FunkHeckeResidual { k, single_layer: ((2 * k + 1) as f64 * s - 1.0).abs(), kstar: ((0.5 - k as f64 * s) - lam).abs() })
}
