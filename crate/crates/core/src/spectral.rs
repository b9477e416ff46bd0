//! Spectrum of the discretized K*, eigenvalue clusters with bases that are
//! orthonormal in the S-weighted product, Riesz projectors, and the
//! transmission (plasmonic) reformulation.

use std::f64::consts::PI;

use faer::linalg::solvers::Solve;
use faer::{c64, Mat, Side as MatSide};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry2d::Curve;
use crate::layer2d::{matvec, DiscreteOperator, NearField, OperatorKind, PotentialKind, Side, NEAR_FIELD_FACTOR};

/// Eigenvalues whose imaginary part exceeds this are flagged.
pub const IMAG_TOL: f64 = 1e-8;

/// Full eigen-decomposition of a discretized K*.
#[derive(Clone, Debug)]
pub struct Spectrum {
    kstar: DiscreteOperator,
    values: Vec<c64>,
    vectors: Mat<c64>,
    flagged: Vec<usize>,
}

pub fn solve_spectrum(kstar: &DiscreteOperator) -> Result<Spectrum> {
    kstar.expect(OperatorKind::Kstar)?;
    let n = kstar.len();
    let eig = kstar.matrix().eigen().map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let s = eig.S().column_vector();
    let u = eig.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        s[b].re
            .partial_cmp(&s[a].re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(s[b].im.partial_cmp(&s[a].im).unwrap_or(std::cmp::Ordering::Equal))
    });
    let values: Vec<c64> = order.iter().map(|&k| s[k]).collect();
    let vectors = Mat::from_fn(n, n, |i, j| u[(i, order[j])]);
    let flagged = values.iter().enumerate().filter(|(_, v)| v.im.abs() > IMAG_TOL).map(|(i, _)| i).collect();
    Ok(Spectrum { kstar: kstar.clone(), values, vectors, flagged })
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
    pub fn values(&self) -> &[c64] {
        &self.values
    }
    /// Real parts, sorted descending.
    pub fn real_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }
    /// Indices of eigenvalues with a non-negligible imaginary part.
    pub fn flagged(&self) -> &[usize] {
        &self.flagged
    }
    pub fn vectors(&self) -> &Mat<c64> {
        &self.vectors
    }
    pub fn kstar(&self) -> &DiscreteOperator {
        &self.kstar
    }
    /// Real part of the j-th eigenvector.
    pub fn vector_re(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.vectors[(i, j)].re).collect()
    }
}

/// sum_i w_i (S f)_i g_i, the discrete S-weighted product. On a perturbed
/// curve the weights carry the area-element Jacobian.
pub fn sigma_s_inner(s: &DiscreteOperator, f: &[f64], g: &[f64]) -> Result<f64> {
    s.expect(OperatorKind::S)?;
    let sf = s.apply(f)?;
    Ok(sf.iter().zip(g).zip(s.weights()).map(|((a, b), w)| a * b * w).sum())
}

fn l2_inner(w: &[f64], f: &[f64], g: &[f64]) -> f64 {
    f.iter().zip(g).zip(w).map(|((a, b), c)| a * b * c).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Orthonormal in the S-weighted product.
    SigmaS,
    /// Weighted L2 fallback, used only for the 1/2 eigenvalue when S is not
    /// positive on constants.
    L2,
}

/// A group of eigenvalues inside (lambda_bar - delta, lambda_bar + delta)
/// and an orthonormal basis of their eigenspace.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenCluster {
    pub lambda_bar: f64,
    pub delta: f64,
    /// Ascending.
    pub lambdas: Vec<f64>,
    pub basis: Vec<Vec<f64>>,
    /// ||K* mu_j - lambda_j mu_j|| / ||mu_j|| (Euclidean).
    pub residuals: Vec<f64>,
    /// |int mu_j| / ||mu_j||_{L2(boundary)}.
    pub mean_residuals: Vec<f64>,
    pub normalization: Normalization,
}

impl EigenCluster {
    pub fn m(&self) -> usize {
        self.basis.len()
    }
    pub fn mean_lambda(&self) -> f64 {
        self.lambdas.iter().sum::<f64>() / self.lambdas.len() as f64
    }
}

fn targets_half(target: f64) -> bool {
    (target - 0.5).abs() < 1e-6
}

/// Selects the eigenvalues with |Re lambda - target| < delta and builds an
/// orthonormal eigenbasis for them.
pub fn extract_cluster(spectrum: &Spectrum, target: f64, delta: f64, s: &DiscreteOperator, c: &Curve) -> Result<EigenCluster> {
    s.expect(OperatorKind::S)?;
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument("cluster radius must be positive".into()));
    }
    let n = spectrum.len();
    if c.len() != n || s.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: c.len() });
    }
    let (lo, hi) = (target - delta, target + delta);
    if lo <= 0.0 && 0.0 <= hi {
        return Err(Error::NotIsolated { lo, hi, intruder: 0.0 });
    }
    let half = targets_half(target);
    let mut members = Vec::new();
    for (k, v) in spectrum.values().iter().enumerate() {
        let d = (v.re - target).abs();
        if (d - delta).abs() <= 1e-3 * delta {
            return Err(Error::NotIsolated { lo, hi, intruder: v.re });
        }
        if d < delta {
            if !half && (v.re - 0.5).abs() < 1e-6 {
                return Err(Error::NotIsolated { lo, hi, intruder: v.re });
            }
            if v.im.abs() > IMAG_TOL {
                return Err(Error::ComplexEigenvalue(v.re));
            }
            members.push(k);
        }
    }
    if members.is_empty() {
        return Err(Error::EmptyCluster { lo, hi });
    }
    let m = members.len();
    let w = c.weights();

    // Real spanning set from the (possibly complex-scaled) eigenvectors,
    // reduced to m vectors by pivoted Gram-Schmidt in weighted L2.
    let mut cands: Vec<Vec<f64>> = Vec::with_capacity(2 * m);
    for &k in &members {
        cands.push((0..n).map(|i| spectrum.vectors[(i, k)].re).collect());
        cands.push((0..n).map(|i| spectrum.vectors[(i, k)].im).collect());
    }
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
    for _ in 0..m {
        let (best, norm) =
            cands
                .iter()
                .enumerate()
                .map(|(i, v)| (i, l2_inner(w, v, v).sqrt()))
                .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a });
        if norm < 1e-8 {
            return Err(Error::RankDeficient { rank: basis.len(), expected: m });
        }
        let q: Vec<f64> = cands[best].iter().map(|v| v / norm).collect();
        for v in cands.iter_mut() {
            let p = l2_inner(w, v, &q);
            for (a, b) in v.iter_mut().zip(&q) {
                *a -= p * b;
            }
        }
        basis.push(q);
    }

    let kstar = spectrum.kstar();
    let sigma = |f: &[f64], g: &[f64]| sigma_s_inner(s, f, g);
    let gram = sym_from(m, |i, j| sigma(&basis[i], &basis[j]))?;
    let geig = gram.self_adjoint_eigen(MatSide::Lower).map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let gmin = (0..m).map(|i| geig.S().column_vector()[i]).fold(f64::INFINITY, f64::min);
    let normalization = if gmin > 1e-12 {
        Normalization::SigmaS
    } else if half {
        Normalization::L2
    } else {
        return Err(Error::Degenerate(gmin));
    };
    let inner = |f: &[f64], g: &[f64]| -> Result<f64> {
        match normalization {
            Normalization::SigmaS => sigma(f, g),
            Normalization::L2 => Ok(l2_inner(w, f, g)),
        }
    };
    // Orthonormalize: Gram = V diag(g) V^T, new basis B V diag(g)^{-1/2}.
    let (vals, vecs) = match normalization {
        Normalization::SigmaS => {
            ((0..m).map(|i| geig.S().column_vector()[i]).collect::<Vec<_>>(), Mat::from_fn(m, m, |i, j| geig.U()[(i, j)]))
        }
        Normalization::L2 => (vec![1.0; m], Mat::from_fn(m, m, |i, j| if i == j { 1.0 } else { 0.0 })),
    };
    let basis = combine(&basis, &vecs, Some(&vals));

    // Rayleigh-Ritz on the span: the compressed K* is symmetric in this product.
    let kb: Vec<Vec<f64>> = basis.iter().map(|b| kstar.apply(b)).collect::<Result<_>>()?;
    let a = sym_from(m, |i, j| Ok(0.5 * (inner(&kb[i], &basis[j])? + inner(&basis[i], &kb[j])?)))?;
    let aeig = a.self_adjoint_eigen(MatSide::Lower).map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let lambdas: Vec<f64> = (0..m).map(|i| aeig.S().column_vector()[i]).collect();
    let rot = Mat::from_fn(m, m, |i, j| aeig.U()[(i, j)]);
    let mut basis = combine(&basis, &rot, None);
    for b in basis.iter_mut() {
        let (imax, _) = b.iter().enumerate().fold((0, 0.0), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
        if b[imax] < 0.0 {
            b.iter_mut().for_each(|v| *v = -*v);
        }
    }

    let mut residuals = Vec::with_capacity(m);
    let mut mean_residuals = Vec::with_capacity(m);
    for (b, l) in basis.iter().zip(&lambdas) {
        let kb = kstar.apply(b)?;
        let r: f64 = kb.iter().zip(b).map(|(x, y)| (x - l * y).powi(2)).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        residuals.push(r / nb);
        mean_residuals.push(c.integrate(b).abs() / l2_inner(w, b, b).sqrt());
    }
    Ok(EigenCluster { lambda_bar: target, delta, lambdas, basis, residuals, mean_residuals, normalization })
}

fn sym_from(m: usize, f: impl Fn(usize, usize) -> Result<f64>) -> Result<Mat<f64>> {
    let mut a = Mat::<f64>::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let v = if i == j { f(i, i)? } else { 0.5 * (f(i, j)? + f(j, i)?) };
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    Ok(a)
}

/// Columns of the new basis are sum_i basis_i R_ij, optionally divided by
/// sqrt(scale_j).
fn combine(basis: &[Vec<f64>], r: &Mat<f64>, scale: Option<&[f64]>) -> Vec<Vec<f64>> {
    let m = basis.len();
    let n = basis[0].len();
    (0..m)
        .map(|j| {
            let f = scale.map_or(1.0, |s| 1.0 / s[j].sqrt());
            (0..n).map(|k| (0..m).map(|i| basis[i][k] * r[(i, j)]).sum::<f64>() * f).collect()
        })
        .collect()
}

/// Spectral projector for the part of the spectrum inside a circle,
/// computed by the trapezoid rule on the contour.
#[derive(Clone, Debug)]
pub struct RieszProjector {
    matrix: Mat<f64>,
    pub center: f64,
    pub radius: f64,
    pub points: usize,
    /// Largest imaginary part discarded when taking the real matrix.
    pub max_imag: f64,
}

/// Contour centre and two admissible radii for a cluster. The centre is
/// the mean cluster eigenvalue; the radii lie a half and a third of the way
/// from the farthest cluster member to the nearest eigenvalue outside it.
pub fn cluster_contour(sp: &Spectrum, cl: &EigenCluster) -> (f64, f64, f64) {
    let center = cl.mean_lambda();
    let inner = cl.lambdas.iter().map(|l| (l - center).abs()).fold(0.0, f64::max);
    let lo = cl.lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = cl.lambdas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let outer = sp
        .values()
        .iter()
        .filter(|v| v.im.abs() > IMAG_TOL || v.re < lo - 1e-12 || v.re > hi + 1e-12)
        .map(|v| (v.re - center).hypot(v.im))
        .fold(f64::INFINITY, f64::min);
    (center, 0.5 * (inner + outer), (2.0 * inner + outer) / 3.0)
}

pub fn riesz_projector(kstar: &DiscreteOperator, center: f64, radius: f64, points: usize) -> Result<RieszProjector> {
    kstar.expect(OperatorKind::Kstar)?;
    if !(radius > 0.0) || points < 4 || !points.is_multiple_of(2) {
        return Err(Error::InvalidArgument("contour needs a positive radius and an even number (>= 4) of points".into()));
    }
    let n = kstar.len();
    let a = kstar.matrix();
    let margin = radius / 10.0;
    let ev = a.eigenvalues().map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    for z in &ev {
        let d = ((z.re - center).hypot(z.im) - radius).abs();
        if d < margin {
            return Err(Error::ContourTooClose { eigenvalue: z.re, distance: d, margin });
        }
    }
    // Nodes k and M - k are complex conjugates, so only the upper half of
    // the circle is solved and the sum is doubled in real part.
    let half = points / 2;
    let terms: Vec<Mat<c64>> = (0..=half)
        .into_par_iter()
        .map(|k| {
            let phi = 2.0 * PI * k as f64 / points as f64;
            let e = c64::new(phi.cos(), phi.sin());
            let xi = c64::new(center, 0.0) + e * radius;
            let shifted = Mat::from_fn(n, n, |i, j| {
                let v = c64::new(a[(i, j)], 0.0);
                if i == j {
                    v - xi
                } else {
                    v
                }
            });
            let id = Mat::<c64>::identity(n, n);
            let r = shifted.partial_piv_lu().solve(&id);
            // -(1/(2 pi i)) * i r e^{i phi} * (2 pi / M) = -(r / M) e^{i phi}
            let coef = e * (-radius / points as f64);
            let mult = if k == 0 || k == half { 1.0 } else { 2.0 };
            Mat::from_fn(n, n, |i, j| r[(i, j)] * coef * mult)
        })
        .collect();
    let mut p = Mat::<f64>::zeros(n, n);
    let mut max_imag: f64 = 0.0;
    let mut acc = Mat::<c64>::zeros(n, n);
    for t in &terms {
        acc += t;
    }
    for i in 0..n {
        for j in 0..n {
            p[(i, j)] = acc[(i, j)].re;
        }
    }
    // The conjugate pairing makes the sum real by construction; report the
    // imaginary part of the unpaired end points, which must vanish.
    for k in [0, half] {
        for i in 0..n {
            for j in 0..n {
                max_imag = max_imag.max(terms[k][(i, j)].im.abs());
            }
        }
    }
    Ok(RieszProjector { matrix: p, center, radius, points, max_imag })
}

impl RieszProjector {
    pub fn matrix(&self) -> &Mat<f64> {
        &self.matrix
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.matrix.nrows() {
            return Err(Error::LengthMismatch { expected: self.matrix.nrows(), got: v.len() });
        }
        Ok(matvec(&self.matrix, v))
    }

    /// max |P^2 - P|.
    pub fn idempotency_residual(&self) -> f64 {
        let p2 = &self.matrix * &self.matrix;
        max_abs_diff(&p2, &self.matrix)
    }

    /// Number of singular values above `tol`.
    pub fn rank(&self, tol: f64) -> Result<usize> {
        let sv = self.matrix.singular_values().map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
        Ok(sv.iter().filter(|&&s| s > tol).count())
    }
}

pub fn max_abs_diff(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            m = m.max((a[(i, j)] - b[(i, j)]).abs());
        }
    }
    m
}

/// Permittivity ratio (1/2 + lambda) / (1/2 - lambda).
pub fn plasmonic_eps(lambda: f64) -> Result<f64> {
    if (lambda - 0.5).abs() < 1e-14 {
        return Err(Error::HalfEigenvalue);
    }
    Ok((0.5 + lambda) / (0.5 - lambda))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlasmonicReport {
    pub eps: Vec<f64>,
    /// max |u - v| over samples, per basis function.
    pub continuity: Vec<f64>,
    /// max |eps d_nu u + d_nu v| over samples, per basis function.
    pub flux: Vec<f64>,
    pub samples: Vec<usize>,
}

impl PlasmonicReport {
    pub fn max_residual(&self) -> f64 {
        self.continuity.iter().chain(&self.flux).cloned().fold(0.0, f64::max)
    }
}

/// Checks that u = S[mu] inside and v = S[mu] outside satisfy the
/// transmission conditions u = v and eps d_nu u + d_nu v = 0 at the sampled
/// nodes, with boundary traces extrapolated from off-boundary evaluations.
pub fn verify_plasmonic(c: &Curve, cluster: &EigenCluster, samples: &[usize]) -> Result<PlasmonicReport> {
    if samples.iter().any(|&i| i >= c.len()) {
        return Err(Error::InvalidArgument("sample index outside the curve".into()));
    }
    let near = NearField::new(c, NEAR_FIELD_FACTOR)?;
    let mut eps_all = Vec::new();
    let mut continuity = Vec::new();
    let mut flux = Vec::new();
    for (mu, &lambda) in cluster.basis.iter().zip(&cluster.lambdas) {
        let eps = plasmonic_eps(lambda)?;
        let fine = near.density(mu);
        let mut cmax: f64 = 0.0;
        let mut fmax: f64 = 0.0;
        for &i in samples {
            let nu = c.normal()[i];
            let pot = |x| near.potential(&fine, x, PotentialKind::Single);
            let grad = |x| near.gradient(&fine, x, PotentialKind::Single).dot(nu);
            let u = near.limit(c, i, Side::Interior, pot);
            let v = near.limit(c, i, Side::Exterior, pot);
            let du = near.limit(c, i, Side::Interior, grad);
            let dv = near.limit(c, i, Side::Exterior, grad);
            cmax = cmax.max((u - v).abs());
            fmax = fmax.max((eps * du + dv).abs());
        }
        eps_all.push(eps);
        continuity.push(cmax);
        flux.push(fmax);
    }
    Ok(PlasmonicReport { eps: eps_all, continuity, flux, samples: samples.to_vec() })
}
