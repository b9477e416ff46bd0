//! Nystrom matrices for the Laplace layer operators on a [`Curve`] and
//! plain-quadrature evaluation of layer potentials off the boundary.
//!
//! Conventions: E(x) = -log|x| / (2 pi),
//! K[psi](x) = int nu(y) . grad E(x - y) psi(y) ds_y,
//! K*[psi](x) = -int nu(x) . grad E(x - y) psi(y) ds_y,
//! S[psi](x) = int E(x - y) psi(y) ds_y, T = nu . grad D.

use std::f64::consts::PI;
use std::io::Write;

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier;
use crate::geometry2d::{tangential_gradient, Curve};
use crate::vec2::Vec2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatorKind {
    S,
    K,
    Kstar,
    T,
}

impl OperatorKind {
    pub fn name(self) -> &'static str {
        match self {
            OperatorKind::S => "S",
            OperatorKind::K => "K",
            OperatorKind::Kstar => "Kstar",
            OperatorKind::T => "T",
        }
    }
}

/// Dense Nystrom matrix plus the quadrature weights of its host curve.
#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    kind: OperatorKind,
    matrix: Mat<f64>,
    weights: Vec<f64>,
}

impl DiscreteOperator {
    pub fn new(kind: OperatorKind, matrix: Mat<f64>, weights: Vec<f64>) -> Result<Self> {
        let n = weights.len();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::LengthMismatch { expected: n, got: matrix.nrows() });
        }
        Ok(DiscreteOperator { kind, matrix, weights })
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }
    pub fn matrix(&self) -> &Mat<f64> {
        &self.matrix
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn len(&self) -> usize {
        self.weights.len()
    }
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn expect(&self, kind: OperatorKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::WrongOperator { expected: kind.name(), got: self.kind.name() });
        }
        Ok(())
    }

    /// Matrix-vector product, accumulated row by row in index order.
    pub fn apply(&self, psi: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        if psi.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: psi.len() });
        }
        Ok(matvec(&self.matrix, psi))
    }

    /// Writes the matrix as N rows of N comma-separated values with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.len();
        let mut w = csv::Writer::from_writer(out);
        w.write_record((0..n).map(|j| format!("c{j}")))?;
        for i in 0..n {
            w.write_record((0..n).map(|j| format!("{:e}", self.matrix[(i, j)])))?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn matvec(a: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    (0..a.nrows())
        .map(|i| {
            let mut s = 0.0;
            for (j, xj) in x.iter().enumerate() {
                s += a[(i, j)] * xj;
            }
            s
        })
        .collect()
}

pub(crate) fn matmul(a: &Mat<f64>, b: &Mat<f64>) -> Mat<f64> {
    a * b
}

/// Builds an N x N matrix row by row in parallel; each row is computed
/// independently so the result does not depend on the thread count.
fn par_rows(n: usize, row: impl Fn(usize, &mut [f64]) + Sync) -> Mat<f64> {
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = vec![0.0; n];
            row(i, &mut r);
            r
        })
        .collect();
    Mat::from_fn(n, n, |i, j| rows[i][j])
}

/// grad E(z) = -z / (2 pi |z|^2).
pub fn grad_fundamental(z: Vec2) -> Vec2 {
    z * (-1.0 / (2.0 * PI * z.norm_sq()))
}

pub fn fundamental(z: Vec2) -> f64 {
    -z.norm().ln() / (2.0 * PI)
}

/// Hessian of E at z applied to v.
pub fn hessian_fundamental_apply(z: Vec2, v: Vec2) -> Vec2 {
    let r2 = z.norm_sq();
    (v * (1.0 / r2) - z * (2.0 * z.dot(v) / (r2 * r2))) * (-1.0 / (2.0 * PI))
}

/// Directional derivative of z -> Hess E(z) n in direction d.
fn hessian_fundamental_dir(z: Vec2, d: Vec2, n: Vec2) -> Vec2 {
    let r2 = z.norm_sq();
    let r4 = r2 * r2;
    let zn = z.dot(n);
    let zd = z.dot(d);
    (n * (-2.0 * zd / r4) - (d * zn + z * d.dot(n)) * (2.0 / r4) + z * (8.0 * zn * zd / (r4 * r2))) * (-1.0 / (2.0 * PI))
}

/// K with diagonal entries given by the curvature limit kappa / (4 pi).
pub fn assemble_k(c: &Curve) -> DiscreteOperator {
    let (x, nu, w, kappa) = (c.nodes(), c.normal(), c.weights(), c.curvature());
    let m = par_rows(c.len(), |i, row| {
        for j in 0..row.len() {
            row[j] = if i == j {
                kappa[i] / (4.0 * PI) * w[i]
            } else {
                let d = x[j] - x[i];
                d.dot(nu[j]) / (2.0 * PI * d.norm_sq()) * w[j]
            };
        }
    });
    DiscreteOperator { kind: OperatorKind::K, matrix: m, weights: w.to_vec() }
}

/// K* as the weighted adjoint W^-1 K^T W of [`assemble_k`].
pub fn assemble_kstar(c: &Curve) -> DiscreteOperator {
    let (x, nu, w, kappa) = (c.nodes(), c.normal(), c.weights(), c.curvature());
    let m = par_rows(c.len(), |i, row| {
        for j in 0..row.len() {
            row[j] = if i == j {
                kappa[i] / (4.0 * PI) * w[i]
            } else {
                let d = x[i] - x[j];
                d.dot(nu[i]) / (2.0 * PI * d.norm_sq()) * w[j]
            };
        }
    });
    DiscreteOperator { kind: OperatorKind::Kstar, matrix: m, weights: w.to_vec() }
}

/// Quadrature weights for int_0^{2 pi} log(4 sin^2((t_i - s) / 2)) f(s) ds,
/// indexed by (i - j) mod N.
pub fn log_weights(n: usize) -> Vec<f64> {
    let half = n / 2;
    let hf = half as f64;
    (0..n)
        .map(|k| {
            let mut s = 0.0;
            for m in 1..half {
                s += (m as f64 * k as f64 * PI / hf).cos() / m as f64;
            }
            let alt = if k % 2 == 0 { 1.0 } else { -1.0 };
            -2.0 * PI / hf * s - PI / (hf * hf) * alt
        })
        .collect()
}

/// S by splitting off log(4 sin^2((t - s) / 2)) and integrating it with
/// exact trigonometric weights; the remainder is smooth and uses the
/// trapezoid rule.
pub fn assemble_s(c: &Curve) -> DiscreteOperator {
    let n = c.len();
    let r = log_weights(n);
    let h = c.step();
    let (x, speed, t) = (c.nodes(), c.speed(), c.params());
    let m = par_rows(n, |i, row| {
        for j in 0..n {
            let smooth = if i == j {
                (speed[i] * speed[i]).ln()
            } else {
                let s = (0.5 * (t[i] - t[j])).sin();
                ((x[i] - x[j]).norm_sq() / (4.0 * s * s)).ln()
            };
            row[j] = -speed[j] / (4.0 * PI) * (r[(i + n - j) % n] + h * smooth);
        }
    });
    DiscreteOperator { kind: OperatorKind::S, matrix: m, weights: c.weights().to_vec() }
}

/// T = -d/ds S d/ds with spectral arclength derivatives.
pub fn assemble_t(c: &Curve) -> DiscreteOperator {
    let s = assemble_s(c);
    assemble_t_from_s(c, &s)
}

pub fn assemble_t_from_s(c: &Curve, s: &DiscreteOperator) -> DiscreteOperator {
    let n = c.len();
    let dt = fourier::diff_matrix(n);
    let speed = c.speed();
    let ds = Mat::from_fn(n, n, |i, j| dt[(i, j)] / speed[i]);
    let m = matmul(&matmul(&ds, s.matrix()), &ds);
    let m = Mat::from_fn(n, n, |i, j| -m[(i, j)]);
    DiscreteOperator { kind: OperatorKind::T, matrix: m, weights: c.weights().to_vec() }
}

/// The four boundary operators of one curve.
#[derive(Clone, Debug)]
pub struct LayerOperators {
    pub s: DiscreteOperator,
    pub k: DiscreteOperator,
    pub kstar: DiscreteOperator,
    pub t: DiscreteOperator,
}

impl LayerOperators {
    pub fn assemble(c: &Curve) -> Self {
        let s = assemble_s(c);
        let t = assemble_t_from_s(c, &s);
        LayerOperators { s, k: assemble_k(c), kstar: assemble_kstar(c), t }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PotentialKind {
    Single,
    Double,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalStatus {
    Ok,
    /// The target lies within one node spacing of the boundary; plain
    /// quadrature is inaccurate there.
    NearBoundary,
}

#[derive(Clone, Copy, Debug)]
pub struct Evaluated<T> {
    pub value: T,
    pub status: EvalStatus,
}

fn status_at(c: &Curve, x: Vec2) -> EvalStatus {
    let h = c.max_spacing();
    if c.nodes().iter().any(|y| (x - *y).norm() < h) {
        EvalStatus::NearBoundary
    } else {
        EvalStatus::Ok
    }
}

fn check_density(c: &Curve, psi: &[f64]) -> Result<()> {
    if psi.len() != c.len() {
        return Err(Error::LengthMismatch { expected: c.len(), got: psi.len() });
    }
    Ok(())
}

/// S[psi](x) or D[psi](x) at a point off the boundary.
pub fn eval_potential(c: &Curve, psi: &[f64], x: Vec2, which: PotentialKind) -> Result<Evaluated<f64>> {
    check_density(c, psi)?;
    let mut v = 0.0;
    for j in 0..c.len() {
        let y = c.nodes()[j];
        let k = match which {
            PotentialKind::Single => fundamental(x - y),
            PotentialKind::Double => grad_fundamental(x - y).dot(c.normal()[j]),
        };
        v += k * psi[j] * c.weights()[j];
    }
    Ok(Evaluated { value: v, status: status_at(c, x) })
}

/// Gradient of S[psi] or D[psi] at a point off the boundary.
pub fn eval_potential_gradient(c: &Curve, psi: &[f64], x: Vec2, which: PotentialKind) -> Result<Evaluated<Vec2>> {
    check_density(c, psi)?;
    let mut v = Vec2::ZERO;
    for j in 0..c.len() {
        let z = x - c.nodes()[j];
        let g = match which {
            PotentialKind::Single => grad_fundamental(z),
            PotentialKind::Double => hessian_fundamental_apply(z, c.normal()[j]),
        };
        v += g * (psi[j] * c.weights()[j]);
    }
    Ok(Evaluated { value: v, status: status_at(c, x) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Interior,
    Exterior,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Interior => 1.0,
            Side::Exterior => -1.0,
        }
    }
}

/// Boundary trace of grad D[eta] from the given side:
/// +-(1/2) grad_boundary eta + pv int (eta(y) - eta(x)) Hess E(x - y) nu(y) ds_y.
///
/// The principal value omits the diagonal node and adds the local limit of
/// the even part of the integrand, which keeps the rule spectrally accurate.
pub fn pv_gradient_double_layer(c: &Curve, eta: &[f64], side: Side) -> Result<Vec<Vec2>> {
    check_density(c, eta)?;
    let pv = pv_hessian_term(c, eta);
    let tg = tangential_gradient(c, eta)?;
    Ok(pv.iter().zip(&tg).map(|(p, g)| *p + *g * (0.5 * side.sign())).collect())
}

fn pv_hessian_term(c: &Curve, eta: &[f64]) -> Vec<Vec2> {
    let n = c.len();
    let h = c.step();
    let d1 = fourier::derivative(eta);
    let d2 = fourier::derivative(&d1);
    let (x, nu, w, xp, xpp) = (c.nodes(), c.normal(), c.weights(), c.d1(), c.d2());
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut s = Vec2::ZERO;
            for j in 0..n {
                if j != i {
                    s += hessian_fundamental_apply(x[i] - x[j], nu[j]) * ((eta[j] - eta[i]) * w[j]);
                }
            }
            let n0 = xp[i].rot_cw();
            let n1 = xpp[i].rot_cw();
            let h0n0 = hessian_fundamental_apply(xp[i], n0);
            let h0n1 = hessian_fundamental_apply(xp[i], n1);
            let h1n0 = hessian_fundamental_dir(xp[i], xpp[i] * 0.5, n0);
            let local = h0n0 * (0.5 * d2[i]) + (h1n0 + h0n1) * d1[i];
            s + local * h
        })
        .collect()
}

/// Limit at d = 0 of the polynomial through the samples (d_k, f_k)
/// (Neville's scheme).
pub fn extrapolate_to_zero(samples: &[(f64, f64)]) -> f64 {
    let mut p: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let d: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let n = p.len();
    for level in 1..n {
        for i in 0..n - level {
            let (a, b) = (d[i], d[i + level]);
            p[i] = (b * p[i] - a * p[i + 1]) / (b - a);
        }
    }
    p[0]
}

/// Offsets, in multiples of the local node spacing, used when a boundary
/// value is recovered by extrapolating off-boundary evaluations.
pub const LIMIT_OFFSETS: [f64; 12] = [0.4, 0.8, 1.2, 1.6, 2.0, 2.4, 2.8, 3.2, 3.6, 4.0, 4.4, 4.8];

/// Upsampling factor of [`NearField`].
pub const NEAR_FIELD_FACTOR: usize = 16;

/// Off-boundary evaluation close to the curve. Curve and densities are
/// trigonometrically interpolated onto a finer grid and the trapezoid rule
/// is applied there; boundary traces are obtained by polynomial
/// extrapolation in the distance to the curve.
#[derive(Clone, Debug)]
pub struct NearField {
    fine: Curve,
    factor: usize,
}

impl NearField {
    pub fn new(c: &Curve, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidArgument("upsampling factor must be positive".into()));
        }
        let xs: Vec<f64> = c.nodes().iter().map(|p| p.x).collect();
        let ys: Vec<f64> = c.nodes().iter().map(|p| p.y).collect();
        let [x0, x1, x2] = fourier::interpolate(&xs, factor);
        let [y0, y1, y2] = fourier::interpolate(&ys, factor);
        let zip = |a: Vec<f64>, b: Vec<f64>| a.into_iter().zip(b).map(|(p, q)| Vec2::new(p, q)).collect();
        let fine = Curve::from_samples(format!("{}|x{factor}", c.label()), zip(x0, y0), zip(x1, y1), zip(x2, y2))?;
        Ok(NearField { fine, factor })
    }

    pub fn fine(&self) -> &Curve {
        &self.fine
    }

    /// A density on the coarse nodes, interpolated to the fine nodes.
    pub fn density(&self, psi: &[f64]) -> Vec<f64> {
        let [v, _, _] = fourier::interpolate(psi, self.factor);
        v
    }

    /// S or D of a fine density at x.
    pub fn potential(&self, fine_psi: &[f64], x: Vec2, which: PotentialKind) -> f64 {
        eval_potential(&self.fine, fine_psi, x, which).map(|e| e.value).unwrap_or(f64::NAN)
    }

    /// Gradient of S or D of a fine density at x.
    pub fn gradient(&self, fine_psi: &[f64], x: Vec2, which: PotentialKind) -> Vec2 {
        eval_potential_gradient(&self.fine, fine_psi, x, which).map(|e| e.value).unwrap_or(Vec2::new(f64::NAN, f64::NAN))
    }

    /// Boundary value at coarse node i, approached from `side`, of the
    /// scalar quantity g(x).
    pub fn limit(&self, c: &Curve, i: usize, side: Side, g: impl Fn(Vec2) -> f64) -> f64 {
        boundary_limit_with(c, i, side, &LIMIT_OFFSETS, g)
    }
}

/// Extrapolates g(x_i - side * d nu_i) to d = 0 from offsets given in
/// multiples of the local node spacing w_i.
pub fn boundary_limit_with(c: &Curve, i: usize, side: Side, offsets: &[f64], g: impl Fn(Vec2) -> f64) -> f64 {
    let h = c.weights()[i];
    let samples: Vec<(f64, f64)> = offsets
        .iter()
        .map(|k| {
            let d = k * h;
            (d, g(c.nodes()[i] - c.normal()[i] * (side.sign() * d)))
        })
        .collect();
    extrapolate_to_zero(&samples)
}

/// Largest deviations, over the sampled nodes and both sides, between
/// extrapolated off-boundary limits and the boundary formulas
/// D = +-eta/2 + K eta, S psi continuous, d_nu S = +-psi/2 - K* psi, and
/// grad D = pv_gradient_double_layer.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JumpResiduals {
    pub double_layer: f64,
    pub single_layer: f64,
    pub single_normal: f64,
    pub double_gradient: f64,
}

pub fn jump_residuals(c: &Curve, ops: &LayerOperators, eta: &[f64], psi: &[f64], nodes: &[usize]) -> Result<JumpResiduals> {
    check_density(c, eta)?;
    check_density(c, psi)?;
    if let Some(&i) = nodes.iter().find(|&&i| i >= c.len()) {
        return Err(Error::OutOfRange { index: i, max: c.len() });
    }
    let near = NearField::new(c, NEAR_FIELD_FACTOR)?;
    let (feta, fpsi) = (near.density(eta), near.density(psi));
    let keta = ops.k.apply(eta)?;
    let spsi = ops.s.apply(psi)?;
    let kspsi = ops.kstar.apply(psi)?;
    let mut grads = Vec::with_capacity(2);
    for side in [Side::Interior, Side::Exterior] {
        grads.push(pv_gradient_double_layer(c, eta, side)?);
    }
    let per_node: Vec<[f64; 4]> = nodes
        .par_iter()
        .map(|&i| {
            let mut r = [0.0f64; 4];
            for (k, side) in [Side::Interior, Side::Exterior].into_iter().enumerate() {
                let sg = side.sign();
                let nu = c.normal()[i];
                let d = near.limit(c, i, side, |x| near.potential(&feta, x, PotentialKind::Double));
                r[0] = r[0].max((d - (0.5 * sg * eta[i] + keta[i])).abs());
                let s = near.limit(c, i, side, |x| near.potential(&fpsi, x, PotentialKind::Single));
                r[1] = r[1].max((s - spsi[i]).abs());
                let dn = near.limit(c, i, side, |x| near.gradient(&fpsi, x, PotentialKind::Single).dot(nu));
                r[2] = r[2].max((dn - (0.5 * sg * psi[i] - kspsi[i])).abs());
                let gx = near.limit(c, i, side, |x| near.gradient(&feta, x, PotentialKind::Double).x);
                let gy = near.limit(c, i, side, |x| near.gradient(&feta, x, PotentialKind::Double).y);
                let g = grads[k][i];
                r[3] = r[3].max((gx - g.x).abs().max((gy - g.y).abs()));
            }
            r
        })
        .collect();
    let col = |k: usize| per_node.iter().map(|r| r[k]).fold(0.0, f64::max);
    Ok(JumpResiduals { double_layer: col(0), single_layer: col(1), single_normal: col(2), double_gradient: col(3) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry2d::{build_curve, CurveKind};

    #[test]
    fn log_weights_integrate_cosines() {
        // int log(4 sin^2(s/2)) cos(m s) ds = -2 pi / m for m >= 1, 0 for m = 0
        let n = 32;
        let r = log_weights(n);
        let t = fourier::grid(n);
        for m in 0..n / 2 {
            let v: f64 = (0..n).map(|j| r[(n - j) % n] * (m as f64 * t[j]).cos()).sum();
            let exact = if m == 0 { 0.0 } else { -2.0 * PI / m as f64 };
            assert!((v - exact).abs() < 1e-12, "m={m}: {v} vs {exact}");
        }
    }

    #[test]
    fn k_of_one_is_half_on_circle() {
        let c = build_curve(&CurveKind::Circle { r: 1.5 }, 32).unwrap();
        let k = assemble_k(&c);
        for v in k.apply(&[1.0; 32]).unwrap() {
            assert!((v - 0.5).abs() < 1e-13);
        }
    }

    #[test]
    fn extrapolation_recovers_polynomial() {
        let s: Vec<(f64, f64)> = (1..5).map(|k| (k as f64, 2.0 + 3.0 * k as f64 - (k * k) as f64)).collect();
        assert!((extrapolate_to_zero(&s) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn operator_kind_guard() {
        let c = build_curve(&CurveKind::Kite, 16).unwrap();
        assert!(assemble_s(&c).expect(OperatorKind::K).is_err());
    }
}
