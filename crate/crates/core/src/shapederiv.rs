//! First-order shape derivatives under x -> x + t theta: the derivative of
//! the double-layer operator, the cluster derivative matrix and its
//! symmetric functions, Rellich-Pohozaev recoveries of eigenvalues, and the
//! finite-difference oracles used to validate them.

use std::f64::consts::PI;

use faer::{Mat, Side as MatSide};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier;
use crate::geometry2d::{perturb, Curve, PerturbationField};
use crate::layer2d::{assemble_k, assemble_kstar, LayerOperators};
use crate::spectral::{sigma_s_inner, solve_spectrum, EigenCluster};

/// The four contributions to the derivative of K[eta].
#[derive(Clone, Debug)]
pub struct DkTerms {
    /// pv int (theta.nu)(y) grad_b eta(y) . grad E(x - y) ds_y
    pub principal_value: Vec<f64>,
    /// (theta.nu)(x) T[eta](x)
    pub normal: Vec<f64>,
    /// theta(x) . grad_b K[eta](x)
    pub transport: Vec<f64>,
    /// -K[theta . grad_b eta](x)
    pub commutator: Vec<f64>,
}

impl DkTerms {
    pub fn total(&self) -> Vec<f64> {
        (0..self.normal.len())
            .map(|i| self.principal_value[i] + self.normal[i] + self.transport[i] + self.commutator[i])
            .collect()
    }
}

fn check_len(c: &Curve, f: &[f64]) -> Result<()> {
    if f.len() != c.len() {
        return Err(Error::LengthMismatch { expected: c.len(), got: f.len() });
    }
    Ok(())
}

/// pv int q(y) grad_b eta(y) . grad E(x - y) ds_y at every node.
///
/// The diagonal node is omitted and replaced by the limit of the even part
/// of the parametrized integrand, (p' + p (x'.x'') / (2 |x'|^2)) / (2 pi)
/// with p = q eta' / |x'|.
pub fn pv_tangential_single(c: &Curve, q: &[f64], eta: &[f64]) -> Result<Vec<f64>> {
    check_len(c, q)?;
    check_len(c, eta)?;
    let n = c.len();
    let h = c.step();
    let deta = fourier::derivative(eta);
    let p: Vec<f64> = (0..n).map(|i| q[i] * deta[i] / c.speed()[i]).collect();
    let dp = fourier::derivative(&p);
    let (x, xp, xpp) = (c.nodes(), c.d1(), c.d2());
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut s = 0.0;
            for j in 0..n {
                if j != i {
                    let z = x[j] - x[i];
                    s += p[j] * xp[j].dot(z) / z.norm_sq();
                }
            }
            let a = xp[i].dot(xpp[i]) / xp[i].norm_sq();
            (s + dp[i] + 0.5 * p[i] * a) * h / (2.0 * PI)
        })
        .collect())
}

/// The four terms of d/dt K_{x + t theta}[eta] at t = 0.
pub fn dk_terms(c: &Curve, ops: &LayerOperators, theta: &PerturbationField, eta: &[f64]) -> Result<DkTerms> {
    check_len(c, eta)?;
    let q = theta.normal_component(c)?;
    let tt = theta.tangential_component(c)?;
    let principal_value = pv_tangential_single(c, &q, eta)?;
    let teta = ops.t.apply(eta)?;
    let normal = q.iter().zip(&teta).map(|(a, b)| a * b).collect();
    let keta = ops.k.apply(eta)?;
    let transport = tt.iter().zip(c.ds(&keta)).map(|(a, b)| a * b).collect();
    let dir: Vec<f64> = tt.iter().zip(c.ds(eta)).map(|(a, b)| a * b).collect();
    let commutator = ops.k.apply(&dir)?.into_iter().map(|v| -v).collect();
    Ok(DkTerms { principal_value, normal, transport, commutator })
}

/// d/dt K_{x + t theta}[eta] at t = 0, with K pulled back to the reference
/// parameter grid.
pub fn dk_operator(c: &Curve, theta: &PerturbationField, eta: &[f64]) -> Result<Vec<f64>> {
    let ops = LayerOperators::assemble(c);
    Ok(dk_terms(c, &ops, theta, eta)?.total())
}

/// Elementary symmetric polynomial of degree h in the given values.
pub fn symmetric_function(h: usize, values: &[f64]) -> Result<f64> {
    let m = values.len();
    if h == 0 || h > m {
        return Err(Error::OutOfRange { index: h, max: m });
    }
    let mut e = vec![0.0; h + 1];
    e[0] = 1.0;
    for &x in values {
        for k in (1..=h).rev() {
            e[k] += x * e[k - 1];
        }
    }
    Ok(e[h])
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

/// Derivative data of one eigenvalue cluster along theta.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClusterDerivative {
    pub lambda: f64,
    pub m: usize,
    /// Row-major m x m.
    pub d_a: Vec<Vec<f64>>,
    /// h = 1..=m.
    pub d_lambda: Vec<f64>,
    /// Ascending.
    pub branch_derivs: Vec<f64>,
    pub theta: String,
    /// Largest difference between the two evaluations of the normal
    /// derivative of S[mu], relative to the largest density value.
    pub route_discrepancy: f64,
    /// max |Gram - I| of the supplied basis before any rescaling.
    pub gram_drift: f64,
    /// True when the cluster is the 1/2 eigenvalue and no computation ran.
    pub fast_path: bool,
}

impl ClusterDerivative {
    pub fn trace(&self) -> f64 {
        (0..self.m).map(|i| self.d_a[i][i]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.d_a.iter().flatten().fold(0.0, |a: f64, b| a.max(b.abs()))
    }

    pub fn asymmetry(&self) -> f64 {
        let mut r: f64 = 0.0;
        for i in 0..self.m {
            for j in 0..self.m {
                r = r.max((self.d_a[i][j] - self.d_a[j][i]).abs());
            }
        }
        r
    }
}

/// d/dt Lambda_h = lambda^{h-1} C(m-1, h-1) trace(dA).
pub fn dlambda(cd: &ClusterDerivative, h: usize) -> Result<f64> {
    if h == 0 || h > cd.m {
        return Err(Error::OutOfRange { index: h, max: cd.m });
    }
    Ok(cd.lambda.powi(h as i32 - 1) * binomial(cd.m - 1, h - 1) * cd.trace())
}

/// Sorted eigenvalues of (dA + dA^T) / 2.
pub fn branch_derivatives(cd: &ClusterDerivative) -> Result<Vec<f64>> {
    sym_eigenvalues(&cd.d_a)
}

fn sym_eigenvalues(a: &[Vec<f64>]) -> Result<Vec<f64>> {
    let m = a.len();
    let s = Mat::from_fn(m, m, |i, j| 0.5 * (a[i][j] + a[j][i]));
    let e = s.self_adjoint_eigen(MatSide::Lower).map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let mut v: Vec<f64> = (0..m).map(|i| e.S().column_vector()[i]).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(v)
}

fn is_half(lambda: f64) -> bool {
    (lambda - 0.5).abs() < 1e-6
}

/// Boundary data of u_j = S[mu_j] for every basis function.
struct ClusterTraces {
    /// d u_j / ds
    tangential: Vec<Vec<f64>>,
    /// 1/2 mu_j - K* mu_j
    normal: Vec<Vec<f64>>,
    route_discrepancy: f64,
    gram_drift: f64,
}

fn cluster_traces(c: &Curve, ops: &LayerOperators, cluster: &EigenCluster) -> Result<ClusterTraces> {
    let m = cluster.m();
    let mut basis = cluster.basis.clone();
    for b in &basis {
        check_len(c, b)?;
    }
    let gram: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| sigma_s_inner(&ops.s, &basis[i], &basis[j])).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let mut gram_drift: f64 = 0.0;
    for i in 0..m {
        for j in 0..m {
            gram_drift = gram_drift.max((gram[i][j] - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    if gram_drift > 1e-10 {
        // Symmetric re-orthonormalization, basis <- basis G^{-1/2}.
        let g = Mat::from_fn(m, m, |i, j| 0.5 * (gram[i][j] + gram[j][i]));
        let e = g.self_adjoint_eigen(MatSide::Lower).map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
        let vals: Vec<f64> = (0..m).map(|i| e.S().column_vector()[i]).collect();
        if vals.iter().any(|&v| v <= 0.0) {
            return Err(Error::Degenerate(vals.iter().cloned().fold(f64::INFINITY, f64::min)));
        }
        let u = e.U();
        let n = c.len();
        let inv_sqrt = Mat::from_fn(m, m, |i, j| (0..m).map(|k| u[(i, k)] * u[(j, k)] / vals[k].sqrt()).sum::<f64>());
        basis = (0..m).map(|j| (0..n).map(|r| (0..m).map(|i| cluster.basis[i][r] * inv_sqrt[(i, j)]).sum()).collect()).collect();
    }
    let mut tangential = Vec::with_capacity(m);
    let mut normal = Vec::with_capacity(m);
    let mut route_discrepancy: f64 = 0.0;
    for (j, mu) in basis.iter().enumerate() {
        let u = ops.s.apply(mu)?;
        tangential.push(c.ds(&u));
        let ks = ops.kstar.apply(mu)?;
        let dn: Vec<f64> = mu.iter().zip(&ks).map(|(a, b)| 0.5 * a - b).collect();
        let scale = mu.iter().fold(0.0, |a: f64, b| a.max(b.abs()));
        let lam = cluster.lambdas[j];
        let d = dn.iter().zip(mu).map(|(a, b)| (a - (0.5 - lam) * b).abs()).fold(0.0, f64::max);
        route_discrepancy = route_discrepancy.max(d / scale);
        normal.push(dn);
    }
    Ok(ClusterTraces { tangential, normal, route_discrepancy, gram_drift })
}

/// The m x m matrix with entries
/// int (theta.nu) (-du_i/ds du_j/ds + eps d_nu u_i d_nu u_j) ds,
/// u_i = S[mu_i], eps = (1/2 + lambda) / (1/2 - lambda).
pub fn cluster_derivative_matrix(
    c: &Curve,
    ops: &LayerOperators,
    cluster: &EigenCluster,
    theta: &PerturbationField,
) -> Result<ClusterDerivative> {
    let m = cluster.m();
    let lambda = cluster.mean_lambda();
    if is_half(lambda) {
        return Ok(ClusterDerivative {
            lambda,
            m,
            d_a: vec![vec![0.0; m]; m],
            d_lambda: vec![0.0; m],
            branch_derivs: vec![0.0; m],
            theta: theta.label().to_string(),
            route_discrepancy: 0.0,
            gram_drift: 0.0,
            fast_path: true,
        });
    }
    if lambda.abs() < 1e-12 {
        return Err(Error::UnsupportedEigenvalue(lambda));
    }
    let eps = (0.5 + lambda) / (0.5 - lambda);
    let q = theta.normal_component(c)?;
    let tr = cluster_traces(c, ops, cluster)?;
    let w = c.weights();
    let mut d_a = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            let mut s = 0.0;
            for k in 0..c.len() {
                s += w[k] * q[k] * (-tr.tangential[i][k] * tr.tangential[j][k] + eps * tr.normal[i][k] * tr.normal[j][k]);
            }
            d_a[i][j] = s;
        }
    }
    let mut cd = ClusterDerivative {
        lambda,
        m,
        d_a,
        d_lambda: Vec::new(),
        branch_derivs: Vec::new(),
        theta: theta.label().to_string(),
        route_discrepancy: tr.route_discrepancy,
        gram_drift: tr.gram_drift,
        fast_path: false,
    };
    cd.d_lambda = (1..=m).map(|h| dlambda(&cd, h)).collect::<Result<_>>()?;
    cd.branch_derivs = branch_derivatives(&cd)?;
    Ok(cd)
}

/// Eigenvalue recovered from boundary energies, per basis function.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PohozaevRecovery {
    pub lambda_spectral: f64,
    pub lambda_recovered: f64,
    pub numerator: f64,
    pub denominator: f64,
}

/// lambda = (1/2) int (x.nu)(|du/ds|^2 - (d_nu u)^2) / int (x.nu)|grad u|^2
/// for u = S[mu] inside, on a curve star-shaped about the origin.
pub fn pohozaev_lambda(c: &Curve, ops: &LayerOperators, cluster: &EigenCluster) -> Result<Vec<PohozaevRecovery>> {
    let xn: Vec<f64> = c.nodes().iter().zip(c.normal()).map(|(x, n)| x.dot(*n)).collect();
    if let Some((node, &value)) = xn.iter().enumerate().find(|(_, v)| **v <= 0.0) {
        return Err(Error::NotStarShaped { node, value });
    }
    if is_half(cluster.mean_lambda()) {
        return Err(Error::UnsupportedEigenvalue(cluster.mean_lambda()));
    }
    let tr = cluster_traces(c, ops, cluster)?;
    let w = c.weights();
    let mut out = Vec::new();
    for j in 0..cluster.m() {
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..c.len() {
            let a = tr.tangential[j][k].powi(2);
            let b = tr.normal[j][k].powi(2);
            num += w[k] * xn[k] * (a - b);
            den += w[k] * xn[k] * (a + b);
        }
        if den.abs() < 1e-12 {
            return Err(Error::Degenerate(den));
        }
        out.push(PohozaevRecovery {
            lambda_spectral: cluster.lambdas[j],
            lambda_recovered: 0.5 * num / den,
            numerator: num,
            denominator: den,
        });
    }
    Ok(out)
}

/// Residual of int g (-|du/ds|^2 + eps (d_nu u)^2) = 0 for an invariance
/// weight g (x.nu for dilations, zeta.nu for translations, (Zx).nu for
/// rotations), with the scale int |g| (|du/ds|^2 + eps (d_nu u)^2).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InvarianceResidual {
    pub residual: f64,
    pub scale: f64,
}

pub fn invariance_residual(
    c: &Curve,
    ops: &LayerOperators,
    cluster: &EigenCluster,
    g: &[f64],
) -> Result<Vec<InvarianceResidual>> {
    check_len(c, g)?;
    let lambda = cluster.mean_lambda();
    if is_half(lambda) {
        return Err(Error::UnsupportedEigenvalue(lambda));
    }
    let eps = (0.5 + lambda) / (0.5 - lambda);
    let tr = cluster_traces(c, ops, cluster)?;
    let w = c.weights();
    Ok((0..cluster.m())
        .map(|j| {
            let (mut r, mut s) = (0.0, 0.0);
            for k in 0..c.len() {
                let a = tr.tangential[j][k].powi(2);
                let b = eps * tr.normal[j][k].powi(2);
                r += w[k] * g[k] * (-a + b);
                s += w[k] * g[k].abs() * (a + b.abs());
            }
            InvarianceResidual { residual: r, scale: s }
        })
        .collect())
}

/// Step schedule and Richardson-extrapolated finite differences.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FdEstimate {
    pub steps: Vec<f64>,
    /// One difference quotient per step.
    pub quotients: Vec<Vec<f64>>,
    /// One Richardson level on the two smallest steps.
    pub extrapolated: Vec<f64>,
}

fn richardson(steps: &[f64], quotients: &[Vec<f64>], order: i32) -> Vec<f64> {
    let k = steps.len();
    if k < 2 {
        return quotients[0].clone();
    }
    let (h1, h2) = (steps[k - 2], steps[k - 1]);
    let (d1, d2) = (&quotients[k - 2], &quotients[k - 1]);
    let (a, b) = (h1.powi(order), h2.powi(order));
    d1.iter().zip(d2).map(|(x, y)| (a * y - b * x) / (a - b)).collect()
}

fn check_steps(steps: &[f64]) -> Result<()> {
    if steps.is_empty() || steps.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::InvalidArgument("finite-difference steps must be positive".into()));
    }
    for w in steps.windows(2) {
        if w[1] >= w[0] {
            return Err(Error::InvalidArgument("finite-difference steps must decrease".into()));
        }
    }
    Ok(())
}

/// Central differences (f(h) - f(-h)) / 2h with one Richardson level.
pub fn central_difference(steps: &[f64], f: impl Fn(f64) -> Result<Vec<f64>> + Sync) -> Result<FdEstimate> {
    check_steps(steps)?;
    let quotients: Vec<Vec<f64>> = steps
        .par_iter()
        .map(|&h| {
            let (p, m) = rayon::join(|| f(h), || f(-h));
            let (p, m) = (p?, m?);
            Ok(p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect())
        })
        .collect::<Result<_>>()?;
    let extrapolated = richardson(steps, &quotients, 2);
    Ok(FdEstimate { steps: steps.to_vec(), quotients, extrapolated })
}

/// One-sided differences (f(h) - f(0)) / h with one Richardson level.
pub fn forward_difference(steps: &[f64], f: impl Fn(f64) -> Result<Vec<f64>> + Sync) -> Result<FdEstimate> {
    check_steps(steps)?;
    let f0 = f(0.0)?;
    let quotients: Vec<Vec<f64>> =
        steps.par_iter().map(|&h| Ok(f(h)?.iter().zip(&f0).map(|(a, b)| (a - b) / h).collect())).collect::<Result<_>>()?;
    let extrapolated = richardson(steps, &quotients, 1);
    Ok(FdEstimate { steps: steps.to_vec(), quotients, extrapolated })
}

/// Default central-difference schedule.
pub const CENTRAL_STEPS: [f64; 3] = [1e-3, 5e-4, 2.5e-4];
/// Default one-sided schedule.
pub const FORWARD_STEPS: [f64; 2] = [1e-3, 5e-4];

/// Formula values set against a finite-difference oracle.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub quantity: String,
    pub curve: String,
    pub theta: String,
    pub formula: Vec<f64>,
    pub oracle: FdEstimate,
    /// max |formula - extrapolated|
    pub abs_err: f64,
    /// abs_err / max |extrapolated|
    pub rel_err: f64,
}

impl DerivativeReport {
    pub fn new(quantity: &str, c: &Curve, theta: &PerturbationField, formula: Vec<f64>, oracle: FdEstimate) -> Result<Self> {
        if formula.len() != oracle.extrapolated.len() {
            return Err(Error::LengthMismatch { expected: formula.len(), got: oracle.extrapolated.len() });
        }
        let abs_err = formula.iter().zip(&oracle.extrapolated).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = oracle.extrapolated.iter().fold(0.0, |a: f64, b| a.max(b.abs()));
        let rel_err = if scale > 0.0 {
            abs_err / scale
        } else if abs_err == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        Ok(DerivativeReport {
            quantity: quantity.to_string(),
            curve: c.label().to_string(),
            theta: theta.label().to_string(),
            formula,
            oracle,
            abs_err,
            rel_err,
        })
    }
}

/// dK formula against central differences of K re-assembled on the
/// perturbed curves.
pub fn check_dk(c: &Curve, theta: &PerturbationField, eta: &[f64], steps: &[f64]) -> Result<DerivativeReport> {
    let formula = dk_operator(c, theta, eta)?;
    let oracle = central_difference(steps, |t| assemble_k(&perturb(c, theta, t)?).apply(eta))?;
    DerivativeReport::new("dK", c, theta, formula, oracle)
}

/// Real parts, ascending, of the eigenvalues of K* on the curve inside the
/// window (lo, hi).
pub fn window_eigenvalues(c: &Curve, lo: f64, hi: f64) -> Result<Vec<f64>> {
    let sp = solve_spectrum(&assemble_kstar(c))?;
    let mut v: Vec<f64> = sp.real_values().into_iter().filter(|x| *x > lo && *x < hi).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(v)
}

fn cluster_window(c: &Curve, cluster: &EigenCluster, t: f64, theta: &PerturbationField) -> Result<Vec<f64>> {
    let p = perturb(c, theta, t)?;
    let v = window_eigenvalues(&p, cluster.lambda_bar - cluster.delta, cluster.lambda_bar + cluster.delta)?;
    if v.len() != cluster.m() {
        return Err(Error::InvalidArgument(format!(
            "perturbation at t = {t} moved {} eigenvalue(s) into the window, expected {}",
            v.len(),
            cluster.m()
        )));
    }
    Ok(v)
}

/// dLambda_h for h = 1..m against central differences of the symmetric
/// functions of the perturbed cluster eigenvalues.
pub fn check_symmetric_functions(
    c: &Curve,
    cluster: &EigenCluster,
    cd: &ClusterDerivative,
    theta: &PerturbationField,
    steps: &[f64],
) -> Result<DerivativeReport> {
    let m = cluster.m();
    let oracle = central_difference(steps, |t| {
        let v = cluster_window(c, cluster, t, theta)?;
        (1..=m).map(|h| symmetric_function(h, &v)).collect()
    })?;
    DerivativeReport::new("dLambda", c, theta, cd.d_lambda.clone(), oracle)
}

/// Sorted branch derivatives against one-sided differences of the sorted
/// perturbed eigenvalues.
pub fn check_branches(
    c: &Curve,
    cluster: &EigenCluster,
    cd: &ClusterDerivative,
    theta: &PerturbationField,
    steps: &[f64],
) -> Result<DerivativeReport> {
    let oracle = forward_difference(steps, |t| {
        if t == 0.0 {
            let mut v = cluster.lambdas.clone();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            Ok(v)
        } else {
            cluster_window(c, cluster, t, theta)
        }
    })?;
    DerivativeReport::new("branch", c, theta, cd.branch_derivs.clone(), oracle)
}

/// Both sides of int S[mu_i] dK*[mu_j] = int dK[S mu_i] mu_j, for all (i, j).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransposedDerivativeReport {
    /// Finite-difference side, row-major m x m.
    pub left: Vec<Vec<f64>>,
    /// Formula side.
    pub right: Vec<Vec<f64>>,
    pub max_residual: f64,
}

pub fn transposed_derivative_check(
    c: &Curve,
    ops: &LayerOperators,
    cluster: &EigenCluster,
    theta: &PerturbationField,
    steps: &[f64],
) -> Result<TransposedDerivativeReport> {
    let lambda = cluster.mean_lambda();
    if is_half(lambda) || lambda.abs() < 1e-12 {
        return Err(Error::UnsupportedEigenvalue(lambda));
    }
    let m = cluster.m();
    let w = c.weights();
    let su: Vec<Vec<f64>> = cluster.basis.iter().map(|mu| ops.s.apply(mu)).collect::<Result<_>>()?;
    let fd = central_difference(steps, |t| {
        let ks = assemble_kstar(&perturb(c, theta, t)?);
        let mut out = Vec::with_capacity(m * c.len());
        for mu in &cluster.basis {
            out.extend(ks.apply(mu)?);
        }
        Ok(out)
    })?;
    let n = c.len();
    let mut left = vec![vec![0.0; m]; m];
    let mut right = vec![vec![0.0; m]; m];
    let mut max_residual: f64 = 0.0;
    for i in 0..m {
        let dk = dk_terms(c, ops, theta, &su[i])?.total();
        for j in 0..m {
            let dks = &fd.extrapolated[j * n..(j + 1) * n];
            left[i][j] = (0..n).map(|k| w[k] * su[i][k] * dks[k]).sum();
            right[i][j] = (0..n).map(|k| w[k] * dk[k] * cluster.basis[j][k]).sum();
            max_residual = max_residual.max((left[i][j] - right[i][j]).abs());
        }
    }
    Ok(TransposedDerivativeReport { left, right, max_residual })
}

/// Largest residuals, over all (i, j) in the cluster, of three boundary
/// identities used in assembling dA:
///
/// * `principal_value`: int mu_j pv int q grad_b u_i . grad E = -int q du_i/ds du_j/ds
/// * `normal`: int q T[u_i] mu_j = (1/2 + lambda_i)(1/2 - lambda_i) int q mu_i mu_j
/// * `tangential`: int (theta_t d/ds K[u_i] - K[theta_t du_i/ds]) mu_j = 0
///
/// with u_i = S[mu_i], q = theta.nu, theta_t = theta.tau.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DerivativeTermResiduals {
    pub principal_value: f64,
    pub normal: f64,
    pub tangential: f64,
}

pub fn derivative_term_residuals(
    c: &Curve,
    ops: &LayerOperators,
    cluster: &EigenCluster,
    theta: &PerturbationField,
) -> Result<DerivativeTermResiduals> {
    let m = cluster.m();
    let n = c.len();
    let w = c.weights();
    let q = theta.normal_component(c)?;
    let dot = |a: &[f64], b: &[f64]| -> f64 { (0..n).map(|k| w[k] * a[k] * b[k]).sum() };
    let mut u = Vec::with_capacity(m);
    let mut du = Vec::with_capacity(m);
    let mut terms = Vec::with_capacity(m);
    for mu in &cluster.basis {
        check_len(c, mu)?;
        let ui = ops.s.apply(mu)?;
        du.push(c.ds(&ui));
        terms.push(dk_terms(c, ops, theta, &ui)?);
        u.push(ui);
    }
    let mut r = DerivativeTermResiduals { principal_value: 0.0, normal: 0.0, tangential: 0.0 };
    for i in 0..m {
        let qdu: Vec<f64> = (0..n).map(|k| q[k] * du[i][k]).collect();
        let qmu: Vec<f64> = (0..n).map(|k| q[k] * cluster.basis[i][k]).collect();
        let lam = cluster.lambdas[i];
        let tan: Vec<f64> = (0..n).map(|k| terms[i].transport[k] + terms[i].commutator[k]).collect();
        for j in 0..m {
            let mu = &cluster.basis[j];
            let pv = dot(&terms[i].principal_value, mu) + dot(&qdu, &du[j]);
            let nt = dot(&terms[i].normal, mu) - (0.25 - lam * lam) * dot(&qmu, mu);
            r.principal_value = r.principal_value.max(pv.abs());
            r.normal = r.normal.max(nt.abs());
            r.tangential = r.tangential.max(dot(&tan, mu).abs());
        }
    }
    Ok(r)
}

/// Displacement of the sorted cluster eigenvalues on perturbed curves.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub steps: Vec<f64>,
    /// max_j |lambda_j(t) - lambda_j(0)| per step.
    pub displacement: Vec<f64>,
    /// displacement / t
    pub rates: Vec<f64>,
}

impl ContinuityReport {
    /// (max rate - min rate) / max rate; small when the displacement is
    /// linear in t. Zero when nothing moved beyond `floor`.
    pub fn rate_spread(&self, floor: f64) -> f64 {
        if self.displacement.iter().all(|d| *d <= floor) {
            return 0.0;
        }
        let hi = self.rates.iter().cloned().fold(0.0, f64::max);
        let lo = self.rates.iter().cloned().fold(f64::INFINITY, f64::min);
        (hi - lo) / hi
    }
}

pub fn continuity_check(c: &Curve, cluster: &EigenCluster, theta: &PerturbationField, steps: &[f64]) -> Result<ContinuityReport> {
    check_steps(steps)?;
    let mut base = cluster.lambdas.clone();
    base.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let displacement: Vec<f64> = steps
        .par_iter()
        .map(|&t| {
            let v = cluster_window(c, cluster, t, theta)?;
            Ok(v.iter().zip(&base).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        })
        .collect::<Result<_>>()?;
    let rates = displacement.iter().zip(steps).map(|(d, t)| d / t).collect();
    Ok(ContinuityReport { steps: steps.to_vec(), displacement, rates })
}
