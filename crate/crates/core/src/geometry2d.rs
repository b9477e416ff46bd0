//! Discretized smooth closed curves, their perturbations x -> x + t theta,
//! and tangential calculus on the boundary.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier;
use crate::vec2::Vec2;

/// One radial Fourier mode a cos(k t) + b sin(k t) of a star-shaped curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialMode {
    pub k: u32,
    pub cos: f64,
    pub sin: f64,
}

/// Analytic shape families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CurveKind {
    Circle {
        r: f64,
    },
    Ellipse {
        a: f64,
        b: f64,
    },
    /// (cos t + 0.65 cos 2t - 0.65, 1.5 sin t)
    Kite,
    /// Polar graph r(t) = r0 + sum of radial modes.
    Star {
        r0: f64,
        modes: Vec<RadialMode>,
    },
}

impl CurveKind {
    pub fn star_cos(r0: f64, terms: &[(u32, f64)]) -> Self {
        CurveKind::Star { r0, modes: terms.iter().map(|&(k, a)| RadialMode { k, cos: a, sin: 0.0 }).collect() }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidCurve(m.to_string()));
        match self {
            CurveKind::Circle { r } if !(*r > 0.0 && r.is_finite()) => bad("circle radius must be positive"),
            CurveKind::Ellipse { a, b } if !(*a > 0.0 && *b > 0.0 && a.is_finite() && b.is_finite()) => {
                bad("ellipse semi-axes must be positive")
            }
            CurveKind::Star { r0, modes } => {
                if !(*r0 > 0.0 && r0.is_finite()) {
                    return bad("star base radius must be positive");
                }
                if modes.iter().any(|m| m.k == 0 || !m.cos.is_finite() || !m.sin.is_finite()) {
                    return bad("star modes need k >= 1 and finite amplitudes");
                }
                let samples = 4096;
                for i in 0..samples {
                    let t = 2.0 * PI * i as f64 / samples as f64;
                    if self.star_radius(t)[0] <= 0.0 {
                        return bad("star radial function must stay positive");
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// r, r', r'' of a star curve.
    fn star_radius(&self, t: f64) -> [f64; 3] {
        let CurveKind::Star { r0, modes } = self else { unreachable!() };
        let mut r = [*r0, 0.0, 0.0];
        for m in modes {
            let k = m.k as f64;
            let (s, c) = (k * t).sin_cos();
            r[0] += m.cos * c + m.sin * s;
            r[1] += k * (-m.cos * s + m.sin * c);
            r[2] += -k * k * (m.cos * c + m.sin * s);
        }
        r
    }

    /// Position and first two parameter derivatives at t.
    pub fn eval(&self, t: f64) -> [Vec2; 3] {
        let (s, c) = t.sin_cos();
        match self {
            CurveKind::Circle { r } => [Vec2::new(r * c, r * s), Vec2::new(-r * s, r * c), Vec2::new(-r * c, -r * s)],
            CurveKind::Ellipse { a, b } => [Vec2::new(a * c, b * s), Vec2::new(-a * s, b * c), Vec2::new(-a * c, -b * s)],
            CurveKind::Kite => {
                let (s2, c2) = (2.0 * t).sin_cos();
                [Vec2::new(c + 0.65 * c2 - 0.65, 1.5 * s), Vec2::new(-s - 1.3 * s2, 1.5 * c), Vec2::new(-c - 2.6 * c2, -1.5 * s)]
            }
            CurveKind::Star { .. } => {
                let [r, dr, ddr] = self.star_radius(t);
                let e = Vec2::new(c, s);
                let f = Vec2::new(-s, c);
                [e * r, e * dr + f * r, e * (ddr - r) + f * (2.0 * dr)]
            }
        }
    }
}

impl fmt::Display for CurveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurveKind::Circle { r } => write!(f, "circle:{r}"),
            CurveKind::Ellipse { a, b } => write!(f, "ellipse:{a},{b}"),
            CurveKind::Kite => write!(f, "kite"),
            CurveKind::Star { r0, modes } => {
                write!(f, "star:{r0}")?;
                for m in modes {
                    if m.sin == 0.0 {
                        write!(f, ",{},{}", m.cos, m.k)?;
                    } else {
                        write!(f, ",{},{},{}s", m.cos, m.k, m.sin)?;
                    }
                }
                Ok(())
            }
        }
    }
}

impl FromStr for CurveKind {
    type Err = Error;

    /// Accepts `circle:r`, `ellipse:a,b`, `kite` and `star:r0,amp,k[,amp,k...]`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), a.trim()),
            None => (s.trim(), ""),
        };
        let nums = |expected: Option<usize>| -> Result<Vec<f64>> {
            let v: Vec<f64> = if args.is_empty() {
                Vec::new()
            } else {
                args.split(',')
                    .map(|x| {
                        x.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::InvalidArgument(format!("curve {name}: cannot parse parameter '{}'", x.trim())))
                    })
                    .collect::<Result<_>>()?
            };
            if let Some(n) = expected {
                if v.len() != n {
                    return Err(Error::InvalidArgument(format!("curve {name}: expected {n} parameter(s), got {}", v.len())));
                }
            }
            Ok(v)
        };
        let kind = match name {
            "circle" => CurveKind::Circle { r: nums(Some(1))?[0] },
            "ellipse" => {
                let v = nums(Some(2))?;
                CurveKind::Ellipse { a: v[0], b: v[1] }
            }
            "kite" => {
                nums(Some(0))?;
                CurveKind::Kite
            }
            "star" => {
                let v = nums(None)?;
                if v.is_empty() || v.len() % 2 == 0 {
                    return Err(Error::InvalidArgument("curve star: expected r0 followed by (amplitude, k) pairs".into()));
                }
                let mut modes = Vec::new();
                for pair in v[1..].chunks(2) {
                    let k = pair[1];
                    if k < 1.0 || k.fract() != 0.0 {
                        return Err(Error::InvalidArgument(format!("curve star: mode index '{k}' must be a positive integer")));
                    }
                    modes.push(RadialMode { k: k as u32, cos: pair[0], sin: 0.0 });
                }
                CurveKind::Star { r0: v[0], modes }
            }
            other => return Err(Error::InvalidArgument(format!("curve: unknown kind '{other}'"))),
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// A closed curve sampled at t_i = 2 pi i / N.
///
/// The parametrization is counter-clockwise, so the outward normal is the
/// tangent turned clockwise and the circle has curvature +1/r.
#[derive(Clone, Debug)]
pub struct Curve {
    label: String,
    params: Vec<f64>,
    nodes: Vec<Vec2>,
    d1: Vec<Vec2>,
    d2: Vec<Vec2>,
    tangent: Vec<Vec2>,
    normal: Vec<Vec2>,
    curvature: Vec<f64>,
    speed: Vec<f64>,
    weights: Vec<f64>,
}

/// Samples an analytic shape on N equispaced parameters.
pub fn build_curve(kind: &CurveKind, n: usize) -> Result<Curve> {
    kind.validate()?;
    check_node_count(n)?;
    let params = fourier::grid(n);
    let mut nodes = Vec::with_capacity(n);
    let mut d1 = Vec::with_capacity(n);
    let mut d2 = Vec::with_capacity(n);
    for &t in &params {
        let [x, dx, ddx] = kind.eval(t);
        nodes.push(x);
        d1.push(dx);
        d2.push(ddx);
    }
    let c = Curve::from_samples(kind.to_string(), nodes, d1, d2)?;
    c.check_simple()?;
    Ok(c)
}

fn check_node_count(n: usize) -> Result<()> {
    if n < 16 || !n.is_multiple_of(2) {
        return Err(Error::InvalidCurve(format!("node count must be even and at least 16, got {n}")));
    }
    Ok(())
}

impl Curve {
    /// Builds a curve from positions and the first two parameter derivatives
    /// on the equispaced grid. Orientation and non-degeneracy are checked;
    /// simplicity is checked separately by [`Curve::check_simple`].
    pub fn from_samples(label: String, nodes: Vec<Vec2>, d1: Vec<Vec2>, d2: Vec<Vec2>) -> Result<Curve> {
        let n = nodes.len();
        check_node_count(n)?;
        for v in [&d1, &d2] {
            if v.len() != n {
                return Err(Error::LengthMismatch { expected: n, got: v.len() });
            }
        }
        if nodes.iter().chain(&d1).chain(&d2).any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidCurve("non-finite samples".into()));
        }
        let speed: Vec<f64> = d1.iter().map(|d| d.norm()).collect();
        let vmax = speed.iter().cloned().fold(0.0, f64::max);
        if vmax == 0.0 || speed.iter().any(|&s| s <= 1e-12 * vmax) {
            return Err(Error::InvalidCurve("parametrization has vanishing speed".into()));
        }
        let tangent: Vec<Vec2> = d1.iter().zip(&speed).map(|(d, s)| *d * (1.0 / s)).collect();
        let normal: Vec<Vec2> = tangent.iter().map(|t| t.rot_cw()).collect();
        let curvature: Vec<f64> = d1.iter().zip(&d2).zip(&speed).map(|((a, b), s)| a.cross(*b) / (s * s * s)).collect();
        let h = 2.0 * PI / n as f64;
        let weights: Vec<f64> = speed.iter().map(|s| h * s).collect();
        let c = Curve { label, params: fourier::grid(n), nodes, d1, d2, tangent, normal, curvature, speed, weights };
        if c.area() <= 0.0 {
            return Err(Error::InvalidCurve("curve is not counter-clockwise (non-positive enclosed area)".into()));
        }
        Ok(c)
    }

    /// Rejects curves with two non-adjacent nodes closer than half the
    /// smallest adjacent spacing.
    pub fn check_simple(&self) -> Result<()> {
        let n = self.len();
        let min_adj = (0..n).map(|i| (self.nodes[(i + 1) % n] - self.nodes[i]).norm()).fold(f64::INFINITY, f64::min);
        let limit = 0.5 * min_adj;
        for i in 0..n {
            for j in i + 2..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                if (self.nodes[i] - self.nodes[j]).norm() < limit {
                    return Err(Error::SelfIntersection { i, j });
                }
            }
        }
        Ok(())
    }

    pub fn label(&self) -> &str {
        &self.label
    }
    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
    pub fn params(&self) -> &[f64] {
        &self.params
    }
    pub fn nodes(&self) -> &[Vec2] {
        &self.nodes
    }
    /// dx/dt at the nodes.
    pub fn d1(&self) -> &[Vec2] {
        &self.d1
    }
    /// d^2x/dt^2 at the nodes.
    pub fn d2(&self) -> &[Vec2] {
        &self.d2
    }
    pub fn tangent(&self) -> &[Vec2] {
        &self.tangent
    }
    pub fn normal(&self) -> &[Vec2] {
        &self.normal
    }
    pub fn curvature(&self) -> &[f64] {
        &self.curvature
    }
    pub fn speed(&self) -> &[f64] {
        &self.speed
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    /// Parameter step 2 pi / N.
    pub fn step(&self) -> f64 {
        2.0 * PI / self.len() as f64
    }

    /// Sum of w_i (x_i . nu_i) / 2.
    pub fn area(&self) -> f64 {
        0.5 * self.nodes.iter().zip(&self.normal).zip(&self.weights).map(|((x, n), w)| x.dot(*n) * w).sum::<f64>()
    }

    pub fn length(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Quadrature of a density, sum f_i w_i.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    /// Largest distance between consecutive nodes.
    pub fn max_spacing(&self) -> f64 {
        let n = self.len();
        (0..n).map(|i| (self.nodes[(i + 1) % n] - self.nodes[i]).norm()).fold(0.0, f64::max)
    }

    /// Image under x -> scale * R(angle) x + shift, on the same parameter grid.
    pub fn similarity(&self, scale: f64, angle: f64, shift: Vec2) -> Result<Curve> {
        if !(scale > 0.0) {
            return Err(Error::InvalidArgument("similarity scale must be positive".into()));
        }
        let (s, c) = angle.sin_cos();
        let lin = |v: &Vec2| Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y) * scale;
        Curve::from_samples(
            format!("{}|sim({scale},{angle},{},{})", self.label, shift.x, shift.y),
            self.nodes.iter().map(|v| lin(v) + shift).collect(),
            self.d1.iter().map(lin).collect(),
            self.d2.iter().map(lin).collect(),
        )
    }

    /// Parameter derivative of a density (spectral).
    pub fn dt(&self, f: &[f64]) -> Vec<f64> {
        fourier::derivative(f)
    }

    /// Arclength derivative of a density.
    pub fn ds(&self, f: &[f64]) -> Vec<f64> {
        fourier::derivative(f).iter().zip(&self.speed).map(|(d, s)| d / s).collect()
    }

    /// Writes columns t, x1, x2, nu1, nu2, kappa, w.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x1", "x2", "nu1", "nu2", "kappa", "w"])?;
        for i in 0..self.len() {
            let rec = [
                self.params[i],
                self.nodes[i].x,
                self.nodes[i].y,
                self.normal[i].x,
                self.normal[i].y,
                self.curvature[i],
                self.weights[i],
            ];
            w.write_record(rec.iter().map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A vector field on the nodes of a host curve together with its first two
/// parameter derivatives.
#[derive(Clone, Debug)]
pub struct PerturbationField {
    label: String,
    values: Vec<Vec2>,
    dt: Vec<Vec2>,
    dtt: Vec<Vec2>,
}

impl PerturbationField {
    /// Field given by node values; derivatives are computed spectrally.
    pub fn from_values(label: impl Into<String>, values: Vec<Vec2>) -> Self {
        let dt = fourier::derivative_vec(&values);
        let dtt = fourier::derivative_vec(&dt);
        PerturbationField { label: label.into(), values, dt, dtt }
    }

    pub fn from_parts(label: impl Into<String>, values: Vec<Vec2>, dt: Vec<Vec2>, dtt: Vec<Vec2>) -> Result<Self> {
        let n = values.len();
        for v in [&dt, &dtt] {
            if v.len() != n {
                return Err(Error::LengthMismatch { expected: n, got: v.len() });
            }
        }
        Ok(PerturbationField { label: label.into(), values, dt, dtt })
    }

    /// Field sampled from a function of the parameter and the node position.
    pub fn from_fn(label: impl Into<String>, c: &Curve, f: impl Fn(f64, Vec2) -> Vec2) -> Self {
        let values = c.params().iter().zip(c.nodes()).map(|(&t, &x)| f(t, x)).collect();
        Self::from_values(label, values)
    }

    /// theta(x) = x.
    pub fn dilation(c: &Curve) -> Self {
        PerturbationField { label: "dilation".into(), values: c.nodes.clone(), dt: c.d1.clone(), dtt: c.d2.clone() }
    }

    /// theta = zeta, a constant vector.
    pub fn translation(c: &Curve, zeta: Vec2) -> Self {
        let n = c.len();
        PerturbationField {
            label: format!("translation:{},{}", zeta.x, zeta.y),
            values: vec![zeta; n],
            dt: vec![Vec2::ZERO; n],
            dtt: vec![Vec2::ZERO; n],
        }
    }

    /// theta(x) = Z x with Z the quarter-turn generator [[0, -1], [1, 0]].
    pub fn rotation(c: &Curve) -> Self {
        PerturbationField {
            label: "rotation".into(),
            values: c.nodes.iter().map(|v| v.rot_ccw()).collect(),
            dt: c.d1.iter().map(|v| v.rot_ccw()).collect(),
            dtt: c.d2.iter().map(|v| v.rot_ccw()).collect(),
        }
    }

    /// theta = g tau with g a scalar density.
    pub fn tangential(c: &Curve, g: &[f64]) -> Self {
        let values = c.tangent.iter().zip(g).map(|(t, a)| *t * *a).collect();
        Self::from_values("tangential", values)
    }

    /// theta = a nu with a a scalar density.
    pub fn normal(c: &Curve, a: &[f64]) -> Self {
        let values = c.normal.iter().zip(a).map(|(n, s)| *n * *s).collect();
        Self::from_values("normal", values)
    }

    pub fn label(&self) -> &str {
        &self.label
    }
    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
    pub fn values(&self) -> &[Vec2] {
        &self.values
    }
    pub fn dt(&self) -> &[Vec2] {
        &self.dt
    }
    pub fn dtt(&self) -> &[Vec2] {
        &self.dtt
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// a theta + b other.
    pub fn combine(&self, a: f64, other: &PerturbationField, b: f64) -> Result<Self> {
        if other.len() != self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), got: other.len() });
        }
        let mix = |x: &[Vec2], y: &[Vec2]| x.iter().zip(y).map(|(p, q)| *p * a + *q * b).collect();
        Ok(PerturbationField {
            label: format!("{a}*{}+{b}*{}", self.label, other.label),
            values: mix(&self.values, &other.values),
            dt: mix(&self.dt, &other.dt),
            dtt: mix(&self.dtt, &other.dtt),
        })
    }

    fn check_host(&self, c: &Curve) -> Result<()> {
        if c.len() != self.len() {
            return Err(Error::LengthMismatch { expected: c.len(), got: self.len() });
        }
        Ok(())
    }

    /// theta . nu
    pub fn normal_component(&self, c: &Curve) -> Result<Vec<f64>> {
        self.check_host(c)?;
        Ok(self.values.iter().zip(&c.normal).map(|(v, n)| v.dot(*n)).collect())
    }

    /// theta . tau
    pub fn tangential_component(&self, c: &Curve) -> Result<Vec<f64>> {
        self.check_host(c)?;
        Ok(self.values.iter().zip(&c.tangent).map(|(v, t)| v.dot(*t)).collect())
    }

    /// theta - (theta . nu) nu
    pub fn tangential_part(&self, c: &Curve) -> Result<Vec<Vec2>> {
        self.check_host(c)?;
        Ok(self.values.iter().zip(&c.normal).map(|(v, n)| *v - *n * v.dot(*n)).collect())
    }
}

/// Nodes x + t theta on the same parameter grid with recomputed geometry.
/// The node-to-node identification realizes the pullback to the reference
/// curve, and the weight ratio w_i(t) / w_i(0) is the area-element Jacobian.
pub fn perturb(c: &Curve, theta: &PerturbationField, t: f64) -> Result<Curve> {
    theta.check_host(c)?;
    if t == 0.0 {
        return Ok(c.clone());
    }
    let shift = |a: &[Vec2], b: &[Vec2]| a.iter().zip(b).map(|(p, q)| *p + *q * t).collect::<Vec<_>>();
    let out = Curve::from_samples(
        format!("{}+{t}*{}", c.label, theta.label),
        shift(&c.nodes, &theta.values),
        shift(&c.d1, &theta.dt),
        shift(&c.d2, &theta.dtt),
    )?;
    out.check_simple()?;
    Ok(out)
}

/// (df/ds) tau.
pub fn tangential_gradient(c: &Curve, f: &[f64]) -> Result<Vec<Vec2>> {
    if f.len() != c.len() {
        return Err(Error::LengthMismatch { expected: c.len(), got: f.len() });
    }
    Ok(c.ds(f).iter().zip(&c.tangent).map(|(d, t)| *t * *d).collect())
}

/// Trace of the tangential gradient of theta, which in the plane is
/// tau . d theta / ds.
pub fn surface_divergence(c: &Curve, theta: &PerturbationField) -> Result<Vec<f64>> {
    theta.check_host(c)?;
    Ok(theta.dt.iter().zip(&c.tangent).zip(&c.speed).map(|((d, t), s)| d.dot(*t) / s).collect())
}

/// Derivative of the normal at a material point under x + t theta:
/// -(grad_boundary theta)^T nu = -tau (d theta / ds . nu).
pub fn normal_velocity(c: &Curve, theta: &PerturbationField) -> Result<Vec<Vec2>> {
    theta.check_host(c)?;
    Ok(theta.dt.iter().zip(&c.tangent).zip(&c.normal).zip(&c.speed).map(|(((d, t), n), s)| *t * (-d.dot(*n) / s)).collect())
}
