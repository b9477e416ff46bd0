//! Experiment configuration: JSON document, command-line overrides, and the
//! perturbation-field vocabulary.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry2d::{Curve, CurveKind, PerturbationField};
use crate::vec2::Vec2;

/// Per-check tolerances. Every field defaults to the acceptance value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Absolute eigenvalue error against closed forms.
    pub eigenvalue: f64,
    /// max |KS - SK*|.
    pub calderon: f64,
    /// Weighted-adjoint and S-weighted self-adjointness residuals.
    pub adjoint: f64,
    /// Residuals of T self-adjointness and derivative term identities.
    pub identity: f64,
    /// K[1] = 1/2.
    pub k_one: f64,
    /// Boundary limits recovered by extrapolation.
    pub jump: f64,
    /// Spectrum inside [-1/2 - tol, 1/2 + tol].
    pub kellogg: f64,
    /// |int mu| / ||mu|| for eigenfunctions away from 1/2.
    pub mean_zero: f64,
    /// Relative sup error of the dK formula.
    pub dk: f64,
    /// Relative error of cluster derivatives against finite differences.
    pub cluster: f64,
    /// max |dA - dA^T|.
    pub symmetry: f64,
    /// |dLambda_1 - trace(dA)|.
    pub trace: f64,
    /// |sum of branch derivatives - trace(dA)|.
    pub branch_sum: f64,
    /// Agreement of the two normal-derivative evaluations, relative to max |mu|.
    pub route: f64,
    /// Riesz projector: idempotency, P mu = mu, contour independence.
    pub riesz: f64,
    /// max |dA| for dilations, translations, rotations, tangential fields.
    pub null: f64,
    /// Recovered eigenvalue error.
    pub pohozaev: f64,
    /// Residual of the derivative moved across the S-pairing.
    pub transposed_derivative: f64,
    /// Pointwise spherical-harmonic identities.
    pub sphere: f64,
    /// |trace| / ||theta . nu||_inf on the sphere.
    pub sphere_crit: f64,
    /// Final error of convergence sweeps.
    pub convergence: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eigenvalue: 1e-8,
            calderon: 1e-8,
            adjoint: 1e-10,
            identity: 1e-7,
            k_one: 1e-10,
            jump: 1e-5,
            kellogg: 1e-8,
            mean_zero: 1e-9,
            dk: 1e-6,
            cluster: 1e-4,
            symmetry: 1e-9,
            trace: 1e-12,
            branch_sum: 1e-10,
            route: 1e-9,
            riesz: 1e-8,
            null: 1e-7,
            pohozaev: 1e-6,
            transposed_derivative: 1e-5,
            sphere: 1e-10,
            sphere_crit: 1e-9,
            convergence: 1e-10,
        }
    }
}

impl Tolerances {
    /// Replaces every tolerance by `tol`.
    pub fn uniform(tol: f64) -> Self {
        Tolerances {
            eigenvalue: tol,
            calderon: tol,
            adjoint: tol,
            identity: tol,
            k_one: tol,
            jump: tol,
            kellogg: tol,
            mean_zero: tol,
            dk: tol,
            cluster: tol,
            symmetry: tol,
            trace: tol,
            branch_sum: tol,
            route: tol,
            riesz: tol,
            null: tol,
            pohozaev: tol,
            transposed_derivative: tol,
            sphere: tol,
            sphere_crit: tol,
            convergence: tol,
        }
    }
}

/// Everything a command needs. Parsed from JSON with unknown keys rejected;
/// command-line flags override individual fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `circle:r`, `ellipse:a,b`, `kite` or `star:r0,amp,k[,amp,k...]`.
    pub curve: String,
    /// Node count.
    #[serde(rename = "N")]
    pub n: usize,
    /// Node counts of convergence sweeps.
    #[serde(rename = "N_list")]
    pub n_list: Vec<usize>,
    /// Cluster centre.
    pub lambda: f64,
    /// Cluster half-width.
    pub delta: f64,
    /// Perturbation field, see [`ThetaSpec`].
    pub theta: String,
    /// Central-difference steps, decreasing.
    pub steps: Vec<f64>,
    /// One-sided steps for branch derivatives, decreasing.
    pub forward_steps: Vec<f64>,
    /// Riesz contour points.
    pub contour_points: usize,
    /// Output directory.
    pub out: PathBuf,
    pub tolerances: Tolerances,
    /// Restrict `identities` to one named check.
    pub only: Option<String>,
    /// Run the sphere suite in `identities`.
    pub sphere: bool,
    /// Highest harmonic degree for sphere checks.
    pub kmax: usize,
    /// Sphere grid (polar, azimuthal) sizes.
    pub sphere_grid: [usize; 2],
    /// Random normal fields in `sphere-crit`.
    pub sphere_samples: usize,
    /// Highest degree of the random normal fields.
    pub sphere_field_degree: usize,
    /// Seed of the random normal fields.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            curve: "ellipse:1,0.5".into(),
            n: 256,
            n_list: vec![32, 64, 128, 256],
            lambda: 1.0 / 6.0,
            delta: 0.05,
            theta: "normal-bump".into(),
            steps: vec![1e-3, 5e-4, 2.5e-4],
            forward_steps: vec![1e-3, 5e-4],
            contour_points: 32,
            out: PathBuf::from("np-shape-out"),
            tolerances: Tolerances::default(),
            only: None,
            sphere: false,
            kmax: 6,
            sphere_grid: [64, 128],
            sphere_samples: 20,
            sphere_field_degree: 8,
            seed: 7,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.curve_kind()?;
        self.theta_spec()?;
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n < 16 || !self.n.is_multiple_of(2) {
            return bad(format!("N must be even and at least 16, got {}", self.n));
        }
        if self.n_list.is_empty() || self.n_list.iter().any(|n| *n < 16 || n % 2 != 0) {
            return bad("N_list entries must be even and at least 16".into());
        }
        if !(self.delta > 0.0) {
            return bad(format!("delta must be positive, got {}", self.delta));
        }
        if !self.lambda.is_finite() {
            return bad("lambda must be finite".into());
        }
        for (name, s) in [("steps", &self.steps), ("forward_steps", &self.forward_steps)] {
            if s.is_empty() || s.iter().any(|h| !(*h > 0.0)) || s.windows(2).any(|w| w[1] >= w[0]) {
                return bad(format!("{name} must be positive and strictly decreasing"));
            }
        }
        if self.contour_points < 4 || !self.contour_points.is_multiple_of(2) {
            return bad("contour_points must be even and at least 4".into());
        }
        if self.sphere_grid[0] < 2 || self.sphere_grid[1] < 4 {
            return bad("sphere_grid must be at least [2, 4]".into());
        }
        if 2 * self.kmax + self.sphere_field_degree >= 2 * self.sphere_grid[0]
            || 2 * self.kmax + self.sphere_field_degree >= self.sphere_grid[1]
        {
            return bad("sphere_grid is too coarse for kmax and sphere_field_degree".into());
        }
        Ok(())
    }

    pub fn curve_kind(&self) -> Result<CurveKind> {
        self.curve.parse()
    }

    pub fn theta_spec(&self) -> Result<ThetaSpec> {
        self.theta.parse()
    }

    /// Hex SHA-256 of the canonical (sorted-key, compact) JSON encoding.
    pub fn hash(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        let text = serde_json::to_string(&v).expect("value serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Named perturbation fields.
#[derive(Clone, Debug, PartialEq)]
pub enum ThetaSpec {
    /// theta = x
    Dilation,
    /// theta = zeta
    Translation(Vec2),
    /// theta = Z x, Z the quarter-turn generator
    Rotation,
    /// theta = (1 + sin(2t) / 2) tau
    Tangential,
    /// theta = exp(cos(t - 1)) nu
    NormalBump,
    /// theta = (ax cos(kx t), ay sin(ky t))
    Param { ax: f64, kx: u32, ay: f64, ky: u32 },
}

impl ThetaSpec {
    /// Fields whose first-order effect on the spectrum vanishes.
    pub fn is_null(&self) -> bool {
        matches!(self, ThetaSpec::Dilation | ThetaSpec::Translation(_) | ThetaSpec::Rotation | ThetaSpec::Tangential)
    }

    pub fn build(&self, c: &Curve) -> PerturbationField {
        let label = self.to_string();
        match self {
            ThetaSpec::Dilation => PerturbationField::dilation(c),
            ThetaSpec::Translation(z) => PerturbationField::translation(c, *z),
            ThetaSpec::Rotation => PerturbationField::rotation(c),
            ThetaSpec::Tangential => {
                let g: Vec<f64> = c.params().iter().map(|t| 1.0 + 0.5 * (2.0 * t).sin()).collect();
                PerturbationField::tangential(c, &g)
            }
            ThetaSpec::NormalBump => {
                let a: Vec<f64> = c.params().iter().map(|t| (t - 1.0).cos().exp()).collect();
                PerturbationField::normal(c, &a)
            }
            ThetaSpec::Param { ax, kx, ay, ky } => {
                let (ax, ay, kx, ky) = (*ax, *ay, *kx as f64, *ky as f64);
                PerturbationField::from_fn(label.clone(), c, |t, _| Vec2::new(ax * (kx * t).cos(), ay * (ky * t).sin()))
            }
        }
        .with_label(label)
    }
}

impl fmt::Display for ThetaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThetaSpec::Dilation => write!(f, "dilation"),
            ThetaSpec::Translation(z) => write!(f, "translation:{},{}", z.x, z.y),
            ThetaSpec::Rotation => write!(f, "rotation"),
            ThetaSpec::Tangential => write!(f, "tangential"),
            ThetaSpec::NormalBump => write!(f, "normal-bump"),
            ThetaSpec::Param { ax, kx, ay, ky } => write!(f, "param:{ax},{kx},{ay},{ky}"),
        }
    }
}

impl FromStr for ThetaSpec {
    type Err = Error;

    /// `dilation`, `translation:a,b`, `rotation`, `tangential`,
    /// `normal-bump`, `generic` (= `param:1,2,1,3`) or `param:ax,kx,ay,ky`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = s.split_once(':').map_or((s.trim(), ""), |(a, b)| (a.trim(), b.trim()));
        let nums = |count: usize| -> Result<Vec<f64>> {
            let v: Vec<f64> = args
                .split(',')
                .filter(|x| !x.trim().is_empty())
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidArgument(format!("theta {name}: cannot parse '{}'", x.trim())))
                })
                .collect::<Result<_>>()?;
            if v.len() != count {
                return Err(Error::InvalidArgument(format!("theta {name}: expected {count} parameter(s), got {}", v.len())));
            }
            Ok(v)
        };
        let freq = |x: f64| -> Result<u32> {
            if x < 0.0 || x.fract() != 0.0 || x > 1e6 {
                return Err(Error::InvalidArgument(format!("theta {name}: frequency '{x}' must be a non-negative integer")));
            }
            Ok(x as u32)
        };
        match name {
            "dilation" => nums(0).map(|_| ThetaSpec::Dilation),
            "rotation" => nums(0).map(|_| ThetaSpec::Rotation),
            "tangential" => nums(0).map(|_| ThetaSpec::Tangential),
            "normal-bump" => nums(0).map(|_| ThetaSpec::NormalBump),
            "generic" => nums(0).map(|_| ThetaSpec::Param { ax: 1.0, kx: 2, ay: 1.0, ky: 3 }),
            "translation" => {
                let v = nums(2)?;
                Ok(ThetaSpec::Translation(Vec2::new(v[0], v[1])))
            }
            "param" => {
                let v = nums(4)?;
                Ok(ThetaSpec::Param { ax: v[0], kx: freq(v[1])?, ay: v[2], ky: freq(v[3])? })
            }
            other => Err(Error::InvalidArgument(format!("theta: unknown field '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_json() {
        let c = ExperimentConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = ExperimentConfig::from_json(r#"{"curve": "kite", "bogus": 1}"#).unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
    }

    #[test]
    fn partial_documents_take_defaults() {
        let c = ExperimentConfig::from_json(r#"{"curve": "kite", "N": 64}"#).unwrap();
        assert_eq!(c.n, 64);
        assert_eq!(c.delta, ExperimentConfig::default().delta);
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.n = 128;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn theta_names_parse() {
        for s in ["dilation", "rotation", "tangential", "normal-bump", "translation:1,-2", "param:1,2,0.5,3"] {
            assert_eq!(s.parse::<ThetaSpec>().unwrap().to_string(), s);
        }
        assert!("param:1,2".parse::<ThetaSpec>().is_err());
        assert!("wobble".parse::<ThetaSpec>().is_err());
    }
}
