//! The six batch commands. Each returns an [`Outcome`]; writing files and
//! choosing the exit code is left to the caller.

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::cli::config::ExperimentConfig;
use crate::cli::report::{num, Check, Outcome, Table};
use crate::error::{Error, Result};
use crate::geometry2d::{build_curve, Curve, CurveKind};
use crate::layer2d::{assemble_kstar, assemble_s, jump_residuals, LayerOperators};
use crate::shapederiv::{
    check_branches, check_dk, check_symmetric_functions, cluster_derivative_matrix, continuity_check, derivative_term_residuals,
    invariance_residual, pohozaev_lambda, transposed_derivative_check,
};
use crate::spectral::{
    cluster_contour, extract_cluster, max_abs_diff, riesz_projector, sigma_s_inner, solve_spectrum, verify_plasmonic,
    EigenCluster, Spectrum,
};
use crate::sphere3d::{
    funk_hecke_single_layer, gradient_identities, np_eigenvalue, random_band_limited, sphere_cluster_derivative, unsold_check,
    HarmonicBasis, SphereGrid,
};
use crate::vec2::Vec2;

/// Names accepted by `identities --only`.
pub const CURVE_CHECKS: [&str; 22] = [
    "calderon",
    "k_one",
    "kstar_adjoint",
    "sigma_s_adjoint",
    "t_adjoint",
    "t_one",
    "jump_double",
    "jump_single",
    "jump_single_normal",
    "gradient_jump",
    "kellogg",
    "mean_zero",
    "term_pv",
    "term_normal",
    "term_tangential",
    "route_agreement",
    "plasmonic",
    "riesz_idempotent",
    "riesz_rank",
    "riesz_fixed",
    "riesz_contour",
    "continuity",
];

/// Names accepted by `identities --sphere --only`.
pub const SPHERE_CHECKS: [&str; 9] = [
    "sphere_eigenvalues",
    "sphere_weights",
    "harmonic_orthonormality",
    "laplace_beltrami",
    "unsold",
    "surface_gradient",
    "normal_derivative",
    "funk_hecke",
    "funk_hecke_kstar",
];

fn curve_of(cfg: &ExperimentConfig, n: usize) -> Result<Curve> {
    build_curve(&cfg.curve_kind()?, n)
}

/// Eigenvalues known in closed form: the circle has 1/2 and zeros, the
/// ellipse +-((a-b)/(a+b))^k / 2.
fn closed_form(kind: &CurveKind, levels: u32) -> Option<Vec<f64>> {
    match kind {
        CurveKind::Circle { .. } => Some(vec![0.5]),
        CurveKind::Ellipse { a, b } => {
            let q = (a - b).abs() / (a + b);
            let mut v = vec![0.5];
            for k in 1..=levels {
                let e = 0.5 * q.powi(k as i32);
                v.push(e);
                v.push(-e);
            }
            Some(v)
        }
        _ => None,
    }
}

/// Largest distance from an expected eigenvalue to the computed spectrum.
/// For the circle the remaining eigenvalues must also vanish.
fn closed_form_error(kind: &CurveKind, values: &[f64], levels: u32) -> Option<f64> {
    let expected = closed_form(kind, levels)?;
    let mut err: f64 = 0.0;
    for e in &expected {
        let d = values.iter().map(|v| (v - e).abs()).fold(f64::INFINITY, f64::min);
        err = err.max(d);
    }
    if let CurveKind::Circle { .. } = kind {
        for v in values.iter().skip(1) {
            err = err.max(v.abs());
        }
    }
    Some(err)
}

/// Largest real eigenvalue strictly below 1/2, with a window of 0.3 times
/// the distance to its neighbours.
fn auto_target(sp: &Spectrum) -> Option<(f64, f64)> {
    let v = sp.real_values();
    let i = v.iter().position(|x| *x < 0.5 - 1e-6)?;
    let above = v[..i].last().copied().unwrap_or(0.5);
    let below = v.get(i + 1).copied()?;
    let gap = (above - v[i]).min(v[i] - below);
    (gap > 1e-8).then_some((v[i], 0.3 * gap))
}

/// Cluster at the configured target; when the window is empty, fall back to
/// the largest eigenvalue below 1/2.
fn cluster_for(cfg: &ExperimentConfig, c: &Curve, ops: &LayerOperators, sp: &Spectrum) -> Result<(EigenCluster, &'static str)> {
    match extract_cluster(sp, cfg.lambda, cfg.delta, &ops.s, c) {
        Ok(cl) => Ok((cl, "config")),
        Err(Error::EmptyCluster { .. }) => {
            let (t, d) = auto_target(sp).ok_or_else(|| Error::InvalidArgument("no isolated eigenvalue below 1/2".into()))?;
            Ok((extract_cluster(sp, t, d, &ops.s, c)?, "auto"))
        }
        Err(e) => Err(e),
    }
}

fn cluster_json(cl: &EigenCluster) -> serde_json::Value {
    json!({
        "lambda_bar": cl.lambda_bar,
        "delta": cl.delta,
        "m": cl.m(),
        "lambdas": cl.lambdas,
        "residuals": cl.residuals,
        "normalization": format!("{:?}", cl.normalization),
    })
}

fn write_curve_table(c: &Curve) -> Result<Table> {
    let mut buf = Vec::new();
    c.write_csv(&mut buf)?;
    let mut rdr = csv::Reader::from_reader(buf.as_slice());
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let mut t = Table { file: "curve.csv".into(), header, rows: Vec::new() };
    for r in rdr.records() {
        t.push(r?.iter().map(String::from).collect());
    }
    Ok(t)
}

pub fn spectrum(cfg: &ExperimentConfig) -> Result<Outcome> {
    let kind = cfg.curve_kind()?;
    let c = build_curve(&kind, cfg.n)?;
    let s = assemble_s(&c);
    let sp = solve_spectrum(&assemble_kstar(&c))?;
    let tol = &cfg.tolerances;
    let mut out = Outcome::new("spectrum");
    let mut table = Table::new("spectrum.csv", &["index", "re", "im"]);
    for (i, v) in sp.values().iter().enumerate() {
        table.push(vec![i.to_string(), num(v.re), num(v.im)]);
    }
    let re = sp.real_values();
    out.put("curve", c.label());
    out.put("N", c.len());
    out.put("eigenvalues", &re);
    out.put(
        "complex_flagged",
        sp.flagged().iter().map(|&i| json!({"index": i, "re": sp.values()[i].re, "im": sp.values()[i].im})).collect::<Vec<_>>(),
    );
    out.put("near_zero_count", re.iter().filter(|v| v.abs() < 1e-10).count());
    let kellogg = sp.values().iter().map(|v| v.re.abs() - 0.5).fold(0.0, f64::max);
    out.check(Check::at_most("kellogg", kellogg, tol.kellogg));
    if let Some(err) = closed_form_error(&kind, &re, 8) {
        out.put("closed_form", closed_form(&kind, 8));
        out.check(Check::at_most("closed_form", err, tol.eigenvalue));
    }
    match extract_cluster(&sp, cfg.lambda, cfg.delta, &s, &c) {
        Ok(cl) => out.put("cluster", cluster_json(&cl)),
        Err(e) if e.is_usage() => out.put("cluster", json!({"target": cfg.lambda, "delta": cfg.delta, "error": e.to_string()})),
        Err(e) => return Err(e),
    }
    out.tables.push(table);
    out.tables.push(write_curve_table(&c)?);
    Ok(out)
}

pub fn deriv_check(cfg: &ExperimentConfig) -> Result<Outcome> {
    let c = curve_of(cfg, cfg.n)?;
    let spec = cfg.theta_spec()?;
    let theta = spec.build(&c);
    let ops = LayerOperators::assemble(&c);
    let sp = solve_spectrum(&ops.kstar)?;
    let cl = extract_cluster(&sp, cfg.lambda, cfg.delta, &ops.s, &c)?;
    let cd = cluster_derivative_matrix(&c, &ops, &cl, &theta)?;
    let tol = &cfg.tolerances;
    let mut out = Outcome::new("deriv-check");
    out.put("curve", c.label());
    out.put("N", c.len());
    out.put("cluster", cluster_json(&cl));
    out.put("derivative", &cd);
    let mut table = Table::new("deriv_check.csv", &["quantity", "h", "formula", "oracle", "rel_err"]);
    if cd.fast_path {
        out.put("note", "cluster at 1/2: derivative is zero");
        out.tables.push(table);
        return Ok(out);
    }
    out.check(Check::at_most("symmetry", cd.asymmetry(), tol.symmetry));
    out.check(Check::at_most("trace_dlambda", (cd.d_lambda[0] - cd.trace()).abs(), tol.trace));
    out.check(Check::at_most("trace_branches", (cd.branch_derivs.iter().sum::<f64>() - cd.trace()).abs(), tol.branch_sum));
    out.check(Check::at_most("route_agreement", cd.route_discrepancy, tol.route));

    let sym = check_symmetric_functions(&c, &cl, &cd, &theta, &cfg.steps)?;
    let branches = check_branches(&c, &cl, &cd, &theta, &cfg.forward_steps)?;
    for (name, r) in [("dLambda", &sym), ("branch", &branches)] {
        let scale = r.oracle.extrapolated.iter().fold(0.0, |a: f64, b| a.max(b.abs()));
        for (h, (f, o)) in r.formula.iter().zip(&r.oracle.extrapolated).enumerate() {
            let rel = if scale > 0.0 { (f - o).abs() / scale } else { (f - o).abs() };
            table.push(vec![name.into(), (h + 1).to_string(), num(*f), num(*o), num(rel)]);
        }
    }
    if spec.is_null() {
        out.check(Check::at_most("null_dA", cd.max_abs(), tol.null));
        out.check(Check::at_most("null_dLambda_fd", sym.abs_err, tol.null));
    } else {
        out.check(Check::at_most("dLambda_rel", sym.rel_err, tol.cluster));
        out.check(Check::at_most("branch_rel", branches.rel_err, tol.cluster));
    }
    let eta = ops.s.apply(&cl.basis[0])?;
    let dk = check_dk(&c, &theta, &eta, &cfg.steps)?;
    table.push(vec![
        "dK".into(),
        "sup".into(),
        num(dk.formula.iter().fold(0.0, |a, b| a.max(b.abs()))),
        num(dk.oracle.extrapolated.iter().fold(0.0, |a, b| a.max(b.abs()))),
        num(dk.rel_err),
    ]);
    out.check(Check::at_most("dK", dk.rel_err, tol.dk));
    let sw = transposed_derivative_check(&c, &ops, &cl, &theta, &cfg.steps)?;
    out.check(Check::at_most("transposed_derivative", sw.max_residual, tol.transposed_derivative));
    out.put("dlambda_report", &sym);
    out.put("branch_report", &branches);
    out.put("dk_report", json!({"abs_err": dk.abs_err, "rel_err": dk.rel_err, "steps": dk.oracle.steps}));
    out.put("transposed_derivative", &sw);
    out.tables.push(table);
    Ok(out)
}

fn wanted(only: &Option<Vec<String>>, name: &str) -> bool {
    only.as_ref().is_none_or(|v| v.iter().any(|s| s == name))
}

fn parse_only(cfg: &ExperimentConfig, known: &[&str]) -> Result<Option<Vec<String>>> {
    let Some(list) = &cfg.only else {
        return Ok(None);
    };
    let names: Vec<String> = list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    for n in &names {
        if !known.contains(&n.as_str()) {
            return Err(Error::InvalidArgument(format!("unknown check '{n}'; valid: {}", known.join(", "))));
        }
    }
    if names.is_empty() {
        return Err(Error::InvalidArgument("--only needs at least one check name".into()));
    }
    Ok(Some(names))
}

/// Smooth test density: a random trigonometric polynomial of degree 8.
fn smooth_density(c: &Curve, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let coef: Vec<(f64, f64)> = (0..=8).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    c.params()
        .iter()
        .map(|t| coef.iter().enumerate().map(|(k, (a, b))| a * (k as f64 * t).cos() + b * (k as f64 * t).sin()).sum())
        .collect()
}

fn matrix_residual(a: &faer::Mat<f64>, b: &faer::Mat<f64>) -> f64 {
    max_abs_diff(a, b)
}

pub fn identities(cfg: &ExperimentConfig) -> Result<Outcome> {
    if cfg.sphere {
        return sphere_identities(cfg);
    }
    let only = parse_only(cfg, &CURVE_CHECKS)?;
    let want = |n: &str| wanted(&only, n);
    let tol = &cfg.tolerances;
    let c = curve_of(cfg, cfg.n)?;
    let ops = LayerOperators::assemble(&c);
    let n = c.len();
    let w = c.weights();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Outcome::new("identities");
    out.put("curve", c.label());
    out.put("N", n);

    if want("calderon") {
        let ks = crate::layer2d::matmul(ops.k.matrix(), ops.s.matrix());
        let sk = crate::layer2d::matmul(ops.s.matrix(), ops.kstar.matrix());
        out.check(Check::at_most("calderon", matrix_residual(&ks, &sk), tol.calderon));
    }
    if want("k_one") {
        let k1 = ops.k.apply(&vec![1.0; n])?;
        out.check(Check::at_most("k_one", k1.iter().map(|v| (v - 0.5).abs()).fold(0.0, f64::max), tol.k_one));
    }
    if want("kstar_adjoint") {
        let a = ops.k.matrix();
        let b = faer::Mat::from_fn(n, n, |i, j| a[(j, i)] * w[j] / w[i]);
        out.check(Check::at_most("kstar_adjoint", max_abs_diff(ops.kstar.matrix(), &b), tol.adjoint));
    }
    if want("sigma_s_adjoint") {
        let mut r: f64 = 0.0;
        for _ in 0..4 {
            let f: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let l = sigma_s_inner(&ops.s, &ops.kstar.apply(&f)?, &g)?;
            let rr = sigma_s_inner(&ops.s, &f, &ops.kstar.apply(&g)?)?;
            r = r.max((l - rr).abs());
        }
        out.check(Check::at_most("sigma_s_adjoint", r, tol.adjoint));
    }
    if want("t_adjoint") {
        let mut r: f64 = 0.0;
        for _ in 0..4 {
            let f = smooth_density(&c, &mut rng);
            let g = smooth_density(&c, &mut rng);
            let (tf, tg) = (ops.t.apply(&f)?, ops.t.apply(&g)?);
            let l: f64 = (0..n).map(|k| w[k] * f[k] * tg[k]).sum();
            let rr: f64 = (0..n).map(|k| w[k] * tf[k] * g[k]).sum();
            r = r.max((l - rr).abs());
        }
        out.check(Check::at_most("t_adjoint", r, tol.identity));
    }
    if want("t_one") {
        let t1 = ops.t.apply(&vec![1.0; n])?;
        out.check(Check::at_most("t_one", t1.iter().fold(0.0, |a: f64, b| a.max(b.abs())), tol.identity));
    }
    let jump_names = ["jump_double", "jump_single", "jump_single_normal", "gradient_jump"];
    if jump_names.iter().any(|s| want(s)) {
        let eta = smooth_density(&c, &mut rng);
        let psi = smooth_density(&c, &mut rng);
        let nodes: Vec<usize> = (0..16).map(|k| k * n / 16).collect();
        let j = jump_residuals(&c, &ops, &eta, &psi, &nodes)?;
        for (name, v) in jump_names.iter().zip([j.double_layer, j.single_layer, j.single_normal, j.double_gradient]) {
            if want(name) {
                out.check(Check::at_most(*name, v, tol.jump));
            }
        }
    }
    let spectrum_names = ["kellogg", "mean_zero"];
    let cluster_names = [
        "term_pv",
        "term_normal",
        "term_tangential",
        "route_agreement",
        "plasmonic",
        "riesz_idempotent",
        "riesz_rank",
        "riesz_fixed",
        "riesz_contour",
        "continuity",
    ];
    if spectrum_names.iter().chain(&cluster_names).any(|s| want(s)) {
        let sp = solve_spectrum(&ops.kstar)?;
        if want("kellogg") {
            let v = sp.values().iter().map(|v| v.re.abs() - 0.5).fold(0.0, f64::max);
            out.check(Check::at_most("kellogg", v, tol.kellogg));
        }
        if want("mean_zero") {
            let vecs = sp.vectors();
            let mut worst: f64 = 0.0;
            for (j, lam) in sp.values().iter().enumerate() {
                if (lam.re - 0.5).abs() < 1e-6 {
                    continue;
                }
                let (mut sr, mut si, mut nrm) = (0.0, 0.0, 0.0);
                for k in 0..n {
                    let z = vecs[(k, j)];
                    sr += w[k] * z.re;
                    si += w[k] * z.im;
                    nrm += w[k] * (z.re * z.re + z.im * z.im);
                }
                worst = worst.max(sr.hypot(si) / nrm.sqrt());
            }
            out.check(Check::at_most("mean_zero", worst, tol.mean_zero));
        }
        if cluster_names.iter().any(|s| want(s)) {
            let (cl, source) = cluster_for(cfg, &c, &ops, &sp)?;
            let mut cj = cluster_json(&cl);
            cj["source"] = json!(source);
            out.put("cluster", cj);
            let theta = cfg.theta_spec()?.build(&c);
            if ["term_pv", "term_normal", "term_tangential"].iter().any(|s| want(s)) {
                let l = derivative_term_residuals(&c, &ops, &cl, &theta)?;
                for (name, v) in [("term_pv", l.principal_value), ("term_normal", l.normal), ("term_tangential", l.tangential)] {
                    if want(name) {
                        out.check(Check::at_most(name, v, tol.identity));
                    }
                }
            }
            if want("route_agreement") {
                let cd = cluster_derivative_matrix(&c, &ops, &cl, &theta)?;
                out.check(Check::at_most("route_agreement", cd.route_discrepancy, tol.route));
            }
            if want("plasmonic") {
                let samples: Vec<usize> = (0..8).map(|k| k * n / 8).collect();
                let p = verify_plasmonic(&c, &cl, &samples)?;
                out.check(Check::at_most("plasmonic", p.max_residual(), tol.jump));
            }
            if ["riesz_idempotent", "riesz_rank", "riesz_fixed", "riesz_contour"].iter().any(|s| want(s)) {
                let (center, r1, r2) = cluster_contour(&sp, &cl);
                out.put("contour", json!({"center": center, "radii": [r1, r2], "points": cfg.contour_points}));
                let p = riesz_projector(&ops.kstar, center, r1, cfg.contour_points)?;
                if want("riesz_idempotent") {
                    out.check(Check::at_most("riesz_idempotent", p.idempotency_residual(), tol.riesz));
                }
                if want("riesz_rank") {
                    let r = p.rank(1e-6)?;
                    out.check(Check::at_most("riesz_rank", (r as f64 - cl.m() as f64).abs(), 0.0));
                }
                if want("riesz_fixed") {
                    let mut r: f64 = 0.0;
                    for mu in &cl.basis {
                        let pm = p.apply(mu)?;
                        let s = mu.iter().fold(0.0, |a: f64, b| a.max(b.abs()));
                        r = r.max(pm.iter().zip(mu).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / s);
                    }
                    out.check(Check::at_most("riesz_fixed", r, tol.riesz));
                }
                if want("riesz_contour") {
                    let q = riesz_projector(&ops.kstar, center, r2, cfg.contour_points)?;
                    out.check(Check::at_most("riesz_contour", max_abs_diff(p.matrix(), q.matrix()), tol.riesz));
                }
            }
            if want("continuity") {
                let r = continuity_check(&c, &cl, &theta, &cfg.steps)?;
                out.put("continuity", &r);
                // Displacement linear in t: the rates agree to 10%.
                out.check(Check::at_most("continuity", r.rate_spread(1e-12), 0.1));
            }
        }
    }
    Ok(out)
}

fn sphere_identities(cfg: &ExperimentConfig) -> Result<Outcome> {
    let only = parse_only(cfg, &SPHERE_CHECKS)?;
    let want = |n: &str| wanted(&only, n);
    let tol = &cfg.tolerances;
    let grid = SphereGrid::new(cfg.sphere_grid[0], cfg.sphere_grid[1])?;
    let mut out = Outcome::new("identities");
    out.put("surface", "sphere");
    out.put("grid", cfg.sphere_grid);
    out.put("kmax", cfg.kmax);
    if want("sphere_eigenvalues") {
        let mut bad = 0usize;
        for k in 0..=10u32 {
            let e = np_eigenvalue(3, k)?;
            if e.lambda != Ratio::new(1, 2 * (2 * k as i64 + 1)) || e.multiplicity != 2 * k as u64 + 1 {
                bad += 1;
            }
        }
        out.check(Check::at_most("sphere_eigenvalues", bad as f64, 0.0));
    }
    if want("sphere_weights") {
        let s: f64 = grid.weights.iter().sum();
        out.check(Check::at_most("sphere_weights", (s - 4.0 * std::f64::consts::PI).abs(), tol.sphere));
    }
    let per_k: Vec<[f64; 7]> = (0..=cfg.kmax)
        .into_par_iter()
        .map(|k| {
            let b = HarmonicBasis::new(&grid, k);
            let (ortho, lb) = b.orthonormality(&grid);
            let u = unsold_check(&grid, &b)?;
            let g = gradient_identities(&grid, &b)?;
            let fh = funk_hecke_single_layer(k)?;
            Ok([ortho, lb, u, g.surface_gradient, g.normal_derivative, fh.single_layer, fh.kstar])
        })
        .collect::<Result<_>>()?;
    let mut table = Table::new("sphere_identities.csv", &["k", "check", "residual"]);
    let names = [
        "harmonic_orthonormality",
        "laplace_beltrami",
        "unsold",
        "surface_gradient",
        "normal_derivative",
        "funk_hecke",
        "funk_hecke_kstar",
    ];
    for (idx, name) in names.iter().enumerate() {
        for (k, r) in per_k.iter().enumerate() {
            table.push(vec![k.to_string(), name.to_string(), num(r[idx])]);
        }
        if want(name) {
            let worst = per_k.iter().map(|r| r[idx]).fold(0.0, f64::max);
            out.check(Check::at_most(*name, worst, tol.sphere));
        }
    }
    out.tables.push(table);
    Ok(out)
}

pub fn pohozaev(cfg: &ExperimentConfig) -> Result<Outcome> {
    let c = curve_of(cfg, cfg.n)?;
    let ops = LayerOperators::assemble(&c);
    let sp = solve_spectrum(&ops.kstar)?;
    let tol = &cfg.tolerances;
    let mut out = Outcome::new("pohozaev");
    out.put("curve", c.label());
    out.put("N", c.len());
    let mut table = Table::new("pohozaev.csv", &["branch", "index", "lambda_spectral", "lambda_recovered", "abs_err"]);
    let zeta = Vec2::new(0.6, 0.8);
    let weights: [(&str, Vec<f64>); 3] = [
        ("dilation", c.nodes().iter().zip(c.normal()).map(|(x, n)| x.dot(*n)).collect()),
        ("translation", c.normal().iter().map(|n| zeta.dot(*n)).collect()),
        ("rotation", c.nodes().iter().zip(c.normal()).map(|(x, n)| x.rot_ccw().dot(*n)).collect()),
    ];
    let mut branches = Vec::new();
    for (label, target) in [("plus", cfg.lambda), ("minus", -cfg.lambda)] {
        let cl = match extract_cluster(&sp, target, cfg.delta, &ops.s, &c) {
            Ok(cl) => cl,
            Err(e @ Error::EmptyCluster { .. }) => {
                branches.push(json!({"branch": label, "target": target, "skipped": e.to_string()}));
                continue;
            }
            Err(e) => return Err(e),
        };
        let rec = pohozaev_lambda(&c, &ops, &cl)?;
        let mut worst: f64 = 0.0;
        for (i, r) in rec.iter().enumerate() {
            let e = (r.lambda_recovered - r.lambda_spectral).abs();
            worst = worst.max(e);
            table.push(vec![label.into(), i.to_string(), num(r.lambda_spectral), num(r.lambda_recovered), num(e)]);
        }
        out.check(Check::at_most(format!("pohozaev_{label}"), worst, tol.pohozaev));
        let mut inv = serde_json::Map::new();
        for (name, g) in &weights {
            let res = invariance_residual(&c, &ops, &cl, g)?;
            let v = res.iter().map(|r| r.residual.abs() / r.scale).fold(0.0, f64::max);
            out.check(Check::at_most(format!("{name}_{label}"), v, tol.null));
            inv.insert(name.to_string(), serde_json::to_value(&res)?);
        }
        branches.push(json!({"branch": label, "cluster": cluster_json(&cl), "recovered": rec, "invariance": inv}));
    }
    if out.checks.is_empty() {
        return Err(Error::InvalidArgument(format!("no eigenvalue within {} of +-{}", cfg.delta, cfg.lambda)));
    }
    out.put("branches", branches);
    out.tables.push(table);
    Ok(out)
}

pub fn sphere_crit(cfg: &ExperimentConfig) -> Result<Outcome> {
    let grid = SphereGrid::new(cfg.sphere_grid[0], cfg.sphere_grid[1])?;
    let tol = &cfg.tolerances;
    let mut out = Outcome::new("sphere-crit");
    out.put("grid", cfg.sphere_grid);
    out.put("samples", cfg.sphere_samples);
    out.put("field_degree", cfg.sphere_field_degree);
    let fields: Vec<Vec<f64>> = (0..cfg.sphere_samples as u64)
        .into_par_iter()
        .map(|s| random_band_limited(&grid, cfg.sphere_field_degree, cfg.seed.wrapping_add(s)))
        .collect();
    let mut table = Table::new("sphere_crit.csv", &["k", "sample", "trace", "sup_normal", "ratio", "max_off_diagonal"]);
    let mut per_k = Vec::new();
    for k in 1..=cfg.kmax {
        let e = np_eigenvalue(3, k as u32)?;
        let b = HarmonicBasis::new(&grid, k);
        let rows: Vec<(f64, f64, f64)> = fields
            .par_iter()
            .map(|q| {
                let d = sphere_cluster_derivative(&grid, &b, q)?;
                let sup = q.iter().fold(0.0, |a: f64, v| a.max(v.abs()));
                Ok((d.trace, sup, d.max_off_diagonal))
            })
            .collect::<Result<_>>()?;
        let mut worst: f64 = 0.0;
        for (s, (tr, sup, off)) in rows.iter().enumerate() {
            worst = worst.max(tr.abs() / sup);
            table.push(vec![k.to_string(), s.to_string(), num(*tr), num(*sup), num(tr.abs() / sup), num(*off)]);
        }
        let dil = sphere_cluster_derivative(&grid, &b, &vec![1.0; grid.len()])?;
        out.check(Check::at_most(format!("criticality_k{k}"), worst, tol.sphere_crit));
        per_k.push(json!({
            "k": k,
            "lambda": e.lambda.to_string(),
            "multiplicity": e.multiplicity,
            "worst_ratio": worst,
            "max_off_diagonal": rows.iter().map(|r| r.2).fold(0.0, f64::max),
            "dilation_trace": dil.trace,
        }));
    }
    out.put("degrees", per_k);
    out.tables.push(table);
    Ok(out)
}

pub fn convergence(cfg: &ExperimentConfig) -> Result<Outcome> {
    let kind = cfg.curve_kind()?;
    let tol = &cfg.tolerances;
    let mut ns = cfg.n_list.clone();
    ns.sort_unstable();
    ns.dedup();
    let runs: Vec<(usize, Vec<f64>, f64)> = ns
        .par_iter()
        .map(|&n| {
            let c = build_curve(&kind, n)?;
            let ops = LayerOperators::assemble(&c);
            let sp = solve_spectrum(&ops.kstar)?;
            let ks = crate::layer2d::matmul(ops.k.matrix(), ops.s.matrix());
            let sk = crate::layer2d::matmul(ops.s.matrix(), ops.kstar.matrix());
            Ok((n, sp.real_values(), max_abs_diff(&ks, &sk)))
        })
        .collect::<Result<_>>()?;
    let mut out = Outcome::new("convergence");
    out.put("curve", kind.to_string());
    out.put("N_list", &ns);
    let mut table = Table::new("convergence.csv", &["N", "quantity", "error"]);
    let closed = closed_form(&kind, 8).is_some();
    let errors: Vec<Option<f64>> = if closed {
        runs.iter().map(|(_, v, _)| closed_form_error(&kind, v, 8)).collect()
    } else {
        // Self-convergence of the ten largest eigenvalues against the
        // finest grid.
        let reference = &runs.last().expect("non-empty N_list").1;
        runs.iter()
            .enumerate()
            .map(|(i, (_, v, _))| {
                (i + 1 < runs.len()).then(|| v.iter().zip(reference).take(10).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            })
            .collect()
    };
    for ((n, _, cal), err) in runs.iter().zip(&errors) {
        if let Some(e) = err {
            table.push(vec![n.to_string(), "eigenvalue".into(), num(*e)]);
        }
        table.push(vec![n.to_string(), "calderon".into(), num(*cal)]);
    }
    let errs: Vec<f64> = errors.iter().flatten().copied().collect();
    out.put("eigenvalue_error", &errs);
    out.put("calderon_residual", runs.iter().map(|r| r.2).collect::<Vec<_>>());
    out.put("reference", if closed { "closed form" } else { "finest grid" });
    if let Some(last) = errs.last() {
        out.check(Check::at_most("eigenvalue_final", *last, tol.convergence));
        let violations = errs.windows(2).filter(|w| w[1] > w[0] && w[1] > 1e-12).count();
        out.check(Check::at_most("eigenvalue_monotone", violations as f64, 0.0));
    }
    out.check(Check::at_most("calderon_final", runs.last().map_or(0.0, |r| r.2), tol.calderon));
    out.tables.push(table);
    Ok(out)
}
