//! Command-line front end.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails or a
//! computation errors, 2 for usage and configuration errors.

pub mod commands;
pub mod config;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use config::{ExperimentConfig, Tolerances};
use report::Outcome;

#[derive(Debug, Parser)]
#[command(name = "np-shape", version, about = "Neumann-Poincare spectra and their shape derivatives")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Eigenvalues of K* on one curve.
    Spectrum,
    /// Cluster derivatives and dK against finite differences.
    DerivCheck,
    /// Operator identities, jump relations and projector checks.
    Identities,
    /// Eigenvalues recovered from boundary energies.
    Pohozaev,
    /// First-order criticality of the sphere.
    SphereCrit,
    /// Error against N.
    Convergence,
}

/// Flags overriding fields of the configuration file.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// circle:r | ellipse:a,b | kite | star:r0,amp,k[,amp,k...]
    #[arg(long, global = true)]
    pub curve: Option<String>,
    /// Node count; a comma-separated list sets the convergence sweep.
    #[arg(long = "N", global = true, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    /// dilation | translation:a,b | rotation | tangential | normal-bump |
    /// generic | param:ax,kx,ay,ky
    #[arg(long, global = true)]
    pub theta: Option<String>,
    /// Central-difference steps, decreasing.
    #[arg(long, global = true, value_delimiter = ',')]
    pub steps: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Set every tolerance to this value.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Comma-separated check names for `identities`.
    #[arg(long, global = true)]
    pub only: Option<String>,
    /// Run the sphere suite in `identities`.
    #[arg(long, global = true)]
    pub sphere: bool,
    #[arg(long, global = true)]
    pub kmax: Option<usize>,
}

impl Overrides {
    /// Configuration file (or defaults) with the flags applied.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::InvalidArgument(format!("{}: {e}", p.display())))?;
                ExperimentConfig::from_json(&text)?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(v) = &self.curve {
            cfg.curve = v.clone();
        }
        if let Some(v) = &self.n {
            match v.as_slice() {
                [] => return Err(Error::InvalidArgument("--N needs a value".into())),
                [one] => cfg.n = *one,
                many => {
                    cfg.n_list = many.to_vec();
                    cfg.n = *many.iter().max().unwrap();
                }
            }
        }
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = self.delta {
            cfg.delta = v;
        }
        if let Some(v) = &self.theta {
            cfg.theta = v.clone();
        }
        if let Some(v) = &self.steps {
            cfg.steps = v.clone();
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = self.tol {
            if !(v > 0.0) {
                return Err(Error::InvalidArgument(format!("--tol must be positive, got {v}")));
            }
            cfg.tolerances = Tolerances::uniform(v);
        }
        if let Some(v) = &self.only {
            cfg.only = Some(v.clone());
        }
        if self.sphere {
            cfg.sphere = true;
        }
        if let Some(v) = self.kmax {
            cfg.kmax = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn execute(command: Command, cfg: &ExperimentConfig) -> Result<Outcome> {
    match command {
        Command::Spectrum => commands::spectrum(cfg),
        Command::DerivCheck => commands::deriv_check(cfg),
        Command::Identities => commands::identities(cfg),
        Command::Pohozaev => commands::pohozaev(cfg),
        Command::SphereCrit => commands::sphere_crit(cfg),
        Command::Convergence => commands::convergence(cfg),
    }
}

fn configure_threads() -> Result<()> {
    // Dense kernels run sequentially so results do not depend on the
    // thread count; rayon handles the coarse-grained parallel loops.
    faer::set_global_parallelism(faer::Par::Seq);
    let Ok(v) = std::env::var("NP_SHAPE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::InvalidArgument(format!("NP_SHAPE_THREADS must be a positive integer, got '{v}'")))?;
    // A pool may already exist when called twice in one process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses arguments, runs the command, writes reports and returns the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let fail = |e: Error| {
        eprintln!("error: {e}");
        if e.is_usage() {
            2
        } else {
            1
        }
    };
    if let Err(e) = configure_threads() {
        return fail(e);
    }
    let cfg = match cli.overrides.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let outcome = match execute(cli.command, &cfg) {
        Ok(o) => o,
        Err(e) => return fail(e),
    };
    if let Err(e) = outcome.write(&cfg) {
        return fail(e);
    }
    for c in &outcome.checks {
        println!("{} {} {:e} (tol {:e})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.tol);
    }
    println!("{}: report in {}", outcome.command, cfg.out.display());
    if outcome.passed() {
        0
    } else {
        1
    }
}
