//! `dynot`: load two densities, solve the transport problem, write frames,
//! the solution tensor, a convergence log and a manifest.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};
use dynot_core::cost::{build_weights, WeightMode};
use dynot_core::grid::{validate_and_normalize, GridDims, SpatialGrid};
use dynot_core::io::{load_density, load_mask, save_run, DensityFormat, RunManifest};
use dynot_core::{solve, Algorithm, CostModel, Error, PoissonBackend, Problem, SolverConfig};
use ndarray::Array2;
use sha2::{Digest, Sha256};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

/// Time steps of the built-in demo, and its spatial sample count per axis.
const DEMO_STEPS: usize = 32;
const DEMO_SAMPLES: usize = 32;
const DEMO_SIGMA: f64 = 0.04;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Demo {
    Gaussians,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Backend {
    Spectral,
    Cg,
}

#[derive(Debug, Parser)]
#[command(name = "dynot", version, about = "Dynamic optimal transport between two densities")]
struct Args {
    /// Initial density (.pgm, .csv or .raw).
    #[arg(long, required_unless_present = "demo")]
    f0: Option<PathBuf>,
    /// Final density, same size as --f0.
    #[arg(long, required_unless_present = "demo")]
    f1: Option<PathBuf>,
    /// Built-in instance instead of --f0/--f1.
    #[arg(long, value_enum, conflicts_with_all = ["f0", "f1"])]
    demo: Option<Demo>,
    /// Spatial samples and time steps: WxHxP, or WxP in 1-D. Spatial sizes
    /// must match the inputs; P defaults to 32.
    #[arg(long)]
    grid: Option<String>,
    /// a-dr, a-dr2, s-dr, s-dr2, pd or centered (`dr` means a-dr).
    #[arg(long, default_value = "a-dr")]
    solver: String,
    /// Douglas-Rachford step [default: 1/75]
    #[arg(long)]
    gamma: Option<f64>,
    /// Douglas-Rachford relaxation in (0, 2) [default: 1.998]
    #[arg(long)]
    alpha: Option<f64>,
    /// Primal-dual dual step [default: 85]
    #[arg(long)]
    sigma: Option<f64>,
    /// Primal-dual primal step [default: 0.99 / (sigma |I|^2)]
    #[arg(long)]
    tau: Option<f64>,
    /// Primal-dual extrapolation in [0, 1] [default: 1]
    #[arg(long)]
    theta: Option<f64>,
    /// Cost exponent in [0, 1].
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Obstacle mask (values above one half mark obstacles).
    #[arg(long)]
    weights: Option<PathBuf>,
    /// uniform, obstacle or distance; obstacle when --weights is given.
    #[arg(long)]
    weight_mode: Option<String>,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value = "dynot-out")]
    out: PathBuf,
    /// Telemetry cadence in iterations (0 logs only the last one).
    #[arg(long, default_value_t = 1)]
    log_every: usize,
    /// Smallest allowed density after normalization.
    #[arg(long, default_value_t = 0.0)]
    floor: f64,
    /// Seed for a randomized initial momentum.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "spectral")]
    backend: Backend,
}

/// Failure with the exit code it maps to.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. } => EXIT_IO,
            Error::Divergence { .. } => EXIT_DIVERGED,
            _ => EXIT_INVALID,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_INVALID,
        message: message.into(),
    }
}

/// Parses `WxHxP` or `WxP` into sample counts and time steps.
fn parse_grid(s: &str) -> Result<Vec<usize>, Failure> {
    let parts: Result<Vec<usize>, _> = s.split(['x', 'X']).map(str::parse).collect();
    match parts {
        Ok(p) if p.len() == 2 || p.len() == 3 => Ok(p),
        _ => Err(invalid(format!("--grid expects WxHxP or WxP, got {s:?}"))),
    }
}

fn digest(path: &Path) -> Result<String, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn demo_gaussians() -> (SpatialGrid, SpatialGrid) {
    let n = DEMO_SAMPLES - 1;
    let g = |c: f64| {
        Array2::from_shape_fn((DEMO_SAMPLES, DEMO_SAMPLES), |(i, j)| {
            let dx = i as f64 / n as f64 - c;
            let dy = j as f64 / n as f64 - c;
            (-(dx * dx + dy * dy) / (2.0 * DEMO_SIGMA * DEMO_SIGMA)).exp()
        })
    };
    (g(0.3), g(0.7))
}

fn load(path: &Path) -> Result<SpatialGrid, Failure> {
    Ok(load_density(path, DensityFormat::from_path(path)?)?)
}

fn dims_for(shape: (usize, usize), grid: Option<&[usize]>, default_steps: usize) -> Result<GridDims, Failure> {
    let (w, h) = shape;
    let one_d = h == 1;
    let steps = match grid {
        None => default_steps,
        Some(g) => {
            let (spatial, p) = g.split_at(g.len() - 1);
            let expected: &[usize] = if one_d { &[w] } else { &[w, h] };
            if spatial != expected {
                return Err(invalid(format!(
                    "--grid spatial size {spatial:?} does not match the input size {expected:?}"
                )));
            }
            p[0]
        }
    };
    if w < 2 {
        return Err(invalid("densities need at least two samples along x"));
    }
    let dims = if one_d {
        GridDims::new_1d(w - 1, steps)
    } else {
        GridDims::new_2d(w - 1, h - 1, steps)
    };
    Ok(dims?)
}

fn run(args: Args, out: &mut dyn Write) -> Result<(), Failure> {
    let started = Instant::now();
    let mut manifest = RunManifest::new();
    manifest.set("version", env!("CARGO_PKG_VERSION"));

    let algorithm: Algorithm = args.solver.parse()?;
    let grid = args.grid.as_deref().map(parse_grid).transpose()?;
    let (f0, f1) = match args.demo {
        Some(Demo::Gaussians) => {
            manifest.set("demo", "gaussians");
            manifest.set("demo_sigma", DEMO_SIGMA);
            demo_gaussians()
        }
        None => {
            let (p0, p1) = (args.f0.as_ref().expect("clap"), args.f1.as_ref().expect("clap"));
            manifest.set("f0", p0.display());
            manifest.set("f0_sha256", digest(p0)?);
            manifest.set("f1", p1.display());
            manifest.set("f1_sha256", digest(p1)?);
            (load(p0)?, load(p1)?)
        }
    };
    if f0.dim() != f1.dim() {
        return Err(invalid(format!("f0 is {:?} but f1 is {:?}", f0.shape(), f1.shape())));
    }
    let dims = dims_for(f0.dim(), grid.as_deref(), DEMO_STEPS)?;
    let pair = validate_and_normalize(&f0, &f1, args.floor, true)?;

    let mut cost = CostModel::with_beta(args.beta)?;
    let mode = match (&args.weight_mode, &args.weights) {
        (Some(m), _) => m.parse::<WeightMode>()?,
        (None, Some(_)) => WeightMode::Obstacle,
        (None, None) => WeightMode::Uniform,
    };
    manifest.set("weight_mode", mode);
    match &args.weights {
        Some(path) => {
            manifest.set("weights", path.display());
            manifest.set("weights_sha256", digest(path)?);
            let mask = load_mask(path, DensityFormat::from_path(path)?, dims)?;
            cost = cost.with_weights(build_weights(mask.view(), dims, mode)?, dynot_core::prox::DEFAULT_WEIGHT_LOWER_BOUND)?;
        }
        None if mode != WeightMode::Uniform => {
            return Err(invalid(format!("--weight-mode {mode} needs --weights")));
        }
        None => {}
    }
    let (mut f0, mut f1) = (pair.f0, pair.f1);
    if let Some(mask) = cost.obstacle_mask() {
        // no mass may start or end inside an obstacle
        let first = mask.index_axis(ndarray::Axis(2), 0);
        let last = mask.index_axis(ndarray::Axis(2), dims.p());
        let inside = |g: &SpatialGrid, m: ndarray::ArrayView2<'_, bool>| {
            g.iter().zip(m.iter()).any(|(&v, &b)| b && v > 0.0)
        };
        if inside(&f0, first) || inside(&f1, last) {
            f0.zip_mut_with(&first, |v, &b| if b { *v = 0.0 });
            f1.zip_mut_with(&last, |v, &b| if b { *v = 0.0 });
            let renormalized = validate_and_normalize(&f0, &f1, 0.0, true)?;
            f0 = renormalized.f0;
            f1 = renormalized.f1;
            manifest.set("masked_inputs", "true");
        }
    }
    let problem = Problem::new(dims, &f0, &f1, cost)?;

    let mut config = SolverConfig::new(algorithm);
    if let Some(v) = args.gamma {
        config.gamma = v;
    }
    if let Some(v) = args.alpha {
        config.alpha = v;
    }
    if let Some(v) = args.sigma {
        config.sigma = v;
    }
    if let Some(v) = args.theta {
        config.theta = v;
    }
    config.tau = args.tau;
    config.max_iter = args.iters;
    config.tol = args.tol;
    config.log_every = args.log_every;
    config.seed = args.seed;
    config.backend = match args.backend {
        Backend::Spectral => PoissonBackend::Spectral,
        Backend::Cg => PoissonBackend::ConjugateGradient,
    };
    let steps = config.validate(dims)?;

    manifest.set("solver", algorithm);
    manifest.set("grid_n", dims.n(0));
    if dims.dim() == 2 {
        manifest.set("grid_m", dims.n(1));
    }
    manifest.set("grid_p", dims.p());
    if algorithm.is_douglas_rachford() {
        manifest.set("gamma", format!("{:e}", steps.gamma));
        manifest.set("alpha", format!("{:e}", steps.alpha));
    } else {
        manifest.set("sigma", format!("{:e}", steps.sigma));
        manifest.set("tau", format!("{:e}", steps.tau));
        manifest.set("theta", format!("{:e}", steps.theta));
    }
    manifest.set("beta", format!("{:e}", args.beta));
    manifest.set("floor", format!("{:e}", args.floor));
    manifest.set("iters", args.iters);
    manifest.set("tol", format!("{:e}", args.tol));
    manifest.set("log_every", args.log_every);
    manifest.set("seed", args.seed.map_or("none".to_string(), |s| s.to_string()));
    manifest.set("backend", format!("{:?}", args.backend).to_lowercase());
    manifest.set("mass0", format!("{:e}", pair.mass0));
    manifest.set("mass1", format!("{:e}", pair.mass1));

    let prepared = started.elapsed();
    let solving = Instant::now();
    let output = solve(&problem, &config)?;
    let solved = solving.elapsed();
    manifest.set("iterations", output.iterations);
    manifest.set("converged", output.converged);
    manifest.set("out", args.out.display());
    manifest.set("seconds_prepare", format!("{:.3}", prepared.as_secs_f64()));
    manifest.set("seconds_solve", format!("{:.3}", solved.as_secs_f64()));
    let written = save_run(&args.out, &output, &manifest)?;

    let last = output.record.last();
    let _ = writeln!(
        out,
        "{algorithm}: {} iterations{}, J = {}, wrote {} files to {}",
        output.iterations,
        if output.converged { " (converged)" } else { "" },
        last.map_or("n/a".to_string(), |r| format!("{:e}", r.objective)),
        written.len(),
        args.out.display()
    );
    Ok(())
}

/// Runs the driver on `args` (program name first), writing to the given
/// streams. Returns the process exit code.
pub fn run_cli_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    match run(args, out) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "dynot: {}", f.message);
            f.code
        }
    }
}

/// [`run_cli_with`] on the standard streams.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run_cli_with(args, &mut std::io::stdout(), &mut std::io::stderr())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_strings() {
        assert_eq!(parse_grid("32x32x16").unwrap(), vec![32, 32, 16]);
        assert_eq!(parse_grid("9x8").unwrap(), vec![9, 8]);
        assert_eq!(parse_grid("9").unwrap_err().code, EXIT_INVALID);
        assert_eq!(parse_grid("axb").unwrap_err().code, EXIT_INVALID);
    }

    #[test]
    fn grid_must_match_inputs() {
        let dims = dims_for((5, 4), Some(&[5, 4, 3]), 32).unwrap();
        assert_eq!((dims.n(0), dims.n(1), dims.p()), (4, 3, 3));
        assert!(dims_for((5, 4), Some(&[6, 4, 3]), 32).is_err());
        let dims = dims_for((9, 1), Some(&[9, 6]), 32).unwrap();
        assert_eq!((dims.dim(), dims.n(0), dims.p()), (1, 8, 6));
        assert_eq!(dims_for((9, 1), None, 32).unwrap().p(), 32);
    }

    #[test]
    fn divergence_maps_to_its_exit_code() {
        let e = Error::Divergence {
            iteration: 3,
            reason: "iterate norm 1e13".into(),
            record: Box::default(),
        };
        assert_eq!(Failure::from(e).code, EXIT_DIVERGED);
        assert_eq!(Failure::from(Error::Validation("x".into())).code, EXIT_INVALID);
    }
}
