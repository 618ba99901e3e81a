//! The four subcommands. Each returns an exit code and writes its files into
//! the output directory.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use kltrunc_core::rng::{NormalStream, STREAM_PROBE};
use kltrunc_core::{
    build_grid, kl_decompose, run_sweep, solve_full, solve_truncated, synthesize_data, Dataset,
    Error, ForwardModel, Grid, GridFunction, Kernel, KlBasis, NoiseModel, Problem, Solution,
};
use thiserror::Error as ThisError;

use crate::config::{ConfigError, DataMode, ExperimentConfig, ForwardKindName, TruthSource};
use crate::output::{self, OutputError};
use crate::svg;

/// Environment variable that overrides the configured output directory.
/// `--out` takes precedence over it.
pub const OUT_DIR_ENV: &str = "KLTRUNC_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;
pub const EXIT_BOUND_VIOLATION: i32 = 5;

/// Relative tolerance of the finite-difference gradient checks.
pub const GRADCHECK_TOL: f64 = 1e-4;
pub const GRADCHECK_POINTS: usize = 5;
const GRADCHECK_DIRECTIONS: usize = 5;
const GRADCHECK_DELTA: f64 = 1e-5;

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("not converged: {0}")]
    NotConverged(String),
    #[error(transparent)]
    Output(#[from] OutputError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::NotConverged(_) => EXIT_NOT_CONVERGED,
            CliError::Output(OutputError::Parse { .. }) => EXIT_CONFIG,
            CliError::Output(OutputError::Io { .. }) => EXIT_IO,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_)
            | Error::GridMismatch
            | Error::OutOfDomain { .. }
            | Error::Dimension { .. } => CliError::Config(e.to_string()),
            Error::NotConverged { .. } => CliError::NotConverged(e.to_string()),
            Error::NumericalFailure(_) | Error::NotInRange { .. } | Error::LineSearchFailure { .. } => {
                CliError::Numerical(e.to_string())
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Options {
    /// Truncation dimension for `solve`.
    pub n: Option<usize>,
    /// Output directory override.
    pub out: Option<PathBuf>,
    /// Negative-control hook for `gradcheck`: perturbs the analytic gradient.
    pub corrupt_gradient: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    KlEigs,
    Solve,
    Verify,
    Gradcheck,
}

/// Runs `command`, printing a summary to `out` and diagnostics to `err`.
pub fn run(
    command: Command,
    config_path: &Path,
    opts: &Options,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let result = (|| {
        let mut cfg = ExperimentConfig::load(config_path)?;
        if let Some(dir) = resolve_out_dir(opts) {
            cfg.output.directory = std::path::absolute(&dir).unwrap_or(dir);
        }
        match command {
            Command::KlEigs => kl_eigs(&cfg, out),
            Command::Solve => solve(&cfg, opts.n, out),
            Command::Verify => verify(&cfg, out),
            Command::Gradcheck => gradcheck(&cfg, opts.corrupt_gradient, out),
        }
    })();
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn resolve_out_dir(opts: &Options) -> Option<PathBuf> {
    opts.out.clone().or_else(|| {
        std::env::var_os(OUT_DIR_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
    })
}

fn write(cfg: &ExperimentConfig, name: &str, contents: &str) -> Result<(), CliError> {
    output::write_atomic(&cfg.output.directory.join(name), contents)?;
    Ok(())
}

fn echo_config(cfg: &ExperimentConfig) -> Result<(), CliError> {
    write(cfg, "effective_config.ini", &cfg.render())
}

fn grid_and_basis(cfg: &ExperimentConfig) -> Result<(Kernel, Arc<Grid>, Arc<KlBasis>), CliError> {
    let grid = build_grid(cfg.grid.a, cfg.grid.b, cfg.grid.m)?;
    let kernel = Kernel::new(cfg.prior.family, cfg.prior.variance, cfg.prior.length_scale)?;
    let basis = kl_decompose(&kernel, Arc::clone(&grid), cfg.prior.drop_tol)?;
    Ok((kernel, grid, Arc::new(basis)))
}

/// Assembles the inverse problem described by `cfg`, synthesizing or
/// loading the data.
pub fn build_problem(cfg: &ExperimentConfig) -> Result<Problem, CliError> {
    let (kernel, grid, basis) = grid_and_basis(cfg)?;
    let locs = cfg.forward.obs_locations.clone();
    let model = match cfg.forward.kind {
        ForwardKindName::PointObservation => ForwardModel::point_observation(grid.clone(), locs)?,
        ForwardKindName::Convolution => {
            ForwardModel::convolution(grid.clone(), locs, cfg.forward.blur_width)?
        }
        ForwardKindName::NonlinearPointwise => {
            ForwardModel::nonlinear_pointwise(grid.clone(), locs, cfg.forward.nonlinearity_eps)?
        }
    };
    let noise = NoiseModel::new(cfg.noise_variances.clone())?;
    let truth = match &cfg.data.truth {
        Some(TruthSource::PriorSample) => Some(basis.sample_prior(cfg.data.truth_seed)),
        Some(TruthSource::File(path)) => Some(output::read_nodal(path, &grid)?),
        None => None,
    };
    let data = match &cfg.data.mode {
        DataMode::Synthesize => {
            let truth = truth.expect("synthesize mode requires a truth");
            synthesize_data(&model, &noise, &truth, cfg.data.seed)?
        }
        DataMode::Load(path) => {
            let (s, y) = output::read_dataset(path)?;
            let tol = 1e-12 * (grid.hi() - grid.lo());
            if s.len() != model.dim()
                || s.iter().zip(model.locations()).any(|(a, b)| (a - b).abs() > tol)
            {
                return Err(CliError::Config(format!(
                    "{}: observation locations do not match [forward]",
                    path.display()
                )));
            }
            Dataset {
                y,
                truth,
                seed: cfg.data.seed,
            }
        }
    };
    Ok(Problem::new(kernel, basis, model, noise, data)?)
}

fn write_dataset(cfg: &ExperimentConfig, p: &Problem) -> Result<(), CliError> {
    write(cfg, "data.csv", &output::dataset_csv(p.model.locations(), &p.data.y))?;
    if let Some(truth) = &p.data.truth {
        write(cfg, "truth.csv", &output::nodal_csv(&[("value", truth)]))?;
    }
    Ok(())
}

pub fn kl_eigs(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<i32, CliError> {
    let (_, _, basis) = grid_and_basis(cfg)?;
    echo_config(cfg)?;
    write(cfg, "eigenvalues.csv", &output::eigenvalues_csv(&basis))?;
    write(cfg, "eigenfunctions.csv", &output::eigenfunctions_csv(&basis))?;
    let _ = writeln!(
        out,
        "kl-eigs: m = {}, rank = {}, lambda_1 = {:e}, trace = {:e}",
        cfg.grid.m,
        basis.rank(),
        basis.eigenvalues()[0],
        basis.trace()
    );
    Ok(EXIT_OK)
}

pub fn solve(cfg: &ExperimentConfig, n: Option<usize>, out: &mut dyn Write) -> Result<i32, CliError> {
    let p = build_problem(cfg)?;
    if let Some(n) = n {
        if n == 0 || n > p.rank() {
            return Err(CliError::Config(format!(
                "--n {n} is outside 1..={} (retained modes)",
                p.rank()
            )));
        }
    }
    echo_config(cfg)?;
    write_dataset(cfg, &p)?;
    let sol: Solution = match n {
        None => solve_full(&p, &cfg.solver, None)?,
        Some(n) => solve_truncated(&p, n, &cfg.solver, None)?,
    };
    write(cfg, "solution.csv", &output::coefficients_csv(&sol.coefficients))?;
    write(
        cfg,
        "solution_nodal.csv",
        &output::nodal_csv(&[("x", &sol.x), ("u", &sol.u)]),
    )?;
    write(cfg, "trace.csv", &output::trace_csv(&sol.trace))?;
    let _ = writeln!(
        out,
        "solve ({}): J = {:e}, grad_norm = {:e}, iterations = {}, converged = {}",
        n.map_or_else(|| "full".to_string(), |n| format!("n = {n}")),
        sol.objective_value,
        sol.grad_norm,
        sol.iterations,
        sol.converged
    );
    Ok(if sol.converged {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

pub fn verify(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<i32, CliError> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("verify requires a [sweep] section".into()))?;
    let p = build_problem(cfg)?;
    if let Some(&top) = sweep.ns.last() {
        if top > p.rank() {
            return Err(CliError::Config(format!(
                "[sweep] ns contains {top} but only {} modes are retained",
                p.rank()
            )));
        }
    }
    echo_config(cfg)?;
    write_dataset(cfg, &p)?;
    let report = run_sweep(&p, &sweep.ns, &cfg.solver, sweep.seed, sweep.lipschitz_samples)?;
    write(cfg, "bounds.csv", &output::bounds_csv(&report.rows))?;
    write(cfg, "bounds_meta.csv", &output::bounds_meta_csv(&report))?;
    if cfg.output.emit_svg {
        let pick = |f: fn(&kltrunc_core::BoundReport) -> f64| {
            report.rows.iter().map(|r| (r.n as f64, f(r))).collect::<Vec<_>>()
        };
        let plot = svg::log_plot(
            "Truncation error and bound",
            "n",
            "X-norm",
            &[
                svg::Series {
                    label: "err_x",
                    color: "#1f77b4",
                    points: pick(|r| r.err_x),
                },
                svg::Series {
                    label: "bound_x",
                    color: "#d62728",
                    points: pick(|r| r.bound_x),
                },
            ],
        );
        write(cfg, "bounds.svg", &plot)?;
    }
    let l = &report.lipschitz;
    let _ = writeln!(
        out,
        "verify: L = {:e} ({}), minimizer = {}, proposition 1 {}",
        l.working_constant(),
        if l.exact.is_some() { "exact" } else { "1.25 x sampled" },
        report.minimizer.as_str(),
        if report.proposition1.ok() { "ok" } else { "FAILED" }
    );
    for r in &report.rows {
        let _ = writeln!(
            out,
            "  n = {:>4}: err_x = {:e} <= {:e} (ratio {:.3e})  thm1 {}  cor1 {}  cor2 {}{}",
            r.n,
            r.err_x,
            r.bound_x,
            r.err_x / r.bound_x,
            r.thm1_ok as u8,
            r.cor1_ok as u8,
            r.cor2_ok as u8,
            r.failure.as_deref().map(|f| format!("  ({f})")).unwrap_or_default()
        );
    }
    Ok(if report.all_ok() {
        EXIT_OK
    } else {
        EXIT_BOUND_VIOLATION
    })
}

/// Largest relative central-difference errors `(J, Jₙ)` over the seeded
/// probe points.
pub fn gradient_errors(p: &Problem, seed: u64, corrupt: bool) -> Result<(f64, f64), CliError> {
    let m = p.grid.len();
    let n = p.rank();
    let skew = if corrupt { 1.01 } else { 1.0 };
    let rel = |a: f64, fd: f64| (a - fd).abs() / (1.0 + a.abs());
    let mut probe = NormalStream::new(seed, STREAM_PROBE);
    let (mut worst_j, mut worst_jn) = (0.0f64, 0.0f64);
    for _ in 0..GRADCHECK_POINTS {
        let x = GridFunction::new(p.grid.clone(), probe.normals(m))?;
        let g = p.gradient_j(&x)?.scaled(skew);
        for _ in 0..GRADCHECK_DIRECTIONS {
            let h = GridFunction::new(p.grid.clone(), probe.normals(m))?;
            let h = h.scaled(1.0 / h.norm());
            let fd = (p.objective_j(&x.add_scaled(GRADCHECK_DELTA, &h)?)?
                - p.objective_j(&x.add_scaled(-GRADCHECK_DELTA, &h)?)?)
                / (2.0 * GRADCHECK_DELTA);
            worst_j = worst_j.max(rel(g.inner(&h)?, fd));
        }

        let xi = probe.normals(n);
        let gn = p.gradient_j_truncated(&xi)?;
        for k in 0..n {
            let mut plus = xi.clone();
            let mut minus = xi.clone();
            plus[k] += GRADCHECK_DELTA;
            minus[k] -= GRADCHECK_DELTA;
            let fd = (p.objective_j_truncated(&plus)? - p.objective_j_truncated(&minus)?)
                / (2.0 * GRADCHECK_DELTA);
            worst_jn = worst_jn.max(rel(skew * gn[k], fd));
        }
    }
    Ok((worst_j, worst_jn))
}

pub fn gradcheck(cfg: &ExperimentConfig, corrupt: bool, out: &mut dyn Write) -> Result<i32, CliError> {
    let p = build_problem(cfg)?;
    let (ej, ejn) = gradient_errors(&p, cfg.data.seed, corrupt)?;
    let worst = ej.max(ejn);
    let pass = worst <= GRADCHECK_TOL;
    let _ = writeln!(
        out,
        "gradcheck: {} points, max relative error J = {ej:e}, J_n (n = {}) = {ejn:e}, max = {worst:e} [{}]",
        GRADCHECK_POINTS,
        p.rank(),
        if pass { "pass" } else { "FAIL" }
    );
    Ok(if pass { EXIT_OK } else { EXIT_NUMERICAL })
}
