//! Acceptance suite. Runs every criterion at its stated tolerance, prints one
//! PASS/FAIL line each, and exits nonzero if any fails.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use kltrunc_cli::commands::{self, build_problem, gradient_errors, GRADCHECK_TOL};
use kltrunc_cli::config::ForwardKindName;
use kltrunc_cli::{run, Command, ExperimentConfig, Options};
use kltrunc_core::bounds::verify_proposition1;
use kltrunc_core::rng::{NormalStream, STREAM_PROBE};
use kltrunc_core::{
    build_grid, kl_decompose, run_sweep, solve_full, GridFunction, Kernel, KernelFamily, Problem,
    SweepReport, DEFAULT_DROP_TOL,
};
use nalgebra::{DMatrix, DVector};

type Outcome = Result<String, String>;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&configs().join(name)).expect("shipped config parses")
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn kl_spectrum() -> Outcome {
    let grid = build_grid(0.0, 1.0, 513).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let basis = kl_decompose(&Kernel::brownian(), grid.clone(), DEFAULT_DROP_TOL)
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    let mut worst_eig = 0.0f64;
    for k in 1..=5 {
        let exact = ((k as f64 - 0.5) * std::f64::consts::PI).powi(-2);
        worst_eig = worst_eig.max((basis.eigenvalues()[k - 1] - exact).abs() / exact);
    }
    check(worst_eig <= 1e-3, || format!("eigenvalue rel error {worst_eig:e}"))?;

    let e = basis.eigenfunction_matrix().columns(0, basis.rank()).into_owned();
    let w = DMatrix::from_diagonal(&DVector::from_column_slice(grid.weights()));
    let gram = e.transpose() * w * &e;
    let ortho = (gram - DMatrix::identity(basis.rank(), basis.rank())).amax();
    check(ortho <= 1e-8, || format!("orthonormality error {ortho:e}"))?;

    let quad: f64 = grid
        .nodes()
        .iter()
        .zip(grid.weights())
        .map(|(&t, w)| w * t)
        .sum();
    let sum: f64 = basis.eigenvalues().iter().sum();
    let trace_err = (sum - quad).abs() / quad;
    check(trace_err <= 1e-10, || format!("trace rel error {trace_err:e}"))?;
    check(elapsed <= Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "eig rel err {worst_eig:.2e}, ortho {ortho:.2e}, trace {trace_err:.2e}, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn with_kernel(cfg: &ExperimentConfig, family: KernelFamily, variance: f64, ell: f64) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.prior.family = family;
    c.prior.variance = variance;
    c.prior.length_scale = ell;
    c
}

fn whitening_identity() -> Outcome {
    let bench = load("benchmark.ini");
    let mut worst_gap = 0.0f64;
    let mut worst_increase = f64::INFINITY;
    for (family, var, ell) in [
        (KernelFamily::Brownian, 1.0, 1.0),
        (KernelFamily::Exponential, 1.5, 0.3),
        (KernelFamily::SquaredExponential, 0.7, 0.2),
    ] {
        let p = build_problem(&with_kernel(&bench, family, var, ell)).map_err(|e| e.to_string())?;
        for seed in 0..10 {
            let xi = NormalStream::new(seed, STREAM_PROBE).normals(p.rank());
            let x = p.embed(&xi).map_err(|e| e.to_string())?;
            let u = p.basis.apply_sqrt_q(&x).map_err(|e| e.to_string())?;
            let j = p.objective_j(&x).map_err(|e| e.to_string())?;
            let i = p.objective_i(&u).map_err(|e| e.to_string())?;
            let gap = (i - j).abs() / (1.0 + j.abs());
            worst_gap = worst_gap.max(gap);
            check(gap <= 1e-9, || format!("{family}: seed {seed} gap {gap:e}"))?;
        }
        let full = solve_full(&p, &bench.solver, None).map_err(|e| e.to_string())?;
        check(full.converged, || format!("{family}: full solve did not converge"))?;
        let rep = verify_proposition1(&p, &full, 11).map_err(|e| e.to_string())?;
        check(rep.ok(), || format!("{family}: minimality witness {rep:?}"))?;
        worst_increase = worst_increase.min(rep.min_increase);
    }
    Ok(format!(
        "max rel gap {worst_gap:.2e}, min perturbation increase {worst_increase:.2e}"
    ))
}

/// Dense linear-Gaussian MAP oracle: `u* = K Hᵀ (H K Hᵀ + C)⁻¹ y` uses only
/// the kernel matrix, and `x* = Q^{1/2} W⁻¹ Hᵀ (H K Hᵀ + C)⁻¹ y`.
fn normal_equations(p: &Problem) -> (GridFunction, GridFunction) {
    let h = p.model.observation_matrix();
    let k = p.kernel.matrix(&p.grid);
    let c = DMatrix::from_diagonal(&DVector::from_column_slice(p.noise.variances()));
    let s = h * &k * h.transpose() + c;
    let z = s
        .cholesky()
        .expect("SPD system")
        .solve(&DVector::from_column_slice(&p.data.y));
    let ht_z = h.transpose() * z;
    let u = GridFunction::new(p.grid.clone(), (&k * &ht_z).as_slice().to_vec()).unwrap();
    let adjoint: Vec<f64> = ht_z.iter().zip(p.grid.weights()).map(|(v, w)| v / w).collect();
    let adjoint = GridFunction::new(p.grid.clone(), adjoint).unwrap();
    let x = p.basis.apply_sqrt_q(&adjoint).unwrap();
    (u, x)
}

fn full_solve_oracle() -> Outcome {
    let cfg = load("benchmark.ini");
    let start = Instant::now();
    let p = build_problem(&cfg).map_err(|e| e.to_string())?;
    let full = solve_full(&p, &cfg.solver, None).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    check(full.converged, || "full solve did not converge".into())?;
    let (u_ref, x_ref) = normal_equations(&p);
    let ex = full.x.sub(&x_ref).unwrap().norm();
    let eu = full.u.sub(&u_ref).unwrap().norm();
    check(ex <= 1e-6 && eu <= 1e-6, || format!("x err {ex:e}, u err {eu:e}"))?;
    check(elapsed <= Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "x err {ex:.2e}, u err {eu:.2e}, {} iters, {:.2}s",
        full.iterations,
        elapsed.as_secs_f64()
    ))
}

fn benchmark_sweep() -> (Problem, SweepReport, ExperimentConfig) {
    let cfg = load("benchmark.ini");
    let p = build_problem(&cfg).expect("benchmark builds");
    let s = cfg.sweep.as_ref().unwrap();
    let report = run_sweep(&p, &s.ns, &cfg.solver, s.seed, s.lipschitz_samples).expect("sweep runs");
    (p, report, cfg)
}

/// `2‖B‖(‖B‖R + ‖C^{-1/2}y‖)` with `‖B‖` from an SVD of `C^{-1/2} H W^{-1/2}`.
fn exact_lipschitz(p: &Problem) -> f64 {
    let h = p.model.observation_matrix();
    let c = p.noise.variances();
    let w = p.grid.weights();
    let b = DMatrix::from_fn(h.nrows(), h.ncols(), |j, i| h[(j, i)] / (c[j] * w[i]).sqrt());
    let norm_b = b.singular_values().max();
    let y_norm = p.data.y.iter().zip(c).map(|(y, c)| y * y / c).sum::<f64>().sqrt();
    let phi0 = y_norm * y_norm;
    let image_radius = p.basis.eigenvalues()[0].sqrt() * (phi0 + 1.0).sqrt();
    2.0 * norm_b * (norm_b * image_radius + y_norm)
}

/// `⟨x, e_k⟩_X` for every retained mode.
fn coefficients(p: &Problem, x: &GridFunction) -> Vec<f64> {
    let e = p.basis.eigenfunction_matrix();
    (0..p.rank())
        .map(|k| {
            (0..p.grid.len())
                .map(|i| p.grid.weights()[i] * x.values()[i] * e[(i, k)])
                .sum()
        })
        .collect()
}

fn state_bound(p: &Problem, r: &SweepReport) -> Outcome {
    let l = exact_lipschitz(p);
    let used = r.lipschitz.working_constant();
    check(r.lipschitz.exact.is_some(), || "exact constant not used".into())?;
    check((used - l).abs() <= 1e-9 * l, || format!("L {used:e} vs oracle {l:e}"))?;
    let c = coefficients(p, &r.full.x);
    let mut prev = f64::INFINITY;
    for row in &r.rows {
        check(row.failure.is_none(), || format!("n={}: {:?}", row.n, row.failure))?;
        let tail: f64 = c[row.n..].iter().map(|v| v * v).sum::<f64>().sqrt();
        check((tail - row.err_x).abs() <= 1e-10 * (1.0 + tail), || {
            format!("n={}: err_x {} vs {tail}", row.n, row.err_x)
        })?;
        let bound = l * p.basis.lambda_star(row.n).sqrt();
        check(row.err_x <= bound, || format!("n={}: {} > {bound}", row.n, row.err_x))?;
        check(row.thm1_ok && row.intermediate_ok, || format!("n={}: flags", row.n))?;
        let energy: f64 = c[row.n..]
            .iter()
            .zip(&p.basis.eigenvalues()[row.n..])
            .map(|(v, lam)| lam * v * v)
            .sum::<f64>()
            .sqrt();
        check(row.err_x * row.err_x <= l * energy, || {
            format!("n={}: intermediate inequality", row.n)
        })?;
        check(row.err_x <= prev, || format!("n={}: err_x increased", row.n))?;
        prev = row.err_x;
    }
    Ok(format!("{} rows, L = {l:.4e} (exact)", r.rows.len()))
}

fn parameter_bound(p: &Problem, r: &SweepReport) -> Outcome {
    let l = r.lipschitz.working_constant();
    let c = coefficients(p, &r.full.x);
    for row in &r.rows {
        let ls = p.basis.lambda_star(row.n);
        let energy: f64 = c[row.n..]
            .iter()
            .zip(&p.basis.eigenvalues()[row.n..])
            .map(|(v, lam)| lam * v * v)
            .sum::<f64>()
            .sqrt();
        check((energy - row.err_u).abs() <= 1e-10 * (1.0 + energy), || {
            format!("n={}: err_u {} vs {energy}", row.n, row.err_u)
        })?;
        check(row.err_u <= l * ls && row.cor1_ok, || {
            format!("n={}: err_u {} > {}", row.n, row.err_u, l * ls)
        })?;
        check(row.err_u <= ls.sqrt() * row.err_x + 1e-10, || {
            format!("n={}: spectral check", row.n)
        })?;
    }
    Ok(format!("{} rows", r.rows.len()))
}

fn objective_gap(r: &SweepReport) -> Outcome {
    let l = r.lipschitz.working_constant();
    let j_star = r.full.objective_value;
    let tol = 1e-8 * (1.0 + j_star.abs());
    let mut prev = f64::INFINITY;
    let mut widest = 0.0f64;
    for row in &r.rows {
        let upper = j_star + l * l * row.lambda_star_n + tol;
        check(j_star - tol <= row.j_truncated && row.j_truncated <= upper, || {
            format!("n={}: J_n {} outside [{}, {upper}]", row.n, row.j_truncated, j_star - tol)
        })?;
        check(row.cor2_ok, || format!("n={}: flag", row.n))?;
        check(row.j_truncated <= prev + 1e-10, || format!("n={}: J_n increased", row.n))?;
        prev = row.j_truncated;
        widest = widest.max(row.j_truncated - j_star);
    }
    Ok(format!("J* = {j_star:.6e}, max gap {widest:.3e}"))
}

fn nonlinear_coverage() -> Outcome {
    let cfg = load("nonlinear.ini");
    check(cfg.forward.kind == ForwardKindName::NonlinearPointwise, || "wrong kind".into())?;
    check(cfg.forward.nonlinearity_eps == 0.1, || "wrong eps".into())?;
    let p = build_problem(&cfg).map_err(|e| e.to_string())?;
    let (ej, ejn) = gradient_errors(&p, cfg.data.seed, false).map_err(|e| e.to_string())?;
    check(ej.max(ejn) <= GRADCHECK_TOL, || format!("gradcheck {ej:e}, {ejn:e}"))?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let opts = Options {
        out: Some(dir.path().to_path_buf()),
        ..Options::default()
    };
    let mut sink = Vec::new();
    let code = run(Command::Verify, &configs().join("nonlinear.ini"), &opts, &mut sink, &mut Vec::new());
    check(code == commands::EXIT_OK, || format!("verify exit {code}"))?;
    let bounds = std::fs::read_to_string(dir.path().join("bounds.csv")).map_err(|e| e.to_string())?;
    let rows: Vec<&str> = bounds.lines().skip(1).collect();
    check(rows.len() == 7, || format!("{} rows", rows.len()))?;
    for line in &rows {
        let f: Vec<&str> = line.split(',').collect();
        check(f[4] == "1" && f[7] == "1" && f[11] == "1", || format!("row {line}"))?;
    }
    let meta = std::fs::read_to_string(dir.path().join("bounds_meta.csv")).map_err(|e| e.to_string())?;
    check(meta.contains("minimizer,local\n"), || "not flagged local".into())?;
    check(meta.contains("lipschitz_source,sampled_x1.25\n"), || "not 1.25 L-hat".into())?;
    Ok(format!("gradcheck {:.2e}, 7 rows ok, flagged local", ej.max(ejn)))
}

fn determinism() -> Outcome {
    let config = configs().join("benchmark.ini");
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut bytes = Vec::new();
    for dir in [&a, &b] {
        let opts = Options {
            out: Some(dir.path().to_path_buf()),
            ..Options::default()
        };
        let code = run(Command::Verify, &config, &opts, &mut Vec::new(), &mut Vec::new());
        check(code == commands::EXIT_OK, || format!("exit {code}"))?;
        bytes.push(std::fs::read(dir.path().join("bounds.csv")).map_err(|e| e.to_string())?);
    }
    check(bytes[0] == bytes[1], || "bounds.csv differs between runs".into())?;
    Ok(format!("{} identical bytes, exit 0", bytes[0].len()))
}

fn central_difference_checks(p: &Problem, seed: u64) -> f64 {
    let delta = 1e-5;
    let rel = |a: f64, fd: f64| (a - fd).abs() / (1.0 + a.abs());
    let mut probe = NormalStream::new(seed, STREAM_PROBE);
    let mut worst = 0.0f64;
    let m = p.grid.len();
    let n = p.rank().min(32);
    for _ in 0..5 {
        let x = GridFunction::new(p.grid.clone(), probe.normals(m)).unwrap();
        let g = p.gradient_j(&x).unwrap();
        let h = GridFunction::new(p.grid.clone(), probe.normals(m)).unwrap();
        let h = h.scaled(1.0 / h.norm());
        let fd = (p.objective_j(&x.add_scaled(delta, &h).unwrap()).unwrap()
            - p.objective_j(&x.add_scaled(-delta, &h).unwrap()).unwrap())
            / (2.0 * delta);
        worst = worst.max(rel(g.inner(&h).unwrap(), fd));

        let xi = probe.normals(n);
        let gn = p.gradient_j_truncated(&xi).unwrap();
        let dir = probe.unit_vector(n);
        let shifted = |s: f64| -> Vec<f64> { xi.iter().zip(&dir).map(|(a, d)| a + s * d).collect() };
        let fd = (p.objective_j_truncated(&shifted(delta)).unwrap()
            - p.objective_j_truncated(&shifted(-delta)).unwrap())
            / (2.0 * delta);
        let analytic: f64 = gn.iter().zip(&dir).map(|(g, d)| g * d).sum();
        worst = worst.max(rel(analytic, fd));
    }
    worst
}

fn gradient_contract() -> Outcome {
    let base = load("benchmark.ini");
    let mut report = Vec::new();
    for kind in [
        ForwardKindName::PointObservation,
        ForwardKindName::Convolution,
        ForwardKindName::NonlinearPointwise,
    ] {
        let mut cfg = base.clone();
        cfg.forward.kind = kind;
        cfg.forward.nonlinearity_eps = 0.1;
        let p = build_problem(&cfg).map_err(|e| e.to_string())?;
        let worst = central_difference_checks(&p, 23);
        check(worst <= 1e-4, || format!("{}: {worst:e}", kind.as_str()))?;
        report.push(format!("{} {worst:.1e}", kind.as_str()));
    }
    Ok(report.join(", "))
}

fn main() {
    let (p, sweep, _) = benchmark_sweep();
    let p = Arc::new(p);
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("1 K-L spectrum (Brownian, m = 513)", Box::new(kl_spectrum)),
        ("2 whitening identity and minimality witness", Box::new(whitening_identity)),
        ("3 full solve vs dense normal equations", Box::new(full_solve_oracle)),
        ("4 state truncation bound", {
            let (p, s) = (p.clone(), sweep.clone());
            Box::new(move || state_bound(&p, &s))
        }),
        ("5 parameter truncation bound", {
            let (p, s) = (p.clone(), sweep.clone());
            Box::new(move || parameter_bound(&p, &s))
        }),
        ("6 objective gap of truncated minimizers", {
            let s = sweep.clone();
            Box::new(move || objective_gap(&s))
        }),
        ("7 nonlinear coverage", Box::new(nonlinear_coverage)),
        ("8 determinism of verify", Box::new(determinism)),
        ("9 gradient contract", Box::new(gradient_contract)),
    ];
    let mut failed = 0;
    for (name, f) in &criteria {
        match f() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
