//! CSV serialization and atomic file output.
//!
//! Floats are written in shortest round-trip exponent form (`{:e}`), so
//! every value reads back bit-exactly and reruns are byte-identical.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use kltrunc_core::{BoundReport, Grid, GridFunction, KlBasis, SweepReport, TraceRow};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}, line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, OutputError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `contents` to `path` via a temporary file in the same directory
/// followed by a rename, so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(contents.as_bytes()).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| OutputError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

pub fn num(x: f64) -> String {
    format!("{x:e}")
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

#[derive(Default)]
struct Table(String);

impl Table {
    fn new(header: &[&str]) -> Self {
        let mut t = Table::default();
        t.row(header.iter().map(|s| s.to_string()));
        t
    }

    fn row(&mut self, cells: impl IntoIterator<Item = String>) {
        let cells: Vec<String> = cells.into_iter().collect();
        self.0.push_str(&cells.join(","));
        self.0.push('\n');
    }
}

pub fn eigenvalues_csv(basis: &KlBasis) -> String {
    let mut t = Table::new(&["k", "lambda_k"]);
    for (k, &l) in basis.eigenvalues().iter().enumerate() {
        t.row([(k + 1).to_string(), num(l)]);
    }
    t.0
}

/// One row per grid node, one column per retained mode.
pub fn eigenfunctions_csv(basis: &KlBasis) -> String {
    let rank = basis.rank();
    let mut header = vec!["t".to_string()];
    header.extend((1..=rank).map(|k| format!("e_{k}")));
    let mut t = Table::default();
    t.row(header);
    let e = basis.eigenfunction_matrix();
    for (i, &node) in basis.grid().nodes().iter().enumerate() {
        t.row(std::iter::once(num(node)).chain((0..rank).map(|k| num(e[(i, k)]))));
    }
    t.0
}

pub fn dataset_csv(locations: &[f64], y: &[f64]) -> String {
    let mut t = Table::new(&["j", "s_j", "y_j"]);
    for (j, (s, y)) in locations.iter().zip(y).enumerate() {
        t.row([(j + 1).to_string(), num(*s), num(*y)]);
    }
    t.0
}

pub fn nodal_csv(columns: &[(&str, &GridFunction)]) -> String {
    let mut header = vec!["t"];
    header.extend(columns.iter().map(|(name, _)| *name));
    let mut t = Table::new(&header);
    let grid = columns[0].1.grid();
    for (i, &node) in grid.nodes().iter().enumerate() {
        t.row(std::iter::once(num(node)).chain(columns.iter().map(|(_, f)| num(f.values()[i]))));
    }
    t.0
}

pub fn coefficients_csv(xi: &[f64]) -> String {
    let mut t = Table::new(&["k", "xi_k"]);
    for (k, v) in xi.iter().enumerate() {
        t.row([(k + 1).to_string(), num(*v)]);
    }
    t.0
}

pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut t = Table::new(&["iter", "J", "grad_norm", "step"]);
    for r in trace {
        t.row([r.iter.to_string(), num(r.objective), num(r.grad_norm), num(r.step)]);
    }
    t.0
}

pub const BOUNDS_COLUMNS: [&str; 12] = [
    "n",
    "lambda_star_n",
    "err_x",
    "bound_x",
    "thm1_ok",
    "err_u",
    "bound_u",
    "cor1_ok",
    "J_star",
    "J_truncated",
    "bound_gap",
    "cor2_ok",
];

pub fn bounds_csv(rows: &[BoundReport]) -> String {
    let mut t = Table::new(&BOUNDS_COLUMNS);
    for r in rows {
        t.row([
            r.n.to_string(),
            num(r.lambda_star_n),
            num(r.err_x),
            num(r.bound_x),
            flag(r.thm1_ok && r.failure.is_none()).into(),
            num(r.err_u),
            num(r.bound_u),
            flag(r.cor1_ok && r.failure.is_none()).into(),
            num(r.j_star),
            num(r.j_truncated),
            num(r.bound_gap),
            flag(r.cor2_ok && r.failure.is_none()).into(),
        ]);
    }
    t.0
}

/// Key-value companion to `bounds.csv`: how `L` was obtained, whether the
/// reference solution is a global or local minimizer, and the diagnostics
/// that do not fit the fixed column contract.
pub fn bounds_meta_csv(report: &SweepReport) -> String {
    let l = &report.lipschitz;
    let mut t = Table::new(&["key", "value"]);
    let mut kv = |k: &str, v: String| t.row([k.to_string(), v]);
    kv("minimizer", report.minimizer.as_str().into());
    kv("lipschitz_constant", num(l.working_constant()));
    kv(
        "lipschitz_source",
        if l.exact.is_some() { "exact" } else { "sampled_x1.25" }.into(),
    );
    kv("lipschitz_exact", l.exact.map_or_else(|| "NA".into(), num));
    kv("lipschitz_sampled", num(l.l_hat));
    kv("lipschitz_radius", num(l.radius));
    kv("lipschitz_samples", l.n_samples.to_string());
    kv("lipschitz_seed", l.seed.to_string());
    kv("full_objective", num(report.full.objective_value));
    kv("full_grad_norm", num(report.full.grad_norm));
    kv("full_iterations", report.full.iterations.to_string());
    let p1 = &report.proposition1;
    kv("prop1_identity_gap", num(p1.identity_gap));
    kv("prop1_identity_ok", flag(p1.identity_ok).into());
    kv("prop1_min_increase", num(p1.min_increase));
    kv("prop1_minimality_ok", flag(p1.minimality_ok).into());
    for r in &report.rows {
        kv(&format!("intermediate_ok_n{}", r.n), flag(r.intermediate_ok).into());
        if let Some(f) = &r.failure {
            kv(&format!("failure_n{}", r.n), f.replace([',', '\n'], ";"));
        }
    }
    t.0
}

fn parse_table(path: &Path, expected: &[&str]) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let bad = |line: usize, message: String| OutputError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty file".into()))?;
    let header: Vec<&str> = header.split(',').map(str::trim).collect();
    if header != expected {
        return Err(bad(
            1,
            format!("expected header {}, got {}", expected.join(","), header.join(",")),
        ));
    }
    lines
        .map(|(i, l)| {
            let cells: Vec<&str> = l.split(',').map(str::trim).collect();
            if cells.len() != expected.len() {
                return Err(bad(i + 1, format!("expected {} fields", expected.len())));
            }
            cells
                .iter()
                .map(|c| c.parse::<f64>().map_err(|e| bad(i + 1, format!("`{c}`: {e}"))))
                .collect()
        })
        .collect()
}

/// Reads a dataset written by [`dataset_csv`]; returns `(locations, y)`.
pub fn read_dataset(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let rows = parse_table(path, &["j", "s_j", "y_j"])?;
    Ok(rows.into_iter().map(|r| (r[1], r[2])).unzip())
}

/// Reads nodal values (`t,value` rows) and checks them against `grid`.
pub fn read_nodal(path: &Path, grid: &Arc<Grid>) -> Result<GridFunction> {
    let rows = parse_table(path, &["t", "value"])?;
    let bad = |message: String| OutputError::Parse {
        path: path.to_path_buf(),
        line: 0,
        message,
    };
    if rows.len() != grid.len() {
        return Err(bad(format!("expected {} nodes, got {}", grid.len(), rows.len())));
    }
    let tol = 1e-12 * (grid.hi() - grid.lo());
    if let Some((i, r)) = rows
        .iter()
        .enumerate()
        .find(|(i, r)| (r[0] - grid.nodes()[*i]).abs() > tol)
    {
        return Err(bad(format!("node {} at t = {} does not match the grid", i + 1, r[0])));
    }
    GridFunction::new(Arc::clone(grid), rows.into_iter().map(|r| r[1]).collect())
        .map_err(|e| bad(e.to_string()))
}
