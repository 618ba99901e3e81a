//! Experiment configuration: INI-style sections of `key = value` lines,
//! parsed strictly. Unknown sections or keys, duplicates and malformed
//! values are rejected with the offending line number.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use kltrunc_core::{KernelFamily, SolverConfig, DEFAULT_DROP_TOL};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown section [{section}]")]
    UnknownSection { line: usize, section: String },
    #[error("line {line}: unknown key `{key}` in section [{section}]")]
    UnknownKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("line {line}: duplicate key `{key}` in section [{section}]")]
    DuplicateKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("line {line}: invalid value for `{key}`: {message}")]
    InvalidValue {
        line: usize,
        key: String,
        message: String,
    },
    #[error("missing required key `{key}` in section [{section}]")]
    Missing { section: String, key: String },
    #[error("{0}")]
    Inconsistent(String),
}

type Result<T> = std::result::Result<T, ConfigError>;

const SCHEMA: &[(&str, &[&str])] = &[
    ("grid", &["a", "b", "m"]),
    ("prior", &["family", "variance", "length_scale", "drop_tol"]),
    (
        "forward",
        &[
            "kind",
            "obs_locations",
            "obs_count",
            "obs_spacing",
            "blur_width",
            "nonlinearity_eps",
        ],
    ),
    ("noise", &["variance", "variances"]),
    ("data", &["mode", "truth", "truth_seed", "seed", "path"]),
    (
        "solver",
        &["grad_tol", "max_iters", "armijo_c", "backtrack_factor", "init_step"],
    ),
    ("sweep", &["ns", "lipschitz_samples", "seed"]),
    ("output", &["directory", "emit_svg"]),
];

#[derive(Debug, Clone, PartialEq)]
pub struct GridSection {
    pub a: f64,
    pub b: f64,
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorSection {
    pub family: KernelFamily,
    pub variance: f64,
    pub length_scale: f64,
    pub drop_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardKindName {
    PointObservation,
    Convolution,
    NonlinearPointwise,
}

impl ForwardKindName {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "point_observation" => Some(Self::PointObservation),
            "convolution" => Some(Self::Convolution),
            "nonlinear_pointwise" => Some(Self::NonlinearPointwise),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::PointObservation => "point_observation",
            Self::Convolution => "convolution",
            Self::NonlinearPointwise => "nonlinear_pointwise",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardSection {
    pub kind: ForwardKindName,
    /// Resolved observation locations (explicit, or generated from a count).
    pub obs_locations: Vec<f64>,
    pub blur_width: f64,
    pub nonlinearity_eps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TruthSource {
    PriorSample,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataMode {
    Synthesize,
    Load(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSection {
    pub mode: DataMode,
    pub truth: Option<TruthSource>,
    pub truth_seed: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSection {
    pub ns: Vec<usize>,
    pub lipschitz_samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub emit_svg: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub grid: GridSection,
    pub prior: PriorSection,
    pub forward: ForwardSection,
    pub noise_variances: Vec<f64>,
    pub data: DataSection,
    pub solver: SolverConfig,
    pub sweep: Option<SweepSection>,
    pub output: OutputSection,
}

#[derive(Debug)]
struct Entry {
    line: usize,
    value: String,
}

type Sections = BTreeMap<String, BTreeMap<String, Entry>>;

fn tokenize(text: &str) -> Result<Sections> {
    let mut sections: Sections = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = match raw.find(['#', ';']) {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::Syntax {
                    line,
                    message: format!("malformed section header `{content}`"),
                })?
                .trim();
            if !SCHEMA.iter().any(|(s, _)| *s == name) {
                return Err(ConfigError::UnknownSection {
                    line,
                    section: name.to_string(),
                });
            }
            if sections.contains_key(name) {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("section [{name}] appears twice"),
                });
            }
            sections.insert(name.to_string(), BTreeMap::new());
            current = Some(name.to_string());
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            message: format!("expected `key = value`, got `{content}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        let section = current.clone().ok_or_else(|| ConfigError::Syntax {
            line,
            message: format!("key `{key}` outside of any section"),
        })?;
        let allowed = SCHEMA
            .iter()
            .find(|(s, _)| *s == section)
            .map(|(_, keys)| *keys)
            .unwrap_or_default();
        if !allowed.contains(&key) {
            return Err(ConfigError::UnknownKey {
                line,
                section,
                key: key.to_string(),
            });
        }
        let table = sections.get_mut(&section).expect("section registered");
        if table.contains_key(key) {
            return Err(ConfigError::DuplicateKey {
                line,
                section,
                key: key.to_string(),
            });
        }
        table.insert(
            key.to_string(),
            Entry {
                line,
                value: value.to_string(),
            },
        );
    }
    Ok(sections)
}

struct Reader<'a> {
    sections: &'a Sections,
    base: &'a Path,
}

impl Reader<'_> {
    fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections.get(section).and_then(|t| t.get(key))
    }

    fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    fn required<'e>(&'e self, section: &str, key: &str) -> Result<&'e Entry> {
        self.entry(section, key).ok_or_else(|| ConfigError::Missing {
            section: section.to_string(),
            key: key.to_string(),
        })
    }

    fn parse<T: std::str::FromStr>(entry: &Entry, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        entry.value.parse::<T>().map_err(|e| ConfigError::InvalidValue {
            line: entry.line,
            key: key.to_string(),
            message: format!("`{}`: {e}", entry.value),
        })
    }

    fn get<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.entry(section, key).map(|e| Self::parse(e, key)).transpose()
    }

    fn req<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Self::parse(self.required(section, key)?, key)
    }

    fn list<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some(entry) = self.entry(section, key) else {
            return Ok(None);
        };
        entry
            .value
            .split(',')
            .map(|item| {
                item.trim().parse::<T>().map_err(|e| ConfigError::InvalidValue {
                    line: entry.line,
                    key: key.to_string(),
                    message: format!("`{}`: {e}", item.trim()),
                })
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    fn path(&self, value: &str) -> PathBuf {
        let p = PathBuf::from(value);
        if p.is_absolute() {
            p
        } else {
            self.base.join(p)
        }
    }

    fn invalid(entry: &Entry, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::InvalidValue {
            line: entry.line,
            key: key.to_string(),
            message: message.into(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let base = std::path::absolute(&base).unwrap_or(base);
        Self::parse(&text, &base)
    }

    /// Parses config text; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let sections = tokenize(text)?;
        let r = Reader {
            sections: &sections,
            base,
        };

        let grid = GridSection {
            a: r.req("grid", "a")?,
            b: r.req("grid", "b")?,
            m: r.req("grid", "m")?,
        };

        let family_entry = r.required("prior", "family")?;
        let family: KernelFamily = family_entry
            .value
            .parse()
            .map_err(|e: kltrunc_core::Error| Reader::invalid(family_entry, "family", e.to_string()))?;
        let prior = PriorSection {
            family,
            variance: r.get("prior", "variance")?.unwrap_or(1.0),
            length_scale: r.get("prior", "length_scale")?.unwrap_or(1.0),
            drop_tol: r.get("prior", "drop_tol")?.unwrap_or(DEFAULT_DROP_TOL),
        };

        let kind_entry = r.required("forward", "kind")?;
        let kind = ForwardKindName::parse(&kind_entry.value).ok_or_else(|| {
            Reader::invalid(
                kind_entry,
                "kind",
                format!(
                    "`{}` is not one of point_observation, convolution, nonlinear_pointwise",
                    kind_entry.value
                ),
            )
        })?;
        let explicit: Option<Vec<f64>> = r.list("forward", "obs_locations")?;
        let count: Option<usize> = r.get("forward", "obs_count")?;
        let obs_locations = match (explicit, count) {
            (Some(locs), None) => locs,
            (None, Some(d)) => {
                let spacing = r
                    .entry("forward", "obs_spacing")
                    .map(|e| e.value.as_str())
                    .unwrap_or("midpoint");
                if d == 0 {
                    return Err(Reader::invalid(
                        r.required("forward", "obs_count")?,
                        "obs_count",
                        "must be positive",
                    ));
                }
                let h = (grid.b - grid.a) / d as f64;
                match spacing {
                    "midpoint" => (0..d).map(|j| grid.a + (j as f64 + 0.5) * h).collect(),
                    "right" => (1..=d).map(|j| grid.a + j as f64 * h).collect(),
                    other => {
                        return Err(Reader::invalid(
                            r.required("forward", "obs_spacing")?,
                            "obs_spacing",
                            format!("`{other}` is not one of midpoint, right"),
                        ))
                    }
                }
            }
            (Some(_), Some(_)) => {
                return Err(ConfigError::Inconsistent(
                    "[forward] takes either obs_locations or obs_count, not both".into(),
                ))
            }
            (None, None) => {
                return Err(ConfigError::Missing {
                    section: "forward".into(),
                    key: "obs_locations".into(),
                })
            }
        };
        if count.is_none() && r.entry("forward", "obs_spacing").is_some() {
            return Err(ConfigError::Inconsistent(
                "[forward] obs_spacing requires obs_count".into(),
            ));
        }
        let forward = ForwardSection {
            kind,
            obs_locations,
            blur_width: r.get("forward", "blur_width")?.unwrap_or(0.05),
            nonlinearity_eps: r.get("forward", "nonlinearity_eps")?.unwrap_or(0.0),
        };
        let d = forward.obs_locations.len();

        let scalar: Option<f64> = r.get("noise", "variance")?;
        let vector: Option<Vec<f64>> = r.list("noise", "variances")?;
        let noise_variances = match (scalar, vector) {
            (Some(v), None) => vec![v; d],
            (None, Some(v)) if v.len() == d => v,
            (None, Some(v)) => {
                return Err(ConfigError::Inconsistent(format!(
                    "[noise] variances has {} entries but there are {d} observations",
                    v.len()
                )))
            }
            (Some(_), Some(_)) => {
                return Err(ConfigError::Inconsistent(
                    "[noise] takes either variance or variances, not both".into(),
                ))
            }
            (None, None) => {
                return Err(ConfigError::Missing {
                    section: "noise".into(),
                    key: "variance".into(),
                })
            }
        };

        let mode_entry = r.required("data", "mode")?;
        let mode = match mode_entry.value.as_str() {
            "synthesize" => {
                if r.entry("data", "path").is_some() {
                    return Err(ConfigError::Inconsistent(
                        "[data] path is only used with mode = load".into(),
                    ));
                }
                DataMode::Synthesize
            }
            "load" => DataMode::Load(r.path(&r.required("data", "path")?.value)),
            other => {
                return Err(Reader::invalid(
                    mode_entry,
                    "mode",
                    format!("`{other}` is not one of synthesize, load"),
                ))
            }
        };
        let truth = match r.entry("data", "truth").map(|e| e.value.as_str()) {
            Some("prior_sample") => Some(TruthSource::PriorSample),
            Some(path) => Some(TruthSource::File(r.path(path))),
            None => None,
        };
        if mode == DataMode::Synthesize && truth.is_none() {
            return Err(ConfigError::Missing {
                section: "data".into(),
                key: "truth".into(),
            });
        }
        if matches!(mode, DataMode::Load(_)) && truth == Some(TruthSource::PriorSample) {
            return Err(ConfigError::Inconsistent(
                "[data] truth = prior_sample requires mode = synthesize".into(),
            ));
        }
        let data = DataSection {
            mode,
            truth,
            truth_seed: r.get("data", "truth_seed")?.unwrap_or(0),
            seed: r.get("data", "seed")?.unwrap_or(0),
        };

        let defaults = SolverConfig::default();
        let solver = SolverConfig {
            grad_tol: r.get("solver", "grad_tol")?.unwrap_or(defaults.grad_tol),
            max_iters: r.get("solver", "max_iters")?.unwrap_or(defaults.max_iters),
            armijo_c: r.get("solver", "armijo_c")?.unwrap_or(defaults.armijo_c),
            backtrack_factor: r
                .get("solver", "backtrack_factor")?
                .unwrap_or(defaults.backtrack_factor),
            init_step: r.get("solver", "init_step")?.unwrap_or(defaults.init_step),
        };
        solver
            .validate()
            .map_err(|e| ConfigError::Inconsistent(format!("[solver] {e}")))?;

        let sweep = if r.has_section("sweep") {
            let ns: Vec<usize> = r.list("sweep", "ns")?.ok_or_else(|| ConfigError::Missing {
                section: "sweep".into(),
                key: "ns".into(),
            })?;
            if ns.is_empty() || ns[0] == 0 || ns.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Reader::invalid(
                    r.required("sweep", "ns")?,
                    "ns",
                    "must be positive and strictly ascending",
                ));
            }
            let lipschitz_samples = r
                .get("sweep", "lipschitz_samples")?
                .unwrap_or(kltrunc_core::bounds::DEFAULT_LIPSCHITZ_SAMPLES);
            if lipschitz_samples < 2 {
                return Err(Reader::invalid(
                    r.required("sweep", "lipschitz_samples")?,
                    "lipschitz_samples",
                    "must be at least 2",
                ));
            }
            Some(SweepSection {
                ns,
                lipschitz_samples,
                seed: r.get("sweep", "seed")?.unwrap_or(0),
            })
        } else {
            None
        };

        let output = OutputSection {
            directory: r.path(
                r.entry("output", "directory")
                    .map(|e| e.value.as_str())
                    .unwrap_or("out"),
            ),
            emit_svg: r.get("output", "emit_svg")?.unwrap_or(false),
        };

        Ok(Self {
            grid,
            prior,
            forward,
            noise_variances,
            data,
            solver,
            sweep,
            output,
        })
    }

    /// The configuration with every default made explicit. Parsing the
    /// result yields an equal config.
    pub fn render(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(", ");
        let mut s = String::new();
        let _ = writeln!(s, "[grid]\na = {:e}\nb = {:e}\nm = {}\n", self.grid.a, self.grid.b, self.grid.m);
        let _ = writeln!(
            s,
            "[prior]\nfamily = {}\nvariance = {:e}\nlength_scale = {:e}\ndrop_tol = {:e}\n",
            self.prior.family, self.prior.variance, self.prior.length_scale, self.prior.drop_tol
        );
        let _ = writeln!(
            s,
            "[forward]\nkind = {}\nobs_locations = {}\nblur_width = {:e}\nnonlinearity_eps = {:e}\n",
            self.forward.kind.as_str(),
            list(&self.forward.obs_locations),
            self.forward.blur_width,
            self.forward.nonlinearity_eps
        );
        let _ = writeln!(s, "[noise]\nvariances = {}\n", list(&self.noise_variances));
        let _ = writeln!(s, "[data]");
        match &self.data.mode {
            DataMode::Synthesize => {
                let _ = writeln!(s, "mode = synthesize");
            }
            DataMode::Load(p) => {
                let _ = writeln!(s, "mode = load\npath = {}", p.display());
            }
        }
        match &self.data.truth {
            Some(TruthSource::PriorSample) => {
                let _ = writeln!(s, "truth = prior_sample");
            }
            Some(TruthSource::File(p)) => {
                let _ = writeln!(s, "truth = {}", p.display());
            }
            None => {}
        }
        let _ = writeln!(s, "truth_seed = {}\nseed = {}\n", self.data.truth_seed, self.data.seed);
        let _ = writeln!(
            s,
            "[solver]\ngrad_tol = {:e}\nmax_iters = {}\narmijo_c = {:e}\nbacktrack_factor = {:e}\ninit_step = {:e}\n",
            self.solver.grad_tol,
            self.solver.max_iters,
            self.solver.armijo_c,
            self.solver.backtrack_factor,
            self.solver.init_step
        );
        if let Some(sweep) = &self.sweep {
            let ns = sweep.ns.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(", ");
            let _ = writeln!(
                s,
                "[sweep]\nns = {ns}\nlipschitz_samples = {}\nseed = {}\n",
                sweep.lipschitz_samples, sweep.seed
            );
        }
        let _ = writeln!(
            s,
            "[output]\ndirectory = {}\nemit_svg = {}",
            self.output.directory.display(),
            self.output.emit_svg
        );
        s
    }
}
