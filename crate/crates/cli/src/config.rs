//! Run configuration: a TOML document validated into concrete solver inputs.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use polylab::assembly::SurfaceDensity;
use polylab::geometry::{tube_radius, CosineMode, Curve, Rect};
use polylab::solve::{Backend, Method, SolveOptions, MAX_ORDER};
use polylab::Vec2;

/// Whether `[section]` of a syntactically valid document sets `key`.
fn has_key(text: &str, section: &str, key: &str) -> bool {
    toml::from_str::<toml::Table>(text)
        .ok()
        .and_then(|t| t.get(section).and_then(|s| s.as_table()).map(|s| s.contains_key(key)))
        .unwrap_or(false)
}

/// A configuration problem, always naming the offending key.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },

    #[error("config syntax error: {0}")]
    Syntax(String),

    #[error("config error at `{key}`: {message}")]
    Invalid { key: String, message: String },
}

impl ConfigError {
    fn invalid(key: &str, message: impl Into<String>) -> Self {
        Self::Invalid { key: key.to_string(), message: message.into() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    Convergence,
    Jumps,
    Tv,
    Altcaf,
    ValidateLemma23,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Convergence => "convergence",
            Command::Jumps => "jumps",
            Command::Tv => "tv",
            Command::Altcaf => "altcaf",
            Command::ValidateLemma23 => "validate-lemma23",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainConfig {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self { x0: -1.0, x1: 1.0, y0: -1.0, y1: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub sizes: Vec<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { sizes: vec![65, 129, 257] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "kebab-case")]
pub enum CurveConfig {
    Circle {
        #[serde(default)]
        center: [f64; 2],
        radius: f64,
    },
    Ellipse {
        #[serde(default)]
        center: [f64; 2],
        a: f64,
        b: f64,
    },
    FourierStar {
        #[serde(default)]
        center: [f64; 2],
        r0: f64,
        /// `[k, amplitude]` pairs.
        modes: Vec<(u32, f64)>,
    },
}

impl Default for CurveConfig {
    fn default() -> Self {
        CurveConfig::Circle { center: [0.0, 0.0], radius: 0.5 }
    }
}

impl CurveConfig {
    pub fn build(&self) -> polylab::Result<Curve> {
        match self {
            CurveConfig::Circle { center, radius } => Curve::circle(Vec2::from(*center), *radius),
            CurveConfig::Ellipse { center, a, b } => Curve::ellipse(Vec2::from(*center), *a, *b),
            CurveConfig::FourierStar { center, r0, modes } => Curve::fourier_star(
                Vec2::from(*center),
                *r0,
                modes.iter().map(|&(k, amplitude)| CosineMode { k, amplitude }).collect(),
            ),
        }
    }

    /// Radius of a circle centered at the origin, the only geometry with an exact oracle.
    pub fn origin_circle_radius(&self) -> Option<f64> {
        match self {
            CurveConfig::Circle { center, radius } if *center == [0.0, 0.0] => Some(*radius),
            _ => None,
        }
    }

    fn key(&self) -> &'static str {
        match self {
            CurveConfig::Circle { .. } => "curve.radius",
            CurveConfig::Ellipse { .. } => "curve.a",
            CurveConfig::FourierStar { .. } => "curve.modes",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "kebab-case")]
pub enum DensityConfig {
    Constant { value: f64 },
    /// `base + amplitude·cos(k t)`.
    Cosine { base: f64, amplitude: f64, k: u32 },
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig::Constant { value: 1.0 }
    }
}

impl DensityConfig {
    pub fn build(&self) -> SurfaceDensity {
        match *self {
            DensityConfig::Constant { value } => SurfaceDensity::constant(value),
            DensityConfig::Cosine { base, amplitude, k } => SurfaceDensity::cosine(base, amplitude, k),
        }
    }

    pub fn constant_value(&self) -> Option<f64> {
        match *self {
            DensityConfig::Constant { value } => Some(value),
            DensityConfig::Cosine { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BcSource {
    Zero,
    Oracle,
    Polynomial,
}

/// One monomial `coef·x^px·y^py` of the boundary data of level `level`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyTerm {
    pub level: usize,
    pub coef: f64,
    pub px: u32,
    pub py: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    pub source: BcSource,
    #[serde(default)]
    pub terms: Vec<PolyTerm>,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        Self { source: BcSource::Zero, terms: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub m: usize,
    pub method: Method,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self { m: 1, method: Method::Corrector }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub backend: Backend,
    /// Relative residual; defaults to 1e-10 for n ≤ 257 and 1e-9 above.
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub reg_width_cells: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolveOptions::default();
        Self { backend: d.backend, tol: d.tol, max_iter: d.max_iter, reg_width_cells: d.reg_width_cells }
    }
}

impl SolverConfig {
    pub fn options(&self) -> SolveOptions {
        SolveOptions { tol: self.tol, max_iter: self.max_iter, backend: self.backend, reg_width_cells: self.reg_width_cells }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub probes: usize,
    pub tube_cells: f64,
    pub bumps: usize,
    pub seed: u64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { probes: 64, tube_cells: 3.0, bumps: 3, seed: 7 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AltCafConfig {
    pub u0: f64,
    pub step: f64,
    pub profile_samples: usize,
}

impl Default for AltCafConfig {
    fn default() -> Self {
        Self { u0: 0.07, step: 0.002, profile_samples: 400 }
    }
}

/// Assertion thresholds; every default is the acceptance tolerance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssertionConfig {
    /// Failed assertions make the exit status 1 (also set by `--strict`).
    pub enabled: bool,
    pub lemma23_min_order: f64,
    pub corrector_min_order: f64,
    pub corrector_max_error: f64,
    /// Grid size at which `corrector_max_error` applies.
    pub corrector_error_n: usize,
    pub regularized_max_order: f64,
    pub cascade_max_error: f64,
    pub jump_median_m1: f64,
    pub jump_median: f64,
    pub tangential_max: f64,
    pub same_side_ratio: [f64; 2],
    pub cross_ratio: [f64; 2],
    pub tube_fraction_min: f64,
    pub jump_estimate_rel: f64,
    pub oracle_weakform: f64,
    pub oracle_continuity: f64,
    pub altcaf_jump_law: f64,
    pub altcaf_slope_rel: f64,
    pub altcaf_continuity: f64,
}

impl Default for AssertionConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            lemma23_min_order: 1.5,
            corrector_min_order: 1.8,
            corrector_max_error: 2e-3,
            corrector_error_n: 257,
            regularized_max_order: 1.5,
            cascade_max_error: 1e-2,
            jump_median_m1: 0.05,
            jump_median: 0.10,
            tangential_max: 0.10,
            same_side_ratio: [0.8, 1.2],
            cross_ratio: [1.6, 2.4],
            tube_fraction_min: 0.6,
            jump_estimate_rel: 0.25,
            oracle_weakform: 1e-7,
            oracle_continuity: 1e-10,
            altcaf_jump_law: 1e-6,
            altcaf_slope_rel: 1e-4,
            altcaf_continuity: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub svg: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("polylab-out"), svg: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub workers: usize,
    /// Forces a single worker so every output is bit-reproducible.
    pub deterministic: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { workers: 1, deterministic: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub domain: DomainConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub problem: ProblemConfig,
    #[serde(default)]
    pub curve: CurveConfig,
    #[serde(default)]
    pub density: DensityConfig,
    #[serde(default)]
    pub boundary: BoundaryConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub altcaf: AltCafConfig,
    #[serde(default)]
    pub assertions: AssertionConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub run: RunSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            match offending_key(&e, text) {
                Some(key) => ConfigError::Invalid { key, message: msg },
                None => ConfigError::Syntax(e.to_string()),
            }
        })?;
        let mut cfg = cfg;
        if cfg.command == Command::Tv && !has_key(text, "problem", "m") {
            cfg.problem.m = 2;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses a document for a known command; the document may omit `command` but must not
    /// contradict it.
    pub fn parse_for(text: &str, command: Command) -> Result<Self, ConfigError> {
        let table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        match table.get("command") {
            None => Self::parse(&format!("command = \"{}\"\n{text}", command.as_str())),
            Some(toml::Value::String(s)) if s == command.as_str() => Self::parse(text),
            Some(other) => Err(ConfigError::invalid("command", format!("config says {other} but the command line says {}", command.as_str()))),
        }
    }

    /// Defaults for `command`, validated like a parsed document.
    pub fn defaults_for(command: Command) -> Result<Self, ConfigError> {
        Self::parse_for("", command)
    }

    pub fn load_for(path: &std::path::Path, command: Command) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::parse_for(&text, command)
    }

    pub fn rect(&self) -> Result<Rect, ConfigError> {
        let d = &self.domain;
        Rect::new(d.x0, d.x1, d.y0, d.y1).map_err(|e| ConfigError::invalid("domain", e.to_string()))
    }

    /// Checks every referenced parameter before any compute.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let rect = self.rect()?;
        let sizes = &self.grid.sizes;
        if sizes.is_empty() {
            return Err(ConfigError::invalid("grid.sizes", "at least one grid size is required"));
        }
        for &n in sizes {
            polylab::grid::Grid::new(rect, n).map_err(|e| ConfigError::invalid("grid.sizes", e.to_string()))?;
        }
        if sizes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ConfigError::invalid("grid.sizes", "sizes must be strictly increasing"));
        }
        let m = self.problem.m;
        if m == 0 || m > MAX_ORDER {
            return Err(ConfigError::invalid("problem.m", format!("order {m} outside 1..={MAX_ORDER}")));
        }
        if self.problem.method == Method::Source {
            return Err(ConfigError::invalid("problem.method", "`source` is not a measure discretization"));
        }
        let curve = self.curve.build().map_err(|e| ConfigError::invalid(self.curve.key(), e.to_string()))?;
        tube_radius(&curve, &rect).map_err(|e| ConfigError::invalid(self.curve.key(), format!("{}: {e}", variant_name(&e))))?;
        if let DensityConfig::Cosine { k: 0, .. } = self.density {
            return Err(ConfigError::invalid("density.k", "use kind = \"constant\" for k = 0"));
        }
        let oracle_needed = self.boundary.source == BcSource::Oracle || self.command == Command::Convergence;
        if oracle_needed {
            if self.curve.origin_circle_radius().is_none() {
                return Err(ConfigError::invalid("curve", "oracle data needs a circle centered at the origin"));
            }
            if self.density.constant_value().is_none() {
                return Err(ConfigError::invalid("density", "oracle data needs a constant density"));
            }
        }
        for (i, t) in self.boundary.terms.iter().enumerate() {
            if t.level >= m {
                return Err(ConfigError::invalid(&format!("boundary.terms[{i}].level"), format!("level {} ≥ m = {m}", t.level)));
            }
            if !t.coef.is_finite() {
                return Err(ConfigError::invalid(&format!("boundary.terms[{i}].coef"), "must be finite"));
            }
        }
        if self.boundary.source != BcSource::Polynomial && !self.boundary.terms.is_empty() {
            return Err(ConfigError::invalid("boundary.terms", "terms are only used with source = \"polynomial\""));
        }
        if let Some(tol) = self.solver.tol {
            if !(1e-12..=1e-4).contains(&tol) {
                return Err(ConfigError::invalid("solver.tol", format!("{tol:e} outside [1e-12, 1e-4]")));
            }
        }
        if !(self.solver.reg_width_cells > 0.0) {
            return Err(ConfigError::invalid("solver.reg_width_cells", "must be positive"));
        }
        if self.analysis.probes < 8 {
            return Err(ConfigError::invalid("analysis.probes", "need at least 8 probes"));
        }
        if !(self.analysis.tube_cells > 0.0) {
            return Err(ConfigError::invalid("analysis.tube_cells", "must be positive"));
        }
        if self.analysis.bumps == 0 {
            return Err(ConfigError::invalid("analysis.bumps", "need at least one test function"));
        }
        if self.run.workers == 0 {
            return Err(ConfigError::invalid("run.workers", "need at least one worker"));
        }
        match self.command {
            Command::Convergence | Command::ValidateLemma23 if sizes.len() < 3 => {
                return Err(ConfigError::invalid("grid.sizes", "this command needs at least 3 grids"));
            }
            Command::Jumps if m >= 2 && sizes.len() < 3 => {
                return Err(ConfigError::invalid("grid.sizes", "the regularity sweep needs at least 3 grids"));
            }
            Command::Tv if m != 2 => {
                return Err(ConfigError::invalid("problem.m", "the TV diagnostic is defined for m = 2"));
            }
            Command::Altcaf => {
                let a = &self.altcaf;
                if !(a.u0 > 0.0 && a.u0.is_finite()) {
                    return Err(ConfigError::invalid("altcaf.u0", "must be positive"));
                }
                if !(a.step > 0.0 && a.step <= 0.05) {
                    return Err(ConfigError::invalid("altcaf.step", "must lie in (0, 0.05]"));
                }
                if a.profile_samples < 10 {
                    return Err(ConfigError::invalid("altcaf.profile_samples", "need at least 10 samples"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Effective worker count after the determinism flag and any command-line override.
    pub fn workers(&self, cli: Option<usize>) -> usize {
        if self.run.deterministic {
            1
        } else {
            cli.unwrap_or(self.run.workers).max(1)
        }
    }
}

fn variant_name(e: &polylab::Error) -> &'static str {
    match e {
        polylab::Error::InterfaceTouchesBoundary { .. } => "InterfaceTouchesBoundary",
        polylab::Error::InvalidCurve(_) => "InvalidCurve",
        polylab::Error::TubeDegenerate { .. } => "TubeDegenerate",
        _ => "InvalidGeometry",
    }
}

/// Dotted path of the key a deserialization error refers to: the enclosing `[section]`
/// header (found from the error span) joined with the field named in the message.
fn offending_key(e: &toml::de::Error, text: &str) -> Option<String> {
    let msg = e.message();
    let section = e.span().and_then(|span| {
        // a span may start at the section header itself (tagged tables), so include its line
        let start = span.start.min(text.len());
        let line_end = text[start..].find('\n').map_or(text.len(), |i| start + i);
        text[..line_end]
            .lines()
            .rev()
            .map(str::trim)
            .find(|l| l.starts_with('['))
            .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string())
    });
    let field = if msg.starts_with("unknown field") || msg.starts_with("missing field") {
        msg.split('`').nth(1).map(str::to_string)
    } else {
        // value errors point at the key's own line
        e.span().and_then(|span| {
            let line_start = text[..span.start.min(text.len())].rfind('\n').map_or(0, |i| i + 1);
            let line = &text[line_start..];
            let key = line.split('=').next()?.trim();
            (!key.is_empty() && !key.starts_with('[')).then(|| key.to_string())
        })
    }?;
    Some(match section {
        Some(s) if !s.is_empty() => format!("{s}.{field}"),
        _ => field,
    })
}
