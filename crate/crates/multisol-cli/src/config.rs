//! Problem files.
//!
//! A run is described by a flat, sectioned key-value text file (JSON with
//! the same field names is also accepted; a leading `{` selects it).
//! The text grammar, line by line:
//!
//! ```text
//! # comment
//! [problem]
//! kind         = elliptic | nls | kg | kgm
//! nonlinearity = poly_s2 <c1> <c2> ...        # T(s) = c1 s^2 + c2 s^4 + ...
//!              | power_well <a> <p> <b> <q>   # T(s) = -a|s|^p + b|s|^q
//!              | table <s:v:d:d2> <s:v:d:d2> ...   # piecewise quintic Hermite
//! omega        = <float>        # Ω; required for kg/kgm
//! constraint   = <float>        # c (elliptic, nls, kgm) or σ (kg)
//! e_charge     = <float>        # kgm only
//! growth       = <p> <q> <c1> <c2>      # optional |T''| bound metadata
//! coercivity   = <c3> <c4> <gamma>      # optional T lower-bound metadata
//! [grid]
//! dim = 3      r_max = 60      points = 2048      stretch = 1
//! [solver]
//! max_iters, step0, step_shrink, grad_tol, constraint_tol, boundary_margin,
//! restarts, blend_window, r_n_schedule (space-separated), seed,
//! precondition, s_max, scan_points, root_tol
//! [outputs]
//! out_dir = out    emit_profiles = true   emit_trace = false
//! emit_plot_data = true
//! ```
//!
//! Every key has a default except `kind`, `nonlinearity` and `constraint`.
//! `dump_text` writes the canonical form; parsing it back yields an
//! identical configuration.

use std::fmt::Write as _;
use std::sync::Arc;

use multisol::grid::RadialGrid;
use multisol::minimizer::SolveOptions;
use multisol::nonlinearity::{CoercivityBounds, GrowthBounds, TableKnot};
use multisol::{Nonlinearity, ProblemKind, ProblemSpec};
use serde::{Deserialize, Serialize};

/// A configuration error with position information for text inputs.
#[derive(Debug, Clone)]
pub struct ConfigError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.line > 0 {
            write!(
                f,
                "line {}, column {}: {}",
                self.line, self.column, self.message
            )
        } else {
            write!(f, "{}", self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    fn at(line: usize, column: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            column,
            message: message.into(),
        }
    }
    fn plain(message: impl Into<String>) -> Self {
        Self {
            line: 0,
            column: 0,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum NonlinearitySpec {
    PolyS2 { coeffs: Vec<f64> },
    PowerWell { a: f64, p: f64, b: f64, q: f64 },
    Table { knots: Vec<[f64; 4]> },
}

impl NonlinearitySpec {
    pub fn build(&self) -> Result<Nonlinearity, ConfigError> {
        match self {
            Self::PolyS2 { coeffs } => Ok(Nonlinearity::poly_s2(coeffs.clone())),
            Self::PowerWell { a, p, b, q } => Nonlinearity::power_well(*a, *p, *b, *q)
                .map_err(|e| ConfigError::plain(e.to_string())),
            Self::Table { knots } => {
                let knots = knots
                    .iter()
                    .map(|k| TableKnot {
                        s: k[0],
                        v: k[1],
                        d: k[2],
                        d2: k[3],
                    })
                    .collect();
                Nonlinearity::table(knots).map_err(|e| ConfigError::plain(e.to_string()))
            }
        }
    }

    fn dump(&self) -> String {
        match self {
            Self::PolyS2 { coeffs } => {
                let mut s = "poly_s2".to_string();
                for c in coeffs {
                    let _ = write!(s, " {c}");
                }
                s
            }
            Self::PowerWell { a, p, b, q } => format!("power_well {a} {p} {b} {q}"),
            Self::Table { knots } => {
                let mut s = "table".to_string();
                for k in knots {
                    let _ = write!(s, " {}:{}:{}:{}", k[0], k[1], k[2], k[3]);
                }
                s
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub kind: String,
    pub nonlinearity: NonlinearitySpec,
    #[serde(default)]
    pub omega: f64,
    pub constraint: f64,
    #[serde(default)]
    pub e_charge: f64,
    #[serde(default)]
    pub growth: Option<[f64; 4]>,
    #[serde(default)]
    pub coercivity: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub dim: usize,
    pub r_max: f64,
    pub points: usize,
    pub stretch: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            dim: 3,
            r_max: 60.0,
            points: 2048,
            stretch: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub step0: f64,
    pub step_shrink: f64,
    pub grad_tol: f64,
    pub constraint_tol: f64,
    pub boundary_margin: f64,
    pub restarts: usize,
    pub blend_window: f64,
    pub r_n_schedule: Vec<f64>,
    pub seed: u64,
    pub precondition: bool,
    pub s_max: f64,
    pub scan_points: usize,
    pub root_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = SolveOptions::default();
        Self {
            max_iters: o.max_iters,
            step0: o.step0,
            step_shrink: o.step_shrink,
            grad_tol: o.grad_tol,
            constraint_tol: o.constraint_tol,
            boundary_margin: o.boundary_margin,
            restarts: o.restarts,
            blend_window: o.blend_window,
            r_n_schedule: o.r_n_schedule,
            seed: o.seed,
            precondition: o.precondition,
            s_max: o.s_max,
            scan_points: o.scan_points,
            root_tol: o.root_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub out_dir: String,
    pub emit_profiles: bool,
    pub emit_trace: bool,
    pub emit_plot_data: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            out_dir: "out".into(),
            emit_profiles: true,
            emit_trace: false,
            emit_plot_data: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
}

impl RunConfig {
    /// Parse either the sectioned text format or JSON (detected by a
    /// leading `{`).
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        if text.trim_start().starts_with('{') {
            return serde_json::from_str(text)
                .map_err(|e| ConfigError::at(e.line(), e.column(), e.to_string()));
        }
        parse_text(text)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::plain(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn kind(&self) -> Result<ProblemKind, ConfigError> {
        match self.problem.kind.as_str() {
            "elliptic" => Ok(ProblemKind::Elliptic),
            "nls" => Ok(ProblemKind::Nls),
            "kg" => Ok(ProblemKind::KleinGordon),
            "kgm" => Ok(ProblemKind::KgMaxwell),
            other => Err(ConfigError::plain(format!(
                "unknown problem kind `{other}` (expected elliptic|nls|kg|kgm)"
            ))),
        }
    }

    /// Materialize the grid, problem spec and solver options.
    pub fn build(&self) -> Result<(ProblemSpec, SolveOptions), ConfigError> {
        let kind = self.kind()?;
        let grid = RadialGrid::build(
            self.grid.dim,
            self.grid.r_max,
            self.grid.points,
            self.grid.stretch,
        )
        .map_err(|e| ConfigError::plain(e.to_string()))?;
        let mut nl = self.problem.nonlinearity.build()?;
        if let Some([p, q, c1, c2]) = self.problem.growth {
            nl = nl.with_growth(GrowthBounds { p, q, c1, c2 });
        }
        if let Some([c3, c4, gamma_exp]) = self.problem.coercivity {
            nl = nl.with_coercivity(CoercivityBounds { c3, c4, gamma_exp });
        }
        let nl = nl.with_omega(self.problem.omega, false);
        let spec = ProblemSpec::new(
            kind,
            nl,
            self.problem.constraint,
            self.problem.e_charge,
            Arc::new(grid),
        )
        .map_err(|e| ConfigError::plain(e.to_string()))?;
        let s = &self.solver;
        let opts = SolveOptions {
            max_iters: s.max_iters,
            step0: s.step0,
            step_shrink: s.step_shrink,
            grad_tol: s.grad_tol,
            constraint_tol: s.constraint_tol,
            boundary_margin: s.boundary_margin,
            restarts: s.restarts,
            blend_window: s.blend_window,
            r_n_schedule: s.r_n_schedule.clone(),
            seed: s.seed,
            precondition: s.precondition,
            s_max: s.s_max,
            scan_points: s.scan_points,
            root_tol: s.root_tol,
        };
        Ok((spec, opts))
    }

    /// Canonical text form; `parse(dump_text())` reproduces `self`.
    pub fn dump_text(&self) -> String {
        let mut s = String::new();
        let p = &self.problem;
        let _ = writeln!(s, "[problem]");
        let _ = writeln!(s, "kind = {}", p.kind);
        let _ = writeln!(s, "nonlinearity = {}", p.nonlinearity.dump());
        let _ = writeln!(s, "omega = {}", p.omega);
        let _ = writeln!(s, "constraint = {}", p.constraint);
        let _ = writeln!(s, "e_charge = {}", p.e_charge);
        if let Some([gp, gq, c1, c2]) = p.growth {
            let _ = writeln!(s, "growth = {gp} {gq} {c1} {c2}");
        }
        if let Some([c3, c4, g]) = p.coercivity {
            let _ = writeln!(s, "coercivity = {c3} {c4} {g}");
        }
        let g = &self.grid;
        let _ = writeln!(s, "\n[grid]");
        let _ = writeln!(s, "dim = {}", g.dim);
        let _ = writeln!(s, "r_max = {}", g.r_max);
        let _ = writeln!(s, "points = {}", g.points);
        let _ = writeln!(s, "stretch = {}", g.stretch);
        let v = &self.solver;
        let _ = writeln!(s, "\n[solver]");
        let _ = writeln!(s, "max_iters = {}", v.max_iters);
        let _ = writeln!(s, "step0 = {}", v.step0);
        let _ = writeln!(s, "step_shrink = {}", v.step_shrink);
        let _ = writeln!(s, "grad_tol = {}", v.grad_tol);
        let _ = writeln!(s, "constraint_tol = {}", v.constraint_tol);
        let _ = writeln!(s, "boundary_margin = {}", v.boundary_margin);
        let _ = writeln!(s, "restarts = {}", v.restarts);
        let _ = writeln!(s, "blend_window = {}", v.blend_window);
        let sched = v
            .r_n_schedule
            .iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        let _ = writeln!(s, "r_n_schedule = {sched}");
        let _ = writeln!(s, "seed = {}", v.seed);
        let _ = writeln!(s, "precondition = {}", v.precondition);
        let _ = writeln!(s, "s_max = {}", v.s_max);
        let _ = writeln!(s, "scan_points = {}", v.scan_points);
        let _ = writeln!(s, "root_tol = {}", v.root_tol);
        let o = &self.outputs;
        let _ = writeln!(s, "\n[outputs]");
        let _ = writeln!(s, "out_dir = {}", o.out_dir);
        let _ = writeln!(s, "emit_profiles = {}", o.emit_profiles);
        let _ = writeln!(s, "emit_trace = {}", o.emit_trace);
        let _ = writeln!(s, "emit_plot_data = {}", o.emit_plot_data);
        s
    }
}

fn parse_text(text: &str) -> Result<RunConfig, ConfigError> {
    #[derive(Default)]
    struct Raw {
        kind: Option<String>,
        nonlinearity: Option<NonlinearitySpec>,
        omega: Option<f64>,
        constraint: Option<f64>,
        e_charge: Option<f64>,
        growth: Option<[f64; 4]>,
        coercivity: Option<[f64; 3]>,
        grid: GridConfig,
        solver: SolverConfig,
        outputs: OutputConfig,
    }
    let mut raw = Raw {
        grid: GridConfig::default(),
        solver: SolverConfig::default(),
        outputs: OutputConfig::default(),
        ..Default::default()
    };
    let mut section = String::new();

    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let content = match line.find('#') {
            Some(i) => &line[..i],
            None => line,
        };
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix('[').and_then(|t| t.strip_suffix(']')) {
            section = name.trim().to_string();
            if !["problem", "grid", "solver", "outputs"].contains(&section.as_str()) {
                let col = line.find('[').unwrap_or(0) + 1;
                return Err(ConfigError::at(
                    lineno,
                    col,
                    format!("unknown section [{section}]"),
                ));
            }
            continue;
        }
        let eq = trimmed.find('=').ok_or_else(|| {
            ConfigError::at(lineno, 1, format!("expected `key = value`, got `{trimmed}`"))
        })?;
        let key = trimmed[..eq].trim();
        let value = trimmed[eq + 1..].trim();
        let vcol = line.find(value).map(|i| i + 1).unwrap_or(eq + 2);
        let bad = |msg: String| ConfigError::at(lineno, vcol, msg);
        let parse_f64 = |v: &str| -> Result<f64, ConfigError> {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| bad(format!("`{v}` is not a finite number")))
        };
        let parse_usize = |v: &str| -> Result<usize, ConfigError> {
            v.parse()
                .map_err(|_| bad(format!("`{v}` is not a nonnegative integer")))
        };
        let parse_bool = |v: &str| -> Result<bool, ConfigError> {
            match v {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(bad(format!("`{v}` is not a boolean"))),
            }
        };
        let parse_floats = |v: &str| -> Result<Vec<f64>, ConfigError> {
            v.split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| bad(format!("`{t}` is not a finite number")))
                })
                .collect()
        };

        match (section.as_str(), key) {
            ("problem", "kind") => raw.kind = Some(value.to_string()),
            ("problem", "nonlinearity") => {
                raw.nonlinearity = Some(parse_nonlinearity(value, lineno, vcol)?)
            }
            ("problem", "omega") => raw.omega = Some(parse_f64(value)?),
            ("problem", "constraint") => raw.constraint = Some(parse_f64(value)?),
            ("problem", "e_charge") => raw.e_charge = Some(parse_f64(value)?),
            ("problem", "growth") => {
                let v = parse_floats(value)?;
                let arr: [f64; 4] = v
                    .try_into()
                    .map_err(|_| bad("growth needs 4 numbers: p q c1 c2".into()))?;
                raw.growth = Some(arr);
            }
            ("problem", "coercivity") => {
                let v = parse_floats(value)?;
                let arr: [f64; 3] = v
                    .try_into()
                    .map_err(|_| bad("coercivity needs 3 numbers: c3 c4 gamma".into()))?;
                raw.coercivity = Some(arr);
            }
            ("grid", "dim") => raw.grid.dim = parse_usize(value)?,
            ("grid", "r_max") => raw.grid.r_max = parse_f64(value)?,
            ("grid", "points") => raw.grid.points = parse_usize(value)?,
            ("grid", "stretch") => raw.grid.stretch = parse_f64(value)?,
            ("solver", "max_iters") => raw.solver.max_iters = parse_usize(value)?,
            ("solver", "step0") => raw.solver.step0 = parse_f64(value)?,
            ("solver", "step_shrink") => raw.solver.step_shrink = parse_f64(value)?,
            ("solver", "grad_tol") => raw.solver.grad_tol = parse_f64(value)?,
            ("solver", "constraint_tol") => raw.solver.constraint_tol = parse_f64(value)?,
            ("solver", "boundary_margin") => raw.solver.boundary_margin = parse_f64(value)?,
            ("solver", "restarts") => raw.solver.restarts = parse_usize(value)?,
            ("solver", "blend_window") => raw.solver.blend_window = parse_f64(value)?,
            ("solver", "r_n_schedule") => raw.solver.r_n_schedule = parse_floats(value)?,
            ("solver", "seed") => {
                raw.solver.seed = value
                    .parse()
                    .map_err(|_| bad(format!("`{value}` is not a seed")))?
            }
            ("solver", "precondition") => raw.solver.precondition = parse_bool(value)?,
            ("solver", "s_max") => raw.solver.s_max = parse_f64(value)?,
            ("solver", "scan_points") => raw.solver.scan_points = parse_usize(value)?,
            ("solver", "root_tol") => raw.solver.root_tol = parse_f64(value)?,
            ("outputs", "out_dir") => raw.outputs.out_dir = value.to_string(),
            ("outputs", "emit_profiles") => raw.outputs.emit_profiles = parse_bool(value)?,
            ("outputs", "emit_trace") => raw.outputs.emit_trace = parse_bool(value)?,
            ("outputs", "emit_plot_data") => raw.outputs.emit_plot_data = parse_bool(value)?,
            ("", k) => {
                return Err(ConfigError::at(
                    lineno,
                    1,
                    format!("key `{k}` appears before any [section]"),
                ))
            }
            (s, k) => {
                return Err(ConfigError::at(
                    lineno,
                    1,
                    format!("unknown key `{k}` in section [{s}]"),
                ))
            }
        }
    }

    let kind = raw
        .kind
        .ok_or_else(|| ConfigError::plain("missing required key: [problem] kind"))?;
    let nonlinearity = raw
        .nonlinearity
        .ok_or_else(|| ConfigError::plain("missing required key: [problem] nonlinearity"))?;
    let constraint = raw
        .constraint
        .ok_or_else(|| ConfigError::plain("missing required key: [problem] constraint"))?;
    Ok(RunConfig {
        problem: ProblemConfig {
            kind,
            nonlinearity,
            omega: raw.omega.unwrap_or(0.0),
            constraint,
            e_charge: raw.e_charge.unwrap_or(0.0),
            growth: raw.growth,
            coercivity: raw.coercivity,
        },
        grid: raw.grid,
        solver: raw.solver,
        outputs: raw.outputs,
    })
}

fn parse_nonlinearity(
    value: &str,
    lineno: usize,
    vcol: usize,
) -> Result<NonlinearitySpec, ConfigError> {
    let mut toks = value.split_whitespace();
    let name = toks.next().unwrap_or("");
    let rest: Vec<&str> = toks.collect();
    let bad = |msg: String| ConfigError::at(lineno, vcol, msg);
    match name {
        "poly_s2" => {
            let coeffs = rest
                .iter()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| bad(format!("`{t}` is not a number")))
                })
                .collect::<Result<Vec<f64>, _>>()?;
            if coeffs.is_empty() {
                return Err(bad("poly_s2 needs at least one coefficient".into()));
            }
            Ok(NonlinearitySpec::PolyS2 { coeffs })
        }
        "power_well" => {
            if rest.len() != 4 {
                return Err(bad("power_well needs 4 numbers: a p b q".into()));
            }
            let v: Vec<f64> = rest
                .iter()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| bad(format!("`{t}` is not a number")))
                })
                .collect::<Result<_, _>>()?;
            Ok(NonlinearitySpec::PowerWell {
                a: v[0],
                p: v[1],
                b: v[2],
                q: v[3],
            })
        }
        "table" => {
            let mut knots = Vec::new();
            for t in &rest {
                let parts: Vec<&str> = t.split(':').collect();
                if parts.len() != 4 {
                    return Err(bad(format!("table knot `{t}` must be s:v:d:d2")));
                }
                let mut k = [0.0; 4];
                for (slot, p) in k.iter_mut().zip(&parts) {
                    *slot = p
                        .parse()
                        .map_err(|_| bad(format!("`{p}` is not a number")))?;
                }
                knots.push(k);
            }
            if knots.len() < 2 {
                return Err(bad("table needs at least two knots".into()));
            }
            Ok(NonlinearitySpec::Table { knots })
        }
        other => Err(bad(format!(
            "unknown nonlinearity `{other}` (expected poly_s2, power_well or table)"
        ))),
    }
}
