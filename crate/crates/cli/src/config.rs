//! Scenario files: flat `key = value` lines grouped under `[section]` headers.
//!
//! Parsing happens in two passes. [`Document::parse`] checks the grammar and
//! rejects duplicates; [`ScenarioConfig::from_document`] pulls typed values
//! out section by section, and anything left unread is reported as an
//! unknown key with its line number.

use std::cell::Cell;
use std::fmt::{self, Write as _};
use std::path::Path;

use ret_core::format::fmt_f64;
use ret_core::{conventional_consistency, StepMode};

use crate::error::CliError;

const SECTIONS: &[&str] = &[
    "scenario", "material", "protocol", "solver", "grid", "initial", "output", "sweep",
];

#[derive(Debug)]
struct Entry {
    key: String,
    value: String,
    line: usize,
    used: Cell<bool>,
}

#[derive(Debug)]
struct Section {
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

/// A parsed but untyped scenario file.
#[derive(Debug)]
pub struct Document {
    origin: String,
    sections: Vec<Section>,
}

impl Document {
    pub fn parse(origin: &str, text: &str) -> Result<Self, CliError> {
        let err = |line: usize, message: String| CliError::Config {
            origin: origin.to_string(),
            line,
            message,
        };
        let mut sections: Vec<Section> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err(line, format!("malformed section header `{content}`")))?
                    .trim();
                if !SECTIONS.contains(&name) {
                    return Err(err(line, format!("unknown section [{name}]")));
                }
                if let Some(prev) = sections.iter().find(|s| s.name == name) {
                    return Err(err(
                        line,
                        format!("section [{name}] already opened on line {}", prev.line),
                    ));
                }
                sections.push(Section {
                    name: name.to_string(),
                    line,
                    entries: Vec::new(),
                });
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(line, format!("expected `key = value`, found `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty()
                || !key
                    .bytes()
                    .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
            {
                return Err(err(line, format!("invalid key `{key}`")));
            }
            if value.is_empty() {
                return Err(err(line, format!("missing value for `{key}`")));
            }
            let section = sections
                .last_mut()
                .ok_or_else(|| err(line, format!("`{key}` appears before any section header")))?;
            if let Some(prev) = section.entries.iter().find(|e| e.key == key) {
                return Err(err(
                    line,
                    format!("duplicate key `{key}` (first set on line {})", prev.line),
                ));
            }
            section.entries.push(Entry {
                key: key.to_string(),
                value: value.to_string(),
                line,
                used: Cell::new(false),
            });
        }
        Ok(Self {
            origin: origin.to_string(),
            sections,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            origin: path.display().to_string(),
            line: 0,
            message: format!("cannot read file: {e}"),
        })?;
        Self::parse(&path.display().to_string(), &text)
    }

    fn error(&self, line: usize, message: impl Into<String>) -> CliError {
        CliError::Config {
            origin: self.origin.clone(),
            line,
            message: message.into(),
        }
    }

    fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    fn section_line(&self, name: &str) -> usize {
        self.section(name).map_or(0, |s| s.line)
    }

    fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        let e = self.section(section)?.entries.iter().find(|e| e.key == key)?;
        e.used.set(true);
        Some(e)
    }

    fn text(&self, section: &str, key: &str) -> Option<(&str, usize)> {
        self.entry(section, key).map(|e| (e.value.as_str(), e.line))
    }

    fn required<T>(&self, section: &str, key: &str, value: Option<T>) -> Result<T, CliError> {
        value.ok_or_else(|| {
            self.error(
                self.section_line(section),
                format!("missing required key `{key}` in [{section}]"),
            )
        })
    }

    fn float(&self, section: &str, key: &str) -> Result<Option<f64>, CliError> {
        match self.text(section, key) {
            None => Ok(None),
            Some((v, line)) => parse_float(v)
                .map(Some)
                .map_err(|m| self.error(line, format!("`{key}`: {m}"))),
        }
    }

    fn float_checked(&self, section: &str, key: &str, check: Check) -> Result<Option<f64>, CliError> {
        let Some(x) = self.float(section, key)? else {
            return Ok(None);
        };
        let line = self.entry(section, key).map_or(0, |e| e.line);
        check
            .apply(x)
            .map_err(|m| self.error(line, format!("`{key}` {m}, got {}", fmt_f64(x))))?;
        Ok(Some(x))
    }

    fn floats(&self, section: &str, key: &str, check: Check) -> Result<Option<Vec<f64>>, CliError> {
        let Some((v, line)) = self.text(section, key) else {
            return Ok(None);
        };
        let mut out = Vec::new();
        for item in v.split(',') {
            let x = parse_float(item.trim()).map_err(|m| self.error(line, format!("`{key}`: {m}")))?;
            check
                .apply(x)
                .map_err(|m| self.error(line, format!("`{key}` entries {m}, got {}", fmt_f64(x))))?;
            out.push(x);
        }
        Ok(Some(out))
    }

    fn triple(&self, section: &str, key: &str) -> Result<Option<[f64; 3]>, CliError> {
        let Some(values) = self.floats(section, key, Check::Finite)? else {
            return Ok(None);
        };
        let line = self.entry(section, key).map_or(0, |e| e.line);
        <[f64; 3]>::try_from(values)
            .map(Some)
            .map_err(|_| self.error(line, format!("`{key}` needs three values: v, F, sigma")))
    }

    fn count(&self, section: &str, key: &str, min: usize) -> Result<Option<usize>, CliError> {
        let Some((v, line)) = self.text(section, key) else {
            return Ok(None);
        };
        match v.parse::<usize>() {
            Ok(n) if n >= min => Ok(Some(n)),
            _ => Err(self.error(line, format!("`{key}` must be an integer >= {min}, got `{v}`"))),
        }
    }

    fn flag(&self, section: &str, key: &str) -> Result<Option<bool>, CliError> {
        match self.text(section, key) {
            None => Ok(None),
            Some(("true", _)) => Ok(Some(true)),
            Some(("false", _)) => Ok(Some(false)),
            Some((v, line)) => Err(self.error(line, format!("`{key}` must be true or false, got `{v}`"))),
        }
    }

    fn choice<'a>(&self, section: &str, key: &str, options: &[&'a str]) -> Result<Option<(&'a str, usize)>, CliError> {
        let Some((v, line)) = self.text(section, key) else {
            return Ok(None);
        };
        options
            .iter()
            .find(|o| **o == v)
            .map(|o| Some((*o, line)))
            .ok_or_else(|| {
                self.error(
                    line,
                    format!("`{key}` must be one of {}, got `{v}`", options.join(", ")),
                )
            })
    }

    /// Fails on the first key that no reader asked for.
    fn reject_unused(&self, kind: Kind) -> Result<(), CliError> {
        for s in &self.sections {
            if let Some(e) = s.entries.iter().find(|e| !e.used.get()) {
                return Err(self.error(
                    e.line,
                    format!("unknown key `{}` in [{}] for a {kind} scenario", e.key, s.name),
                ));
            }
        }
        Ok(())
    }
}

fn parse_float(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

#[derive(Debug, Clone, Copy)]
enum Check {
    Finite,
    Positive,
    NonNegative,
}

impl Check {
    fn apply(self, x: f64) -> Result<(), &'static str> {
        match self {
            Check::Finite => Ok(()),
            Check::Positive if x > 0.0 => Ok(()),
            Check::Positive => Err("must be positive"),
            Check::NonNegative if x >= 0.0 => Ok(()),
            Check::NonNegative => Err("must be nonnegative"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Case1,
    Case2,
    Pde,
    Sweep,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Case1 => "case1",
            Kind::Case2 => "case2",
            Kind::Pde => "pde",
            Kind::Sweep => "sweep",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElasticSpec {
    Linear { modulus: f64 },
    PowerGas { p0: f64, gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ViscousSpec {
    Quadratic {
        tau0: f64,
    },
    /// `τ(σ) = τ0·(1 + β·σ²)`.
    Quartic {
        tau0: f64,
        beta: f64,
    },
}

impl ViscousSpec {
    pub fn tau0(&self) -> f64 {
        match *self {
            ViscousSpec::Quadratic { tau0 } | ViscousSpec::Quartic { tau0, .. } => tau0,
        }
    }

    pub fn with_tau0(self, tau0: f64) -> Self {
        match self {
            ViscousSpec::Quadratic { .. } => ViscousSpec::Quadratic { tau0 },
            ViscousSpec::Quartic { beta, .. } => ViscousSpec::Quartic { tau0, beta },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Consistency {
    Value(f64),
    /// k = 10·e^(-2m).
    Conventional,
}

impl Consistency {
    pub fn resolve(self, m: f64) -> f64 {
        match self {
            Consistency::Value(k) => k,
            Consistency::Conventional => conventional_consistency(m),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialSpec {
    pub rho_star: f64,
    pub elastic: ElasticSpec,
    pub viscous: ViscousSpec,
    /// One entry except for case1, which draws a curve per flow index.
    pub m: Vec<f64>,
    pub k: Consistency,
    pub body_force: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolSpec {
    pub sigma0: f64,
    pub vx0: f64,
    pub f0: f64,
    pub t_end: f64,
    /// Relaxation time of the linear comparator (case2).
    pub tau1: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSpec {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub implicit_switch: Option<f64>,
    pub cfl: f64,
    pub mode: StepMode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BcSpec {
    Periodic,
    Transmissive,
    Piston { v_left: f64, v_right: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub cells: usize,
    pub bc: BcSpec,
}

/// Initial primitive states `(v, F, σ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialSpec {
    Riemann {
        x_split: f64,
        left: [f64; 3],
        right: [f64; 3],
    },
    /// `inside` on `[support.0, support.1)`, `outside` elsewhere.
    Box {
        support: (f64, f64),
        inside: [f64; 3],
        outside: [f64; 3],
    },
    /// `base + amplitude·exp(-((X - center)/width)²)`.
    Pulse {
        center: f64,
        width: f64,
        base: [f64; 3],
        amplitude: [f64; 3],
    },
    /// `v = rate·X`, uniform F and σ.
    UniformShear { rate: f64, f: f64, sigma: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub name: String,
    pub samples: usize,
    pub svg: bool,
    /// Energy sampling interval for pde runs; 0 records every step.
    pub interval: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    M,
    K,
    Tau0,
    Vx0,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::M => "m",
            Axis::K => "k",
            Axis::Tau0 => "tau0",
            Axis::Vx0 => "vx0",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: Axis,
    pub values: Vec<f64>,
    /// Initial stress of the relaxation that defines the extinction time.
    pub relax_sigma0: f64,
}

/// A fully resolved scenario: every default has been filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub kind: Kind,
    pub material: MaterialSpec,
    pub protocol: ProtocolSpec,
    pub solver: SolverSpec,
    pub grid: Option<GridSpec>,
    pub initial: Option<InitialSpec>,
    pub output: OutputSpec,
    pub sweep: Option<SweepSpec>,
}

pub const DEFAULT_SAMPLES: usize = 501;

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let doc = Document::load(path)?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
        Self::from_document(&doc, stem)
    }

    pub fn parse(origin: &str, text: &str, default_name: &str) -> Result<Self, CliError> {
        Self::from_document(&Document::parse(origin, text)?, default_name)
    }

    pub fn from_document(doc: &Document, default_name: &str) -> Result<Self, CliError> {
        let (kind, _) = doc
            .choice("scenario", "kind", &["case1", "case2", "pde", "sweep"])?
            .ok_or_else(|| {
                doc.error(
                    doc.section_line("scenario"),
                    "missing required key `kind` in [scenario]",
                )
            })?;
        let kind = match kind {
            "case1" => Kind::Case1,
            "case2" => Kind::Case2,
            "pde" => Kind::Pde,
            _ => Kind::Sweep,
        };

        let sweep = if kind == Kind::Sweep {
            Some(read_sweep(doc)?)
        } else {
            None
        };
        let material = read_material(doc, kind, sweep.as_ref())?;
        let protocol = read_protocol(doc, kind)?;
        let solver = read_solver(doc, kind)?;
        let (grid, initial) = if kind == Kind::Pde {
            let grid = read_grid(doc)?;
            let initial = read_initial(doc, &grid)?;
            (Some(grid), Some(initial))
        } else {
            (None, None)
        };
        let output = read_output(doc, kind, default_name)?;
        doc.reject_unused(kind)?;

        let cfg = Self {
            kind,
            material,
            protocol,
            solver,
            grid,
            initial,
            output,
            sweep,
        };
        cfg.validate_models(doc)?;
        Ok(cfg)
    }

    /// Builds every material the run will use so model invariants fail at load.
    fn validate_models(&self, doc: &Document) -> Result<(), CliError> {
        let line = doc.section_line("material");
        let ms: Vec<f64> = match &self.sweep {
            Some(SweepSpec {
                axis: Axis::M, values, ..
            }) => values.clone(),
            _ => self.material.m.clone(),
        };
        for &m in &ms {
            crate::scenario::build_material(&self.material, m, self.material.k.resolve(m))
                .map_err(|e| doc.error(line, format!("invalid material: {e}")))?;
        }
        Ok(())
    }

    /// The scenario in the input grammar, defaults included; reads back to
    /// an identical configuration.
    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        let f = |x: f64| fmt_f64(x);
        let list = |xs: &[f64]| xs.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(", ");
        let triple = |t: &[f64; 3]| list(t);

        let _ = writeln!(out, "[scenario]\nkind = {}\n", self.kind);

        let m = &self.material;
        out.push_str("[material]\n");
        let _ = writeln!(out, "rho_star = {}", f(m.rho_star));
        match m.elastic {
            ElasticSpec::Linear { modulus } => {
                let _ = writeln!(out, "elastic = linear\nmodulus = {}", f(modulus));
            }
            ElasticSpec::PowerGas { p0, gamma } => {
                let _ = writeln!(out, "elastic = power_gas\np0 = {}\ngamma = {}", f(p0), f(gamma));
            }
        }
        match m.viscous {
            ViscousSpec::Quadratic { tau0 } => {
                let _ = writeln!(out, "viscous = quadratic\ntau0 = {}", f(tau0));
            }
            ViscousSpec::Quartic { tau0, beta } => {
                let _ = writeln!(out, "viscous = quartic\ntau0 = {}\nbeta = {}", f(tau0), f(beta));
            }
        }
        if !m.m.is_empty() {
            let _ = writeln!(out, "m = {}", list(&m.m));
        }
        match m.k {
            Consistency::Value(k) => {
                let _ = writeln!(out, "k = {}", f(k));
            }
            Consistency::Conventional => {
                out.push_str("k = conventional\n");
                for &mi in &m.m {
                    let _ = writeln!(
                        out,
                        "# k(m = {}) = 10*exp(-2m) = {}",
                        f(mi),
                        f(conventional_consistency(mi))
                    );
                }
            }
        }
        let _ = writeln!(out, "body_force = {}\n", f(m.body_force));

        let p = &self.protocol;
        out.push_str("[protocol]\n");
        match self.kind {
            Kind::Case1 => {
                let _ = writeln!(out, "sigma0 = {}\nt_end = {}", f(p.sigma0), f(p.t_end));
                out.push_str("# time is nondimensional: t_bar = t/tau0\n");
            }
            Kind::Case2 | Kind::Sweep => {
                let _ = writeln!(
                    out,
                    "sigma0 = {}\nvx0 = {}\nf0 = {}\nt_end = {}",
                    f(p.sigma0),
                    f(p.vx0),
                    f(p.f0),
                    f(p.t_end)
                );
                if let Some(t1) = p.tau1 {
                    let _ = writeln!(out, "tau1 = {}", f(t1));
                }
            }
            Kind::Pde => {
                let _ = writeln!(out, "t_end = {}", f(p.t_end));
            }
        }
        out.push('\n');

        if self.kind != Kind::Case1 {
            let s = &self.solver;
            out.push_str("[solver]\n");
            if self.kind == Kind::Pde {
                let mode = match s.mode {
                    StepMode::Explicit => "explicit",
                    StepMode::Imex => "imex",
                };
                let _ = writeln!(out, "cfl = {}\nmode = {mode}", f(s.cfl));
            } else {
                let _ = writeln!(
                    out,
                    "rtol = {}\natol = {}\nmax_steps = {}",
                    f(s.rtol),
                    f(s.atol),
                    s.max_steps
                );
                match s.implicit_switch {
                    Some(x) => {
                        let _ = writeln!(out, "implicit_switch = {}", f(x));
                    }
                    None => out.push_str("implicit_switch = off\n"),
                }
            }
            out.push('\n');
        }

        if let Some(g) = &self.grid {
            out.push_str("[grid]\n");
            let _ = writeln!(
                out,
                "x_min = {}\nx_max = {}\ncells = {}",
                f(g.x_min),
                f(g.x_max),
                g.cells
            );
            match g.bc {
                BcSpec::Periodic => out.push_str("bc = periodic\n"),
                BcSpec::Transmissive => out.push_str("bc = transmissive\n"),
                BcSpec::Piston { v_left, v_right } => {
                    let _ = writeln!(out, "bc = piston\nv_left = {}\nv_right = {}", f(v_left), f(v_right));
                }
            }
            out.push('\n');
        }

        if let Some(init) = &self.initial {
            out.push_str("[initial]\n");
            match init {
                InitialSpec::Riemann { x_split, left, right } => {
                    let _ = writeln!(
                        out,
                        "kind = riemann\nx_split = {}\nleft = {}\nright = {}",
                        f(*x_split),
                        triple(left),
                        triple(right)
                    );
                }
                InitialSpec::Box {
                    support,
                    inside,
                    outside,
                } => {
                    let _ = writeln!(
                        out,
                        "kind = box\nsupport = {}, {}\ninside = {}\noutside = {}",
                        f(support.0),
                        f(support.1),
                        triple(inside),
                        triple(outside)
                    );
                }
                InitialSpec::Pulse {
                    center,
                    width,
                    base,
                    amplitude,
                } => {
                    let _ = writeln!(
                        out,
                        "kind = pulse\ncenter = {}\nwidth = {}\nbase = {}\namplitude = {}",
                        f(*center),
                        f(*width),
                        triple(base),
                        triple(amplitude)
                    );
                }
                InitialSpec::UniformShear { rate, f: f0, sigma } => {
                    let _ = writeln!(
                        out,
                        "kind = uniform_shear\nrate = {}\nf = {}\nsigma = {}",
                        f(*rate),
                        f(*f0),
                        f(*sigma)
                    );
                }
            }
            out.push('\n');
        }

        if let Some(sw) = &self.sweep {
            out.push_str("[sweep]\n");
            let _ = writeln!(
                out,
                "axis = {}\nvalues = {}\nrelax_sigma0 = {}\n",
                sw.axis.name(),
                list(&sw.values),
                f(sw.relax_sigma0)
            );
        }

        let o = &self.output;
        out.push_str("[output]\n");
        let _ = writeln!(out, "name = {}", o.name);
        if matches!(self.kind, Kind::Case1 | Kind::Case2) {
            let _ = writeln!(out, "samples = {}", o.samples);
        }
        if self.kind == Kind::Pde {
            let _ = writeln!(out, "interval = {}", f(o.interval));
        }
        if self.kind != Kind::Sweep {
            let _ = writeln!(out, "svg = {}", o.svg);
        }
        out
    }
}

fn read_material(doc: &Document, kind: Kind, sweep: Option<&SweepSpec>) -> Result<MaterialSpec, CliError> {
    let s = "material";
    let rho_star = doc.float_checked(s, "rho_star", Check::Positive)?.unwrap_or(1.0);
    let elastic = match doc.choice(s, "elastic", &["linear", "power_gas"])? {
        None | Some(("linear", _)) => ElasticSpec::Linear {
            modulus: doc.float_checked(s, "modulus", Check::Positive)?.unwrap_or(1.0),
        },
        Some(_) => ElasticSpec::PowerGas {
            p0: doc.float_checked(s, "p0", Check::Positive)?.unwrap_or(1.0),
            gamma: doc.float_checked(s, "gamma", Check::Positive)?.unwrap_or(1.4),
        },
    };
    // case1 is written in t/τ0, where τ0 drops out
    let default_tau0 = if kind == Kind::Case1 { Some(1.0) } else { None };
    let tau0 = doc.float_checked(s, "tau0", Check::Positive)?.or(default_tau0);
    let tau0 = match sweep {
        Some(sw) if sw.axis == Axis::Tau0 => tau0.unwrap_or(sw.values[0]),
        _ => doc.required(s, "tau0", tau0)?,
    };
    let viscous = match doc.choice(s, "viscous", &["quadratic", "quartic"])? {
        None | Some(("quadratic", _)) => ViscousSpec::Quadratic { tau0 },
        Some(_) => ViscousSpec::Quartic {
            tau0,
            beta: doc.float_checked(s, "beta", Check::NonNegative)?.unwrap_or(0.0),
        },
    };

    let m = doc.floats(s, "m", Check::Positive)?;
    let m = match (m, sweep) {
        (Some(m), _) => m,
        (None, Some(sw)) if sw.axis == Axis::M => Vec::new(),
        (None, _) => return Err(doc.error(doc.section_line(s), "missing required key `m` in [material]")),
    };
    if kind != Kind::Case1 && m.len() > 1 {
        let line = doc.entry(s, "m").map_or(0, |e| e.line);
        return Err(doc.error(
            line,
            format!("only case1 scenarios accept several flow indices, got {}", m.len()),
        ));
    }
    let k = match doc.text(s, "k") {
        Some(("conventional", _)) => Consistency::Conventional,
        Some(_) => Consistency::Value(doc.float_checked(s, "k", Check::Positive)?.unwrap_or(1.0)),
        None => match sweep {
            Some(sw) if sw.axis == Axis::K => Consistency::Value(sw.values[0]),
            _ => {
                return Err(doc.error(
                    doc.section_line(s),
                    "missing required key `k` in [material] (a number or `conventional`)",
                ))
            }
        },
    };
    let body_force = doc.float(s, "body_force")?.unwrap_or(0.0);
    Ok(MaterialSpec {
        rho_star,
        elastic,
        viscous,
        m,
        k,
        body_force,
    })
}

fn read_protocol(doc: &Document, kind: Kind) -> Result<ProtocolSpec, CliError> {
    let s = "protocol";
    let t_end = doc.float_checked(s, "t_end", Check::NonNegative)?;
    let t_end = doc.required(s, "t_end", t_end)?;
    let mut p = ProtocolSpec {
        sigma0: 0.0,
        vx0: 0.0,
        f0: 1.0,
        t_end,
        tau1: None,
    };
    match kind {
        Kind::Case1 => p.sigma0 = doc.float(s, "sigma0")?.unwrap_or(1.0),
        Kind::Case2 | Kind::Sweep => {
            p.sigma0 = doc.float(s, "sigma0")?.unwrap_or(0.0);
            p.vx0 = doc.float(s, "vx0")?.unwrap_or(0.0);
            p.f0 = doc.float_checked(s, "f0", Check::Positive)?.unwrap_or(1.0);
            if kind == Kind::Case2 {
                p.tau1 = doc.float_checked(s, "tau1", Check::Positive)?;
            }
        }
        Kind::Pde => {}
    }
    Ok(p)
}

fn read_solver(doc: &Document, kind: Kind) -> Result<SolverSpec, CliError> {
    let s = "solver";
    let mut spec = SolverSpec {
        rtol: 1e-10,
        atol: 1e-12,
        max_steps: 1_000_000,
        implicit_switch: Some(1e-7),
        cfl: 0.9,
        mode: StepMode::Imex,
    };
    match kind {
        Kind::Case1 => {}
        Kind::Case2 | Kind::Sweep => {
            spec.rtol = doc.float_checked(s, "rtol", Check::Positive)?.unwrap_or(spec.rtol);
            spec.atol = doc.float_checked(s, "atol", Check::Positive)?.unwrap_or(spec.atol);
            spec.max_steps = doc.count(s, "max_steps", 1)?.unwrap_or(spec.max_steps);
            spec.implicit_switch = match doc.text(s, "implicit_switch") {
                Some(("off", _)) => None,
                Some(_) => doc.float_checked(s, "implicit_switch", Check::Positive)?,
                None => spec.implicit_switch,
            };
        }
        Kind::Pde => {
            if let Some(cfl) = doc.float_checked(s, "cfl", Check::Positive)? {
                if cfl > 1.0 {
                    let line = doc.entry(s, "cfl").map_or(0, |e| e.line);
                    return Err(doc.error(line, format!("`cfl` must lie in (0, 1], got {}", fmt_f64(cfl))));
                }
                spec.cfl = cfl;
            }
            spec.mode = match doc.choice(s, "mode", &["imex", "explicit"])? {
                Some(("explicit", _)) => StepMode::Explicit,
                _ => StepMode::Imex,
            };
        }
    }
    Ok(spec)
}

fn read_grid(doc: &Document) -> Result<GridSpec, CliError> {
    let s = "grid";
    let x_min = doc.float(s, "x_min")?.unwrap_or(0.0);
    let x_max = doc.float(s, "x_max")?.unwrap_or(1.0);
    if x_max <= x_min {
        let line = doc.entry(s, "x_max").map_or(doc.section_line(s), |e| e.line);
        return Err(doc.error(line, "`x_max` must exceed `x_min`"));
    }
    let cells = doc.count(s, "cells", 2)?;
    let cells = doc.required(s, "cells", cells)?;
    let bc = match doc.choice(s, "bc", &["periodic", "transmissive", "piston"])? {
        None | Some(("periodic", _)) => BcSpec::Periodic,
        Some(("transmissive", _)) => BcSpec::Transmissive,
        Some(_) => BcSpec::Piston {
            v_left: doc.float(s, "v_left")?.unwrap_or(0.0),
            v_right: doc.float(s, "v_right")?.unwrap_or(0.0),
        },
    };
    Ok(GridSpec {
        x_min,
        x_max,
        cells,
        bc,
    })
}

fn read_initial(doc: &Document, grid: &GridSpec) -> Result<InitialSpec, CliError> {
    let s = "initial";
    let rest = [0.0, 1.0, 0.0];
    let (kind, _) = doc
        .choice(s, "kind", &["riemann", "box", "pulse", "uniform_shear"])?
        .ok_or_else(|| doc.error(doc.section_line(s), "missing required key `kind` in [initial]"))?;
    let init = match kind {
        "riemann" => InitialSpec::Riemann {
            x_split: doc.float(s, "x_split")?.unwrap_or(0.5 * (grid.x_min + grid.x_max)),
            left: doc.triple(s, "left")?.unwrap_or(rest),
            right: doc.triple(s, "right")?.unwrap_or(rest),
        },
        "box" => {
            let support = doc.floats(s, "support", Check::Finite)?;
            let line = doc.entry(s, "support").map_or(doc.section_line(s), |e| e.line);
            let support = match support.as_deref() {
                Some([a, b]) if a < b => (*a, *b),
                Some(_) => return Err(doc.error(line, "`support` needs two increasing values")),
                None => return Err(doc.error(line, "missing required key `support` in [initial]")),
            };
            InitialSpec::Box {
                support,
                inside: doc.triple(s, "inside")?.unwrap_or(rest),
                outside: doc.triple(s, "outside")?.unwrap_or(rest),
            }
        }
        "pulse" => InitialSpec::Pulse {
            center: doc.float(s, "center")?.unwrap_or(0.5 * (grid.x_min + grid.x_max)),
            width: doc
                .float_checked(s, "width", Check::Positive)?
                .unwrap_or(0.1 * (grid.x_max - grid.x_min)),
            base: doc.triple(s, "base")?.unwrap_or(rest),
            amplitude: doc.triple(s, "amplitude")?.unwrap_or([0.0; 3]),
        },
        _ => InitialSpec::UniformShear {
            rate: doc.float(s, "rate")?.unwrap_or(0.0),
            f: doc.float_checked(s, "f", Check::Positive)?.unwrap_or(1.0),
            sigma: doc.float(s, "sigma")?.unwrap_or(0.0),
        },
    };
    Ok(init)
}

fn read_output(doc: &Document, kind: Kind, default_name: &str) -> Result<OutputSpec, CliError> {
    let s = "output";
    let name = match doc.text(s, "name") {
        Some((n, line)) => {
            if !n
                .bytes()
                .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-' || b == b'.')
                || n.starts_with('.')
            {
                return Err(doc.error(
                    line,
                    format!("`name` may only use letters, digits, `_`, `-` and `.`, got `{n}`"),
                ));
            }
            n.to_string()
        }
        None => default_name.to_string(),
    };
    let mut out = OutputSpec {
        name,
        samples: DEFAULT_SAMPLES,
        svg: true,
        interval: 0.0,
    };
    if matches!(kind, Kind::Case1 | Kind::Case2) {
        out.samples = doc.count(s, "samples", 2)?.unwrap_or(out.samples);
    }
    if kind == Kind::Pde {
        out.interval = doc.float_checked(s, "interval", Check::NonNegative)?.unwrap_or(0.0);
    }
    if kind != Kind::Sweep {
        out.svg = doc.flag(s, "svg")?.unwrap_or(true);
    } else {
        out.svg = false;
    }
    Ok(out)
}

fn read_sweep(doc: &Document) -> Result<SweepSpec, CliError> {
    let s = "sweep";
    let (axis, _) = doc
        .choice(s, "axis", &["m", "k", "tau0", "vx0"])?
        .ok_or_else(|| doc.error(doc.section_line(s), "missing required key `axis` in [sweep]"))?;
    let axis = match axis {
        "m" => Axis::M,
        "k" => Axis::K,
        "tau0" => Axis::Tau0,
        _ => Axis::Vx0,
    };
    let check = if axis == Axis::Vx0 {
        Check::Finite
    } else {
        Check::Positive
    };
    let values = doc.floats(s, "values", check)?;
    let values = doc.required(s, "values", values)?;
    let relax_sigma0 = doc.float_checked(s, "relax_sigma0", Check::Positive)?.unwrap_or(1.0);
    Ok(SweepSpec {
        axis,
        values,
        relax_sigma0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const STEADY_SHEAR: &str = "\
[scenario]
kind = case2
[material]
m = 0.7
k = conventional
tau0 = 0.1
[protocol]
vx0 = 0.1
t_end = 40
tau1 = 0.1
";

    fn parse(text: &str) -> Result<ScenarioConfig, CliError> {
        ScenarioConfig::parse("test.cfg", text, "test")
    }

    fn line_of(err: CliError) -> usize {
        match err {
            CliError::Config { line, .. } => line,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn resolves_defaults() {
        let cfg = parse(STEADY_SHEAR).unwrap();
        assert_eq!(cfg.kind, Kind::Case2);
        assert_eq!(cfg.material.rho_star, 1.0);
        assert_eq!(cfg.material.k, Consistency::Conventional);
        assert_eq!(cfg.protocol.f0, 1.0);
        assert_eq!(cfg.protocol.tau1, Some(0.1));
        assert_eq!(cfg.output.name, "test");
        assert_eq!(cfg.output.samples, DEFAULT_SAMPLES);
    }

    #[test]
    fn config_text_round_trips() {
        let cfg = parse(STEADY_SHEAR).unwrap();
        let text = cfg.to_config_text();
        let again = parse(&text).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(text, again.to_config_text());
    }

    #[test]
    fn unknown_key_reports_its_line() {
        let text = format!("{STEADY_SHEAR}bogus = 3\n");
        assert_eq!(line_of(parse(&text).unwrap_err()), 11);
    }

    #[test]
    fn key_for_another_kind_is_unknown() {
        let text = STEADY_SHEAR.replace("[protocol]", "[protocol]\ncells = 10");
        assert_eq!(line_of(parse(&text).unwrap_err()), 8);
    }

    #[test]
    fn grammar_errors() {
        assert_eq!(line_of(parse("kind = case1\n").unwrap_err()), 1);
        assert_eq!(line_of(parse("[scenario\nkind = case1\n").unwrap_err()), 1);
        assert_eq!(line_of(parse("[nope]\n").unwrap_err()), 1);
        assert_eq!(line_of(parse("[scenario]\nkind case1\n").unwrap_err()), 2);
        assert_eq!(
            line_of(parse("[scenario]\nkind = case1\nkind = case2\n").unwrap_err()),
            3
        );
        assert_eq!(line_of(parse("[scenario]\nKind = case1\n").unwrap_err()), 2);
    }

    #[test]
    fn value_errors_point_at_the_value() {
        let bad_tau = STEADY_SHEAR.replace("tau0 = 0.1", "tau0 = -1");
        assert_eq!(line_of(parse(&bad_tau).unwrap_err()), 6);
        let bad_num = STEADY_SHEAR.replace("vx0 = 0.1", "vx0 = fast");
        assert_eq!(line_of(parse(&bad_num).unwrap_err()), 8);
        let inf = STEADY_SHEAR.replace("vx0 = 0.1", "vx0 = inf");
        assert_eq!(line_of(parse(&inf).unwrap_err()), 8);
    }

    #[test]
    fn missing_required_key_points_at_section() {
        let text = STEADY_SHEAR.replace("t_end = 40\n", "");
        assert_eq!(line_of(parse(&text).unwrap_err()), 7);
    }

    #[test]
    fn several_flow_indices_only_for_case1() {
        let text = STEADY_SHEAR.replace("m = 0.7", "m = 0.7, 1");
        assert_eq!(line_of(parse(&text).unwrap_err()), 4);
        let case1 = "[scenario]\nkind = case1\n[material]\nm = 0.7, 1, 2\nk = conventional\n[protocol]\nt_end = 5\n";
        let cfg = parse(case1).unwrap();
        assert_eq!(cfg.material.m, vec![0.7, 1.0, 2.0]);
        assert_eq!(cfg.protocol.sigma0, 1.0);
        assert_eq!(parse(&cfg.to_config_text()).unwrap(), cfg);
    }

    #[test]
    fn comments_and_blank_lines() {
        let text = format!(
            "# header comment\n\n{}",
            STEADY_SHEAR.replace("m = 0.7", "m = 0.7   # flow index")
        );
        assert_eq!(parse(&text).unwrap().material.m, vec![0.7]);
    }

    #[test]
    fn pde_round_trip() {
        let text = "\
[scenario]
kind = pde
[material]
m = 0.7
k = 0.5
tau0 = 0.1
elastic = power_gas
gamma = 2
viscous = quartic
beta = 0.3
[protocol]
t_end = 0.1
[grid]
cells = 50
bc = piston
v_right = 0.1
[initial]
kind = box
support = 0.4, 0.6
inside = 0, 1.2, 0.5
[output]
interval = 0.01
";
        let cfg = parse(text).unwrap();
        assert_eq!(
            cfg.grid.unwrap().bc,
            BcSpec::Piston {
                v_left: 0.0,
                v_right: 0.1
            }
        );
        assert_eq!(parse(&cfg.to_config_text()).unwrap(), cfg);
    }

    #[test]
    fn invalid_cfl_and_grid() {
        let base = "[scenario]\nkind = pde\n[material]\nm = 1\nk = 1\ntau0 = 1\n[protocol]\nt_end = 1\n[grid]\ncells = 10\n[initial]\nkind = pulse\n[solver]\ncfl = 1.5\n";
        assert_eq!(line_of(parse(base).unwrap_err()), 14);
        let one_cell = base
            .replace("cells = 10", "cells = 1")
            .replace("cfl = 1.5", "cfl = 0.5");
        assert_eq!(line_of(parse(&one_cell).unwrap_err()), 10);
    }

    #[test]
    fn sweep_axis_supplies_missing_parameter() {
        let text = "[scenario]\nkind = sweep\n[material]\nk = conventional\ntau0 = 0.1\n[protocol]\nvx0 = 0.1\nt_end = 10\n[sweep]\naxis = m\nvalues = 0.7, 1, 2\n";
        let cfg = parse(text).unwrap();
        assert!(cfg.material.m.is_empty());
        assert_eq!(cfg.sweep.as_ref().unwrap().values, vec![0.7, 1.0, 2.0]);
        assert_eq!(parse(&cfg.to_config_text()).unwrap(), cfg);
    }
}
