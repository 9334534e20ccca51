//! Run configuration shared by every subcommand.
//!
//! A [`RunConfig`] is stored as a single `key=value` header, the same grammar
//! used by config files and by the first line of every output file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mrm_core::header::Header;
use mrm_core::transport::{MultiStepOptions, SinkhornOptions, Solver};
use mrm_core::{ModelParams, Point};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Transport,
    Geodesic,
    Kpz,
    Timechange,
    Scaling,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Transport => "transport",
            Command::Geodesic => "geodesic",
            Command::Kpz => "kpz",
            Command::Timechange => "timechange",
            Command::Scaling => "scaling",
        }
    }

    fn default_out(&self) -> &'static str {
        match self {
            Command::Simulate => "density.grid",
            Command::Transport => "chain.tmap",
            Command::Geodesic => "geodesic.csv",
            Command::Kpz => "kpz.csv",
            Command::Timechange => "timechange.csv",
            Command::Scaling => "scaling.csv",
        }
    }
}

impl FromStr for Command {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Ok(match s {
            "simulate" => Command::Simulate,
            "transport" => Command::Transport,
            "geodesic" => Command::Geodesic,
            "kpz" => Command::Kpz,
            "timechange" => Command::Timechange,
            "scaling" => Command::Scaling,
            _ => return Err(CliError::Config(format!("unknown subcommand `{s}`"))),
        })
    }
}

/// Number of transport steps: the smallest admissible one, or explicit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Steps {
    Auto,
    Exactly(usize),
}

impl fmt::Display for Steps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Steps::Auto => f.write_str("auto"),
            Steps::Exactly(n) => write!(f, "{n}"),
        }
    }
}

impl FromStr for Steps {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        if s == "auto" {
            return Ok(Steps::Auto);
        }
        match s.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Steps::Exactly(n)),
            _ => Err(CliError::Config(format!("steps must be `auto` or a positive integer, got `{s}`"))),
        }
    }
}

/// Set `E` fed to the dimension estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestSet {
    Segment,
    Square,
    Cantor,
    /// Geodesics of a transport chain (needs `--input`).
    Geodesic,
}

impl TestSet {
    pub fn as_str(&self) -> &'static str {
        match self {
            TestSet::Segment => "segment",
            TestSet::Square => "square",
            TestSet::Cantor => "cantor",
            TestSet::Geodesic => "geodesic",
        }
    }
}

impl FromStr for TestSet {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Ok(match s {
            "segment" => TestSet::Segment,
            "square" => TestSet::Square,
            "cantor" => TestSet::Cantor,
            "geodesic" => TestSet::Geodesic,
            _ => return Err(CliError::Config(format!("unknown set `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub kind: Solver,
    pub epsilon: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub halvings: u32,
    pub exact_threshold: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = MultiStepOptions::default();
        Self {
            kind: d.solver,
            epsilon: d.sinkhorn.epsilon,
            tol: d.sinkhorn.tol,
            max_iter: d.sinkhorn.max_iter,
            halvings: d.sinkhorn.halvings,
            exact_threshold: d.exact_threshold,
        }
    }
}

impl SolverConfig {
    pub fn options(&self) -> MultiStepOptions {
        MultiStepOptions {
            solver: self.kind,
            exact_threshold: self.exact_threshold,
            sinkhorn: SinkhornOptions {
                epsilon: self.epsilon,
                tol: self.tol,
                max_iter: self.max_iter,
                halvings: self.halvings,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub params: ModelParams,
    pub grid: usize,
    pub replicas: usize,
    pub solver: SolverConfig,
    pub steps: Steps,
    pub force: bool,
    pub out: PathBuf,
    pub input: Option<PathBuf>,
    pub from: Option<Point>,
    pub to: Option<Point>,
    /// Geodesic samples per polyline.
    pub samples: usize,
    pub set: TestSet,
    pub qs: Vec<f64>,
    /// Ball radii for `scaling`; chosen from the grid when absent.
    pub radii: Option<Vec<f64>>,
    /// Dyadic levels for `kpz`; chosen from the grid when absent.
    pub levels: Option<Vec<u32>>,
    /// Clock substeps per cell (1D time change).
    pub resolution: usize,
    /// Evaluation lattice side (2D time change) or geodesic pair count.
    pub points: usize,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            params: ModelParams {
                m: 2,
                gamma2: 1.0,
                t: 1.0,
                r: 1.0,
                seed: 0,
            },
            grid: 64,
            replicas: 1,
            solver: SolverConfig::default(),
            steps: Steps::Auto,
            force: false,
            out: PathBuf::from(command.default_out()),
            input: None,
            from: None,
            to: None,
            samples: 65,
            set: TestSet::Segment,
            qs: vec![0.5, 1.0, 2.0],
            radii: None,
            levels: None,
            resolution: 4,
            points: 8,
            threads: None,
        }
    }

    pub fn to_header(&self) -> Header {
        let mut h = Header::new();
        h.set("cmd", self.command.as_str());
        h.merge(&self.params.to_header());
        h.set("grid", self.grid)
            .set("replicas", self.replicas)
            .set("solver.kind", self.solver.kind.as_str())
            .set("solver.epsilon", self.solver.epsilon)
            .set("solver.tol", self.solver.tol)
            .set("solver.max_iter", self.solver.max_iter)
            .set("solver.halvings", self.solver.halvings)
            .set("solver.exact_threshold", self.solver.exact_threshold)
            .set("step_count", self.steps)
            .set("force", self.force)
            .set("out", self.out.display());
        if let Some(p) = &self.input {
            h.set("input", p.display());
        }
        if let Some(p) = &self.from {
            h.set("from", emit_point(p));
        }
        if let Some(p) = &self.to {
            h.set("to", emit_point(p));
        }
        h.set("samples", self.samples)
            .set("set", self.set.as_str())
            .set("qs", emit_list(&self.qs));
        if let Some(r) = &self.radii {
            h.set("radii", emit_list(r));
        }
        if let Some(l) = &self.levels {
            h.set("levels", emit_list(l));
        }
        h.set("resolution", self.resolution).set("points", self.points);
        if let Some(t) = self.threads {
            h.set("threads", t);
        }
        h
    }

    /// Reads the config keys of `h`; other keys are ignored and missing ones
    /// take their defaults. `cmd` is required.
    pub fn from_header(h: &Header) -> Result<Self, CliError> {
        let command: Command = h
            .get("cmd")
            .ok_or_else(|| CliError::Config("missing key `cmd`".into()))?
            .parse()?;
        let mut c = Self::new(command);
        let p = &mut c.params;
        read(h, "m", &mut p.m)?;
        read(h, "gamma2", &mut p.gamma2)?;
        read(h, "T", &mut p.t)?;
        read(h, "R", &mut p.r)?;
        read(h, "seed", &mut p.seed)?;
        read(h, "grid", &mut c.grid)?;
        read(h, "replicas", &mut c.replicas)?;
        let s = &mut c.solver;
        if let Some(v) = h.get("solver.kind") {
            s.kind = v.parse().map_err(|e| CliError::Config(format!("{e}")))?;
        }
        read(h, "solver.epsilon", &mut s.epsilon)?;
        read(h, "solver.tol", &mut s.tol)?;
        read(h, "solver.max_iter", &mut s.max_iter)?;
        read(h, "solver.halvings", &mut s.halvings)?;
        read(h, "solver.exact_threshold", &mut s.exact_threshold)?;
        if let Some(v) = h.get("step_count") {
            c.steps = v.parse()?;
        }
        read(h, "force", &mut c.force)?;
        if let Some(v) = h.get("out") {
            c.out = PathBuf::from(v);
        }
        c.input = h.get("input").map(PathBuf::from);
        c.from = h.get("from").map(parse_point).transpose()?;
        c.to = h.get("to").map(parse_point).transpose()?;
        read(h, "samples", &mut c.samples)?;
        if let Some(v) = h.get("set") {
            c.set = v.parse()?;
        }
        if let Some(v) = h.get("qs") {
            c.qs = parse_list(v)?;
        }
        c.radii = h.get("radii").map(parse_list).transpose()?;
        c.levels = h.get("levels").map(parse_list).transpose()?;
        read(h, "resolution", &mut c.resolution)?;
        read(h, "points", &mut c.points)?;
        c.threads = h.get("threads").map(|v| parse_value("threads", v)).transpose()?;
        Ok(c)
    }

    /// Config file contents: `key=value` tokens separated by whitespace or
    /// newlines, `#` starting a comment line.
    pub fn parse_file_text(text: &str) -> Result<Header, CliError> {
        let body: String = text
            .lines()
            .filter(|l| !l.trim_start().starts_with('#'))
            .collect::<Vec<_>>()
            .join("\n");
        Ok(Header::parse(&body)?)
    }

    pub fn read_file(path: &Path) -> Result<Header, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse_file_text(&text)
    }

    /// Checks everything that can be checked before any compute.
    pub fn validate(&self) -> Result<(), CliError> {
        self.params.validate()?;
        if self.grid < 2 {
            return Err(CliError::Config(format!("grid = {} is too small", self.grid)));
        }
        if self.replicas == 0 {
            return Err(CliError::Config("replicas must be positive".into()));
        }
        if self.qs.is_empty() {
            return Err(CliError::Config("qs is empty".into()));
        }
        for p in std::iter::once(&self.out).chain(&self.input) {
            if p.as_os_str().is_empty() || p.to_string_lossy().chars().any(char::is_whitespace) {
                return Err(CliError::Config(format!("path `{}` is empty or has whitespace", p.display())));
            }
        }
        if let Some(p) = &self.input {
            if !p.exists() {
                return Err(CliError::Config(format!("input {} does not exist", p.display())));
            }
        }
        if self.threads == Some(0) {
            return Err(CliError::Config("threads must be positive".into()));
        }
        Ok(())
    }
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T, CliError> {
    raw.parse()
        .map_err(|_| CliError::Config(format!("bad value `{raw}` for `{key}`")))
}

fn read<T: FromStr>(h: &Header, key: &str, slot: &mut T) -> Result<(), CliError> {
    if let Some(raw) = h.get(key) {
        *slot = parse_value(key, raw)?;
    }
    Ok(())
}

fn emit_list<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn parse_list<T: FromStr>(raw: &str) -> Result<Vec<T>, CliError> {
    raw.split(',').map(|s| parse_value("list", s)).collect()
}

fn emit_point(p: &Point) -> String {
    format!("{},{}", p[0], p[1])
}

/// `x` or `x,y`; a missing coordinate is 0.
pub fn parse_point(raw: &str) -> Result<Point, CliError> {
    let xs: Vec<f64> = parse_list(raw)?;
    match xs[..] {
        [x] => Ok([x, 0.0]),
        [x, y] => Ok([x, y]),
        _ => Err(CliError::Config(format!("point `{raw}` needs one or two coordinates"))),
    }
}
