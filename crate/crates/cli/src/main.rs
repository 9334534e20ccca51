use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mrm_core::header::Header;

use mrm_cli::config::{Command, RunConfig};
use mrm_cli::log::{self, Log};
use mrm_cli::{commands, CliError};

/// Log-normal multifractal random measures: simulation, multi-step
/// transport to Lebesgue measure, pullback geodesics, KPZ and time change.
#[derive(Parser)]
#[command(name = "mrm", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args)]
struct Common {
    /// File of `key=value` settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    gamma2: Option<f64>,
    /// Correlation length.
    #[arg(long = "T")]
    t: Option<f64>,
    /// Domain radius.
    #[arg(long = "R")]
    r: Option<f64>,
    /// Cells per axis.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SolverArgs {
    /// exact, sinkhorn or auto.
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    halvings: Option<u32>,
    #[arg(long)]
    exact_threshold: Option<usize>,
}

#[derive(Subcommand)]
enum Sub {
    /// Density grids, one file per replica.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Multi-step transport map written as a .tmap file.
    Transport {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        solver: SolverArgs,
        /// `auto` or a step count.
        #[arg(long)]
        steps: Option<String>,
        /// Allow fewer steps than the minimum.
        #[arg(long)]
        force: bool,
    },
    /// Geodesic between two support points of a .tmap chart.
    Geodesic {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
        /// `x` or `x,y`.
        #[arg(long, allow_hyphen_values = true)]
        from: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        to: Option<String>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Dimension of a test set under the measure, through the KPZ map.
    Kpz {
        #[command(flatten)]
        common: Common,
        /// segment, square, cantor or geodesic.
        #[arg(long)]
        set: Option<String>,
        /// Comma-separated dyadic levels.
        #[arg(long)]
        levels: Option<String>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        samples: Option<usize>,
        /// Geodesic pairs for `--set geodesic`.
        #[arg(long)]
        points: Option<usize>,
    },
    /// Brownian motion run on the measure clock (1D) or corner field (2D).
    Timechange {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        resolution: Option<usize>,
        /// Evaluation lattice side.
        #[arg(long)]
        points: Option<usize>,
    },
    /// Structure exponents from centered-ball moments.
    Scaling {
        #[command(flatten)]
        common: Common,
        /// Comma-separated moment orders.
        #[arg(long)]
        qs: Option<String>,
        /// Comma-separated ball radii.
        #[arg(long)]
        radii: Option<String>,
    },
}

fn put<T: ToString>(h: &mut Header, key: &str, value: &Option<T>) {
    if let Some(v) = value {
        h.set(key, v.to_string());
    }
}

fn put_path(h: &mut Header, key: &str, value: &Option<PathBuf>) {
    put(h, key, &value.as_ref().map(|p| p.display().to_string()));
}

impl Common {
    fn header(&self, command: Command) -> Result<Header, CliError> {
        let mut h = match &self.config {
            Some(path) => RunConfig::read_file(path)?,
            None => Header::new(),
        };
        h.set("cmd", command.as_str());
        put(&mut h, "m", &self.m);
        put(&mut h, "gamma2", &self.gamma2);
        put(&mut h, "T", &self.t);
        put(&mut h, "R", &self.r);
        put(&mut h, "grid", &self.grid);
        put(&mut h, "seed", &self.seed);
        put(&mut h, "replicas", &self.replicas);
        put_path(&mut h, "out", &self.out);
        put(&mut h, "threads", &self.threads);
        Ok(h)
    }
}

impl Sub {
    fn header(&self) -> Result<Header, CliError> {
        let h = match self {
            Sub::Simulate { common } => common.header(Command::Simulate)?,
            Sub::Transport { common, solver, steps, force } => {
                let mut h = common.header(Command::Transport)?;
                put(&mut h, "solver.kind", &solver.solver);
                put(&mut h, "solver.epsilon", &solver.epsilon);
                put(&mut h, "solver.tol", &solver.tol);
                put(&mut h, "solver.max_iter", &solver.max_iter);
                put(&mut h, "solver.halvings", &solver.halvings);
                put(&mut h, "solver.exact_threshold", &solver.exact_threshold);
                put(&mut h, "step_count", steps);
                if *force {
                    h.set("force", true);
                }
                h
            }
            Sub::Geodesic { common, input, from, to, samples } => {
                let mut h = common.header(Command::Geodesic)?;
                put_path(&mut h, "input", input);
                put(&mut h, "from", from);
                put(&mut h, "to", to);
                put(&mut h, "samples", samples);
                h
            }
            Sub::Kpz { common, set, levels, input, samples, points } => {
                let mut h = common.header(Command::Kpz)?;
                put(&mut h, "set", set);
                put(&mut h, "levels", levels);
                put_path(&mut h, "input", input);
                put(&mut h, "samples", samples);
                put(&mut h, "points", points);
                h
            }
            Sub::Timechange { common, input, resolution, points } => {
                let mut h = common.header(Command::Timechange)?;
                put_path(&mut h, "input", input);
                put(&mut h, "resolution", resolution);
                put(&mut h, "points", points);
                h
            }
            Sub::Scaling { common, qs, radii } => {
                let mut h = common.header(Command::Scaling)?;
                put(&mut h, "qs", qs);
                put(&mut h, "radii", radii);
                h
            }
        };
        Ok(h)
    }
}

fn execute(cli: Cli, log: &mut Log) -> Result<(), CliError> {
    let cfg = RunConfig::from_header(&cli.command.header()?)?;
    cfg.validate()?;
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?
            .install(|| commands::run(&cfg, log)),
        None => commands::run(&cfg, log),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut log = Log::default();
    match execute(cli, &mut log) {
        Err(e) => {
            log::error(&e.to_string());
            ExitCode::from(2)
        }
        Ok(()) if log.failures > 0 => ExitCode::from(1),
        Ok(()) => ExitCode::SUCCESS,
    }
}
