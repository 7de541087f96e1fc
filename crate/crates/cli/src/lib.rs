//! Experiment runner behind the `greenpot` binary.
//!
//! Every subcommand reads an optional `key=value` config file with
//! `[section]` headers. Command-line flags map onto the same keys and win
//! over the file. Results are written as CSV and plain-text field files into
//! the output directory, together with a `<subcommand>.schema.csv` file that
//! documents every CSV column.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub mod commands;
pub mod schema;
pub mod settings;

pub use settings::Settings;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] greenpot::Error),
    #[error("{0} report row(s) failed")]
    Validation(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use greenpot::Error as E;
        match self {
            CliError::Validation(_) => 2,
            CliError::Core(E::NonConvergence { .. } | E::LinearAlgebra(_)) => 3,
            _ => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "greenpot",
    version,
    about = "Discrete p-harmonic Green function experiments"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Config file with `key=value` lines and `[section]` headers.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (`output.dir`).
    #[arg(long, global = true)]
    pub out: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Grid dimension (`space.dim`).
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    /// Grid side in vertices (`space.side`).
    #[arg(long, global = true)]
    pub side: Option<usize>,
    /// Grid spacing (`space.spacing`).
    #[arg(long, global = true)]
    pub spacing: Option<f64>,
    /// Graph file used instead of a grid (`space.graph`).
    #[arg(long, global = true)]
    pub graph: Option<String>,
    /// `chart` or `shortest_path` (`space.metric`).
    #[arg(long, global = true)]
    pub metric: Option<String>,
    /// Exponent (`solver.p`).
    #[arg(long, global = true)]
    pub p: Option<f64>,
    /// `chart` or `edge` (`solver.mode`).
    #[arg(long, global = true)]
    pub mode: Option<String>,
    #[arg(long, global = true)]
    pub energy_tol: Option<f64>,
    #[arg(long, global = true)]
    pub grad_tol: Option<f64>,
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,
    /// Iteration log CSV path (`solver.log`).
    #[arg(long, global = true)]
    pub solver_log: Option<String>,
    /// Sets any config key, e.g. `--set green.levels=4`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a Dirichlet problem and report energies and residuals.
    Solve {
        /// Field file with boundary values; its domain is the complement of Ω.
        #[arg(long)]
        boundary: Option<String>,
        #[arg(long)]
        center: Option<String>,
        #[arg(long)]
        harnack_radius: Option<f64>,
    },
    /// Condenser capacities, ring sweeps, Loewner profiles and parabolicity.
    Capacity {
        /// `ring`, `sweep`, `loewner` or `parabolicity`.
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        center: Option<String>,
        #[arg(long)]
        r: Option<String>,
        #[arg(long)]
        big_r: Option<String>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
    },
    /// Green function of a bounded domain.
    Green {
        /// `center` or a vertex id.
        #[arg(long)]
        pole: Option<String>,
        #[arg(long)]
        levels: Option<usize>,
        #[arg(long)]
        scale: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        boundary: Option<String>,
    },
    /// Global Green function on expanding grids.
    GlobalGreen {
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        stages: Option<usize>,
        #[arg(long)]
        max_vertices: Option<usize>,
    },
    /// Randomized principle checks.
    Verify {
        #[arg(long)]
        suite: Option<String>,
        #[arg(long)]
        instances: Option<usize>,
    },
    /// Oscillation profile of a field around a center.
    Profile {
        #[arg(long)]
        field: Option<String>,
        #[arg(long)]
        center: Option<String>,
        #[arg(long)]
        radii: Option<String>,
    },
    /// Doubling, Ahlfors and Poincaré estimates; also exports the graph.
    Regularity {
        #[arg(long)]
        center: Option<String>,
        #[arg(long)]
        radii: Option<String>,
    },
    /// Runs the subcommand named by the `operation` key of a config file.
    Run { config_file: PathBuf },
}

fn put<T: ToString>(o: &mut Vec<(String, String)>, key: &str, v: &Option<T>) {
    if let Some(v) = v {
        o.push((key.to_string(), v.to_string()));
    }
}

fn overrides(c: &Common, cmd: &Command) -> Result<Vec<(String, String)>, CliError> {
    let mut o = Vec::new();
    put(&mut o, "output.dir", &c.out);
    put(&mut o, "seed", &c.seed);
    put(&mut o, "space.dim", &c.dim);
    put(&mut o, "space.side", &c.side);
    put(&mut o, "space.spacing", &c.spacing);
    put(&mut o, "space.graph", &c.graph);
    put(&mut o, "space.metric", &c.metric);
    put(&mut o, "solver.p", &c.p);
    put(&mut o, "solver.mode", &c.mode);
    put(&mut o, "solver.energy_tol", &c.energy_tol);
    put(&mut o, "solver.grad_tol", &c.grad_tol);
    put(&mut o, "solver.max_iter", &c.max_iter);
    put(&mut o, "solver.log", &c.solver_log);
    match cmd {
        Command::Solve {
            boundary,
            center,
            harnack_radius,
        } => {
            put(&mut o, "solve.boundary", boundary);
            put(&mut o, "solve.center", center);
            put(&mut o, "solve.harnack_radius", harnack_radius);
        }
        Command::Capacity {
            task,
            center,
            r,
            big_r,
            alpha,
            beta,
            q,
        } => {
            put(&mut o, "capacity.task", task);
            put(&mut o, "capacity.center", center);
            put(&mut o, "capacity.r", r);
            put(&mut o, "capacity.big_r", big_r);
            put(&mut o, "capacity.alpha", alpha);
            put(&mut o, "capacity.beta", beta);
            put(&mut o, "capacity.q", q);
        }
        Command::Green {
            pole,
            levels,
            scale,
            q,
            boundary,
        } => {
            put(&mut o, "green.pole", pole);
            put(&mut o, "green.levels", levels);
            put(&mut o, "green.scale", scale);
            put(&mut o, "green.q", q);
            put(&mut o, "green.boundary", boundary);
        }
        Command::GlobalGreen {
            q,
            stages,
            max_vertices,
        } => {
            put(&mut o, "global.q", q);
            put(&mut o, "global.stages", stages);
            put(&mut o, "global.max_vertices", max_vertices);
        }
        Command::Verify { suite, instances } => {
            put(&mut o, "verify.suite", suite);
            put(&mut o, "verify.instances", instances);
        }
        Command::Profile { field, center, radii } => {
            put(&mut o, "profile.field", field);
            put(&mut o, "profile.center", center);
            put(&mut o, "profile.radii", radii);
        }
        Command::Regularity { center, radii } => {
            put(&mut o, "regularity.center", center);
            put(&mut o, "regularity.radii", radii);
        }
        Command::Run { .. } => {}
    }
    for kv in &c.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("`--set {kv}` is not KEY=VALUE")))?;
        o.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(o)
}

fn subcommand_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Solve { .. } => "solve",
        Command::Capacity { .. } => "capacity",
        Command::Green { .. } => "green",
        Command::GlobalGreen { .. } => "global-green",
        Command::Verify { .. } => "verify",
        Command::Profile { .. } => "profile",
        Command::Regularity { .. } => "regularity",
        Command::Run { .. } => "run",
    }
}

/// Caps rayon at `GREENPOT_THREADS` and keeps dense kernels sequential so
/// results do not depend on scheduling.
fn init_threads() -> Result<(), CliError> {
    faer::set_global_parallelism(faer::Par::Seq);
    if let Ok(v) = std::env::var("GREENPOT_THREADS") {
        let n: usize = v.parse().ok().filter(|n| *n > 0).ok_or_else(|| {
            CliError::Config(format!("GREENPOT_THREADS must be a positive integer, got `{v}`"))
        })?;
        // A second initialization in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Parses arguments, runs the subcommand and returns the process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn std::io::Write, err: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let w = match Cli::try_parse_from(args) {
        Ok(w) => w,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return 4;
            }
            let _ = write!(out, "{}", e.render());
            return 0;
        }
    };
    match execute(&w.common, &w.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn execute(common: &Common, cmd: &Command, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    init_threads()?;
    let (name, settings) = match cmd {
        Command::Run { config_file } => {
            let s = Settings::load(Some(config_file), &overrides(common, cmd)?)?;
            let op = s
                .raw("operation")
                .ok_or_else(|| CliError::Config("config has no `operation` key".into()))?
                .to_string();
            let name = schema::SUBCOMMANDS
                .iter()
                .find(|n| **n == op && **n != "run")
                .ok_or_else(|| CliError::Config(format!("unknown operation `{op}`")))?;
            (*name, s)
        }
        _ => (
            subcommand_name(cmd),
            Settings::load(common.config.as_deref(), &overrides(common, cmd)?)?,
        ),
    };
    commands::dispatch(name, &settings, out)
}

impl Cli {
    pub fn command_names() -> Vec<String> {
        use clap::CommandFactory;
        Cli::command()
            .get_subcommands()
            .map(|c| c.get_name().to_string())
            .collect()
    }
}
