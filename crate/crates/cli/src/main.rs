use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use hexsim::batch::run_batch;
use hexsim::config::ConfigError;
use hexsim::log::SimLog;
use hexsim::plot::{attitude_svg, trajectory_svg};
use hexsim::sim::{
    run_scenario, write_outputs, LoadError, RunMeta, RunOutput, RunStatus, ScenarioConfig, SimError,
};

const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(name = "hexsim", version, about = "Tilting-frame hexacopter simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Print only errors.
    #[arg(long, short, global = true, conflicts_with = "verbose")]
    quiet: bool,
    /// Print warnings and per-bound results.
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Args)]
struct Overrides {
    /// Override a scenario field, e.g. `controller.gains.pos_x.kp=1.0`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Log every n-th physics tick.
    #[arg(long)]
    decimation: Option<usize>,
}

impl Overrides {
    fn list(&self) -> Vec<String> {
        let mut v = self.set.clone();
        if let Some(n) = self.decimation {
            v.push(format!("decimation={n}"));
        }
        v
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write log.csv, metrics.json and meta.json.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, env = "HEXSIM_OUT", default_value = "hexsim-out")]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run several scenarios in parallel, one output directory each, plus summary.json.
    Suite {
        #[arg(long, required = true, num_args = 1..)]
        scenario: Vec<PathBuf>,
        #[arg(long, env = "HEXSIM_OUT", default_value = "hexsim-out")]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Check a scenario without running it.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Render trajectory.svg and attitude.svg from a log.
    Plot {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, env = "HEXSIM_OUT", default_value = "hexsim-out")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, PartialOrd)]
enum Verbosity {
    Quiet,
    Normal,
    Verbose,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<LoadError> for Failure {
    fn from(e: LoadError) -> Self {
        match e {
            LoadError::Io(io) => Failure::new(EXIT_IO, io.to_string()),
            LoadError::Config(c) => config_failure(c),
        }
    }
}

fn config_failure(e: ConfigError) -> Failure {
    Failure::new(EXIT_CONFIG, e.to_string())
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::new(EXIT_IO, format!("{}: {e}", path.display()))
}

fn load(path: &Path, overrides: &Overrides) -> Result<ScenarioConfig, Failure> {
    ScenarioConfig::load(path, &overrides.list()).map_err(|e| {
        let f = Failure::from(e);
        Failure::new(f.code, format!("{}: {}", path.display(), f.message))
    })
}

fn summary_line(s: &ScenarioConfig, run: &RunOutput) -> String {
    let m = &run.metrics;
    format!(
        "{}: rms position {:.4} m, rms attitude {:.3} deg, max position {:.4} m (window from {} s)",
        s.name,
        m.rms_position_error,
        m.rms_attitude_error.to_degrees(),
        m.max_position_error,
        m.window_start
    )
}

/// Writes outputs for a finished or diverged run and returns its exit code.
fn persist(
    s: &ScenarioConfig,
    result: &Result<RunOutput, SimError>,
    dir: &Path,
    verbosity: Verbosity,
) -> Result<u8, Failure> {
    match result {
        Ok(run) => {
            let meta = RunMeta::new(s, &run.log, RunStatus::Completed);
            write_outputs(dir, &run.log, Some(&run.metrics), &meta)
                .map_err(|e| io_failure(dir, e))?;
            if verbosity >= Verbosity::Normal {
                println!("{}", summary_line(s, run));
            }
            if verbosity == Verbosity::Verbose {
                for c in s.acceptance.map(|a| a.evaluate(s, run)).unwrap_or_default() {
                    let mark = if c.passed { "pass" } else { "FAIL" };
                    println!("  {mark} {} = {:.6} (limit {})", c.name, c.value, c.limit);
                }
            }
            Ok(0)
        }
        Err(SimError::DivergenceDetected {
            time,
            reason,
            partial,
        }) => {
            let status = RunStatus::Diverged {
                time: *time,
                reason: reason.clone(),
            };
            let meta = RunMeta::new(s, partial, status);
            write_outputs(dir, partial, None, &meta).map_err(|e| io_failure(dir, e))?;
            eprintln!("{}: diverged at t = {time:.3} s: {reason}", s.name);
            Ok(EXIT_DIVERGED)
        }
        Err(SimError::Config(e)) => Err(Failure::new(EXIT_CONFIG, e.to_string())),
        Err(SimError::Metrics(e)) => Err(Failure::new(EXIT_CONFIG, format!("{}: {e}", s.name))),
    }
}

fn warn(s: &ScenarioConfig, verbosity: Verbosity) {
    if verbosity > Verbosity::Quiet {
        for w in s.warnings() {
            eprintln!("warning: {w}");
        }
    }
}

fn run(scenario: &Path, out: &Path, overrides: &Overrides, v: Verbosity) -> Result<u8, Failure> {
    let s = load(scenario, overrides)?;
    warn(&s, v);
    persist(&s, &run_scenario(&s), out, v)
}

fn suite(
    scenarios: &[PathBuf],
    out: &Path,
    overrides: &Overrides,
    v: Verbosity,
) -> Result<u8, Failure> {
    let configs = scenarios
        .iter()
        .map(|p| load(p, overrides))
        .collect::<Result<Vec<_>, _>>()?;
    for s in &configs {
        warn(s, v);
    }
    let results = run_batch(&configs);

    let mut code = 0;
    let mut entries = Vec::new();
    for (s, r) in configs.iter().zip(&results) {
        code = code.max(persist(s, r, &out.join(&s.name), v)?);
        entries.push(match r {
            Ok(run) => json!({
                "name": s.name,
                "status": "completed",
                "metrics": run.metrics,
                "acceptance": s.acceptance.map(|a| a.evaluate(s, run)).unwrap_or_default(),
            }),
            Err(e) => json!({ "name": s.name, "status": "diverged", "error": e.to_string() }),
        });
    }
    let summary =
        serde_json::to_string_pretty(&json!({ "scenarios": entries })).expect("plain data") + "\n";
    std::fs::create_dir_all(out).map_err(|e| io_failure(out, e))?;
    std::fs::write(out.join("summary.json"), summary).map_err(|e| io_failure(out, e))?;
    Ok(code)
}

fn validate(scenario: &Path, overrides: &Overrides, v: Verbosity) -> Result<u8, Failure> {
    let s = load(scenario, overrides)?;
    for w in s.warnings() {
        eprintln!("warning: {w}");
    }
    if v > Verbosity::Quiet {
        println!("{}: ok", scenario.display());
    }
    Ok(0)
}

fn plot(log: &Path, out: &Path, v: Verbosity) -> Result<u8, Failure> {
    let data = SimLog::load_csv(log).map_err(|e| io_failure(log, e))?;
    let traj = trajectory_svg(&data).map_err(|e| io_failure(log, e))?;
    let att = attitude_svg(&data).map_err(|e| io_failure(log, e))?;
    std::fs::create_dir_all(out).map_err(|e| io_failure(out, e))?;
    for (name, svg) in [("trajectory.svg", traj), ("attitude.svg", att)] {
        let path = out.join(name);
        std::fs::write(&path, svg).map_err(|e| io_failure(&path, e))?;
        if v > Verbosity::Quiet {
            println!("wrote {}", path.display());
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let v = match (cli.quiet, cli.verbose) {
        (true, _) => Verbosity::Quiet,
        (_, true) => Verbosity::Verbose,
        _ => Verbosity::Normal,
    };
    let result = match &cli.command {
        Command::Run {
            scenario,
            out,
            overrides,
        } => run(scenario, out, overrides, v),
        Command::Suite {
            scenario,
            out,
            overrides,
        } => suite(scenario, out, overrides, v),
        Command::Validate {
            scenario,
            overrides,
        } => validate(scenario, overrides, v),
        Command::Plot { log, out } => plot(log, out, v),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
