//! The `compliant` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand};
use compliant_teleop::clock::RealClock;
use compliant_teleop::{serve, LiveSession, ServeOptions, DEFAULT_BIND, DEFAULT_STATE_RATE};

use crate::compare::{compare, table, write_comparison};
use crate::runner::{replay, run, HarnessError, RunOutput};
use crate::scenario::{load_model, Scenario};

/// Environment variable naming the default output root.
pub const OUT_DIR_ENV: &str = "CRISP_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "compliant", version, about = "Run, compare and replay compliant-control scenarios")]
pub struct Cli {
    /// Output root; each run writes into a subdirectory named after its scenario.
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the scenario's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print nothing but errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario and write its log and metrics.
    Run { scenario: PathBuf },
    /// Run scenarios side by side and write a comparison table and error traces.
    Compare {
        #[arg(required = true, num_args = 2..)]
        scenarios: Vec<PathBuf>,
    },
    /// Track the poses recorded in a CSV with a scenario's robot and controller.
    Replay { csv: PathBuf, scenario: PathBuf },
    /// Serve a scenario's robot live over the teleoperation protocol.
    Teleop {
        scenario: PathBuf,
        #[arg(long, default_value = DEFAULT_BIND, value_name = "HOST:PORT")]
        bind: String,
        #[arg(long, default_value_t = DEFAULT_STATE_RATE, value_name = "HZ")]
        state_rate: f64,
        /// Stop after this many seconds instead of running until interrupted.
        #[arg(long, value_name = "SECONDS")]
        duration: Option<f64>,
    },
    /// Parse a URDF and print a summary of its chain.
    Validate { urdf: PathBuf },
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    init_logging(cli.quiet);
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn init_logging(quiet: bool) {
    let level = if quiet { "error" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

fn load(path: &Path, seed: Option<u64>) -> Result<Scenario, HarnessError> {
    let mut s = Scenario::load(path)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    Ok(s)
}

/// Runs the parsed command. `Ok` carries the exit code of a completed command.
pub fn execute(cli: &Cli) -> Result<i32, HarnessError> {
    let mut stdout = std::io::stdout().lock();
    let mut say = |text: &str| {
        if !cli.quiet {
            let _ = stdout.write_all(text.as_bytes());
        }
    };
    match &cli.command {
        Command::Run { scenario } => {
            let s = load(scenario, cli.seed)?;
            let out = run(&s)?;
            finish(&out, &cli.out.join(&s.name), &mut say)
        }
        Command::Replay { csv, scenario } => {
            let s = load(scenario, cli.seed)?;
            let out = replay(&s, csv)?;
            finish(&out, &cli.out.join(format!("{}-replay", s.name)), &mut say)
        }
        Command::Compare { scenarios } => {
            let loaded = scenarios
                .iter()
                .map(|p| load(p, cli.seed))
                .collect::<Result<Vec<_>, _>>()?;
            let runs = compare(&loaded)?;
            let dir = cli.out.join("compare");
            let written = write_comparison(&runs, &dir)?;
            say(&table(&runs));
            for p in written {
                say(&format!("wrote {}\n", p.display()));
            }
            Ok(if runs.iter().all(|r| r.metrics.passed()) { 0 } else { 1 })
        }
        Command::Teleop {
            scenario,
            bind,
            state_rate,
            duration,
        } => {
            let s = load(scenario, cli.seed)?;
            let session = LiveSession {
                model: s.model,
                params: s.params,
                sim: s.sim,
                initial: s.initial,
            };
            let options = ServeOptions {
                bind: bind.clone(),
                state_rate: *state_rate,
            };
            let server = serve(session, &options, Arc::new(RealClock::new()))?;
            say(&format!("listening on {}\n", server.local_addr()));
            let started = Instant::now();
            while !server.is_faulted() && duration.is_none_or(|d| started.elapsed().as_secs_f64() < d) {
                thread::sleep(Duration::from_millis(20));
            }
            let report = server.shutdown();
            let s = report.stats;
            say(&format!(
                "ticks {} broadcasts {} accepted {} rejected {} clients {}\n",
                s.ticks, s.broadcasts, s.commands_accepted, s.messages_rejected, s.clients
            ));
            match report.fault {
                Some(f) => {
                    eprintln!("error: simulation faulted: {f}");
                    Ok(1)
                }
                None => Ok(0),
            }
        }
        Command::Validate { urdf } => {
            let (_, m) = load_model(urdf)?;
            let mut text = format!(
                "{}: {} dof, {} -> {}, total mass {:.3} kg\n",
                m.name,
                m.dof,
                m.base_link,
                m.tip_link,
                m.total_mass()
            );
            for (j, l) in m.movable_joints().zip(m.joint_limits()) {
                text.push_str(&format!(
                    "  {:<16} [{:>8.4}, {:>8.4}] rad  effort {:>7.2}  velocity {:>6.3}\n",
                    j.name, l.lower, l.upper, l.effort, l.velocity
                ));
            }
            say(&text);
            Ok(0)
        }
    }
}

fn finish(out: &RunOutput, dir: &Path, say: &mut impl FnMut(&str)) -> Result<i32, HarnessError> {
    let written = out.write(dir)?;
    say(&serde_json::to_string_pretty(&out.metrics).expect("metrics serialize"));
    say("\n");
    for p in written {
        say(&format!("wrote {}\n", p.display()));
    }
    if out.metrics.passed() {
        Ok(0)
    } else {
        eprintln!("error: {} joint-limit breaches", out.metrics.limit_breaches);
        Ok(1)
    }
}
