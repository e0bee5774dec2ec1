//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage, input or I/O errors, 2 when a
//! scenario check fails. Every command that writes a report also writes a
//! manifest with the fully resolved settings: next to the output as
//! `<output>.manifest`, or to stderr when the report goes to stdout.
//! Passing that manifest back with `--config` reruns the same command.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::chameleon::{write_stats_csv, Characterizer, HotFraction, IntervalStats, ReaccessHistogram};
use crate::config::{parse_pairs, read_config, split_assignment, ConfigError, OutputFormat, Settings};
use crate::scenario::{preset, PRESETS};
use crate::sim::{run, run_results, SimReport};
use crate::trace::{open_trace, write_events};
use crate::workload::{generate, WorkloadKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_CHECK_FAILED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "tiersim", version, about = "Page placement simulator for tiered memory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Config or manifest file of `key = value` lines.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one config key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output path; stdout if omitted.
    #[arg(short, long, value_name = "PATH")]
    pub output: Option<PathBuf>,
    #[arg(long, value_name = "json|csv")]
    pub format: Option<OutputFormat>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic trace.
    Gen {
        #[arg(long)]
        kind: Option<WorkloadKind>,
        #[arg(long)]
        pages: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Run one simulation over a trace file, or over the configured
    /// workload if no trace is given.
    Sim {
        #[arg(long, value_name = "PATH")]
        trace: Option<PathBuf>,
        #[arg(long)]
        policy: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a preset comparison and evaluate its checks.
    Scenario {
        name: Option<String>,
        /// List preset names.
        #[arg(long)]
        list: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Sample a trace and report per-interval page temperature.
    Characterize {
        #[arg(long, value_name = "PATH")]
        trace: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug)]
enum Failure {
    Error(String),
    ChecksFailed,
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Error(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

/// Parses `args` (program name first) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(Failure::ChecksFailed) => EXIT_CHECK_FAILED,
        Err(Failure::Error(msg)) => {
            eprintln!("error: {msg}");
            EXIT_ERROR
        }
    }
}

fn execute(command: Command) -> CliResult {
    match command {
        Command::Gen {
            kind,
            pages,
            seed,
            common,
        } => cmd_gen(kind, pages, seed, common),
        Command::Sim {
            trace,
            policy,
            seed,
            common,
        } => cmd_sim(trace, policy, seed, common),
        Command::Scenario {
            name,
            list,
            seed,
            common,
        } => cmd_scenario(name, list, seed, common),
        Command::Characterize { trace, common } => cmd_characterize(trace, common),
    }
}

/// Config file (or `base` if none), then `flags`, then `--set` overrides.
fn resolve(
    command: &str,
    common: &Common,
    base: impl FnOnce() -> Settings,
    flags: &[(&str, Option<String>)],
) -> Result<Settings, ConfigError> {
    let mut s = match &common.config {
        Some(path) => {
            let mut s = Settings::default();
            s.load(path)?;
            s
        }
        None => base(),
    };
    for (key, value) in flags {
        if let Some(v) = value {
            s.set(key, v)?;
        }
    }
    s.apply(common.set.iter().map(String::as_str))?;
    s.run.command = command.to_string();
    if let Some(out) = &common.output {
        s.run.output = Some(out.display().to_string());
    }
    if let Some(f) = common.format {
        s.run.format = f;
    }
    Ok(s)
}

fn path_string(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_os_string();
    s.push(".manifest");
    PathBuf::from(s)
}

/// Writes `body` to the output (or stdout) and the manifest beside it (or
/// to stderr).
fn emit(output: Option<&str>, body: &[u8], manifest: &str) -> CliResult {
    match output {
        Some(out) => {
            let out = Path::new(out);
            std::fs::write(out, body).map_err(|e| format!("{}: {e}", out.display()))?;
            let m = manifest_path(out);
            std::fs::write(&m, manifest).map_err(|e| format!("{}: {e}", m.display()))?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(body)?;
            stdout.flush()?;
            eprint!("{manifest}");
        }
    }
    Ok(())
}

fn cmd_gen(kind: Option<WorkloadKind>, pages: Option<u64>, seed: Option<u64>, common: Common) -> CliResult {
    let flags = [
        ("workload.kind", kind.map(|k| k.name().to_string())),
        ("workload.total_pages", pages.map(|p| p.to_string())),
        ("workload.seed", seed.map(|s| s.to_string())),
    ];
    let base = || {
        Settings::for_workload(
            kind.unwrap_or(WorkloadKind::ZipfSteady),
            pages.unwrap_or(crate::config::DEFAULT_WORKLOAD_PAGES),
            seed.unwrap_or(0),
        )
    };
    let s = resolve("gen", &common, base, &flags)?;
    let events = generate(&s.workload)?;
    let mut body = Vec::new();
    write_events(&mut body, events)?;
    emit(s.run.output.as_deref(), &body, &s.render())
}

fn format_report(report: &SimReport, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => report.to_json(),
        OutputFormat::Csv => report.to_csv(),
    }
}

fn cmd_sim(trace: Option<PathBuf>, policy: Option<String>, seed: Option<u64>, common: Common) -> CliResult {
    let flags = [
        ("run.trace", path_string(&trace)),
        ("policy.kind", policy),
        ("run.seed", seed.map(|s| s.to_string())),
    ];
    let s = resolve("sim", &common, Settings::default, &flags)?;
    let cfg = s.sim_config();
    let report = match &s.run.trace {
        Some(path) => run_results(open_trace(Path::new(path))?, cfg)?,
        None => run(generate(&s.workload)?, cfg)?,
    };
    let body = format_report(&report, s.run.format);
    emit(s.run.output.as_deref(), body.as_bytes(), &s.render())
}

fn cmd_scenario(name: Option<String>, list: bool, seed: Option<u64>, common: Common) -> CliResult {
    if list {
        for p in PRESETS {
            println!("{p}");
        }
        return Ok(());
    }
    // Scenario settings are the run.* keys; any other key is applied to
    // every config of the preset.
    let mut s = Settings::default();
    s.run.format = OutputFormat::Json;
    let mut pairs = match &common.config {
        Some(path) => parse_pairs(&read_config(path)?)?,
        None => Vec::new(),
    };
    for o in &common.set {
        let (k, v) = split_assignment(o).ok_or_else(|| format!("--set expects KEY=VALUE, got '{o}'"))?;
        pairs.push((k.to_string(), v.to_string()));
    }
    if let Some(n) = &name {
        pairs.push(("run.scenario".into(), n.clone()));
    }
    if let Some(seed) = seed {
        pairs.push(("run.seed".into(), seed.to_string()));
    }
    let mut overrides = Vec::new();
    for (k, v) in pairs {
        if k.starts_with("run.") {
            s.set(&k, &v)?;
        } else {
            // Validates the value before any run starts.
            Settings::default().set(&k, &v)?;
            overrides.retain(|(old, _): &(String, String)| *old != k);
            overrides.push((k, v));
        }
    }
    s.run.command = "scenario".into();
    if let Some(out) = &common.output {
        s.run.output = Some(out.display().to_string());
    }
    if let Some(f) = common.format {
        s.run.format = f;
    }
    let Some(name) = s.run.scenario.clone() else {
        return Err(Failure::Error("scenario name required (see --list)".into()));
    };

    let mut scenario = preset(&name, s.sim.seed)?;
    if !overrides.is_empty() {
        let mut workload = scenario.workload.clone();
        for nc in &mut scenario.configs {
            let mut cs = Settings {
                sim: nc.config.clone(),
                workload: scenario.workload.clone(),
                ..Settings::default()
            };
            for (k, v) in &overrides {
                cs.set(k, v)?;
            }
            nc.config = cs.sim_config();
            workload = cs.workload;
        }
        scenario.workload = workload;
    }
    let result = scenario.run()?;

    let mut manifest: String = s
        .render()
        .lines()
        .filter(|l| l.starts_with('#') || l.starts_with("run."))
        .map(|l| format!("{l}\n"))
        .collect();
    for (k, v) in &overrides {
        manifest.push_str(&format!("{k} = {v}\n"));
    }

    match s.run.output.as_deref() {
        Some(_) => {
            let body = match s.run.format {
                OutputFormat::Json => result.to_json(),
                OutputFormat::Csv => result.to_csv(),
            };
            emit(s.run.output.as_deref(), body.as_bytes(), &manifest)?;
            print!("{}", result.table());
        }
        None => emit(None, result.table().as_bytes(), &manifest)?,
    }
    if result.passed() {
        Ok(())
    } else {
        Err(Failure::ChecksFailed)
    }
}

#[derive(Serialize)]
struct CharacterizeOutput<'a> {
    intervals: &'a [IntervalStats],
    hot_window: u32,
    hot_fraction: HotFraction,
    reaccess: ReaccessHistogram,
}

fn cmd_characterize(trace: Option<PathBuf>, common: Common) -> CliResult {
    let flags = [("run.trace", path_string(&trace))];
    let base = || {
        let mut s = Settings::default();
        s.run.format = OutputFormat::Csv;
        s
    };
    let s = resolve("characterize", &common, base, &flags)?;
    let mut ch = Characterizer::new(s.chameleon.clone())?;
    match &s.run.trace {
        Some(path) => {
            for ev in open_trace(Path::new(path))? {
                ch.ingest(&ev?);
            }
        }
        None => {
            for ev in generate(&s.workload)? {
                ch.ingest(&ev);
            }
        }
    }
    let hot_fraction = ch.hot_fraction(s.hot_window);
    let reaccess = ch.reaccess_distribution();
    let intervals = ch.finish();
    let body = match s.run.format {
        OutputFormat::Csv => {
            let mut out = Vec::new();
            write_stats_csv(&mut out, &intervals)?;
            out
        }
        OutputFormat::Json => {
            let out = CharacterizeOutput {
                intervals: &intervals,
                hot_window: s.hot_window,
                hot_fraction,
                reaccess,
            };
            let mut text = serde_json::to_string_pretty(&out)?;
            text.push('\n');
            text.into_bytes()
        }
    };
    emit(s.run.output.as_deref(), &body, &s.render())
}
