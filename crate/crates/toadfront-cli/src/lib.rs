//! Command line driver: `toadfront <subcommand> --config FILE`.
//!
//! Exit codes: 0 success, 1 config error, 2 failed assertion, 3 solver or
//! i/o error.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod plot;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::commands::{ProbeKind, RunOptions};
use crate::config::LoadedConfig;
use crate::error::CliError;
use crate::output::{Context, Manifest};

/// Environment variable giving the default output root.
pub const OUT_ENV: &str = "TOADFRONT_OUT";

#[derive(Debug, Parser)]
#[command(name = "toadfront", version, about = "Fronts, delays and kernel probes for trait-structured KPP systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides the config and $TOADFRONT_OUT.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Size of the worker pool.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Continue an interrupted simulation from its last snapshot dump.
    #[arg(long, global = true)]
    pub resume: bool,
    /// Abort at the first failed assertion.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Stop after this many snapshot dumps (leaves a resumable run).
    #[arg(long, global = true, hide = true)]
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Dispersion curve and spectral data of the trait profile.
    Dispersion,
    /// Run the model, recording the front trace and snapshot dumps.
    Simulate,
    /// Post-process a simulation: delay fit, tail rate, Harnack ratio.
    Front,
    /// Heat-kernel probes.
    Probe {
        #[command(subcommand)]
        which: ProbeCommand,
    },
    /// Self-similar expansion, its residual and the strip comparison.
    Asym,
    /// Moving-boundary criticality sweep.
    Criticality,
    /// Plot data and a summary of the output directory.
    Report,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum ProbeCommand {
    Harnack,
    Varadhan,
    Nash,
    KernelPower,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Dispersion => "dispersion",
            Command::Simulate => "simulate",
            Command::Front => "front",
            Command::Probe { which: ProbeCommand::Harnack } => "probe_harnack",
            Command::Probe { which: ProbeCommand::Varadhan } => "probe_varadhan",
            Command::Probe { which: ProbeCommand::Nash } => "probe_nash",
            Command::Probe { which: ProbeCommand::KernelPower } => "probe_kernel_power",
            Command::Asym => "asym",
            Command::Criticality => "criticality",
            Command::Report => "report",
        }
    }
}

/// `--out`, then the config's `output_dir`, then `$TOADFRONT_OUT/<name>`,
/// then `toadfront-out/<name>`.
pub fn output_dir(cli_out: Option<&Path>, cfg: &LoadedConfig) -> PathBuf {
    if let Some(p) = cli_out {
        return p.to_path_buf();
    }
    if let Some(p) = &cfg.config.output_dir {
        return p.clone();
    }
    let root = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("toadfront-out"));
    root.join(&cfg.config.name)
}

/// Parses `args` and runs the subcommand; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("toadfront: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    let path = cli.config.as_deref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let loaded = config::load(path)?;
    let out_dir = output_dir(cli.out.as_deref(), &loaded);
    std::fs::create_dir_all(&out_dir)?;
    let ctx = Context { out_dir, name: loaded.config.name.clone(), hash: loaded.hash.clone(), seed: loaded.config.seed };
    let opts = RunOptions { resume: cli.resume, strict: cli.strict, stop_after: cli.stop_after };
    let mut man = Manifest::new(&ctx, cli.command.name());

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| CliError::Config(e.to_string()))?;
    let result = pool.install(|| dispatch(&cli.command, &loaded, &ctx, &mut man, &opts));

    match result {
        Ok(false) => Ok(0),
        Ok(true) => {
            let failed = man.assertions.iter().filter(|a| !a.pass).count();
            let code = if failed > 0 { 2 } else { 0 };
            man.save(&ctx, if code == 0 { "ok" } else { "assertion_failed" }, code)?;
            if failed > 0 {
                for a in man.assertions.iter().filter(|a| !a.pass) {
                    eprintln!("toadfront: assertion {} = {} outside [{}, {}]", a.name, a.value, a.band[0], a.band[1]);
                }
            }
            Ok(code)
        }
        Err(e) => {
            let _ = man.save(&ctx, "failed", e.exit_code());
            Err(e)
        }
    }
}

/// Returns `Ok(false)` for an interrupted simulation whose manifest is already written.
fn dispatch(cmd: &Command, loaded: &LoadedConfig, ctx: &Context, man: &mut Manifest, opts: &RunOptions) -> Result<bool, CliError> {
    let cfg = &loaded.config;
    match cmd {
        Command::Dispersion => commands::dispersion(cfg, ctx, man)?,
        Command::Simulate => return commands::simulate(cfg, ctx, man, opts),
        Command::Front => commands::front(cfg, ctx, man, opts)?,
        Command::Probe { which } => {
            let kind = match which {
                ProbeCommand::Harnack => ProbeKind::Harnack,
                ProbeCommand::Varadhan => ProbeKind::Varadhan,
                ProbeCommand::Nash => ProbeKind::Nash,
                ProbeCommand::KernelPower => ProbeKind::KernelPower,
            };
            commands::probe(cfg, ctx, man, kind)?
        }
        Command::Asym => commands::asym(cfg, ctx, man)?,
        Command::Criticality => commands::criticality(cfg, ctx, man)?,
        Command::Report => commands::report(ctx, man)?,
    }
    Ok(true)
}
