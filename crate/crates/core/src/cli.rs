//! Command-line front end.
//!
//! Every flag can also be given through a `DRMFAC_*` environment variable
//! (`DRMFAC_CONFIG`, `DRMFAC_SEED`, `DRMFAC_STEPS`, `DRMFAC_OUT`,
//! `DRMFAC_NO_ATTACK`, `DRMFAC_COMPENSATION`, `DRMFAC_TAIL`, `DRMFAC_TRACE`);
//! explicit flags win.
//!
//! Exit codes: 0 success, 2 validation failure, 3 diverged, 4 I/O error.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::attack::CompensationMode;
use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::graph::{Group, ILL_CONDITIONED};
use crate::metrics::{compute_metrics, phase_summary_lines, render_report, SummaryMetrics};
use crate::plant::ReferenceSchedule;
use crate::sim::run_simulation;
use crate::trace::{read_csv_file, write_csv_file, SimTrace};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "drmfac", version, about = "Resilient model-free adaptive bipartite consensus simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check graph balance, leader reachability and controller parameters.
    Validate {
        #[arg(long, env = "DRMFAC_CONFIG")]
        config: PathBuf,
    },
    /// Run a simulation and write the trace and metrics.
    Run(RunArgs),
    /// Recompute metrics from a stored trace.
    Metrics(MetricsArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    #[arg(long, env = "DRMFAC_CONFIG")]
    pub config: PathBuf,
    #[arg(long, env = "DRMFAC_SEED")]
    pub seed: Option<u64>,
    #[arg(long, env = "DRMFAC_STEPS")]
    pub steps: Option<usize>,
    /// Output directory; defaults to `sim.output_dir` or `drmfac-out`.
    #[arg(long, env = "DRMFAC_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long, env = "DRMFAC_NO_ATTACK")]
    pub no_attack: bool,
    /// recursive, strict or disabled.
    #[arg(long, env = "DRMFAC_COMPENSATION")]
    pub compensation: Option<CompensationMode>,
    #[arg(long, env = "DRMFAC_TAIL")]
    pub tail: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct MetricsArgs {
    #[arg(long, env = "DRMFAC_TRACE")]
    pub trace: PathBuf,
    /// Config for the reference schedule; defaults to `effective_config.json`
    /// next to the trace.
    #[arg(long, env = "DRMFAC_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, env = "DRMFAC_TAIL")]
    pub tail: Option<usize>,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) | Error::MalformedTrace(_) => EXIT_IO,
        Error::Diverged { .. } => EXIT_DIVERGED,
        _ => EXIT_VALIDATION,
    }
}

#[derive(Debug, Clone)]
pub struct ValidateOutcome {
    pub report: String,
    pub failures: Vec<String>,
    pub exit_code: i32,
}

fn set_string(members: &[usize]) -> String {
    let parts: Vec<String> = members.iter().map(usize::to_string).collect();
    format!("{{{}}}", parts.join(", "))
}

pub fn cmd_validate(config: &Path) -> Result<ValidateOutcome> {
    let text = std::fs::read_to_string(config)?;
    let cfg = match SimConfig::from_json(&text) {
        Ok(cfg) => cfg,
        Err(e) => {
            let failures = vec![e.to_string()];
            return Ok(ValidateOutcome {
                report: format!("config does not parse: {e}\n"),
                failures,
                exit_code: EXIT_VALIDATION,
            });
        }
    };
    let check = cfg.check();
    let mut report = String::new();
    match &check.partition {
        Some(p) => report.push_str(&format!(
            "partition: V1 = {}, V2 = {}\n",
            set_string(&p.members(Group::One)),
            set_string(&p.members(Group::Two))
        )),
        None => report.push_str("partition: none\n"),
    }
    if let Some(tree) = check.spanning_tree {
        report.push_str(&format!("leader spanning tree: {}\n", if tree { "yes" } else { "no" }));
    }
    for (agent, res) in &check.params {
        match res {
            Ok(()) => report.push_str(&format!("agent {agent} parameters: ok\n")),
            Err(e) => report.push_str(&format!("agent {agent} parameters: {e}\n")),
        }
    }
    if let Some(c) = check.condition_number {
        let warn = if c > ILL_CONDITIONED { "  (warning: ill-conditioned)" } else { "" };
        report.push_str(&format!("cond(L + G): {c:.4e}{warn}\n"));
    }
    report.push_str(if check.passed() { "status: ok\n" } else { "status: failed\n" });
    Ok(ValidateOutcome {
        report,
        exit_code: if check.passed() { EXIT_OK } else { EXIT_VALIDATION },
        failures: check.failures,
    })
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub trace: SimTrace,
    pub metrics: Option<SummaryMetrics>,
    pub summary: Vec<String>,
    pub exit_code: i32,
}

/// Applies flag overrides to a loaded config.
pub fn apply_overrides(cfg: &mut SimConfig, args: &RunArgs) {
    if let Some(seed) = args.seed {
        cfg.attack.seed = seed;
    }
    if let Some(steps) = args.steps {
        cfg.sim.steps = steps;
    }
    if args.no_attack {
        cfg.attack.enabled = false;
    }
    if let Some(mode) = args.compensation {
        cfg.attack.compensation = mode;
    }
    if let Some(tail) = args.tail {
        cfg.sim.tail = tail;
    }
    if let Some(out) = &args.out {
        cfg.sim.output_dir = Some(out.to_string_lossy().into_owned());
    }
}

pub fn cmd_run(args: &RunArgs) -> Result<RunOutcome> {
    let mut cfg = SimConfig::load(&args.config)?;
    apply_overrides(&mut cfg, args);
    let out_dir = PathBuf::from(cfg.sim.output_dir.clone().unwrap_or_else(|| "drmfac-out".into()));

    let trace = run_simulation(&cfg)?;
    std::fs::create_dir_all(&out_dir)?;
    std::fs::write(out_dir.join("effective_config.json"), cfg.to_json()? + "\n")?;
    write_csv_file(&trace, &out_dir.join("trace.csv"))?;

    let mut summary = Vec::new();
    let metrics = match compute_metrics(&trace, &cfg.reference.segments, cfg.sim.tail, cfg.sim.convergence_threshold) {
        Ok(m) => {
            std::fs::write(out_dir.join("metrics.txt"), render_report(&m))?;
            std::fs::write(out_dir.join("metrics.json"), serde_json::to_string_pretty(&m)? + "\n")?;
            summary.extend(phase_summary_lines(&m));
            Some(m)
        }
        Err(e) if trace.divergence.is_some() => {
            summary.push(format!("metrics unavailable: {e}"));
            None
        }
        Err(e) => return Err(e),
    };
    let exit_code = match trace.divergence {
        Some((step, agent)) => {
            summary.push(format!("diverged at step {step}, agent {agent}"));
            EXIT_DIVERGED
        }
        None => EXIT_OK,
    };
    Ok(RunOutcome {
        out_dir,
        trace,
        metrics,
        summary,
        exit_code,
    })
}

#[derive(Debug, Clone)]
pub struct MetricsOutcome {
    pub metrics: SummaryMetrics,
    pub report: String,
}

pub fn cmd_metrics(args: &MetricsArgs) -> Result<MetricsOutcome> {
    let config_path = args.config.clone().or_else(|| {
        let sibling = args.trace.parent().unwrap_or(Path::new(".")).join("effective_config.json");
        sibling.exists().then_some(sibling)
    });
    let (schedule, tail, threshold) = match config_path {
        Some(path) => {
            let cfg = SimConfig::load(&path)?;
            (cfg.reference.segments, cfg.sim.tail, cfg.sim.convergence_threshold)
        }
        None => {
            let defaults = crate::config::RunSection::default();
            (ReferenceSchedule::default(), defaults.tail, defaults.convergence_threshold)
        }
    };
    let trace = read_csv_file(&args.trace)?;
    let metrics = compute_metrics(&trace, &schedule, args.tail.unwrap_or(tail), threshold)?;
    let report = render_report(&metrics);
    Ok(MetricsOutcome { metrics, report })
}

/// Dispatches a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Validate { config } => cmd_validate(&config).map(|out| {
            print!("{}", out.report);
            if !out.failures.is_empty() {
                let json = serde_json::json!({ "failures": out.failures });
                println!("{json}");
            }
            out.exit_code
        }),
        Command::Run(args) => cmd_run(&args).map(|out| {
            for line in &out.summary {
                println!("{line}");
            }
            println!("wrote {}", out.out_dir.display());
            out.exit_code
        }),
        Command::Metrics(args) => cmd_metrics(&args).map(|out| {
            print!("{}", out.report);
            EXIT_OK
        }),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        exit_code(&e)
    })
}
