//! `tst`: command-line driver for the transition-state pipeline.
//!
//! Exit codes: 0 on success, 2 for configuration or usage errors, 3 when a
//! stage fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};
use tst_core::config::RunConfig;
use tst_core::egp::{EgpKind, EgpVariant};
use tst_core::error::ConfigError;
use tst_core::io;
use tst_core::pipeline::{self, PipelineError, RunOptions, Stage};
use tst_core::{PathWeight, StateId, StateSpace};

#[derive(Parser)]
#[command(name = "tst", version, about = "Transition-state analysis of ERGM network dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the state space and write occupancy and state tables.
    Sample {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (defaults to the config's `out`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the maximum state probability change path.
    Mspcp {
        /// Directory holding states.csv and transitions.csv.
        #[arg(long)]
        states: PathBuf,
        /// `aligned-b1`, `aligned-b2`, or `id:<n>`.
        #[arg(long, default_value = "aligned-b1")]
        source_rule: String,
        #[arg(long, default_value = "aligned-b2")]
        target_rule: String,
        #[arg(long)]
        weight: Option<PathWeight>,
        /// Supplies theta, alignment thresholds and smoothing; desk defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output file (defaults to `<states>/mspcp.csv`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate trajectories of one process from source to target.
    EgpRun {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        states: PathBuf,
        #[arg(long)]
        kind: EgpVariant,
        #[arg(long, default_value_t = EgpKind::DEFAULT_NU)]
        nu: f64,
        /// Graph file with one seed graph per trajectory; all must lie in the source state.
        #[arg(long)]
        seeds: PathBuf,
        /// Run each trajectory until it reaches the target state.
        #[arg(long)]
        until_target: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Prune, classify and align simulated trajectories.
    Analyze {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory holding index.csv and the trajectory files.
        #[arg(long)]
        trajs: PathBuf,
        #[arg(long)]
        states: PathBuf,
        #[arg(long)]
        mspcp: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run all stages from one config.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        /// Rerun stages whose outputs already exist.
        #[arg(long)]
        force: bool,
        /// Run only this stage.
        #[arg(long)]
        stage: Option<Stage>,
    },
}

enum Failure {
    Config(anyhow::Error),
    Stage(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.into())
    }
}

fn stage_err<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Stage(e.into())
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    match path {
        Some(p) => Ok(RunConfig::load(p)?),
        None => Ok(RunConfig::desk("out")),
    }
}

fn resolve_rule(rule: &str, space: &StateSpace, cfg: &RunConfig) -> anyhow::Result<StateId> {
    if let Some(id) = rule.strip_prefix("id:") {
        let id: StateId = id.parse().with_context(|| format!("bad state id in {rule:?}"))?;
        space.get(id)?;
        return Ok(id);
    }
    let (source, target) = space.find_aligned_states(cfg.alignment.hi, cfg.alignment.lo)?;
    match rule {
        "aligned-b1" => Ok(source.id),
        "aligned-b2" => Ok(target.id),
        other => bail!("unknown state rule {other:?}, expected aligned-b1, aligned-b2 or id:<n>"),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Sample { config, out } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(out) = out {
                cfg.out = out;
            }
            let attrs = cfg.attributes()?;
            let out = cfg.out.clone();
            pipeline::with_pool(&cfg, || -> anyhow::Result<()> {
                pipeline::sample_stage(&cfg, &attrs, &out)?;
                let space = pipeline::states_stage(&cfg, &out)?;
                eprintln!("{} states, mean degree {:.3}", space.len(), space.mean_degree());
                Ok(())
            })?
            .map_err(stage_err)
        }
        Command::Mspcp {
            states,
            source_rule,
            target_rule,
            weight,
            config,
            out,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(w) = weight {
                cfg.analysis.weight = w;
            }
            let space = io::read_states(&states, &cfg.model.theta).map_err(stage_err)?;
            let source = resolve_rule(&source_rule, &space, &cfg).map_err(Failure::Config)?;
            let target = resolve_rule(&target_rule, &space, &cfg).map_err(Failure::Config)?;
            let path = pipeline::mspcp_stage(&space, source, target, &cfg).map_err(stage_err)?;
            let out = out.unwrap_or_else(|| states.join("mspcp.csv"));
            io::write_path(&out, &path).map_err(stage_err)?;
            eprintln!("{} states on the path, written to {}", path.len(), out.display());
            Ok(())
        }
        Command::EgpRun {
            config,
            states,
            kind,
            nu,
            seeds,
            until_target,
            out,
        } => {
            if !until_target {
                return Err(Failure::Config(anyhow!("only --until-target runs are supported")));
            }
            let mut cfg = load_config(config.as_deref())?;
            cfg.egp.nu = nu;
            cfg.validate()?;
            let attrs = cfg.attributes()?;
            let space = io::read_states(&states, &cfg.model.theta).map_err(stage_err)?;
            let (source, target) = space
                .find_aligned_states(cfg.alignment.hi, cfg.alignment.lo)
                .map_err(stage_err)?;
            let graphs = io::read_graphs(&seeds).map_err(stage_err)?;
            let kind = EgpKind::new(kind, nu);
            let index = out.join("index.csv");
            let previous: Vec<pipeline::IndexRow> = if index.exists() {
                io::read_csv(&index).map_err(stage_err)?
            } else {
                Vec::new()
            };
            let rows = pipeline::with_pool(&cfg, || {
                pipeline::run_trajectories(&cfg, &attrs, &space, source, target, &graphs, &[kind], &out)
            })?
            .map_err(stage_err)?;
            io::write_csv(&index, &previous).map_err(stage_err)?;
            let all = pipeline::merge_index(&out, &rows).map_err(stage_err)?;
            eprintln!(
                "{} trajectories written, {} listed in {}",
                rows.len(),
                all.len(),
                index.display()
            );
            Ok(())
        }
        Command::Analyze {
            config,
            trajs,
            states,
            mspcp,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let space = io::read_states(&states, &cfg.model.theta).map_err(stage_err)?;
            let reference = io::read_path(&mspcp).map_err(stage_err)?;
            let rows = pipeline::with_pool(&cfg, || pipeline::analyze_stage(&cfg, &space, &reference, &trajs, &out))?
                .map_err(stage_err)?;
            eprintln!("{} trajectories analyzed, results in {}", rows.len(), out.display());
            Ok(())
        }
        Command::Pipeline { config, force, stage } => {
            let cfg = RunConfig::load(&config)?;
            let opts = RunOptions { force, only: stage };
            match pipeline::run_pipeline(&cfg, opts) {
                Ok(manifest) => {
                    for s in &manifest.stages {
                        eprintln!("{:<8} {:?} {:.1}s", s.stage.as_str(), s.status, s.seconds);
                    }
                    Ok(())
                }
                Err(PipelineError::Config(e)) => Err(e.into()),
                Err(e) => Err(stage_err(e)),
            }
        }
    }
}

/// The error chain on one line, leaving out causes already quoted by the
/// message above them.
fn report(e: &anyhow::Error) -> String {
    let mut line = e.to_string();
    let mut last = line.clone();
    for cause in e.chain().skip(1) {
        let text = cause.to_string();
        if !last.contains(&text) {
            line.push_str(": ");
            line.push_str(&text);
        }
        last = text;
    }
    line
}

fn main() -> ExitCode {
    let (e, code) = match run(Cli::parse()) {
        Ok(()) => return ExitCode::SUCCESS,
        Err(Failure::Config(e)) => (e, 2),
        Err(Failure::Stage(e)) => (e, 3),
    };
    eprintln!("error: {}", report(&e));
    ExitCode::from(code)
}
