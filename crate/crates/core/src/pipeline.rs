//! The five-stage experiment: sample, states, mspcp, egp-run, analyze.
//!
//! Every stage reads its inputs from and writes its outputs to the run
//! directory as plain CSV, so stages can be rerun or inspected one by one:
//!
//! ```text
//! <out>/seeds.txt  visits.csv  moves.csv                       sample
//! <out>/states.csv transitions.csv aligned.csv summary.csv     states
//! <out>/mspcp.csv                                              mspcp
//! <out>/egp/source_graphs.txt <kind>/traj_<k>.csv index.csv    egp-run
//! <out>/analysis/paths.csv curves_mean_<egp>_<class>.csv lengths.csv
//! <out>/manifest.json
//! ```
//!
//! A stage is skipped when its last-written output already exists.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{self, classify_path, prune_to_path, PathLabel};
use crate::change_path::{mspcp, ChangePath, HighRoad};
use crate::config::RunConfig;
use crate::egp::{simulate_until_target, EgpKind, EgpVariant, Trajectory};
use crate::error::{ConfigError, Error, IoError};
use crate::graph::{Attr, Graph, NodeAttributeTable};
use crate::io::{self, TrajectoryMeta};
use crate::mcmc::{rejection_sample_state, run_recording_chain, sample_heated_seeds};
use crate::potential::StatVector;
use crate::rng::{stream, Purpose};
use crate::state_space::{StateId, StateRecord, StateSpace};

/// Full-scale reference values, recorded in the manifest for comparison.
pub const REFERENCE_STATES: usize = 164_462;
pub const REFERENCE_MEAN_DEGREE: f64 = 6.7;
pub const REFERENCE_OBSERVATIONS: u64 = 1_000_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Sample,
    States,
    Mspcp,
    EgpRun,
    Analyze,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Sample,
        Stage::States,
        Stage::Mspcp,
        Stage::EgpRun,
        Stage::Analyze,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Sample => "sample",
            Stage::States => "states",
            Stage::Mspcp => "mspcp",
            Stage::EgpRun => "egp-run",
            Stage::Analyze => "analyze",
        }
    }

    /// The file whose presence marks the stage as complete.
    pub fn marker(self, out: &Path) -> PathBuf {
        match self {
            Stage::Sample => out.join("visits.csv"),
            Stage::States => out.join("summary.csv"),
            Stage::Mspcp => out.join("mspcp.csv"),
            Stage::EgpRun => out.join("egp").join("index.csv"),
            Stage::Analyze => out.join("analysis").join("lengths.csv"),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage {s:?}, expected one of sample, states, mspcp, egp-run, analyze"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageStatus {
    Done,
    Skipped,
    Failed,
    NotRun,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub status: StageStatus,
    pub seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub states: usize,
    pub mean_degree: f64,
    pub observations: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub threads: usize,
    pub observations: u64,
    pub full_scale: bool,
    pub reference: Reference,
    pub stages: Vec<StageRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<Stage>,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("stage {stage} failed")]
    Stage {
        stage: Stage,
        #[source]
        source: Error,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub force: bool,
    /// Run only this stage.
    pub only: Option<Stage>,
}

/// Worker count: `TST_THREADS` if set, else the config, else all cores.
pub fn thread_count(cfg: &RunConfig) -> Result<usize, ConfigError> {
    match std::env::var("TST_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(ConfigError::Invalid(format!(
                "TST_THREADS = {v:?} is not a positive integer"
            ))),
        },
        Err(_) => Ok(cfg
            .threads
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))),
    }
}

/// Runs `f` inside a rayon pool of the configured size.
pub fn with_pool<T: Send>(cfg: &RunConfig, f: impl FnOnce() -> T + Send) -> Result<T, ConfigError> {
    let threads = thread_count(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(pool.install(f))
}

/// Runs the pipeline and writes `manifest.json`, also when a stage fails.
pub fn run_pipeline(cfg: &RunConfig, opts: RunOptions) -> Result<Manifest, PipelineError> {
    cfg.validate()?;
    let attrs = cfg.attributes()?;
    let threads = thread_count(cfg)?;
    let out = cfg.out.clone();
    std::fs::create_dir_all(&out).map_err(|e| PipelineError::Stage {
        stage: Stage::Sample,
        source: IoError::io(&out, e).into(),
    })?;
    if !opts.force {
        if let Some(previous) = read_manifest(&out) {
            if previous.config_hash != cfg.hash() {
                return Err(ConfigError::Invalid(format!(
                    "{} holds outputs of a different config (hash {}); rerun with --force",
                    out.display(),
                    previous.config_hash
                ))
                .into());
            }
        }
    }
    let mut manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: cfg.hash(),
        seed: cfg.sampling.seed,
        threads,
        observations: cfg.sampling.observations(),
        full_scale: cfg.is_full_scale(),
        reference: Reference {
            states: REFERENCE_STATES,
            mean_degree: REFERENCE_MEAN_DEGREE,
            observations: REFERENCE_OBSERVATIONS,
        },
        stages: Vec::new(),
        failed_stage: None,
    };
    let mut failure = None;
    for stage in Stage::ALL {
        let wanted = opts.only.is_none_or(|s| s == stage);
        let record = |status, seconds, error| StageRecord {
            stage,
            status,
            seconds,
            error,
        };
        if failure.is_some() || !wanted {
            manifest.stages.push(record(StageStatus::NotRun, 0.0, None));
            continue;
        }
        if !opts.force && stage.marker(&out).exists() {
            manifest.stages.push(record(StageStatus::Skipped, 0.0, None));
            continue;
        }
        let start = Instant::now();
        let result = with_pool(cfg, || run_stage(stage, cfg, &attrs))?;
        let seconds = start.elapsed().as_secs_f64();
        match result {
            Ok(()) => manifest.stages.push(record(StageStatus::Done, seconds, None)),
            Err(e) => {
                manifest
                    .stages
                    .push(record(StageStatus::Failed, seconds, Some(e.to_string())));
                manifest.failed_stage = Some(stage);
                failure = Some(PipelineError::Stage { stage, source: e });
            }
        }
    }
    let written = write_manifest(&out, &manifest);
    if let Some(f) = failure {
        return Err(f);
    }
    written.map_err(|e| PipelineError::Stage {
        stage: Stage::Analyze,
        source: e.into(),
    })?;
    Ok(manifest)
}

/// The manifest of an earlier run in `out`, if one is readable.
pub fn read_manifest(out: &Path) -> Option<Manifest> {
    let text = std::fs::read_to_string(out.join("manifest.json")).ok()?;
    serde_json::from_str(&text).ok()
}

fn write_manifest(out: &Path, manifest: &Manifest) -> Result<(), IoError> {
    let path = out.join("manifest.json");
    io::write_atomic(&path, |w| {
        serde_json::to_writer_pretty(&mut *w, manifest).map_err(std::io::Error::from)?;
        writeln!(w)
    })
}

fn run_stage(stage: Stage, cfg: &RunConfig, attrs: &NodeAttributeTable) -> Result<(), Error> {
    let out = &cfg.out;
    match stage {
        Stage::Sample => {
            sample_stage(cfg, attrs, out)?;
        }
        Stage::States => {
            states_stage(cfg, out)?;
        }
        Stage::Mspcp => {
            let space = io::read_states(out, &cfg.model.theta)?;
            let (source, target) = aligned_ids(out)?;
            let path = mspcp_stage(&space, source, target, cfg)?;
            io::write_path(&out.join("mspcp.csv"), &path)?;
        }
        Stage::EgpRun => {
            let space = io::read_states(out, &cfg.model.theta)?;
            let (source, target) = aligned_ids(out)?;
            let source = space.get(source)?.clone();
            let target = space.get(target)?.clone();
            let dir = out.join("egp");
            std::fs::create_dir_all(&dir).map_err(|e| IoError::io(&dir, e))?;
            let seeds = source_graphs(cfg, attrs, &source)?;
            io::write_graphs(&dir.join("source_graphs.txt"), &seeds)?;
            run_trajectories(cfg, attrs, &space, &source, &target, &seeds, &cfg.egp.kinds(), &dir)?;
        }
        Stage::Analyze => {
            let space = io::read_states(out, &cfg.model.theta)?;
            let reference = io::read_path(&out.join("mspcp.csv"))?;
            analyze_stage(cfg, &space, &reference, &out.join("egp"), &out.join("analysis"))?;
        }
    }
    Ok(())
}

/// Heated seeds, then one recording chain per seed; the merged occupancy
/// counts and moves are written to `out`.
pub fn sample_stage(cfg: &RunConfig, attrs: &NodeAttributeTable, out: &Path) -> Result<StateSpace, Error> {
    let s = &cfg.sampling;
    let theta = cfg.model.theta;
    let chain_cfg = s.chain_config();
    let seeds = sample_heated_seeds(&theta, attrs, &chain_cfg, s.chains)?;
    std::fs::create_dir_all(out).map_err(|e| IoError::io(out, e))?;
    io::write_graphs(&out.join("seeds.txt"), &seeds)?;
    let spaces: Vec<StateSpace> = seeds
        .into_par_iter()
        .enumerate()
        .map(|(k, g)| {
            let mut space = StateSpace::new(theta);
            let mut rng = stream(s.seed, Purpose::Recording, k as u64);
            run_recording_chain(g, &theta, attrs, s.steps, &mut space, &mut rng);
            space
        })
        .collect();
    let mut space = StateSpace::new(theta);
    for part in &spaces {
        space.merge(part);
    }
    io::write_visits(out, &space)?;
    Ok(space)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct AlignedRow {
    role: String,
    id: StateId,
    t_e: u32,
    t_2s: u32,
    t_m1: u32,
    t_m2: u32,
    t_d1: u32,
    t_d2: u32,
    count: u64,
    logp: f64,
}

impl AlignedRow {
    fn new(role: &str, r: &StateRecord) -> Self {
        let [t_e, t_2s, t_m1, t_m2, t_d1, t_d2] = r.stats.to_array();
        AlignedRow {
            role: role.into(),
            id: r.id,
            t_e,
            t_2s,
            t_m1,
            t_m2,
            t_d1,
            t_d2,
            count: r.count,
            logp: r.logp,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SummaryRow {
    key: String,
    value: String,
}

/// Finalizes state probabilities, writes the state tables and the chosen
/// source (B1-aligned) and target (B2-aligned) states.
pub fn states_stage(cfg: &RunConfig, out: &Path) -> Result<StateSpace, Error> {
    let mut space = io::read_visits(out, &cfg.model.theta)?;
    space.finalize_probs()?;
    io::write_states(out, &space)?;
    let (source, target) = space.find_aligned_states(cfg.alignment.hi, cfg.alignment.lo)?;
    let rows = vec![AlignedRow::new("source", source), AlignedRow::new("target", target)];
    io::write_csv(&out.join("aligned.csv"), &rows)?;
    let summary = [
        ("states", space.len().to_string()),
        ("transitions", space.transitions().edge_count().to_string()),
        ("mean_degree", format!("{:.6}", space.mean_degree())),
        ("observations", space.total().to_string()),
        ("source_id", source.id.to_string()),
        ("target_id", target.id.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| SummaryRow {
        key: k.into(),
        value: v,
    })
    .collect::<Vec<_>>();
    io::write_csv(&out.join("summary.csv"), &summary)?;
    Ok(space)
}

/// Source and target ids from `aligned.csv`.
pub fn aligned_ids(dir: &Path) -> Result<(StateId, StateId), IoError> {
    let path = dir.join("aligned.csv");
    let rows: Vec<AlignedRow> = io::read_csv(&path)?;
    let find = |role: &str| {
        rows.iter()
            .find(|r| r.role == role)
            .map(|r| r.id)
            .ok_or_else(|| IoError::parse(&path, 1, format!("no {role} row")))
    };
    Ok((find("source")?, find("target")?))
}

/// The annotated maximum state probability change path.
pub fn mspcp_stage(space: &StateSpace, source: StateId, target: StateId, cfg: &RunConfig) -> Result<ChangePath, Error> {
    let mut path = mspcp(space, source, target, cfg.analysis.weight)?;
    path.annotate(cfg.analysis.smooth)?;
    Ok(path)
}

/// Graphs in the source state, drawn by rejection from a chain started at
/// the B1-aligned graph.
pub fn source_graphs(cfg: &RunConfig, attrs: &NodeAttributeTable, source: &StateRecord) -> Result<Vec<Graph>, Error> {
    let want = source.stats;
    let mut rng = stream(cfg.sampling.seed, Purpose::Rejection, 0);
    Ok(rejection_sample_state(
        &cfg.model.theta,
        attrs,
        attrs.aligned_graph(Attr::B1),
        |s| *s == want,
        cfg.egp.trajectories,
        &cfg.egp.rejection,
        &mut rng,
    )?)
}

/// Stream index of trajectory `k` of `variant`: fixed by the variant's
/// position in [`EgpVariant::ALL`], so it does not depend on which kinds a
/// run includes.
pub fn egp_stream_index(variant: EgpVariant, trajectories: usize, k: usize) -> u64 {
    let pos = EgpVariant::ALL.iter().position(|&v| v == variant).unwrap_or(0);
    (pos * trajectories + k) as u64
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IndexRow {
    pub egp: EgpVariant,
    pub traj_id: usize,
    pub file: String,
    pub events: usize,
    pub source_id: StateId,
    pub target_id: StateId,
}

/// Simulates one trajectory per (kind, seed graph) from source to target,
/// writing `<dir>/<kind>/traj_<k>.csv` for each and `<dir>/index.csv` last.
#[allow(clippy::too_many_arguments)]
pub fn run_trajectories(
    cfg: &RunConfig,
    attrs: &NodeAttributeTable,
    space: &StateSpace,
    source: &StateRecord,
    target: &StateRecord,
    seeds: &[Graph],
    kinds: &[EgpKind],
    dir: &Path,
) -> Result<Vec<IndexRow>, Error> {
    for kind in kinds {
        let sub = dir.join(kind.variant.as_str());
        std::fs::create_dir_all(&sub).map_err(|e| IoError::io(&sub, e))?;
    }
    let jobs: Vec<(EgpKind, usize)> = kinds
        .iter()
        .flat_map(|&kind| (0..seeds.len()).map(move |k| (kind, k)))
        .collect();
    let rows = jobs
        .into_par_iter()
        .map(|(kind, k)| -> Result<IndexRow, Error> {
            let index = egp_stream_index(kind.variant, seeds.len(), k);
            let mut rng = stream(cfg.sampling.seed, Purpose::Egp, index);
            let traj = simulate_until_target(
                kind,
                seeds[k].clone(),
                &cfg.model.theta,
                attrs,
                source.stats,
                target.stats,
                cfg.egp.event_budget,
                &mut rng,
            )?;
            let file = format!("{}/traj_{k}.csv", kind.variant.as_str());
            let meta = TrajectoryMeta {
                kind,
                seed: cfg.sampling.seed,
                stream: index,
                source_id: source.id,
                target_id: target.id,
            };
            io::write_trajectory(&dir.join(&file), &meta, &traj, space)?;
            Ok(IndexRow {
                egp: kind.variant,
                traj_id: k,
                file,
                events: traj.len(),
                source_id: source.id,
                target_id: target.id,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    io::write_csv(&dir.join("index.csv"), &rows)?;
    Ok(rows)
}

/// Rewrites `<dir>/index.csv` as the union of its current rows and `rows`,
/// with `rows` replacing earlier entries for the same process.
pub fn merge_index(dir: &Path, rows: &[IndexRow]) -> Result<Vec<IndexRow>, IoError> {
    let path = dir.join("index.csv");
    let mut all: Vec<IndexRow> = if path.exists() {
        io::read_csv(&path)?
    } else {
        Vec::new()
    };
    all.retain(|r| rows.iter().all(|n| n.egp != r.egp));
    all.extend_from_slice(rows);
    all.sort_by_key(|r| (r.egp, r.traj_id));
    io::write_csv(&path, &all)?;
    Ok(all)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathRow {
    pub traj_id: usize,
    pub egp: EgpVariant,
    pub class: PathLabel,
    pub path_len: usize,
    pub walk_len: usize,
    pub neutral_edge_count: u32,
    pub tau: f64,
    /// Connected components of the graph at the neutral point.
    pub neutral_components: usize,
    pub high_road: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthRow {
    pub egp: EgpVariant,
    pub kind: String,
    pub n: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub notch_lo: f64,
    pub notch_hi: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CurveRow {
    coord: f64,
    q: f64,
    n_t_e: f64,
    n_t_2s: f64,
    n_t_m1: f64,
    n_t_m2: f64,
    n_t_d1: f64,
    n_t_d2: f64,
}

/// One simulated trajectory reduced to its change path.
#[derive(Clone, Debug)]
pub struct Analyzed {
    pub row: PathRow,
    pub path: ChangePath,
}

fn analyze_one(
    egp: EgpVariant,
    traj_id: usize,
    traj: &Trajectory,
    source: &StatVector,
    target: &StatVector,
    space: &StateSpace,
    reference: &ChangePath,
) -> Result<Analyzed, Error> {
    let path = prune_to_path(traj, source, target, space)?;
    let class = classify_path(&path, reference)?;
    let neutral = path.states[class.neutral_index].stats;
    // first visit of the neutral state along the walk
    let visit = traj.states().iter().position(|s| *s == neutral).unwrap_or(0);
    let neutral_components = traj.graph_at(visit).map_or(0, |g| g.component_count());
    let row = PathRow {
        traj_id,
        egp,
        class: class.label,
        path_len: path.len() - 1,
        walk_len: traj.len(),
        neutral_edge_count: class.neutral_edges,
        tau: class.tau,
        neutral_components,
        high_road: HighRoad::evaluate(&path).holds(),
    };
    Ok(Analyzed { row, path })
}

/// Prunes, classifies and aligns every trajectory listed in
/// `<trajs>/index.csv`, writing `paths.csv`, the mean curves per process and
/// class, and `lengths.csv` into `out`.
pub fn analyze_stage(
    cfg: &RunConfig,
    space: &StateSpace,
    reference: &ChangePath,
    trajs: &Path,
    out: &Path,
) -> Result<Vec<Analyzed>, Error> {
    std::fs::create_dir_all(out).map_err(|e| IoError::io(out, e))?;
    let index: Vec<IndexRow> = io::read_csv(&trajs.join("index.csv"))?;
    let loaded = index
        .par_iter()
        .map(|row| -> Result<(Trajectory, Analyzed), Error> {
            let (meta, traj) = io::read_trajectory(&trajs.join(&row.file))?;
            let source = space.get(meta.source_id)?.stats;
            let target = space.get(meta.target_id)?.stats;
            let a = analyze_one(row.egp, row.traj_id, &traj, &source, &target, space, reference)?;
            Ok((traj, a))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<PathRow> = loaded.iter().map(|(_, a)| a.row.clone()).collect();
    io::write_csv(&out.join("paths.csv"), &rows)?;

    let mut egps: Vec<EgpVariant> = rows.iter().map(|r| r.egp).collect();
    egps.sort();
    egps.dedup();
    let opts = cfg.analysis.align_options();
    let mut lengths = Vec::new();
    for &egp in &egps {
        for label in [PathLabel::Primary, PathLabel::Secondary] {
            let group: Vec<ChangePath> = loaded
                .iter()
                .filter(|(_, a)| a.row.egp == egp && a.row.class == label)
                .map(|(_, a)| a.path.clone())
                .collect();
            if group.is_empty() {
                continue;
            }
            let aligned = analysis::align(&group, &opts)?;
            let mean = analysis::mean_curves(&aligned.curves)?;
            write_curve(&out.join(format!("curves_mean_{egp}_{label}.csv")), &mean)?;
        }
        let (trajs_of, paths_of): (Vec<Trajectory>, Vec<ChangePath>) = loaded
            .iter()
            .filter(|(_, a)| a.row.egp == egp)
            .map(|(t, a)| (t.clone(), a.path.clone()))
            .unzip();
        let stats = analysis::length_stats(&trajs_of, &paths_of)?;
        for (kind, s) in [("walk", stats.walk), ("path", stats.path), ("ratio", stats.ratio)] {
            lengths.push(LengthRow {
                egp,
                kind: kind.into(),
                n: s.n,
                median: s.median,
                q1: s.q1,
                q3: s.q3,
                notch_lo: s.notch_lo,
                notch_hi: s.notch_hi,
            });
        }
    }
    io::write_csv(&out.join("lengths.csv"), &lengths)?;
    Ok(loaded.into_iter().map(|(_, a)| a).collect())
}

fn write_curve(path: &Path, c: &analysis::AlignedCurve) -> Result<(), IoError> {
    let rows: Vec<CurveRow> = c
        .grid
        .iter()
        .zip(&c.q)
        .zip(&c.stats)
        .map(|((&coord, &q), s)| CurveRow {
            coord,
            q,
            n_t_e: s[0],
            n_t_2s: s[1],
            n_t_m1: s[2],
            n_t_m2: s[3],
            n_t_d1: s[4],
            n_t_d2: s[5],
        })
        .collect();
    io::write_csv(path, &rows)
}
