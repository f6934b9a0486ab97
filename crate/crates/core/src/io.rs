//! Plain-text artifacts: edge-list graph files, attribute tables, state and
//! transition tables, change paths and trajectory files.
//!
//! Every writer goes through a temporary file that is renamed into place, so
//! an existing output file is always complete.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::change_path::{normalize_columns, ChangePath, Milestone, PathState};
use crate::egp::{EgpKind, EgpVariant, Event, Trajectory};
use crate::error::IoError;
use crate::graph::{Dyad, Graph, NodeAttributeTable};
use crate::potential::{potential, StatVector, Theta};
use crate::state_space::{StateId, StateRecord, StateSpace};

/// Writes `path` by filling a temporary sibling and renaming it.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<(), IoError>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let file = File::create(&tmp).map_err(|e| IoError::io(&tmp, e))?;
    let mut w = BufWriter::new(file);
    fill(&mut w).and_then(|_| w.flush()).map_err(|e| IoError::io(&tmp, e))?;
    drop(w);
    fs::rename(&tmp, path).map_err(|e| IoError::io(path, e))
}

/// Serializes `rows` as a CSV table with a header line.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), IoError> {
    write_atomic(path, |w| write_csv_rows(w, rows))
}

fn write_csv_rows<T: Serialize, W: Write>(w: &mut W, rows: &[T]) -> std::io::Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    for r in rows {
        csv.serialize(r).map_err(std::io::Error::other)?;
    }
    csv.flush()
}

/// Reads a CSV table with a header line; lines starting with `#` are skipped.
pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, IoError> {
    let file = File::open(path).map_err(|e| IoError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    rdr.deserialize()
        .enumerate()
        .map(|(k, r)| r.map_err(|e| IoError::parse(path, k + 2, e.to_string())))
        .collect()
}

/// Writes graphs as edge lists, each introduced by an `n=<N>` line.
pub fn write_graphs(path: &Path, graphs: &[Graph]) -> Result<(), IoError> {
    write_atomic(path, |w| {
        for (k, g) in graphs.iter().enumerate() {
            if k > 0 {
                writeln!(w)?;
            }
            writeln!(w, "n={}", g.n())?;
            for (i, j) in g.edge_list() {
                writeln!(w, "{i} {j}")?;
            }
        }
        Ok(())
    })
}

/// Parses one or more edge-list graphs. A `base=1` line after a header marks
/// that graph's node labels as 1-based; `#` starts a comment.
pub fn parse_graphs(text: &str, path: &Path) -> Result<Vec<Graph>, IoError> {
    let mut graphs = Vec::new();
    let mut current: Option<(Graph, usize)> = None;
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let lineno = k + 1;
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| IoError::parse(path, lineno, msg);
        if let Some(v) = line.strip_prefix("n=") {
            let n: usize = v.trim().parse().map_err(|_| bad(format!("bad node count {v:?}")))?;
            graphs.extend(current.take().map(|(g, _)| g));
            current = Some((Graph::empty(n), 0));
            continue;
        }
        let Some((g, base)) = current.as_mut() else {
            return Err(bad("edge before the n=<N> header".into()));
        };
        if let Some(v) = line.strip_prefix("base=") {
            *base = match v.trim() {
                "0" => 0,
                "1" => 1,
                other => return Err(bad(format!("base must be 0 or 1, got {other:?}"))),
            };
            continue;
        }
        let mut it = line.split_whitespace();
        let mut node = || -> Result<usize, IoError> {
            let tok = it.next().ok_or_else(|| bad("expected two node labels".into()))?;
            let v: usize = tok.parse().map_err(|_| bad(format!("bad node label {tok:?}")))?;
            v.checked_sub(*base)
                .ok_or_else(|| bad(format!("node label {v} below base {base}")))
        };
        let (i, j) = (node()?, node()?);
        if it.next().is_some() {
            return Err(bad("expected two node labels".into()));
        }
        let d = g.dyad(i, j).map_err(|e| bad(e.to_string()))?;
        if g.has_edge(d) {
            return Err(bad(format!("duplicate edge {d}")));
        }
        g.toggle(d).map_err(|e| bad(e.to_string()))?;
    }
    graphs.extend(current.map(|(g, _)| g));
    Ok(graphs)
}

pub fn read_graphs(path: &Path) -> Result<Vec<Graph>, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse_graphs(&text, path)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct AttributeRow {
    node: usize,
    b1: u8,
    b2: u8,
}

/// Reads a `node,b1,b2` table. Labels must cover `0..n` or `1..=n`.
pub fn read_attributes(path: &Path) -> Result<NodeAttributeTable, IoError> {
    let rows: Vec<AttributeRow> = read_csv(path)?;
    let n = rows.len();
    let base = rows.iter().map(|r| r.node).min().unwrap_or(0);
    if base > 1 {
        return Err(IoError::parse(path, 2, format!("node labels start at {base}")));
    }
    let mut b1 = vec![None; n];
    let mut b2 = vec![0; n];
    for (k, r) in rows.iter().enumerate() {
        let node = r.node - base;
        if node >= n || b1[node].is_some() {
            return Err(IoError::parse(
                path,
                k + 2,
                format!("node {} missing or repeated", r.node),
            ));
        }
        b1[node] = Some(r.b1);
        b2[node] = r.b2;
    }
    let b1 = b1.into_iter().map(|v| v.unwrap_or_default()).collect();
    NodeAttributeTable::new(b1, b2).map_err(|e| IoError::parse(path, 2, e.to_string()))
}

pub fn write_attributes(path: &Path, a: &NodeAttributeTable) -> Result<(), IoError> {
    use crate::graph::Attr;
    let rows: Vec<AttributeRow> = (0..a.n())
        .map(|node| AttributeRow {
            node,
            b1: a.value(Attr::B1, node),
            b2: a.value(Attr::B2, node),
        })
        .collect();
    write_csv(path, &rows)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct StateRow {
    id: StateId,
    t_e: u32,
    t_2s: u32,
    t_m1: u32,
    t_m2: u32,
    t_d1: u32,
    t_d2: u32,
    count: u64,
    q: f64,
    logp: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct VisitRow {
    id: StateId,
    t_e: u32,
    t_2s: u32,
    t_m1: u32,
    t_m2: u32,
    t_d1: u32,
    t_d2: u32,
    count: u64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct TransitionRow {
    src_id: StateId,
    dst_id: StateId,
}

fn stat_array<T: Copy>(s: &StatVector, f: impl Fn(u32) -> T) -> [T; 6] {
    s.to_array().map(f)
}

fn transition_rows(space: &StateSpace) -> Vec<TransitionRow> {
    space
        .transitions()
        .edges()
        .map(|(src_id, dst_id)| TransitionRow { src_id, dst_id })
        .collect()
}

fn read_transitions(path: &Path) -> Result<Vec<(StateId, StateId)>, IoError> {
    let rows: Vec<TransitionRow> = read_csv(path)?;
    Ok(rows.into_iter().map(|r| (r.src_id, r.dst_id)).collect())
}

/// Raw occupancy counts and observed moves, before probabilities are set.
pub fn write_visits(dir: &Path, space: &StateSpace) -> Result<(), IoError> {
    let rows: Vec<VisitRow> = space
        .records()
        .iter()
        .map(|r| {
            let [t_e, t_2s, t_m1, t_m2, t_d1, t_d2] = stat_array(&r.stats, |v| v);
            VisitRow {
                id: r.id,
                t_e,
                t_2s,
                t_m1,
                t_m2,
                t_d1,
                t_d2,
                count: r.count,
            }
        })
        .collect();
    write_csv(&dir.join("moves.csv"), &transition_rows(space))?;
    write_csv(&dir.join("visits.csv"), &rows)
}

pub fn read_visits(dir: &Path, theta: &Theta) -> Result<StateSpace, IoError> {
    let path = dir.join("visits.csv");
    let rows: Vec<VisitRow> = read_csv(&path)?;
    let records = rows
        .into_iter()
        .map(|r| {
            let stats = StatVector::from_array([r.t_e, r.t_2s, r.t_m1, r.t_m2, r.t_d1, r.t_d2]);
            StateRecord {
                id: r.id,
                stats,
                count: r.count,
                q: potential(theta, &stats),
                logp: f64::NAN,
            }
        })
        .collect();
    let edges = read_transitions(&dir.join("moves.csv"))?;
    StateSpace::from_parts(*theta, records, edges).map_err(|e| IoError::parse(&path, 2, e.to_string()))
}

/// Writes `states.csv` and `transitions.csv` into `dir`.
pub fn write_states(dir: &Path, space: &StateSpace) -> Result<(), IoError> {
    let rows: Vec<StateRow> = space
        .records()
        .iter()
        .map(|r| {
            let [t_e, t_2s, t_m1, t_m2, t_d1, t_d2] = stat_array(&r.stats, |v| v);
            StateRow {
                id: r.id,
                t_e,
                t_2s,
                t_m1,
                t_m2,
                t_d1,
                t_d2,
                count: r.count,
                q: r.q,
                logp: r.logp,
            }
        })
        .collect();
    write_csv(&dir.join("transitions.csv"), &transition_rows(space))?;
    write_csv(&dir.join("states.csv"), &rows)
}

pub fn read_states(dir: &Path, theta: &Theta) -> Result<StateSpace, IoError> {
    let path = dir.join("states.csv");
    let rows: Vec<StateRow> = read_csv(&path)?;
    let records = rows
        .into_iter()
        .map(|r| StateRecord {
            id: r.id,
            stats: StatVector::from_array([r.t_e, r.t_2s, r.t_m1, r.t_m2, r.t_d1, r.t_d2]),
            count: r.count,
            q: r.q,
            logp: r.logp,
        })
        .collect();
    let edges = read_transitions(&dir.join("transitions.csv"))?;
    StateSpace::from_parts(*theta, records, edges).map_err(|e| IoError::parse(&path, 2, e.to_string()))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct PathRowOut {
    coord: f64,
    id: i64,
    t_e: u32,
    t_2s: u32,
    t_m1: u32,
    t_m2: u32,
    t_d1: u32,
    t_d2: u32,
    q: f64,
    logp: f64,
    milestone: Milestone,
    n_t_e: f64,
    n_t_2s: f64,
    n_t_m1: f64,
    n_t_m2: f64,
    n_t_d1: f64,
    n_t_d2: f64,
}

/// Writes a change path with its milestones and max-normalized statistics.
pub fn write_path(path: &Path, cp: &ChangePath) -> Result<(), IoError> {
    let raw: Vec<[f64; 6]> = cp.stats().map(|s| stat_array(s, f64::from)).collect();
    let norm = normalize_columns(&raw);
    let rows: Vec<PathRowOut> = cp
        .states
        .iter()
        .enumerate()
        .map(|(k, st)| {
            let [t_e, t_2s, t_m1, t_m2, t_d1, t_d2] = stat_array(&st.stats, |v| v);
            let [n_t_e, n_t_2s, n_t_m1, n_t_m2, n_t_d1, n_t_d2] = norm[k];
            PathRowOut {
                coord: cp.coords[k],
                id: st.id.map_or(-1, i64::from),
                t_e,
                t_2s,
                t_m1,
                t_m2,
                t_d1,
                t_d2,
                q: st.q,
                logp: st.logp,
                milestone: cp.milestones[k],
                n_t_e,
                n_t_2s,
                n_t_m1,
                n_t_m2,
                n_t_d1,
                n_t_d2,
            }
        })
        .collect();
    write_csv(path, &rows)
}

/// Reads a change path written by [`write_path`], milestones included.
pub fn read_path(path: &Path) -> Result<ChangePath, IoError> {
    let rows: Vec<PathRowOut> = read_csv(path)?;
    let states = rows
        .iter()
        .map(|r| PathState {
            id: StateId::try_from(r.id).ok(),
            stats: StatVector::from_array([r.t_e, r.t_2s, r.t_m1, r.t_m2, r.t_d1, r.t_d2]),
            q: r.q,
            logp: r.logp,
        })
        .collect();
    let mut cp = ChangePath::new(states);
    cp.milestones = rows.iter().map(|r| r.milestone).collect();
    Ok(cp)
}

/// Header of a trajectory file.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryMeta {
    pub kind: EgpKind,
    /// Master seed of the run.
    pub seed: u64,
    /// Index of the random stream derived from the master seed.
    pub stream: u64,
    pub source_id: StateId,
    pub target_id: StateId,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct EventRow {
    time: f64,
    i: usize,
    j: usize,
    state_id: i64,
    t_e: u32,
    t_2s: u32,
    t_m1: u32,
    t_m2: u32,
    t_d1: u32,
    t_d2: u32,
}

/// Writes `# key=value` header lines followed by one CSV row per event.
/// `state_id` is -1 for states absent from `space`.
pub fn write_trajectory(
    path: &Path,
    meta: &TrajectoryMeta,
    traj: &Trajectory,
    space: &StateSpace,
) -> Result<(), IoError> {
    let rows: Vec<EventRow> = traj
        .events
        .iter()
        .map(|e| {
            let [t_e, t_2s, t_m1, t_m2, t_d1, t_d2] = stat_array(&e.stats, |v| v);
            EventRow {
                time: e.time,
                i: e.dyad.i(),
                j: e.dyad.j(),
                state_id: space.id_of(&e.stats).map_or(-1, i64::from),
                t_e,
                t_2s,
                t_m1,
                t_m2,
                t_d1,
                t_d2,
            }
        })
        .collect();
    let start = traj.start.to_array().map(|v| v.to_string()).join(",");
    write_atomic(path, |w| {
        writeln!(w, "# kind={}", meta.kind.variant)?;
        writeln!(w, "# nu={}", meta.kind.nu)?;
        writeln!(w, "# seed={}", meta.seed)?;
        writeln!(w, "# stream={}", meta.stream)?;
        writeln!(w, "# source_id={}", meta.source_id)?;
        writeln!(w, "# target_id={}", meta.target_id)?;
        writeln!(w, "# t0={}", traj.t0)?;
        writeln!(w, "# start={start}")?;
        if let Some(g) = &traj.origin {
            writeln!(w, "# origin={}", edge_field(g))?;
        }
        write_csv_rows(w, &rows)
    })
}

/// `n:i-j i-j ...` on one line.
fn edge_field(g: &Graph) -> String {
    let edges: Vec<String> = g.edge_list().iter().map(|(i, j)| format!("{i}-{j}")).collect();
    format!("{}:{}", g.n(), edges.join(" "))
}

fn parse_edge_field(v: &str) -> Option<Graph> {
    let (n, rest) = v.split_once(':')?;
    let mut g = Graph::empty(n.trim().parse().ok()?);
    for tok in rest.split_whitespace() {
        let (i, j) = tok.split_once('-')?;
        let d = g.dyad(i.parse().ok()?, j.parse().ok()?).ok()?;
        if g.has_edge(d) {
            return None;
        }
        g.toggle(d).ok()?;
    }
    Some(g)
}

pub fn read_trajectory(path: &Path) -> Result<(TrajectoryMeta, Trajectory), IoError> {
    let file = File::open(path).map_err(|e| IoError::io(path, e))?;
    let mut header = std::collections::BTreeMap::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| IoError::io(path, e))?;
        let Some(rest) = line.strip_prefix('#') else {
            break;
        };
        let (key, value) = rest
            .trim()
            .split_once('=')
            .ok_or_else(|| IoError::parse(path, k + 1, "expected # key=value"))?;
        header.insert(key.trim().to_string(), (k + 1, value.trim().to_string()));
    }
    fn field<T: std::str::FromStr>(
        path: &Path,
        header: &std::collections::BTreeMap<String, (usize, String)>,
        key: &str,
    ) -> Result<T, IoError> {
        let (line, v) = header
            .get(key)
            .ok_or_else(|| IoError::parse(path, 1, format!("missing header {key}")))?;
        v.parse()
            .map_err(|_| IoError::parse(path, *line, format!("bad value for {key}: {v:?}")))
    }
    let variant: EgpVariant = field(path, &header, "kind")?;
    let nu: f64 = field(path, &header, "nu")?;
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(IoError::parse(path, 1, format!("nu must be positive, got {nu}")));
    }
    let meta = TrajectoryMeta {
        kind: EgpKind::new(variant, nu),
        seed: field(path, &header, "seed")?,
        stream: field(path, &header, "stream")?,
        source_id: field(path, &header, "source_id")?,
        target_id: field(path, &header, "target_id")?,
    };
    let t0: f64 = field(path, &header, "t0")?;
    let start: String = field(path, &header, "start")?;
    let start: Vec<u32> = start
        .split(',')
        .map(|v| v.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|_| IoError::parse(path, 1, "bad start statistics"))?;
    let start: [u32; 6] = start
        .try_into()
        .map_err(|_| IoError::parse(path, 1, "start needs six statistics"))?;
    let rows: Vec<EventRow> = read_csv(path)?;
    let events = rows
        .into_iter()
        .enumerate()
        .map(|(k, r)| {
            Ok(Event {
                time: r.time,
                dyad: Dyad::new(r.i, r.j).map_err(|e| IoError::parse(path, k + 2, e.to_string()))?,
                stats: StatVector::from_array([r.t_e, r.t_2s, r.t_m1, r.t_m2, r.t_d1, r.t_d2]),
            })
        })
        .collect::<Result<Vec<_>, IoError>>()?;
    let origin = match header.get("origin") {
        None => None,
        Some((line, v)) => Some(parse_edge_field(v).ok_or_else(|| IoError::parse(path, *line, "bad origin graph"))?),
    };
    let traj = Trajectory {
        kind: meta.kind,
        t0,
        start: StatVector::from_array(start),
        origin,
        events,
    };
    Ok((meta, traj))
}
