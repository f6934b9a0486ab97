//! Run configuration, read from TOML.
//!
//! ```toml
//! schema = 1
//! out = "runs/desk"
//!
//! [model]
//! n = 20
//! attributes = "faction"
//! theta = { edge = -6.0, twostar = -0.1, match_b1 = 4.0, match_b2 = 4.0, tri_b1 = 1.0, tri_b2 = 1.0 }
//! ```
//!
//! Every other section is optional and falls back to the desk-scale defaults.
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::AlignOptions;
use crate::change_path::PathWeight;
use crate::egp::{EgpKind, EgpVariant};
use crate::error::ConfigError;
use crate::graph::NodeAttributeTable;
use crate::mcmc::{ChainConfig, RejectionConfig};
use crate::potential::{Theta, FACTION_THETA};

pub const SCHEMA: u32 = 1;

/// Total recorded observations at or above which a run counts as full scale.
pub const FULL_SCALE_OBSERVATIONS: u64 = 1_000_000_000;

/// Toggle budget per trajectory in the shipped configs. The CSTERGM
/// processes need around 5e7 toggles on average at n = 20, with an
/// exponential tail.
pub const DESK_EVENT_BUDGET: u64 = 2_000_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub model: ModelConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub alignment: AlignmentConfig,
    #[serde(default)]
    pub egp: EgpConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    pub out: PathBuf,
    /// Worker threads; all available cores when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n: usize,
    #[serde(default = "default_theta")]
    pub theta: Theta,
    /// `"faction"` for the balanced two-attribute design, otherwise the path
    /// of a `node,b1,b2` CSV file (relative paths resolve against the config
    /// file's directory).
    #[serde(default = "default_attributes")]
    pub attributes: String,
}

fn default_theta() -> Theta {
    FACTION_THETA
}

fn default_attributes() -> String {
    "faction".into()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub chains: usize,
    pub steps: u64,
    pub burnin: u64,
    pub thin: u64,
    pub heat: f64,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            chains: 20,
            steps: 1_000_000,
            burnin: 100_000,
            thin: 100_000,
            heat: 10.0,
            seed: 1,
        }
    }
}

impl SamplingConfig {
    pub fn chain_config(&self) -> ChainConfig {
        ChainConfig {
            burnin: self.burnin,
            thin: self.thin,
            steps: self.steps,
            heat: self.heat,
            seed: self.seed,
        }
    }

    pub fn observations(&self) -> u64 {
        (self.chains as u64).saturating_mul(self.steps)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlignmentConfig {
    pub hi: f64,
    pub lo: f64,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        AlignmentConfig { hi: 80.0, lo: 50.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EgpConfig {
    pub kinds: Vec<EgpVariant>,
    pub nu: f64,
    pub trajectories: usize,
    pub event_budget: u64,
    pub rejection: RejectionConfig,
}

impl Default for EgpConfig {
    fn default() -> Self {
        EgpConfig {
            kinds: EgpVariant::ALL.to_vec(),
            nu: EgpKind::DEFAULT_NU,
            trajectories: 20,
            event_budget: 100_000_000,
            rejection: RejectionConfig::default(),
        }
    }
}

impl EgpConfig {
    pub fn kinds(&self) -> Vec<EgpKind> {
        self.kinds.iter().map(|&v| EgpKind::new(v, self.nu)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub grid: usize,
    pub knots: usize,
    /// Moving-median window applied to logp before locating milestones.
    pub smooth: usize,
    pub weight: PathWeight,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            grid: 201,
            knots: 9,
            smooth: 1,
            weight: PathWeight::Logp,
        }
    }
}

impl AnalysisConfig {
    pub fn align_options(&self) -> AlignOptions {
        AlignOptions {
            grid: self.grid,
            knots: self.knots,
            ..AlignOptions::default()
        }
    }
}

impl RunConfig {
    /// Desk-scale defaults for the faction model, writing to `out`.
    pub fn desk(out: impl Into<PathBuf>) -> Self {
        RunConfig {
            schema: SCHEMA,
            model: ModelConfig {
                n: 20,
                theta: FACTION_THETA,
                attributes: default_attributes(),
            },
            sampling: SamplingConfig::default(),
            alignment: AlignmentConfig::default(),
            egp: EgpConfig {
                event_budget: DESK_EVENT_BUDGET,
                ..EgpConfig::default()
            },
            analysis: AnalysisConfig {
                smooth: 5,
                ..AnalysisConfig::default()
            },
            out: out.into(),
            threads: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file. Relative `out` and attribute paths
    /// are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = RunConfig::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        if cfg.model.attributes != "faction" && Path::new(&cfg.model.attributes).is_relative() {
            cfg.model.attributes = base.join(&cfg.model.attributes).to_string_lossy().into_owned();
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.schema != SCHEMA {
            return bad(format!("unsupported schema {} (expected {SCHEMA})", self.schema));
        }
        let m = &self.model;
        if !(4..=512).contains(&m.n) {
            return bad(format!("model.n = {} outside 4..=512", m.n));
        }
        if m.attributes == "faction" && !m.n.is_multiple_of(4) {
            return bad(format!(
                "model.n = {} must be divisible by 4 for the faction design",
                m.n
            ));
        }
        if !m.theta.is_finite() {
            return bad("model.theta must be finite".into());
        }
        let s = &self.sampling;
        if s.chains == 0 || s.steps == 0 || s.thin == 0 {
            return bad("sampling.chains, steps and thin must be at least 1".into());
        }
        if !(s.heat.is_finite() && s.heat > 0.0) {
            return bad(format!("sampling.heat = {} must be positive", s.heat));
        }
        let al = &self.alignment;
        if !(al.hi.is_finite() && al.lo.is_finite() && al.lo >= 0.0 && al.lo < al.hi) {
            return bad(format!(
                "alignment needs 0 <= lo < hi, got lo = {} hi = {}",
                al.lo, al.hi
            ));
        }
        let e = &self.egp;
        if e.kinds.is_empty() {
            return bad("egp.kinds must not be empty".into());
        }
        let mut kinds = e.kinds.clone();
        kinds.sort();
        kinds.dedup();
        if kinds.len() != e.kinds.len() {
            return bad("egp.kinds has duplicates".into());
        }
        if !(e.nu.is_finite() && e.nu > 0.0) {
            return bad(format!("egp.nu = {} must be positive", e.nu));
        }
        if e.trajectories == 0 || e.event_budget == 0 {
            return bad("egp.trajectories and event_budget must be at least 1".into());
        }
        let r = &e.rejection;
        if r.thin == 0 || r.batch == 0 || r.max_draws == 0 {
            return bad("egp.rejection.thin, batch and max_draws must be at least 1".into());
        }
        let a = &self.analysis;
        if a.grid < 2 {
            return bad(format!("analysis.grid = {} must be at least 2", a.grid));
        }
        if a.knots == 0 || a.knots > 1000 {
            return bad(format!("analysis.knots = {} outside 1..=1000", a.knots));
        }
        if a.smooth == 0 || a.smooth.is_multiple_of(2) {
            return bad(format!("analysis.smooth = {} must be odd", a.smooth));
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        Ok(())
    }

    pub fn attributes(&self) -> Result<NodeAttributeTable, ConfigError> {
        let table = if self.model.attributes == "faction" {
            NodeAttributeTable::faction_design(self.model.n).map_err(|e| ConfigError::Invalid(e.to_string()))?
        } else {
            crate::io::read_attributes(Path::new(&self.model.attributes))
                .map_err(|e| ConfigError::Invalid(e.to_string()))?
        };
        if table.n() != self.model.n {
            return Err(ConfigError::Invalid(format!(
                "attribute table has {} nodes, model.n = {}",
                table.n(),
                self.model.n
            )));
        }
        Ok(table)
    }

    /// SHA-256 over the canonical serialization of every field that affects
    /// results; `out` and `threads` are excluded.
    pub fn hash(&self) -> String {
        let mut semantic = self.clone();
        semantic.out = PathBuf::new();
        semantic.threads = None;
        hex::encode(Sha256::digest(semantic.to_toml().as_bytes()))
    }

    pub fn is_full_scale(&self) -> bool {
        self.sampling.observations() >= FULL_SCALE_OBSERVATIONS
    }
}
