//! Simulation configuration: a flat key=value text format with
//! sections, canonical serialization (so hashing is stable across key
//! reorderings), and the run manifest written next to result files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::baselines::Method;
use crate::error::{Error, Result};
use crate::learner::{ArchKind, Hyperparams, ShapeTag};
use crate::partition::SynthSpec;
use crate::protocol::{FreshnessParams, TrainingMode};
use crate::worldsim::WorldConfig;

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MobilityModel {
    RandomWalk,
    Trace,
}

impl std::fmt::Display for MobilityModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MobilityModel::RandomWalk => write!(f, "walk"),
            MobilityModel::Trace => write!(f, "trace"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionScheme {
    Iid,
    Dirichlet,
    Shards,
}

impl std::fmt::Display for PartitionScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PartitionScheme::Iid => write!(f, "iid"),
            PartitionScheme::Dirichlet => write!(f, "dirichlet"),
            PartitionScheme::Shards => write!(f, "shards"),
        }
    }
}

/// Everything a run needs. Every field is addressable by its key in the
/// config file and via `--set key=value`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub world: WorldConfig,
    pub p_cross: f64,
    pub mobility: MobilityModel,
    pub trace_path: Option<PathBuf>,

    pub data: SynthSpec,
    pub partition: PartitionScheme,
    pub alpha: f64,
    pub test_frac: f64,
    pub n_local: usize,
    pub n_general: usize,

    pub arch: ArchKind,
    pub hidden: usize,
    pub hyper: Hyperparams,

    pub transfer_steps: u32,
    pub delay_d: u64,
    pub freshness: FreshnessParams,

    pub method: Method,
    pub mode: TrainingMode,
    pub n_mules: usize,
    pub total_steps: u64,
    pub eval_every: u64,
    pub exchanges_per_round: u64,
    pub patience_rounds: u64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            world: WorldConfig::default(),
            p_cross: 0.1,
            mobility: MobilityModel::RandomWalk,
            trace_path: None,
            data: SynthSpec::default(),
            partition: PartitionScheme::Dirichlet,
            alpha: 0.01,
            test_frac: 0.2,
            n_local: 100,
            n_general: 50,
            arch: ArchKind::Logistic,
            hidden: 32,
            hyper: Hyperparams::default(),
            transfer_steps: 3,
            delay_d: 0,
            freshness: FreshnessParams::default(),
            method: Method::MlMule,
            mode: TrainingMode::FixedTraining,
            n_mules: 20,
            total_steps: 5000,
            eval_every: 50,
            exchanges_per_round: 20,
            patience_rounds: 10,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn shape_tag(&self) -> ShapeTag {
        let k = self.data.n_subclasses();
        match self.arch {
            ArchKind::Logistic => ShapeTag::logistic(self.data.feature_dim, k),
            ArchKind::Mlp => ShapeTag::mlp(self.data.feature_dim, self.hidden, k),
        }
    }

    /// Sets one field by its config key. Unknown keys and unparseable
    /// values are configuration errors naming the key.
    pub fn set_key(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::config(format!("bad value `{value}` for key `{key}`")))
        }
        match key {
            "areas" => self.world.n_areas = parse(key, value)?,
            "area_side" => self.world.area_side = parse(key, value)?,
            "void_frac" => self.world.void_frac = parse(key, value)?,
            "step_length" => self.world.step_length = parse(key, value)?,
            "comm_radius" => self.world.comm_radius_mobile = parse(key, value)?,
            "p_cross" => self.p_cross = parse(key, value)?,
            "mobility" => {
                self.mobility = match value {
                    "walk" => MobilityModel::RandomWalk,
                    "trace" => MobilityModel::Trace,
                    _ => {
                        return Err(Error::config(format!(
                            "bad value `{value}` for key `mobility` (walk|trace)"
                        )))
                    }
                }
            }
            "trace_path" => {
                self.trace_path = if value.is_empty() {
                    None
                } else {
                    Some(PathBuf::from(value))
                }
            }
            "superclasses" => self.data.superclasses = parse(key, value)?,
            "subclasses_per_super" => self.data.subclasses_per_super = parse(key, value)?,
            "samples_per_subclass" => self.data.samples_per_subclass = parse(key, value)?,
            "feature_dim" => self.data.feature_dim = parse(key, value)?,
            "sigma" => self.data.sigma = parse(key, value)?,
            "partition" => {
                self.partition = match value {
                    "iid" => PartitionScheme::Iid,
                    "dirichlet" => PartitionScheme::Dirichlet,
                    "shards" => PartitionScheme::Shards,
                    _ => {
                        return Err(Error::config(format!(
                            "bad value `{value}` for key `partition` (iid|dirichlet|shards)"
                        )))
                    }
                }
            }
            "alpha" => self.alpha = parse(key, value)?,
            "test_frac" => self.test_frac = parse(key, value)?,
            "n_local" => self.n_local = parse(key, value)?,
            "n_general" => self.n_general = parse(key, value)?,
            "arch" => self.arch = parse(key, value)?,
            "hidden" => self.hidden = parse(key, value)?,
            "learning_rate" => self.hyper.learning_rate = parse(key, value)?,
            "batch_size" => self.hyper.batch_size = parse(key, value)?,
            "epochs" => self.hyper.epochs = parse(key, value)?,
            "l2" => self.hyper.l2 = parse(key, value)?,
            "transfer_steps" => self.transfer_steps = parse(key, value)?,
            "delay_d" => self.delay_d = parse(key, value)?,
            "freshness_alpha" => self.freshness.alpha = parse(key, value)?,
            "freshness_beta" => self.freshness.beta = parse(key, value)?,
            "freshness_window" => self.freshness.window = parse(key, value)?,
            "method" => self.method = parse(key, value)?,
            "mode" => {
                self.mode = match value {
                    "fixed_training" => TrainingMode::FixedTraining,
                    "mobile_training" => TrainingMode::MobileTraining,
                    _ => {
                        return Err(Error::config(format!(
                            "bad value `{value}` for key `mode` (fixed_training|mobile_training)"
                        )))
                    }
                }
            }
            "n_mules" => self.n_mules = parse(key, value)?,
            "total_steps" => self.total_steps = parse(key, value)?,
            "eval_every" => self.eval_every = parse(key, value)?,
            "exchanges_per_round" => self.exchanges_per_round = parse(key, value)?,
            "patience_rounds" => self.patience_rounds = parse(key, value)?,
            "seed" => {
                self.seed = parse(key, value)?;
                self.world.seed = self.seed;
            }
            other => return Err(Error::config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Canonical text form: fixed section and key order, so two
    /// equivalent configs serialize to identical bytes.
    pub fn to_canonical_text(&self) -> String {
        let mut out = String::new();
        let trace = self
            .trace_path
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default();
        let _ = write!(
            out,
            "[world]\n\
             area_side = {}\n\
             areas = {}\n\
             comm_radius = {}\n\
             mobility = {}\n\
             p_cross = {}\n\
             step_length = {}\n\
             trace_path = {}\n\
             void_frac = {}\n\
             \n\
             [data]\n\
             alpha = {}\n\
             feature_dim = {}\n\
             n_general = {}\n\
             n_local = {}\n\
             partition = {}\n\
             samples_per_subclass = {}\n\
             sigma = {}\n\
             subclasses_per_super = {}\n\
             superclasses = {}\n\
             test_frac = {}\n\
             \n\
             [learner]\n\
             arch = {}\n\
             batch_size = {}\n\
             epochs = {}\n\
             hidden = {}\n\
             l2 = {}\n\
             learning_rate = {}\n\
             \n\
             [protocol]\n\
             delay_d = {}\n\
             freshness_alpha = {}\n\
             freshness_beta = {}\n\
             freshness_window = {}\n\
             transfer_steps = {}\n\
             \n\
             [sim]\n\
             eval_every = {}\n\
             exchanges_per_round = {}\n\
             method = {}\n\
             mode = {}\n\
             n_mules = {}\n\
             patience_rounds = {}\n\
             seed = {}\n\
             total_steps = {}\n",
            self.world.area_side,
            self.world.n_areas,
            self.world.comm_radius_mobile,
            self.mobility,
            self.p_cross,
            self.world.step_length,
            trace,
            self.world.void_frac,
            self.alpha,
            self.data.feature_dim,
            self.n_general,
            self.n_local,
            self.partition,
            self.data.samples_per_subclass,
            self.data.sigma,
            self.data.subclasses_per_super,
            self.data.superclasses,
            self.test_frac,
            self.arch,
            self.hyper.batch_size,
            self.hyper.epochs,
            self.hidden,
            self.hyper.l2,
            self.hyper.learning_rate,
            self.delay_d,
            self.freshness.alpha,
            self.freshness.beta,
            self.freshness.window,
            self.transfer_steps,
            self.eval_every,
            self.exchanges_per_round,
            self.method,
            self.mode,
            self.n_mules,
            self.patience_rounds,
            self.seed,
            self.total_steps,
        );
        out
    }

    /// SHA-256 of the canonical text minus the seed line, so one
    /// manifest can cover a seed sweep of the same experiment.
    pub fn config_hash(&self) -> String {
        let canonical: String = self
            .to_canonical_text()
            .lines()
            .filter(|l| !l.starts_with("seed = "))
            .collect::<Vec<_>>()
            .join("\n");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().fold(String::new(), |mut acc, b| {
            let _ = write!(acc, "{b:02x}");
            acc
        })
    }

    /// Result file name for one run: `<method>_<pcross|trace>_<seed>.csv`.
    pub fn run_file_name(&self, seed: u64) -> String {
        let label = self.mobility_label();
        format!("{}_{}_{}.csv", self.method, label, seed)
    }

    pub fn mobility_label(&self) -> String {
        match self.mobility {
            MobilityModel::RandomWalk => format!("p{}", self.p_cross),
            MobilityModel::Trace => "trace".to_string(),
        }
    }

    /// Cross-field consistency checks run once at startup.
    pub fn validate(&self) -> Result<()> {
        if self.n_mules == 0 && self.mobility == MobilityModel::RandomWalk {
            return Err(Error::config("n_mules must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.p_cross) {
            return Err(Error::config("p_cross must be in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.test_frac) || self.test_frac == 0.0 {
            return Err(Error::config("test_frac must be in (0, 1)"));
        }
        if self.transfer_steps == 0 {
            return Err(Error::config("transfer_steps must be >= 1"));
        }
        if self.total_steps == 0 || self.exchanges_per_round == 0 || self.patience_rounds == 0 {
            return Err(Error::config("sim counters must be >= 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every must be >= 1"));
        }
        if self.alpha <= 0.0 && self.partition == PartitionScheme::Dirichlet {
            return Err(Error::config("dirichlet alpha must be > 0"));
        }
        if self.mode == TrainingMode::MobileTraining {
            if self.partition != PartitionScheme::Shards {
                return Err(Error::config(
                    "mobile_training mode requires partition = shards (spaces need a data distribution)",
                ));
            }
            if self.mobility == MobilityModel::Trace {
                return Err(Error::config(
                    "mobile_training mode supports random-walk mobility only",
                ));
            }
            if self.method == Method::FedAvg {
                return Err(Error::config(
                    "fedavg is a fixed_training baseline; use gossip, oppcl, local, or mlmule",
                ));
            }
        }
        if self.mode == TrainingMode::FixedTraining
            && matches!(self.method, Method::Gossip | Method::OppCl | Method::MlMuleGossip)
        {
            return Err(Error::config(
                "gossip-style methods need mobile_training mode (mules hold the data)",
            ));
        }
        if self.mobility == MobilityModel::Trace {
            if self.trace_path.is_none() {
                return Err(Error::config("mobility = trace needs trace_path"));
            }
            if self.method.peer_exchange_kind().is_some() {
                return Err(Error::config(
                    "trace mobility has no coordinates; gossip-style methods need random walk",
                ));
            }
        }
        if self.arch == ArchKind::Mlp && self.hidden == 0 {
            return Err(Error::config("mlp needs hidden > 0"));
        }
        Ok(())
    }
}

/// Parses the sectioned key=value format. Section headers group keys
/// for humans; keys are globally unique so headers carry no semantics.
pub fn parse_config(text: &str, path_label: &str) -> Result<SimConfig> {
    let mut cfg = SimConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || (line.starts_with('[') && line.ends_with(']'))
        {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path_label.to_string(),
            line: idx + 1,
            msg: format!("expected `key = value`, got `{line}`"),
        })?;
        cfg.set_key(key.trim(), value.trim())?;
    }
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<SimConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, &path.display().to_string())
}

/// Written once per `simulate` invocation next to the result CSVs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub artifact_version: u32,
    pub config_hash: String,
    pub shape_tag: ShapeTag,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "artifact_version = {}", self.artifact_version);
        let _ = writeln!(out, "config_hash = {}", self.config_hash);
        let _ = writeln!(out, "shape_tag = {}", self.shape_tag);
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(out, "seeds = {}", seeds.join(","));
        let _ = writeln!(out, "out_dir = {}", self.out_dir.display());
        for f in &self.files {
            let _ = writeln!(out, "file = {f}");
        }
        out
    }

    pub fn from_text(text: &str, path_label: &str) -> Result<RunManifest> {
        let mut artifact_version = 0;
        let mut config_hash = String::new();
        let mut shape_tag: Option<ShapeTag> = None;
        let mut seeds = Vec::new();
        let mut out_dir = PathBuf::new();
        let mut files = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path_label.to_string(),
                line: idx + 1,
                msg: "expected `key = value`".to_string(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "artifact_version" => {
                    artifact_version = value
                        .parse()
                        .map_err(|_| Error::validation("bad artifact_version"))?
                }
                "config_hash" => config_hash = value.to_string(),
                "shape_tag" => shape_tag = Some(value.parse()?),
                "seeds" => {
                    seeds = value
                        .split(',')
                        .filter(|s| !s.is_empty())
                        .map(|s| s.trim().parse::<u64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| Error::validation("bad seeds list in manifest"))?
                }
                "out_dir" => out_dir = PathBuf::from(value),
                "file" => files.push(value.to_string()),
                other => {
                    return Err(Error::validation(format!(
                        "unknown manifest key `{other}` in {path_label}"
                    )))
                }
            }
        }
        Ok(RunManifest {
            artifact_version,
            config_hash,
            shape_tag: shape_tag
                .ok_or_else(|| Error::validation(format!("{path_label}: missing shape_tag")))?,
            seeds,
            out_dir,
            files,
        })
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read_file(path: &Path) -> Result<RunManifest> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunManifest::from_text(&text, &path.display().to_string())
    }
}
