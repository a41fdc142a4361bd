//! Run configuration: one JSON document with a section per stage, dotted
//! overrides from the command line, and a stable hash for provenance.

use std::path::{Path, PathBuf};

use lateq::a2c::A2CConfig;
use lateq::baselines::{DdpgConfig, GaConfig, PsoConfig, QConfig};
use lateq::channel::ChannelConfig;
use lateq::equalizer::EqualizerKind;
use lateq::latent::AeConfig;
use lateq::signal::EyeMask;
use lateq::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

/// One synthetic unit: the base channel with its post-cursors scaled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitSpec {
    pub isi_scale: f64,
    pub seed: u64,
}

impl UnitSpec {
    pub fn new(isi_scale: f64, seed: u64) -> Self {
        Self { isi_scale, seed }
    }

    pub fn channel(&self, base: &ChannelConfig) -> ChannelConfig {
        let mut c = base.clone();
        c.seed = self.seed;
        c.isi_taps.iter_mut().for_each(|t| *t *= self.isi_scale);
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub n_x: usize,
    /// Hop between training segments, in samples.
    pub stride: usize,
    /// Autoencoder training set size, split evenly across `ae_units`.
    pub ae_segments: usize,
    pub ae_units: Vec<UnitSpec>,
    /// Add one equalized copy of every autoencoder segment, with a random
    /// action of a random equalizer kind, labeled against the mask.
    pub augment: bool,
    pub train_segments: usize,
    /// Test segments do not overlap.
    pub test_segments: usize,
    pub mask: EyeMask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    Latent,
    Eye,
}

impl std::str::FromStr for ObjectiveKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "latent" => Ok(Self::Latent),
            "eye" => Ok(Self::Eye),
            o => Err(Error::Config(format!("unknown objective `{o}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub objective: ObjectiveKind,
    pub ga: GaConfig,
    pub pso: PsoConfig,
    pub grid_levels_dfe: usize,
    pub grid_levels_ctle_dfe: usize,
    pub qlearning: QConfig,
    pub ddpg: DdpgConfig,
    /// Test segments the per-segment searches (GA, PSO, grid) run on.
    pub segments: usize,
}

impl BaselineConfig {
    pub fn grid_levels(&self, kind: EqualizerKind) -> usize {
        match kind {
            EqualizerKind::Dfe => self.grid_levels_dfe,
            EqualizerKind::CtleDfe => self.grid_levels_ctle_dfe,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub trials: usize,
    /// Each trial optimizes one shared action for this many test segments.
    pub segments: usize,
    pub pso: PsoConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneralizeConfig {
    pub train_units: Vec<UnitSpec>,
    pub heldout_units: Vec<UnitSpec>,
    /// Per unit: training segments for the agent.
    pub train_segments: usize,
    /// Per unit: non-overlapping evaluation segments.
    pub test_segments: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: String,
    pub seed: u64,
    pub equalizer: EqualizerKind,
    /// Base link; `n_bits` is recomputed for every dataset.
    pub channel: ChannelConfig,
    pub data: DataConfig,
    pub autoencoder: AeConfig,
    pub a2c: A2CConfig,
    pub baselines: BaselineConfig,
    pub compare: CompareConfig,
    pub generalize: GeneralizeConfig,
    /// Not part of the hash.
    pub output_dir: PathBuf,
}

fn family(scales: &[f64], seed0: u64) -> Vec<UnitSpec> {
    scales
        .iter()
        .enumerate()
        .map(|(i, &s)| UnitSpec::new(s, seed0 + i as u64))
        .collect()
}

impl RunConfig {
    /// Desk-scale defaults: 1000-sample segments, 2000 autoencoder
    /// segments, 40 autoencoder and 60 agent epochs.
    pub fn desk() -> Self {
        let channel = ChannelConfig::stressed(1, 1);
        let mask = EyeMask::standard(channel.ui);
        let units = [0.25, 0.5, 0.75, 1.0, 1.25, 1.5];
        Self {
            preset: "desk".into(),
            seed: 1,
            equalizer: EqualizerKind::Dfe,
            data: DataConfig {
                n_x: 1000,
                stride: 97,
                ae_segments: 2000,
                ae_units: family(&units, 100),
                augment: true,
                train_segments: 1000,
                test_segments: 100,
                mask,
            },
            channel,
            autoencoder: AeConfig {
                epochs: 40,
                seed: 7,
                invalid_term: true,
                classification_weight: 10.0,
                ..AeConfig::default()
            },
            a2c: A2CConfig {
                epochs: 60,
                seed: 3,
                ..A2CConfig::default()
            },
            baselines: BaselineConfig {
                objective: ObjectiveKind::Latent,
                ga: GaConfig::default(),
                pso: PsoConfig::default(),
                grid_levels_dfe: 5,
                grid_levels_ctle_dfe: 3,
                qlearning: QConfig::default(),
                ddpg: DdpgConfig::default(),
                segments: 100,
            },
            compare: CompareConfig {
                trials: 10,
                segments: 4,
                pso: PsoConfig {
                    swarm: 10,
                    iterations: 20,
                    ..PsoConfig::default()
                },
            },
            generalize: GeneralizeConfig {
                train_units: family(&units, 100),
                heldout_units: family(&[0.6, 1.1], 300),
                train_segments: 170,
                test_segments: 20,
            },
            output_dir: PathBuf::from("runs/desk"),
        }
    }

    /// Small sizes for smoke tests; same shapes as `desk`.
    pub fn tiny() -> Self {
        let mut c = Self::desk();
        c.preset = "tiny".into();
        c.data.ae_segments = 240;
        c.data.train_segments = 48;
        c.data.test_segments = 6;
        c.autoencoder.epochs = 3;
        c.autoencoder.hidden = vec![32, 16];
        c.a2c.epochs = 3;
        c.baselines.segments = 2;
        c.baselines.ga.max_generations = 3;
        c.baselines.pso.iterations = 2;
        c.baselines.pso.swarm = 4;
        c.baselines.qlearning.epochs = 2;
        c.baselines.qlearning.batch = 16;
        c.baselines.ddpg.episodes = 10;
        c.baselines.ddpg.batch = 8;
        c.compare.trials = 2;
        c.compare.segments = 1;
        c.compare.pso.iterations = 2;
        c.compare.pso.swarm = 3;
        c.generalize.train_segments = 12;
        c.generalize.test_segments = 2;
        c.output_dir = PathBuf::from("runs/tiny");
        c
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "tiny" => Ok(Self::tiny()),
            o => Err(Error::Config(format!("unknown preset `{o}`"))),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Apply `path.to.field=value` overrides. Values parse as JSON, falling
    /// back to a plain string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut doc = serde_json::to_value(self)?;
        for o in overrides {
            let o = o.as_ref();
            let (path, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let mut node = &mut doc;
            for key in path.split('.') {
                node = match node {
                    Value::Object(m) => m
                        .get_mut(key)
                        .ok_or_else(|| Error::Config(format!("unknown config key `{path}`")))?,
                    Value::Array(a) => {
                        let i: usize = key
                            .parse()
                            .map_err(|_| Error::Config(format!("`{key}` in `{path}` is not an index")))?;
                        let len = a.len();
                        a.get_mut(i)
                            .ok_or_else(|| Error::Config(format!("index {i} out of {len} in `{path}`")))?
                    }
                    _ => return Err(Error::Config(format!("`{path}` descends into a scalar"))),
                };
            }
            *node = value;
        }
        serde_json::from_value(doc).map_err(|e| Error::Config(format!("override rejected: {e}")))
    }

    /// Hex SHA-256 of the canonical JSON, output directory excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let text = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let mut c = self.channel.clone();
        c.n_bits = c.n_bits.max(1);
        c.validate()?;
        self.data.mask.validate(c.ui)?;
        let d = &self.data;
        if d.n_x == 0 || d.stride == 0 {
            return Err(Error::Config("n_x and stride must be positive".into()));
        }
        if d.ae_units.is_empty() || d.ae_segments < d.ae_units.len() {
            return Err(Error::Config("need at least one autoencoder unit and one segment per unit".into()));
        }
        if d.train_segments == 0 || d.test_segments == 0 {
            return Err(Error::Config("train and test segment counts must be positive".into()));
        }
        for u in d.ae_units.iter().chain(&self.generalize.train_units).chain(&self.generalize.heldout_units) {
            if !u.isi_scale.is_finite() {
                return Err(Error::Config("unit ISI scale must be finite".into()));
            }
        }
        self.autoencoder.validate()?;
        self.a2c.validate()?;
        self.baselines.ga.validate()?;
        self.baselines.qlearning.validate()?;
        self.baselines.ddpg.validate()?;
        for k in [EqualizerKind::Dfe, EqualizerKind::CtleDfe] {
            if self.baselines.grid_levels(k) < 2 {
                return Err(Error::Config("grid needs at least 2 levels".into()));
            }
        }
        if self.baselines.segments == 0 || self.compare.trials == 0 || self.compare.segments == 0 {
            return Err(Error::Config("baseline segments and comparison trials must be positive".into()));
        }
        let g = &self.generalize;
        if g.train_units.is_empty() || g.heldout_units.is_empty() || g.train_units.len() + g.heldout_units.len() < 2 {
            return Err(Error::Config("generalization needs training and held-out units (at least 2 in total)".into()));
        }
        if g.train_segments == 0 || g.test_segments == 0 {
            return Err(Error::Config("generalization segment counts must be positive".into()));
        }
        Ok(())
    }
}
