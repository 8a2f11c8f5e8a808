//! Run configuration: a TOML file with sections mapping 1:1 onto the
//! trainer's knobs. Flags layered on top by the CLI take precedence.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{AgentConfig, EpsilonSchedule, NetworkPreset, Variant};
use crate::sensor::CorruptionConfig;
use crate::sim::EnvConfig;
use crate::{Error, Result};

pub const CONFIG_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldsSection {
    /// Stage-1 (first curriculum stage) world file.
    pub stage1: PathBuf,
    /// Optional stage-2 world for continued training.
    pub stage2: Option<PathBuf>,
}

impl Default for WorldsSection {
    fn default() -> Self {
        WorldsSection {
            stage1: PathBuf::from("worlds/simple.world"),
            stage2: Some(PathBuf::from("worlds/complex.world")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub episodes_stage1: u32,
    pub episodes_stage2: u32,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Checkpoint cadence in episodes (best-so-far and final are always
    /// written).
    pub checkpoint_every: u32,
    /// Moving-average return threshold for episodes-to-threshold reports.
    pub threshold: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            episodes_stage1: 1000,
            episodes_stage2: 0,
            seed: 1,
            out_dir: PathBuf::from("runs/out"),
            checkpoint_every: 200,
            threshold: 15.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub n_rays: usize,
    pub fov_deg: f64,
    pub max_range: f64,
    pub robot_radius: f64,
    pub dt: f64,
    pub max_steps: u32,
}

impl Default for EnvSection {
    fn default() -> Self {
        EnvSection {
            n_rays: 64,
            fov_deg: 90.0,
            max_range: 5.0,
            robot_radius: 0.2,
            dt: 0.2,
            max_steps: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorSection {
    /// Apply corruption during training and evaluation. Disable for
    /// clean-sensor ablations.
    pub enabled: bool,
    pub gauss_sigma: f64,
    pub blur_radius: usize,
    pub dropout_prob: f64,
    pub stack_k: usize,
}

impl Default for SensorSection {
    fn default() -> Self {
        SensorSection {
            enabled: true,
            gauss_sigma: 0.05,
            blur_radius: 2,
            dropout_prob: 0.02,
            stack_k: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSection {
    pub variant: String,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_horizon: u64,
    pub sync_period: u64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub warmup: usize,
    pub train_every: u32,
    pub learning_rate: f64,
    pub huber_delta: f64,
}

impl Default for AgentSection {
    fn default() -> Self {
        let a = AgentConfig::default();
        AgentSection {
            variant: a.variant.as_str().to_string(),
            gamma: a.gamma,
            epsilon_start: a.epsilon.start,
            epsilon_end: a.epsilon.end,
            epsilon_horizon: a.epsilon.horizon,
            sync_period: a.sync_period,
            batch_size: a.batch_size,
            buffer_capacity: a.buffer_capacity,
            warmup: a.warmup,
            train_every: a.train_every,
            learning_rate: a.learning_rate,
            huber_delta: a.huber_delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub preset: String,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            preset: "dense".to_string(),
        }
    }
}

/// Newtype so `format = 1` defaults correctly when omitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigFormat(pub u32);

impl Default for ConfigFormat {
    fn default() -> Self {
        ConfigFormat(CONFIG_FORMAT)
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub format: ConfigFormat,
    pub worlds: WorldsSection,
    pub run: RunSection,
    pub env: EnvSection,
    pub sensor: SensorSection,
    pub agent: AgentSection,
    pub network: NetworkSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("config encode: {e}")))
    }

    /// Check invariants and referenced files.
    pub fn validate(&self) -> Result<()> {
        if self.format.0 != CONFIG_FORMAT {
            return Err(Error::Config(format!(
                "unsupported config format {} (expected {CONFIG_FORMAT})",
                self.format.0
            )));
        }
        if self.run.episodes_stage1 == 0 {
            return Err(Error::Config("episodes_stage1 must be > 0".into()));
        }
        if !self.worlds.stage1.exists() {
            return Err(Error::Config(format!(
                "stage1 world file not found: {}",
                self.worlds.stage1.display()
            )));
        }
        if self.run.episodes_stage2 > 0 {
            match &self.worlds.stage2 {
                None => {
                    return Err(Error::Config(
                        "episodes_stage2 > 0 but no stage2 world configured".into(),
                    ))
                }
                Some(p) if !p.exists() => {
                    return Err(Error::Config(format!(
                        "stage2 world file not found: {}",
                        p.display()
                    )))
                }
                _ => {}
            }
        }
        if self.env.n_rays < 2 {
            return Err(Error::Config("n_rays must be >= 2".into()));
        }
        if !(0.0 < self.env.fov_deg && self.env.fov_deg <= 360.0) {
            return Err(Error::Config("fov_deg must be in (0, 360]".into()));
        }
        if self.env.max_range <= 0.0 || self.env.robot_radius <= 0.0 || self.env.dt <= 0.0 {
            return Err(Error::Config(
                "max_range, robot_radius, and dt must be > 0".into(),
            ));
        }
        if self.env.max_steps == 0 {
            return Err(Error::Config("max_steps must be > 0".into()));
        }
        if self.sensor.stack_k == 0 {
            return Err(Error::Config("stack_k must be >= 1".into()));
        }
        self.corruption_config().validate()?;
        self.agent_config()?.validate()?;
        self.preset()?;
        Ok(())
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            n_rays: self.env.n_rays,
            fov: self.env.fov_deg.to_radians(),
            max_range: self.env.max_range,
            robot_radius: self.env.robot_radius,
            dt: self.env.dt,
            max_steps: self.env.max_steps,
        }
    }

    pub fn corruption_config(&self) -> CorruptionConfig {
        if self.sensor.enabled {
            CorruptionConfig {
                gauss_sigma: self.sensor.gauss_sigma,
                blur_radius: self.sensor.blur_radius,
                dropout_prob: self.sensor.dropout_prob,
            }
        } else {
            CorruptionConfig::disabled()
        }
    }

    pub fn agent_config(&self) -> Result<AgentConfig> {
        Ok(AgentConfig {
            variant: self.agent.variant.parse()?,
            gamma: self.agent.gamma,
            epsilon: EpsilonSchedule {
                start: self.agent.epsilon_start,
                end: self.agent.epsilon_end,
                horizon: self.agent.epsilon_horizon,
            },
            sync_period: self.agent.sync_period,
            batch_size: self.agent.batch_size,
            buffer_capacity: self.agent.buffer_capacity,
            warmup: self.agent.warmup,
            train_every: self.agent.train_every,
            learning_rate: self.agent.learning_rate,
            huber_delta: self.agent.huber_delta,
        })
    }

    pub fn preset(&self) -> Result<NetworkPreset> {
        self.network.preset.parse()
    }

    pub fn variant(&self) -> Result<Variant> {
        self.agent.variant.parse()
    }

    /// Observation width: rays times stacked frames.
    pub fn input_len(&self) -> usize {
        self.env.n_rays * self.sensor.stack_k
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = RunConfig::from_toml(
            r#"
            [agent]
            variant = "dqn"
            gamma = 0.9
            "#,
        )
        .unwrap();
        assert_eq!(cfg.agent.variant, "dqn");
        assert_eq!(cfg.agent.gamma, 0.9);
        assert_eq!(cfg.agent.batch_size, 64);
        assert_eq!(cfg.env.n_rays, 64);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::from_toml("[run]\nepisodes = 5\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn bad_variant_rejected() {
        let cfg = RunConfig::from_toml("[agent]\nvariant = \"dddqn\"\n").unwrap();
        assert!(cfg.agent_config().is_err());
    }

    #[test]
    fn fov_converts_to_radians() {
        let cfg = RunConfig::default();
        assert!((cfg.env_config().fov - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }
}
