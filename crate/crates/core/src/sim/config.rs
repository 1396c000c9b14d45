//! Scenario configuration file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::apf::ApfParams;
use crate::haptic::PatternConfig;
use crate::impedance::{critically_damped, ImpedanceParams, DEFAULT_VELOCITY_GAIN};
use crate::sim::plant::PlantParams;
use crate::sim::SimError;
use crate::topology::TopologyConfig;
use crate::trajectory::SquareParams;
use crate::vec3::Vec3;

/// Impedance section. `D` may be omitted, in which case it is computed for
/// critical damping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpedanceConfig {
    #[serde(rename = "M")]
    pub mass: f64,
    #[serde(rename = "K")]
    pub stiffness: f64,
    #[serde(rename = "K_v", default = "default_kv")]
    pub velocity_gain: f64,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<f64>,
}

fn default_kv() -> f64 {
    DEFAULT_VELOCITY_GAIN
}

impl Default for ImpedanceConfig {
    fn default() -> Self {
        Self { mass: 1.9, stiffness: 20.88, velocity_gain: DEFAULT_VELOCITY_GAIN, damping: None }
    }
}

impl ImpedanceConfig {
    pub fn params(&self) -> Result<ImpedanceParams, SimError> {
        Ok(match self.damping {
            None => critically_damped(self.mass, self.stiffness, self.velocity_gain)?,
            Some(d) => ImpedanceParams::new(self.mass, d, self.stiffness, self.velocity_gain)?,
        })
    }
}

impl From<ImpedanceParams> for ImpedanceConfig {
    fn from(p: ImpedanceParams) -> Self {
        Self { mass: p.mass, stiffness: p.stiffness, velocity_gain: p.velocity_gain, damping: Some(p.damping) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    /// APF while approaching, impedance links while following.
    Impedance,
    /// APF toward the slot in every active phase.
    PotentialField,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub mode: ControlMode,
    /// Natural frequency of the position tracking loop around the plant (rad/s).
    pub tracking_omega: f64,
    pub attach_radius: f64,
    pub attach_dwell_s: f64,
    /// APF commands slower than this count toward a stall.
    pub stall_speed: f64,
    pub stall_time_s: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            mode: ControlMode::Impedance,
            tracking_omega: 4.0,
            attach_radius: 0.05,
            attach_dwell_s: 0.5,
            stall_speed: 1e-3,
            stall_time_s: 2.0,
        }
    }
}

/// Where the hand position comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum HandConfig {
    Static {
        position: Vec3,
    },
    Square(SquareParams),
    /// Driven by `set_hand_target` commands through a first-order filter.
    Live {
        initial: Vec3,
        #[serde(default = "default_smoothing")]
        smoothing_s: f64,
    },
}

fn default_smoothing() -> f64 {
    0.1
}

impl Default for HandConfig {
    fn default() -> Self {
        HandConfig::Square(SquareParams::default())
    }
}

impl HandConfig {
    pub fn initial_position(&self) -> Vec3 {
        match self {
            HandConfig::Static { position } => *position,
            HandConfig::Square(p) => p.origin,
            HandConfig::Live { initial, .. } => *initial,
        }
    }
}

/// Initial drone placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartLayout {
    /// Exactly at the formation slots around the initial hand position.
    Slots,
    /// On the ground, twice as far out horizontally as the slots.
    Ground,
    Positions(Vec<Vec3>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Run length; `None` uses the hand trajectory duration (or 30 s).
    #[serde(default)]
    pub duration_s: Option<f64>,
    #[serde(default)]
    pub topology: TopologyConfig,
    #[serde(default)]
    pub impedance: ImpedanceConfig,
    #[serde(default)]
    pub apf: ApfParams,
    #[serde(default)]
    pub plant: PlantParams,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub hand: HandConfig,
    #[serde(default = "default_start")]
    pub start: StartLayout,
    /// Time at which the swarm engages; `None` waits for an `engage` command.
    #[serde(default = "default_engage")]
    pub engage_at_s: Option<f64>,
    #[serde(default)]
    pub pattern: PatternConfig,
}

fn default_dt() -> f64 {
    0.01
}

fn default_start() -> StartLayout {
    StartLayout::Ground
}

fn default_engage() -> Option<f64> {
    Some(0.0)
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dt: default_dt(),
            duration_s: None,
            topology: TopologyConfig::default(),
            impedance: ImpedanceConfig::default(),
            apf: ApfParams::default(),
            plant: PlantParams::default(),
            controller: ControllerConfig::default(),
            hand: HandConfig::default(),
            start: default_start(),
            engage_at_s: default_engage(),
            pattern: PatternConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(s: &str) -> Result<Self, SimError> {
        let cfg: ScenarioConfig = serde_json::from_str(s).map_err(|e| SimError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(SimError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if let Some(d) = self.duration_s {
            if !(d >= 0.0) {
                return Err(SimError::Config(format!("duration_s must be non-negative, got {d}")));
            }
        }
        let params = self.impedance.params()?;
        crate::impedance::discretize(&params, self.dt)?;
        self.topology.build(params)?;
        self.apf.validate()?;
        self.plant.validate()?;
        self.pattern.validate()?;
        let c = &self.controller;
        if !(c.tracking_omega > 0.0) || !(c.attach_radius > 0.0) || !(c.attach_dwell_s >= 0.0) {
            return Err(SimError::Config("controller gains and radii must be positive".into()));
        }
        match &self.hand {
            HandConfig::Square(p) => p.validate()?,
            HandConfig::Live { smoothing_s, .. } if !(*smoothing_s > 0.0) => {
                return Err(SimError::Config("hand smoothing_s must be positive".into()));
            }
            _ => {}
        }
        if let StartLayout::Positions(p) = &self.start {
            if p.len() != self.topology.drones {
                return Err(SimError::Config(format!(
                    "start lists {} positions for {} drones",
                    p.len(),
                    self.topology.drones
                )));
            }
        }
        Ok(())
    }

    /// Ticks covered by `duration_s` or, if unset, by the hand trajectory.
    pub fn tick_count(&self) -> u64 {
        let secs = self.duration_s.unwrap_or(match &self.hand {
            HandConfig::Square(p) => p.duration(),
            _ => 30.0,
        });
        (secs / self.dt).round() as u64
    }
}
