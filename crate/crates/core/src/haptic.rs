//! Vibrotactile surface × direction patterns for three fingertip actuators.
//!
//! The surface picks the carrier frequency. Lateral directions sweep the onset
//! across the fingers (`Right`: 0→1→2, `Left`: 2→1→0); longitudinal directions
//! fire all fingers together and ramp the amplitude through the burst
//! (`Forward`: low→high, `Backward`: high→low).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vec3::Vec3;

pub const ACTUATORS: usize = 3;

/// Hand speeds at or below this do not trigger a pattern (m/s).
pub const DEFAULT_DEAD_BAND: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatternError {
    #[error("unknown pattern label {0:?}")]
    UnknownLabel(String),
    #[error("inter-onset delay must be positive")]
    NonPositiveDelay,
    #[error("burst length must be positive")]
    NonPositiveBurst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurfaceKind {
    Soft,
    Elastic,
    Rigid,
}

impl SurfaceKind {
    pub const ALL: [SurfaceKind; 3] = [SurfaceKind::Soft, SurfaceKind::Elastic, SurfaceKind::Rigid];

    pub fn carrier_hz(self) -> f64 {
        match self {
            SurfaceKind::Soft => 3.3,
            SurfaceKind::Elastic => 8.0,
            SurfaceKind::Rigid => 100.0,
        }
    }

    fn code(self) -> char {
        match self {
            SurfaceKind::Soft => 'S',
            SurfaceKind::Elastic => 'E',
            SurfaceKind::Rigid => 'R',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionDirection {
    Forward,
    Backward,
    Right,
    Left,
}

impl MotionDirection {
    pub const ALL: [MotionDirection; 4] =
        [MotionDirection::Forward, MotionDirection::Backward, MotionDirection::Right, MotionDirection::Left];

    fn code(self) -> char {
        match self {
            MotionDirection::Forward => 'F',
            MotionDirection::Backward => 'B',
            MotionDirection::Right => 'R',
            MotionDirection::Left => 'L',
        }
    }
}

/// Two-letter pattern code such as `"RR"` (rigid, right).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PatternLabel {
    pub surface: SurfaceKind,
    pub direction: MotionDirection,
}

impl PatternLabel {
    pub fn new(surface: SurfaceKind, direction: MotionDirection) -> Self {
        Self { surface, direction }
    }

    /// All twelve labels, surface-major.
    pub fn all() -> impl Iterator<Item = PatternLabel> {
        SurfaceKind::ALL
            .into_iter()
            .flat_map(|s| MotionDirection::ALL.into_iter().map(move |d| PatternLabel::new(s, d)))
    }
}

impl fmt::Display for PatternLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.surface.code(), self.direction.code())
    }
}

impl FromStr for PatternLabel {
    type Err = PatternError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || PatternError::UnknownLabel(s.to_string());
        let mut chars = s.chars();
        let (Some(sc), Some(dc), None) = (chars.next(), chars.next(), chars.next()) else {
            return Err(unknown());
        };
        let surface = SurfaceKind::ALL.into_iter().find(|k| k.code() == sc).ok_or_else(unknown)?;
        let direction = MotionDirection::ALL.into_iter().find(|d| d.code() == dc).ok_or_else(unknown)?;
        Ok(PatternLabel { surface, direction })
    }
}

impl Serialize for PatternLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PatternLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternConfig {
    pub inter_onset_ms: f64,
    pub burst_ms: f64,
    /// Amplitude levels of a forward ramp, in firing order.
    pub ramp: [f64; 3],
}

impl Default for PatternConfig {
    fn default() -> Self {
        Self { inter_onset_ms: 150.0, burst_ms: 300.0, ramp: [0.4, 0.7, 1.0] }
    }
}

impl PatternConfig {
    pub fn validate(&self) -> Result<(), PatternError> {
        if !(self.inter_onset_ms > 0.0) {
            return Err(PatternError::NonPositiveDelay);
        }
        if !(self.burst_ms > 0.0) {
            return Err(PatternError::NonPositiveBurst);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternEvent {
    pub onset_ms: f64,
    pub duration_ms: f64,
    pub frequency_hz: f64,
    pub amplitude: f64,
}

impl PatternEvent {
    pub fn end_ms(&self) -> f64 {
        self.onset_ms + self.duration_ms
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternSchedule {
    pub label: PatternLabel,
    pub actuators: [Vec<PatternEvent>; ACTUATORS],
}

/// A switch of one actuator at a point in time, for playback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatorEdge {
    pub at_ms: f64,
    pub finger: usize,
    /// `None` switches the actuator off.
    pub drive: Option<PatternEvent>,
}

impl PatternSchedule {
    pub fn duration_ms(&self) -> f64 {
        self.actuators.iter().flatten().map(PatternEvent::end_ms).fold(0.0, f64::max)
    }

    /// First onset per finger.
    pub fn onsets(&self) -> [f64; ACTUATORS] {
        self.actuators.each_ref().map(|t| t.iter().map(|e| e.onset_ms).fold(f64::INFINITY, f64::min))
    }

    /// On/off switches of all actuators ordered by time, then finger.
    pub fn edges(&self) -> Vec<ActuatorEdge> {
        let mut out = Vec::new();
        for (finger, timeline) in self.actuators.iter().enumerate() {
            for (i, e) in timeline.iter().enumerate() {
                out.push(ActuatorEdge { at_ms: e.onset_ms, finger, drive: Some(*e) });
                let continues = timeline.get(i + 1).is_some_and(|n| n.onset_ms <= e.end_ms());
                if !continues {
                    out.push(ActuatorEdge { at_ms: e.end_ms(), finger, drive: None });
                }
            }
        }
        out.sort_by(|a, b| {
            a.at_ms.total_cmp(&b.at_ms).then(a.drive.is_some().cmp(&b.drive.is_some())).then(a.finger.cmp(&b.finger))
        });
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("schedule serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

pub fn encode_pattern(
    surface: SurfaceKind,
    direction: MotionDirection,
    cfg: &PatternConfig,
) -> Result<PatternSchedule, PatternError> {
    cfg.validate()?;
    let freq = surface.carrier_hz();
    let burst =
        |onset_ms: f64| PatternEvent { onset_ms, duration_ms: cfg.burst_ms, frequency_hz: freq, amplitude: 1.0 };
    let ramp = |levels: [f64; 3]| -> Vec<PatternEvent> {
        let step = cfg.burst_ms / levels.len() as f64;
        levels
            .iter()
            .enumerate()
            .map(|(i, &amplitude)| PatternEvent {
                onset_ms: i as f64 * step,
                duration_ms: step,
                frequency_hz: freq,
                amplitude,
            })
            .collect()
    };
    let actuators: [Vec<PatternEvent>; ACTUATORS] = match direction {
        MotionDirection::Right => std::array::from_fn(|f| vec![burst(f as f64 * cfg.inter_onset_ms)]),
        MotionDirection::Left => std::array::from_fn(|f| vec![burst((ACTUATORS - 1 - f) as f64 * cfg.inter_onset_ms)]),
        MotionDirection::Forward => std::array::from_fn(|_| ramp(cfg.ramp)),
        MotionDirection::Backward => {
            let mut r = cfg.ramp;
            r.reverse();
            std::array::from_fn(|_| ramp(r))
        }
    };
    Ok(PatternSchedule { label: PatternLabel::new(surface, direction), actuators })
}

/// Maps the hand motion at contact to a pattern; `None` inside the dead band.
pub fn classify_contact(hand_velocity: Vec3, surface: SurfaceKind, dead_band: f64) -> Option<PatternLabel> {
    if hand_velocity.norm() <= dead_band || hand_velocity.norm_xy() <= dead_band {
        return None;
    }
    let direction = if hand_velocity.x.abs() >= hand_velocity.y.abs() {
        if hand_velocity.x > 0.0 {
            MotionDirection::Right
        } else {
            MotionDirection::Left
        }
    } else if hand_velocity.y > 0.0 {
        MotionDirection::Forward
    } else {
        MotionDirection::Backward
    };
    Some(PatternLabel::new(surface, direction))
}
