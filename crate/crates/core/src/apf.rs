//! Artificial potential field used while drones approach their slots.
//!
//! The field is kinematic: attraction and repulsion are summed as a velocity
//! command, and only the sum is clamped to `v_max`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vec3::Vec3;

/// Distance below which repulsion saturates and a proximity violation is reported.
pub const PROXIMITY_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ApfError {
    #[error("potential field parameter {name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApfParams {
    /// Attraction gain (1/s).
    pub k_att: f64,
    /// Repulsion gain (m³/s).
    pub k_rep: f64,
    /// Sensing sphere radius (m).
    pub radius: f64,
    /// Commanded speed limit (m/s).
    pub v_max: f64,
    /// Fades repulsion to zero at the sphere boundary with `1 − d²/r²`.
    #[serde(default)]
    pub smooth_shell: bool,
}

impl Default for ApfParams {
    fn default() -> Self {
        Self { k_att: 0.8, k_rep: 0.02, radius: 0.5, v_max: 0.47, smooth_shell: false }
    }
}

impl ApfParams {
    pub fn validate(&self) -> Result<(), ApfError> {
        for (name, value) in
            [("k_att", self.k_att), ("k_rep", self.k_rep), ("radius", self.radius), ("v_max", self.v_max)]
        {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ApfError::NonPositive { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObstacleKind {
    Drone,
    Hand,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub position: Vec3,
    pub kind: ObstacleKind,
}

impl Obstacle {
    pub fn drone(position: Vec3) -> Self {
        Self { position, kind: ObstacleKind::Drone }
    }

    pub fn hand(position: Vec3) -> Self {
        Self { position, kind: ObstacleKind::Hand }
    }
}

/// Field output plus the indices of obstacles closer than [`PROXIMITY_EPSILON`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FieldOutput {
    pub vector: Vec3,
    pub violations: Vec<usize>,
}

pub fn attractive_force(pos: Vec3, goal: Vec3, k_att: f64) -> Vec3 {
    (goal - pos) * k_att
}

pub fn repulsive_force(pos: Vec3, obstacles: &[Obstacle], p: &ApfParams) -> FieldOutput {
    let mut out = FieldOutput::default();
    for (i, o) in obstacles.iter().enumerate() {
        let away = pos - o.position;
        let dist = away.norm();
        if dist >= p.radius {
            continue;
        }
        let (dir, d) = if dist < PROXIMITY_EPSILON {
            out.violations.push(i);
            // coincident points have no direction; push upward
            let dir = if dist > 0.0 { away / dist } else { Vec3::new(0.0, 0.0, 1.0) };
            (dir, PROXIMITY_EPSILON)
        } else {
            (away / dist, dist)
        };
        let mut magnitude = p.k_rep / (d * d);
        if p.smooth_shell {
            magnitude *= 1.0 - (d * d) / (p.radius * p.radius);
        }
        out.vector += dir * magnitude;
    }
    out
}

pub fn apf_command(pos: Vec3, goal: Vec3, obstacles: &[Obstacle], p: &ApfParams) -> FieldOutput {
    let rep = repulsive_force(pos, obstacles, p);
    FieldOutput {
        vector: (attractive_force(pos, goal, p.k_att) + rep.vector).clamp_norm(p.v_max),
        violations: rep.violations,
    }
}
