//! First-order velocity-tracking stand-in for the quadrotor flight stack.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::sim::SimError;
use crate::vec3::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantParams {
    /// Velocity tracking time constant (s).
    pub tau: f64,
    pub v_max: f64,
    pub a_max: f64,
    /// Per-axis position noise standard deviation per tick (m).
    pub noise_sigma: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self { tau: 0.3, v_max: 1.0, a_max: 2.0, noise_sigma: 0.005 }
    }
}

impl PlantParams {
    pub fn noise_free(self) -> Self {
        Self { noise_sigma: 0.0, ..self }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.tau > 0.0) || !(self.v_max > 0.0) || !(self.a_max > 0.0) {
            return Err(SimError::Config("plant tau, v_max and a_max must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(SimError::Config("plant noise_sigma must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DroneState {
    pub position: Vec3,
    pub velocity: Vec3,
    /// Velocity change over the last tick divided by `dt`.
    pub acceleration: Vec3,
}

impl DroneState {
    pub fn at(position: Vec3) -> Self {
        Self { position, ..Self::default() }
    }
}

/// Advances one drone by `dt` toward the commanded velocity.
///
/// The velocity relaxes toward the command with the exact first-order factor
/// `1 − e^{−dt/tau}`. The command is clamped to `v_max`, the velocity change
/// to `a_max·dt`, and the altitude to the ground plane.
pub fn plant_step<R: Rng + ?Sized>(d: &DroneState, cmd: Vec3, p: &PlantParams, dt: f64, rng: &mut R) -> DroneState {
    let target = cmd.clamp_norm(p.v_max);
    let dv = ((target - d.velocity) * -(-dt / p.tau).exp_m1()).clamp_norm(p.a_max * dt);
    let mut velocity = d.velocity + dv;
    let mut position = d.position + velocity * dt;
    if p.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, p.noise_sigma).expect("sigma validated");
        for axis in 0..3 {
            position[axis] += normal.sample(rng);
        }
    }
    if position.z < 0.0 {
        position.z = 0.0;
        velocity.z = velocity.z.max(0.0);
    }
    DroneState { position, velocity, acceleration: (velocity - d.velocity) / dt }
}
