//! Square reference trajectory with trapezoidal speed profile on each side.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vec3::Vec3;

/// Corner dwell that brings the lap-average speed of the default square to
/// 0.18 m/s (lap = 4 × (dwell + 1.2/0.65 + 0.65/1.0) s = 26.665 s).
pub const DEFAULT_DWELL_S: f64 = 4.17;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("square side must be positive, got {0}")]
    NonPositiveSide(f64),
    #[error("peak speed must be positive, got {0}")]
    NonPositiveSpeed(f64),
    #[error("acceleration must be positive, got {0}")]
    NonPositiveAccel(f64),
    #[error("dwell must be non-negative, got {0}")]
    NegativeDwell(f64),
    #[error("lap count must be at least one")]
    NoLaps,
    #[error("sample period must be positive, got {0}")]
    NonPositivePeriod(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    Dwell,
    Accelerate,
    Cruise,
    Decelerate,
}

impl Segment {
    pub fn as_str(self) -> &'static str {
        match self {
            Segment::Dwell => "dwell",
            Segment::Accelerate => "accelerate",
            Segment::Cruise => "cruise",
            Segment::Decelerate => "decelerate",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [Segment::Dwell, Segment::Accelerate, Segment::Cruise, Segment::Decelerate]
            .into_iter()
            .find(|seg| seg.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SquareParams {
    /// Corner the lap starts and ends at.
    #[serde(default = "default_origin")]
    pub origin: Vec3,
    #[serde(default = "default_side")]
    pub side_m: f64,
    #[serde(default = "default_peak")]
    pub peak_speed: f64,
    /// `None` jumps to cruise speed instantly.
    #[serde(default = "default_accel")]
    pub accel: Option<f64>,
    #[serde(default = "default_dwell")]
    pub dwell_s: f64,
    #[serde(default = "default_laps")]
    pub laps: u32,
}

fn default_origin() -> Vec3 {
    Vec3::new(0.0, 0.0, 1.0)
}
fn default_side() -> f64 {
    1.2
}
fn default_peak() -> f64 {
    0.65
}
fn default_accel() -> Option<f64> {
    Some(1.0)
}
fn default_dwell() -> f64 {
    DEFAULT_DWELL_S
}
fn default_laps() -> u32 {
    2
}

impl Default for SquareParams {
    fn default() -> Self {
        Self {
            origin: default_origin(),
            side_m: default_side(),
            peak_speed: default_peak(),
            accel: default_accel(),
            dwell_s: default_dwell(),
            laps: default_laps(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefSample {
    pub t: f64,
    pub position: Vec3,
    pub velocity: Vec3,
    pub segment: Segment,
}

/// Speed profile of one side, resolved from the parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
struct SideProfile {
    accel: f64,
    /// Speed actually reached; below the requested peak for a triangular profile.
    top: f64,
    ramp_s: f64,
    cruise_s: f64,
}

impl SideProfile {
    fn resolve(p: &SquareParams) -> (Self, bool) {
        match p.accel {
            None => (
                SideProfile { accel: f64::INFINITY, top: p.peak_speed, ramp_s: 0.0, cruise_s: p.side_m / p.peak_speed },
                false,
            ),
            Some(a) => {
                let ramp_dist = p.peak_speed * p.peak_speed / a;
                if ramp_dist > p.side_m {
                    let top = (p.side_m * a).sqrt();
                    (SideProfile { accel: a, top, ramp_s: top / a, cruise_s: 0.0 }, true)
                } else {
                    let ramp_s = p.peak_speed / a;
                    let cruise_s = (p.side_m - ramp_dist) / p.peak_speed;
                    (SideProfile { accel: a, top: p.peak_speed, ramp_s, cruise_s }, false)
                }
            }
        }
    }

    fn move_s(&self) -> f64 {
        2.0 * self.ramp_s + self.cruise_s
    }

    /// Distance along the side and speed, `u` seconds after leaving the corner.
    fn at(&self, u: f64) -> (f64, f64, Segment) {
        let ramp_d = 0.5 * self.top * self.ramp_s;
        if u < self.ramp_s {
            (0.5 * self.accel * u * u, self.accel * u, Segment::Accelerate)
        } else if u < self.ramp_s + self.cruise_s {
            (ramp_d + self.top * (u - self.ramp_s), self.top, Segment::Cruise)
        } else {
            let w = (u - self.ramp_s - self.cruise_s).min(self.ramp_s);
            let d = ramp_d + self.top * self.cruise_s + self.top * w - 0.5 * self.accel * w * w;
            (d, self.top - self.accel * w, Segment::Decelerate)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    pub params: SquareParams,
    pub dt: f64,
    pub samples: Vec<RefSample>,
    /// Side too short to reach the requested peak speed.
    pub triangular: bool,
}

const DIRECTIONS: [Vec3; 4] =
    [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(-1.0, 0.0, 0.0), Vec3::new(0.0, -1.0, 0.0)];

impl SquareParams {
    pub fn validate(&self) -> Result<(), TrajectoryError> {
        if !(self.side_m > 0.0) {
            return Err(TrajectoryError::NonPositiveSide(self.side_m));
        }
        if !(self.peak_speed > 0.0) {
            return Err(TrajectoryError::NonPositiveSpeed(self.peak_speed));
        }
        if let Some(a) = self.accel {
            if !(a > 0.0) {
                return Err(TrajectoryError::NonPositiveAccel(a));
            }
        }
        if !(self.dwell_s >= 0.0) {
            return Err(TrajectoryError::NegativeDwell(self.dwell_s));
        }
        if self.laps == 0 {
            return Err(TrajectoryError::NoLaps);
        }
        Ok(())
    }

    pub fn side_period(&self) -> f64 {
        self.dwell_s + SideProfile::resolve(self).0.move_s()
    }

    pub fn lap_period(&self) -> f64 {
        4.0 * self.side_period()
    }

    pub fn duration(&self) -> f64 {
        self.lap_period() * self.laps as f64
    }

    /// Analytic state at time `t`; holds the origin after the last lap.
    pub fn evaluate(&self, t: f64) -> RefSample {
        let (profile, _) = SideProfile::resolve(self);
        let side_period = self.dwell_s + profile.move_s();
        if t >= self.duration() || t < 0.0 {
            return RefSample { t, position: self.origin, velocity: Vec3::ZERO, segment: Segment::Dwell };
        }
        let lap_t = t % (4.0 * side_period);
        let side = ((lap_t / side_period) as usize).min(3);
        let within = lap_t - side as f64 * side_period;
        let corner = self.origin + corner_offset(side, self.side_m);
        let dir = DIRECTIONS[side];
        if within < self.dwell_s {
            return RefSample { t, position: corner, velocity: Vec3::ZERO, segment: Segment::Dwell };
        }
        let (dist, speed, segment) = profile.at(within - self.dwell_s);
        RefSample { t, position: corner + dir * dist.min(self.side_m), velocity: dir * speed, segment }
    }

    pub fn generate(&self, dt: f64) -> Result<ReferenceTrajectory, TrajectoryError> {
        self.validate()?;
        if !(dt > 0.0) {
            return Err(TrajectoryError::NonPositivePeriod(dt));
        }
        // the closing sample lands on or after the end so it sits back at the origin
        let n = (self.duration() / dt - 1e-9).ceil() as usize;
        let samples = (0..=n).map(|k| self.evaluate(k as f64 * dt)).collect();
        Ok(ReferenceTrajectory { params: *self, dt, samples, triangular: SideProfile::resolve(self).1 })
    }
}

fn corner_offset(side: usize, len: f64) -> Vec3 {
    DIRECTIONS[..side].iter().fold(Vec3::ZERO, |acc, d| acc + *d * len)
}

/// Square trajectory from the origin `(0, 0, 1)` with the default
/// acceleration, sampled every 10 ms.
pub fn square_trajectory(
    side: f64,
    peak_speed: f64,
    dwell: f64,
    laps: u32,
) -> Result<ReferenceTrajectory, TrajectoryError> {
    SquareParams { side_m: side, peak_speed, dwell_s: dwell, laps, ..SquareParams::default() }.generate(0.01)
}

impl ReferenceTrajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample for tick `k`, holding the final sample past the end.
    pub fn at_tick(&self, k: usize) -> &RefSample {
        &self.samples[k.min(self.samples.len() - 1)]
    }

    pub fn max_speed(&self) -> f64 {
        self.samples.iter().map(|s| s.velocity.norm()).fold(0.0, f64::max)
    }

    /// Mean speed over whole laps (the closing sample is excluded).
    pub fn mean_speed(&self) -> f64 {
        let n = self.samples.len().saturating_sub(1).max(1);
        self.samples.iter().take(n).map(|s| s.velocity.norm()).sum::<f64>() / n as f64
    }

    /// CSV with header `t,x,y,z,vx,vy,vz,segment`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,y,z,vx,vy,vz,segment\n");
        for s in &self.samples {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                s.t,
                s.position.x,
                s.position.y,
                s.position.z,
                s.velocity.x,
                s.velocity.y,
                s.velocity.z,
                s.segment.as_str()
            ));
        }
        out
    }
}

/// Reads samples written by [`ReferenceTrajectory::to_csv`].
pub fn parse_reference_csv(text: &str) -> Result<Vec<RefSample>, String> {
    let mut lines = text.lines();
    if lines.next().map(str::trim_end) != Some("t,x,y,z,vx,vy,vz,segment") {
        return Err("unexpected reference header".into());
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 8 {
            return Err(format!("line {}: expected 8 fields", i + 2));
        }
        let num = |k: usize| f[k].parse::<f64>().map_err(|e| format!("line {}: {e}", i + 2));
        out.push(RefSample {
            t: num(0)?,
            position: Vec3::new(num(1)?, num(2)?, num(3)?),
            velocity: Vec3::new(num(4)?, num(5)?, num(6)?),
            segment: Segment::parse(f[7]).ok_or_else(|| format!("line {}: unknown segment {:?}", i + 2, f[7]))?,
        });
    }
    Ok(out)
}
