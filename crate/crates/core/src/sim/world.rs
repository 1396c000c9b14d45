use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::apf::ObstacleKind;
use crate::haptic::PatternLabel;
use crate::impedance::{ImpedanceParams, LinkState, CRITICAL_DAMPING_TOLERANCE};
use crate::sim::plant::DroneState;
use crate::sim::SimError;
use crate::topology::{Endpoint, TopologyKind};
use crate::vec3::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HandState {
    pub position: Vec3,
    /// Backward difference of position over one tick.
    pub velocity: Vec3,
    /// Backward difference of velocity over one tick.
    #[serde(skip)]
    pub acceleration: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerPhase {
    Idle,
    Approach,
    Attach,
    Follow,
}

impl ControllerPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            ControllerPhase::Idle => "idle",
            ControllerPhase::Approach => "approach",
            ControllerPhase::Attach => "attach",
            ControllerPhase::Follow => "follow",
        }
    }
}

impl fmt::Display for ControllerPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControllerPhase {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "idle" => Ok(ControllerPhase::Idle),
            "approach" => Ok(ControllerPhase::Approach),
            "attach" => Ok(ControllerPhase::Attach),
            "follow" => Ok(ControllerPhase::Follow),
            other => Err(SimError::Parse(format!("unknown phase {other:?}"))),
        }
    }
}

/// A drone's physical state plus its controller bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Agent {
    pub state: DroneState,
    pub phase: ControllerPhase,
    pub phase_since_tick: u64,
    /// Consecutive ticks of near-zero APF command away from the slot.
    pub stall_ticks: u64,
    pub stall_reported: bool,
    /// Last commanded velocity.
    pub command: Vec3,
}

impl Agent {
    pub fn new(position: Vec3) -> Self {
        Self {
            state: DroneState::at(position),
            phase: ControllerPhase::Idle,
            phase_since_tick: 0,
            stall_ticks: 0,
            stall_reported: false,
            command: Vec3::ZERO,
        }
    }
}

/// Commands that change the simulated world. They are applied at tick
/// boundaries in arrival order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum WorldCommand {
    SetHandTarget {
        x: f64,
        y: f64,
        z: f64,
    },
    SetTopology {
        kind: TopologyKind,
    },
    SetImpedance {
        #[serde(rename = "M")]
        mass: f64,
        #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
        damping: Option<f64>,
        #[serde(rename = "K")]
        stiffness: f64,
        #[serde(rename = "K_v")]
        velocity_gain: f64,
        #[serde(rename = "recompute_D", default, skip_serializing_if = "std::ops::Not::not")]
        recompute_damping: bool,
    },
    TriggerPattern {
        label: PatternLabel,
    },
    Engage {},
    Disengage {},
}

impl WorldCommand {
    /// Resolves the parameters carried by `set_impedance`, rejecting sets
    /// that are not critically damped unless `recompute_D` is set.
    pub fn impedance_params(&self) -> Option<Result<ImpedanceParams, SimError>> {
        let WorldCommand::SetImpedance { mass, damping, stiffness, velocity_gain, recompute_damping } = *self else {
            return None;
        };
        let resolved = if recompute_damping {
            crate::impedance::critically_damped(mass, stiffness, velocity_gain).map_err(SimError::from)
        } else {
            match damping {
                None => Err(SimError::Command("set_impedance needs D or recompute_D".into())),
                Some(d) => {
                    ImpedanceParams::new(mass, d, stiffness, velocity_gain).map_err(SimError::from).and_then(|p| {
                        let zeta = p.damping_ratio();
                        if (zeta - 1.0).abs() > CRITICAL_DAMPING_TOLERANCE {
                            Err(SimError::Impedance(crate::impedance::ImpedanceError::NotCriticallyDamped { zeta }))
                        } else {
                            Ok(p)
                        }
                    })
                }
            }
        };
        Some(resolved)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        match self {
            WorldCommand::SetHandTarget { x, y, z } if !(x.is_finite() && y.is_finite() && z.is_finite()) => {
                Err(SimError::Command("hand target must be finite".into()))
            }
            WorldCommand::SetImpedance { .. } => self.impedance_params().expect("is set_impedance").map(|_| ()),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    /// State before the first tick.
    Initial {
        hand: Vec3,
        drones: Vec<Vec3>,
    },
    Engaged,
    Disengaged,
    PhaseChanged {
        drone: usize,
        from: ControllerPhase,
        to: ControllerPhase,
    },
    ProximityViolation {
        drone: usize,
        obstacle: ObstacleKind,
        index: usize,
    },
    ApfStall {
        drone: usize,
        distance: f64,
    },
    CommandApplied {
        command: WorldCommand,
    },
    CommandRejected {
        command: WorldCommand,
        reason: String,
    },
    TopologyChanged {
        kind: TopologyKind,
    },
    ImpedanceChanged {
        params: ImpedanceParams,
    },
    PatternStarted {
        label: PatternLabel,
    },
    Actuator {
        finger: usize,
        on: bool,
        frequency_hz: f64,
        amplitude: f64,
    },
    PatternFinished {
        label: PatternLabel,
    },
    Note {
        detail: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub tick: u64,
    pub t: f64,
    #[serde(flatten)]
    pub event: Event,
}

/// Read-only view of the world at one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSnapshot {
    pub tick: u64,
    pub t: f64,
    pub hand: HandView,
    pub drones: Vec<DroneView>,
    pub pattern: Option<PatternLabel>,
    pub topology: TopologyView,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandView {
    pub position: Vec3,
    pub velocity: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DroneView {
    pub id: usize,
    pub phase: ControllerPhase,
    pub position: Vec3,
    pub velocity: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyView {
    pub kind: TopologyKind,
    pub edges: Vec<[Endpoint; 2]>,
}

/// Mutable simulation state owned by exactly one stepper.
#[derive(Debug, Clone)]
pub struct WorldState {
    pub tick: u64,
    pub dt: f64,
    pub hand: HandState,
    pub agents: Vec<Agent>,
    /// One state per graph edge.
    pub links: Vec<LinkState>,
    pub engaged: bool,
    pub seed: u64,
    pub rng: ChaCha8Rng,
    pub events: Vec<TimedEvent>,
}

impl WorldState {
    pub fn new(seed: u64, dt: f64, hand: Vec3, drones: &[Vec3], edges: usize) -> Self {
        Self {
            tick: 0,
            dt,
            hand: HandState { position: hand, ..HandState::default() },
            agents: drones.iter().map(|p| Agent::new(*p)).collect(),
            links: vec![LinkState::ZERO; edges],
            engaged: false,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            events: Vec::new(),
        }
    }

    /// Simulation clock; computed from the tick count so it never drifts.
    pub fn time(&self) -> f64 {
        self.tick as f64 * self.dt
    }

    pub fn push_event(&mut self, event: Event) {
        self.events.push(TimedEvent { tick: self.tick, t: self.time(), event });
    }

    pub fn set_phase(&mut self, drone: usize, to: ControllerPhase) {
        let from = self.agents[drone].phase;
        if from == to {
            return;
        }
        let a = &mut self.agents[drone];
        a.phase = to;
        a.phase_since_tick = self.tick;
        a.stall_ticks = 0;
        a.stall_reported = false;
        self.push_event(Event::PhaseChanged { drone, from, to });
    }
}
