//! Deterministic fixed-timestep swarm world.
//!
//! Each tick: queued commands are applied, the hand advances, phases are
//! updated, the controller computes velocity commands, and every drone's
//! plant is stepped in index order from the single seeded RNG.

pub mod config;
pub mod controller;
pub mod plant;
pub mod trace;
pub mod world;

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::apf::ApfError;
use crate::haptic::{encode_pattern, ActuatorEdge, PatternError, PatternSchedule};
use crate::impedance::{discretize, DiscreteLink, ImpedanceError, ImpedanceParams, LinkState};
use crate::topology::{LinkGraph, TopologyConfig, TopologyError, TopologyKind};
use crate::trajectory::{ReferenceTrajectory, TrajectoryError};
use crate::vec3::Vec3;

pub use config::{ControlMode, ControllerConfig, HandConfig, ImpedanceConfig, ScenarioConfig, StartLayout};
pub use controller::{controller_tick, phase_transition, tracking_command};
pub use plant::{plant_step, DroneState, PlantParams};
pub use trace::{Trace, TraceRow, TRACE_HEADER};
pub use world::{
    ControllerPhase, DroneView, Event, HandState, HandView, TimedEvent, TopologyView, WorldCommand, WorldSnapshot,
    WorldState,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("invalid command: {0}")]
    Command(String),
    #[error("{0}")]
    Impedance(#[from] ImpedanceError),
    #[error("topology: {0}")]
    Topology(#[from] TopologyError),
    #[error("potential field: {0}")]
    Apf(#[from] ApfError),
    #[error("pattern: {0}")]
    Pattern(#[from] PatternError),
    #[error("trajectory: {0}")]
    Trajectory(#[from] TrajectoryError),
}

/// Hand position stream.
#[derive(Debug, Clone)]
pub enum HandSource {
    Static(Vec3),
    Trajectory(ReferenceTrajectory),
    /// First-order filter toward the last commanded target.
    Live {
        target: Vec3,
        position: Vec3,
        smoothing_s: f64,
    },
    /// Positions for ticks `1, 2, …`; the last one is held.
    Recorded(Vec<Vec3>),
}

impl HandSource {
    pub fn from_config(cfg: &HandConfig, dt: f64) -> Result<Self, SimError> {
        Ok(match cfg {
            HandConfig::Static { position } => HandSource::Static(*position),
            HandConfig::Square(p) => HandSource::Trajectory(p.generate(dt)?),
            HandConfig::Live { initial, smoothing_s } => {
                HandSource::Live { target: *initial, position: *initial, smoothing_s: *smoothing_s }
            }
        })
    }

    /// Hand position at `tick` (called once per tick, in order).
    fn advance(&mut self, tick: u64, current: Vec3, dt: f64) -> Vec3 {
        match self {
            HandSource::Static(p) => *p,
            HandSource::Trajectory(r) => r.at_tick(tick as usize).position,
            HandSource::Live { target, position, smoothing_s } => {
                let blend = -(-dt / *smoothing_s).exp_m1();
                *position = *position + (*target - *position) * blend;
                *position
            }
            HandSource::Recorded(p) => p.get(tick as usize - 1).or_else(|| p.last()).copied().unwrap_or(current),
        }
    }
}

#[derive(Debug, Clone)]
struct ActivePattern {
    schedule: PatternSchedule,
    edges: Vec<ActuatorEdge>,
    next: usize,
    start_tick: u64,
}

/// What one tick produced: the per-drone commands that were sent.
#[derive(Debug, Clone, PartialEq)]
pub struct TickOutput {
    pub tick: u64,
    pub commands: Vec<Vec3>,
}

/// The single owner of a world and everything needed to step it.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: ScenarioConfig,
    world: WorldState,
    graph: LinkGraph,
    topology: TopologyConfig,
    params: ImpedanceParams,
    links: Vec<DiscreteLink>,
    hand: HandSource,
    pending: VecDeque<WorldCommand>,
    scheduled: BTreeMap<u64, Vec<WorldCommand>>,
    pattern: Option<ActivePattern>,
    engage_done: bool,
    events_read: usize,
}

impl Simulation {
    pub fn new(config: ScenarioConfig) -> Result<Self, SimError> {
        let hand = HandSource::from_config(&config.hand, config.dt)?;
        Self::with_hand(config, hand)
    }

    pub fn with_hand(config: ScenarioConfig, hand: HandSource) -> Result<Self, SimError> {
        config.validate()?;
        let params = config.impedance.params()?;
        let topology = config.topology.clone();
        let graph = topology.build(params)?;
        let links = discretize_edges(&graph, config.dt)?;
        let hand_pos = config.hand.initial_position();
        let starts: Vec<Vec3> = match &config.start {
            config::StartLayout::Slots => graph.offsets.iter().map(|o| hand_pos + *o).collect(),
            config::StartLayout::Ground => {
                graph.offsets.iter().map(|o| Vec3::new(hand_pos.x + 2.0 * o.x, hand_pos.y + 2.0 * o.y, 0.0)).collect()
            }
            config::StartLayout::Positions(p) => p.clone(),
        };
        let mut world = WorldState::new(config.seed, config.dt, hand_pos, &starts, graph.edges.len());
        world.push_event(Event::Initial { hand: hand_pos, drones: starts });
        Ok(Self {
            config,
            world,
            graph,
            topology,
            params,
            links,
            hand,
            pending: VecDeque::new(),
            scheduled: BTreeMap::new(),
            pattern: None,
            engage_done: false,
            events_read: 0,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn graph(&self) -> &LinkGraph {
        &self.graph
    }

    pub fn impedance(&self) -> ImpedanceParams {
        self.params
    }

    pub fn tick(&self) -> u64 {
        self.world.tick
    }

    /// Queues a command for the next tick boundary.
    pub fn enqueue(&mut self, cmd: WorldCommand) {
        self.pending.push_back(cmd);
    }

    /// Queues a command for the boundary before stepping from `tick`.
    pub fn schedule(&mut self, tick: u64, cmd: WorldCommand) {
        self.scheduled.entry(tick).or_default().push(cmd);
    }

    /// Events appended since the previous call.
    pub fn take_new_events(&mut self) -> &[TimedEvent] {
        let start = self.events_read;
        self.events_read = self.world.events.len();
        &self.world.events[start..]
    }

    /// Appends a free-form note to the event log.
    pub fn note(&mut self, detail: impl Into<String>) {
        self.world.push_event(Event::Note { detail: detail.into() });
    }

    pub fn events(&self) -> &[TimedEvent] {
        &self.world.events
    }

    pub fn snapshot(&self) -> WorldSnapshot {
        let w = &self.world;
        WorldSnapshot {
            tick: w.tick,
            t: w.time(),
            hand: HandView { position: w.hand.position, velocity: w.hand.velocity },
            drones: w
                .agents
                .iter()
                .enumerate()
                .map(|(id, a)| DroneView { id, phase: a.phase, position: a.state.position, velocity: a.state.velocity })
                .collect(),
            pattern: self.pattern.as_ref().map(|p| p.schedule.label),
            topology: TopologyView {
                kind: self.graph.kind,
                edges: self.graph.edges.iter().map(|e| [e.a, e.b]).collect(),
            },
        }
    }

    /// Trace rows describing the current tick.
    pub fn rows(&self) -> Vec<TraceRow> {
        let w = &self.world;
        w.agents
            .iter()
            .enumerate()
            .map(|(id, a)| TraceRow {
                tick: w.tick,
                t: w.time(),
                hand: w.hand.position,
                drone_id: id,
                phase: a.phase,
                position: a.state.position,
                velocity: a.state.velocity,
                command: a.command,
            })
            .collect()
    }

    pub fn step(&mut self) -> Result<TickOutput, SimError> {
        if let Some(cmds) = self.scheduled.remove(&self.world.tick) {
            for c in cmds {
                self.apply(c);
            }
        }
        while let Some(c) = self.pending.pop_front() {
            self.apply(c);
        }
        if let Some(at) = self.config.engage_at_s {
            if !self.engage_done && self.world.time() + 1e-9 >= at {
                self.engage_done = true;
                if !self.world.engaged {
                    controller::engage(&mut self.world);
                }
            }
        }

        let dt = self.world.dt;
        let next_tick = self.world.tick + 1;
        let prev = self.world.hand;
        let position = self.hand.advance(next_tick, prev.position, dt);
        let velocity = (position - prev.position) / dt;
        self.world.hand = HandState { position, velocity, acceleration: (velocity - prev.velocity) / dt };

        phase_transition(&mut self.world, &self.graph, &self.config.controller);
        let commands = controller_tick(
            &mut self.world,
            &self.graph,
            &self.links,
            &self.config.apf,
            &self.config.controller,
            &self.config.plant,
        )?;
        let plant = self.config.plant;
        let world = &mut self.world;
        for (agent, cmd) in world.agents.iter_mut().zip(&commands) {
            agent.state = plant_step(&agent.state, *cmd, &plant, dt, &mut world.rng);
        }
        world.tick = next_tick;
        self.advance_pattern();
        Ok(TickOutput { tick: next_tick, commands })
    }

    fn apply(&mut self, cmd: WorldCommand) {
        if let Err(e) = cmd.validate() {
            self.world.push_event(Event::CommandRejected { command: cmd, reason: e.to_string() });
            return;
        }
        let outcome = match &cmd {
            WorldCommand::SetHandTarget { x, y, z } => {
                if let HandSource::Live { target, .. } = &mut self.hand {
                    *target = Vec3::new(*x, *y, *z);
                }
                Ok(())
            }
            WorldCommand::SetTopology { kind } => self.set_topology(*kind),
            WorldCommand::SetImpedance { .. } => {
                let params = cmd.impedance_params().expect("is set_impedance");
                params.and_then(|p| self.set_impedance(p))
            }
            WorldCommand::TriggerPattern { label } => {
                encode_pattern(label.surface, label.direction, &self.config.pattern)
                    .map(|schedule| {
                        self.world.push_event(Event::PatternStarted { label: *label });
                        self.pattern = Some(ActivePattern {
                            edges: schedule.edges(),
                            schedule,
                            next: 0,
                            start_tick: self.world.tick,
                        });
                    })
                    .map_err(SimError::from)
            }
            WorldCommand::Engage {} => {
                controller::engage(&mut self.world);
                Ok(())
            }
            WorldCommand::Disengage {} => {
                controller::disengage(&mut self.world);
                Ok(())
            }
        };
        match outcome {
            Ok(()) => {
                self.world.push_event(Event::CommandApplied { command: cmd.clone() });
                if matches!(cmd, WorldCommand::TriggerPattern { .. }) {
                    self.advance_pattern();
                }
            }
            Err(e) => self.world.push_event(Event::CommandRejected { command: cmd, reason: e.to_string() }),
        }
    }

    fn set_topology(&mut self, kind: TopologyKind) -> Result<(), SimError> {
        let mut topology = self.topology.clone();
        topology.kind = kind;
        // overrides name edges of the configured kind only
        if kind != self.config.topology.kind {
            topology.overrides.clear();
        }
        let graph = topology.build(self.params)?;
        self.links = discretize_edges(&graph, self.world.dt)?;
        self.world.links = vec![LinkState::ZERO; graph.edges.len()];
        self.graph = graph;
        self.topology = topology;
        self.world.push_event(Event::TopologyChanged { kind });
        Ok(())
    }

    fn set_impedance(&mut self, params: ImpedanceParams) -> Result<(), SimError> {
        let graph = self.topology.build(params)?;
        let links = discretize_edges(&graph, self.world.dt)?;
        self.graph = graph;
        self.links = links;
        self.params = params;
        self.world.push_event(Event::ImpedanceChanged { params });
        Ok(())
    }

    fn advance_pattern(&mut self) {
        let Some(active) = self.pattern.as_mut() else { return };
        let elapsed_ms = (self.world.tick - active.start_tick) as f64 * self.world.dt * 1000.0;
        let mut fired = Vec::new();
        while let Some(edge) = active.edges.get(active.next) {
            if edge.at_ms > elapsed_ms + 1e-6 {
                break;
            }
            fired.push(*edge);
            active.next += 1;
        }
        let finished = active.next == active.edges.len();
        let label = active.schedule.label;
        for e in fired {
            let (on, frequency_hz, amplitude) = match e.drive {
                Some(d) => (true, d.frequency_hz, d.amplitude),
                None => (false, 0.0, 0.0),
            };
            self.world.push_event(Event::Actuator { finger: e.finger, on, frequency_hz, amplitude });
        }
        if finished {
            self.pattern = None;
            self.world.push_event(Event::PatternFinished { label });
        }
    }
}

fn discretize_edges(graph: &LinkGraph, dt: f64) -> Result<Vec<DiscreteLink>, SimError> {
    graph.edges.iter().map(|e| discretize(&e.params, dt).map_err(SimError::from)).collect()
}

/// Runs `n_ticks` ticks from the configuration's initial state.
pub fn run_scenario(config: &ScenarioConfig, hand: HandSource, n_ticks: u64) -> Result<Trace, SimError> {
    let mut sim = Simulation::with_hand(config.clone(), hand)?;
    let mut trace = Trace::new(config.dt, sim.snapshot());
    for _ in 0..n_ticks {
        sim.step()?;
        trace.rows.extend(sim.rows());
    }
    trace.events = sim.world.events;
    Ok(trace)
}

/// Runs a scenario with its configured hand source and duration.
pub fn run_config(config: &ScenarioConfig) -> Result<Trace, SimError> {
    let hand = HandSource::from_config(&config.hand, config.dt)?;
    run_scenario(config, hand, config.tick_count())
}

/// Re-runs a recorded session: hand positions come from the recorded rows
/// and world commands from the recorded `command_applied` events.
pub fn replay(config: &ScenarioConfig, rows: &[TraceRow], events: &[TimedEvent]) -> Result<Trace, SimError> {
    let hand = trace::hand_stream(rows);
    let mut sim = Simulation::with_hand(config.clone(), HandSource::Recorded(hand.clone()))?;
    for e in events {
        if let Event::CommandApplied { command } = &e.event {
            if !matches!(command, WorldCommand::SetHandTarget { .. }) {
                sim.schedule(e.tick, command.clone());
            }
        }
    }
    let mut trace = Trace::new(config.dt, sim.snapshot());
    for _ in 0..hand.len() {
        sim.step()?;
        trace.rows.extend(sim.rows());
    }
    trace.events = sim.world.events;
    Ok(trace)
}

/// Reads the `config.json`, `trace.csv` and `events.jsonl` of a recorded session.
pub fn read_recording(dir: &std::path::Path) -> Result<(ScenarioConfig, Vec<TraceRow>, Vec<TimedEvent>), SimError> {
    let config = ScenarioConfig::from_file(&dir.join(trace::CONFIG_FILE))?;
    let rows = trace::read_csv(&dir.join(trace::TRACE_FILE))?;
    let path = dir.join(trace::EVENTS_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
    Ok((config, rows, trace::parse_events(&text)?))
}
