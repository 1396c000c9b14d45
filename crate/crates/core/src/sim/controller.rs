//! Per-tick phase logic and velocity commands.
//!
//! Following uses a leader tree: every drone follows the endpoint at the far
//! side of its breadth-first edge toward the hand. The leader edge carries the
//! propagated link state `Δx`, driven by `K_v` times the leader's velocity plus
//! the spring-damper forces of any lateral (non-tree) drone–drone edges. The
//! drone's target is its slot relative to the leader minus `Δx`, and the plant
//! is steered onto that target by a critically damped tracking law that
//! inverts the first-order velocity response.

use crate::apf::{apf_command, ApfParams, Obstacle, ObstacleKind};
use crate::impedance::{hand_force, step_link, DiscreteLink, LinkState};
use crate::sim::config::{ControlMode, ControllerConfig};
use crate::sim::plant::{DroneState, PlantParams};
use crate::sim::world::{ControllerPhase, Event, WorldState};
use crate::sim::SimError;
use crate::topology::{Endpoint, LinkGraph};
use crate::vec3::Vec3;

/// Moves every idle drone to `Approach`.
pub fn engage(world: &mut WorldState) {
    world.engaged = true;
    world.push_event(Event::Engaged);
    for i in 0..world.agents.len() {
        if world.agents[i].phase == ControllerPhase::Idle {
            world.set_phase(i, ControllerPhase::Approach);
        }
    }
}

/// Returns every drone to `Idle` and clears all link states.
pub fn disengage(world: &mut WorldState) {
    world.engaged = false;
    world.push_event(Event::Disengaged);
    for i in 0..world.agents.len() {
        world.set_phase(i, ControllerPhase::Idle);
    }
    world.links.iter_mut().for_each(|l| *l = LinkState::ZERO);
}

/// Approach → Attach inside the attach radius; Attach → Follow after the
/// dwell, with the drone's link states reset.
pub fn phase_transition(world: &mut WorldState, graph: &LinkGraph, ctl: &ControllerConfig) {
    for i in 0..world.agents.len() {
        let agent = world.agents[i];
        match agent.phase {
            ControllerPhase::Approach => {
                let slot = world.hand.position + graph.offsets[i];
                if agent.state.position.distance(slot) < ctl.attach_radius {
                    world.set_phase(i, ControllerPhase::Attach);
                }
            }
            ControllerPhase::Attach => {
                let held = (world.tick - agent.phase_since_tick) as f64 * world.dt;
                if held + 1e-9 >= ctl.attach_dwell_s {
                    world.set_phase(i, ControllerPhase::Follow);
                    for (e, edge) in graph.edges.iter().enumerate() {
                        if edge.touches(Endpoint::Drone(i)) {
                            world.links[e] = LinkState::ZERO;
                        }
                    }
                }
            }
            ControllerPhase::Idle | ControllerPhase::Follow => {}
        }
    }
}

/// Velocity command that makes the plant follow a moving target.
///
/// The desired acceleration is a critically damped correction around the
/// target's own acceleration; it is converted to the velocity command that
/// produces exactly that change over one tick of the plant's first-order lag.
/// Target motion and the resulting acceleration are limited to what the
/// plant can deliver, so a jump in the target cannot wind the command up.
pub fn tracking_command(
    d: &DroneState,
    target: Vec3,
    target_velocity: Vec3,
    target_acceleration: Vec3,
    omega: f64,
    plant: &PlantParams,
    dt: f64,
) -> Vec3 {
    let accel = (target_acceleration.clamp_norm(plant.a_max)
        + (target_velocity.clamp_norm(plant.v_max) - d.velocity) * (2.0 * omega)
        + (target - d.position) * (omega * omega))
        .clamp_norm(plant.a_max);
    let gain = -(-dt / plant.tau).exp_m1();
    (d.velocity + accel * (dt / gain)).clamp_norm(plant.v_max)
}

struct Anchor {
    position: Vec3,
    velocity: Vec3,
    acceleration: Vec3,
    offset: Vec3,
}

/// Computes one commanded velocity per drone and advances the link states
/// of following drones.
pub fn controller_tick(
    world: &mut WorldState,
    graph: &LinkGraph,
    links: &[DiscreteLink],
    apf: &ApfParams,
    ctl: &ControllerConfig,
    plant: &PlantParams,
) -> Result<Vec<Vec3>, SimError> {
    let n = world.agents.len();
    if graph.drone_count() != n || links.len() != graph.edges.len() || world.links.len() != graph.edges.len() {
        return Err(SimError::Config(format!(
            "world has {n} drones and {} link states; graph has {} drones and {} edges ({} propagators)",
            world.links.len(),
            graph.drone_count(),
            graph.edges.len(),
            links.len()
        )));
    }
    let dt = world.dt;
    let hand = world.hand;
    let snapshot: Vec<DroneState> = world.agents.iter().map(|a| a.state).collect();
    let leader_edges = graph.leader_edges();

    // lateral spring-damper forces, equal and opposite on the two ends
    let mut lateral = vec![Vec3::ZERO; n];
    for e in graph.lateral_edges() {
        let edge = &graph.edges[e];
        let (Endpoint::Drone(i), Endpoint::Drone(j)) = (edge.a, edge.b) else { continue };
        let rel = LinkState {
            dx: (snapshot[i].position - snapshot[j].position) - (graph.offsets[i] - graph.offsets[j]),
            dv: snapshot[i].velocity - snapshot[j].velocity,
        };
        world.links[e] = rel;
        let force = rel.dx * edge.params.stiffness + rel.dv * edge.params.damping;
        if world.agents[i].phase == ControllerPhase::Follow {
            lateral[i] += force;
        }
        if world.agents[j].phase == ControllerPhase::Follow {
            lateral[j] -= force;
        }
    }

    let mut commands = vec![Vec3::ZERO; n];
    for i in 0..n {
        let me = snapshot[i];
        let slot = hand.position + graph.offsets[i];
        let phase = world.agents[i].phase;
        let use_field = match phase {
            ControllerPhase::Approach => true,
            ControllerPhase::Follow => ctl.mode == ControlMode::PotentialField,
            _ => false,
        };
        commands[i] = if phase == ControllerPhase::Idle {
            Vec3::ZERO
        } else if use_field {
            let mut obstacles: Vec<Obstacle> = snapshot
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, d)| Obstacle::drone(d.position))
                .collect();
            obstacles.push(Obstacle::hand(hand.position));
            let out = apf_command(me.position, slot, &obstacles, apf);
            for idx in out.violations {
                let obstacle = obstacles[idx].kind;
                let index = if obstacle == ObstacleKind::Hand {
                    0
                } else if idx < i {
                    idx
                } else {
                    idx + 1
                };
                world.push_event(Event::ProximityViolation { drone: i, obstacle, index });
            }
            track_stall(world, i, out.vector, me.position.distance(slot), ctl);
            out.vector
        } else if phase == ControllerPhase::Attach {
            tracking_command(&me, slot, hand.velocity, hand.acceleration, ctl.tracking_omega, plant, dt)
        } else {
            let e = leader_edges[i].ok_or(SimError::Topology(crate::topology::TopologyError::Disconnected(i)))?;
            let edge = &graph.edges[e];
            let leader = edge.other(Endpoint::Drone(i)).expect("leader edge touches drone");
            let anchor = match leader {
                Endpoint::Hand => Anchor {
                    position: hand.position,
                    velocity: hand.velocity,
                    acceleration: hand.acceleration,
                    offset: Vec3::ZERO,
                },
                Endpoint::Drone(j) => Anchor {
                    position: snapshot[j].position,
                    velocity: snapshot[j].velocity,
                    acceleration: snapshot[j].acceleration,
                    offset: graph.offsets[j],
                },
            };
            let link = &links[e];
            let force = hand_force(edge.params.velocity_gain, anchor.velocity) + lateral[i];
            let next = step_link(link, &world.links[e], force);
            world.links[e] = next;
            let deflection_accel = Vec3::new(
                link.acceleration(next.axis(0), force.x),
                link.acceleration(next.axis(1), force.y),
                link.acceleration(next.axis(2), force.z),
            );
            let target = anchor.position + (graph.offsets[i] - anchor.offset) - next.dx;
            let target_velocity = anchor.velocity - next.dv;
            let target_acceleration = anchor.acceleration - deflection_accel;
            tracking_command(&me, target, target_velocity, target_acceleration, ctl.tracking_omega, plant, dt)
        };
    }
    for (a, c) in world.agents.iter_mut().zip(&commands) {
        a.command = *c;
    }
    Ok(commands)
}

fn track_stall(world: &mut WorldState, i: usize, command: Vec3, distance: f64, ctl: &ControllerConfig) {
    let stalled = command.norm() < ctl.stall_speed && distance > ctl.attach_radius;
    let limit = (ctl.stall_time_s / world.dt).round() as u64;
    let agent = &mut world.agents[i];
    if !stalled {
        agent.stall_ticks = 0;
        agent.stall_reported = false;
        return;
    }
    agent.stall_ticks += 1;
    if agent.stall_ticks > limit && !agent.stall_reported {
        agent.stall_reported = true;
        world.push_event(Event::ApfStall { drone: i, distance });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::impedance::discretize;
    use crate::topology::{build_topology, TopologyKind};

    fn setup(kind: TopologyKind) -> (WorldState, LinkGraph, Vec<DiscreteLink>) {
        let g = build_topology(kind, 3, 0.3).unwrap();
        let hand = Vec3::new(0.0, 0.0, 1.0);
        let slots: Vec<Vec3> = g.offsets.iter().map(|o| hand + *o).collect();
        let w = WorldState::new(0, 0.01, hand, &slots, g.edges.len());
        let links = g.edges.iter().map(|e| discretize(&e.params, 0.01).unwrap()).collect();
        (w, g, links)
    }

    #[test]
    fn equilibrium_commands_are_zero() {
        for kind in TopologyKind::ALL {
            let (mut w, g, links) = setup(kind);
            for i in 0..3 {
                w.set_phase(i, ControllerPhase::Follow);
            }
            let cmds = controller_tick(
                &mut w,
                &g,
                &links,
                &ApfParams::default(),
                &ControllerConfig::default(),
                &PlantParams::default(),
            )
            .unwrap();
            assert!(cmds.iter().all(|c| c.norm() < 1e-12), "{kind}: {cmds:?}");
        }
    }

    #[test]
    fn approach_reduces_to_field_command() {
        let (mut w, g, links) = setup(TopologyKind::Star);
        w.set_phase(0, ControllerPhase::Approach);
        let slot = w.hand.position + g.offsets[0];
        // 1 m out along +x, well away from the other drones and the hand
        w.agents[0].state.position = slot + Vec3::new(1.0, 0.0, 0.0);
        let cmds = controller_tick(
            &mut w,
            &g,
            &links,
            &ApfParams::default(),
            &ControllerConfig::default(),
            &PlantParams::default(),
        )
        .unwrap();
        let expected = (0.8f64 * 1.0).min(0.47);
        assert!((cmds[0].norm() - expected).abs() < 1e-12);
        assert!(cmds[0].x < 0.0 && cmds[0].y.abs() < 1e-12 && cmds[0].z.abs() < 1e-12);
    }

    #[test]
    fn mismatched_graph_rejected() {
        let (mut w, _, links) = setup(TopologyKind::Star);
        let g2 = build_topology(TopologyKind::Star, 2, 0.3).unwrap();
        let r = controller_tick(
            &mut w,
            &g2,
            &links,
            &ApfParams::default(),
            &ControllerConfig::default(),
            &PlantParams::default(),
        );
        assert!(matches!(r, Err(SimError::Config(_))));
    }

    #[test]
    fn phase_rules() {
        let (mut w, g, _) = setup(TopologyKind::Star);
        let ctl = ControllerConfig::default();
        engage(&mut w);
        assert!(w.agents.iter().all(|a| a.phase == ControllerPhase::Approach));
        // drone 1 sits 6 cm from its slot: outside the attach radius
        w.agents[1].state.position += Vec3::new(0.06, 0.0, 0.0);
        phase_transition(&mut w, &g, &ctl);
        assert_eq!(w.agents[0].phase, ControllerPhase::Attach);
        assert_eq!(w.agents[1].phase, ControllerPhase::Approach);
        w.tick += 49;
        phase_transition(&mut w, &g, &ctl);
        assert_eq!(w.agents[0].phase, ControllerPhase::Attach);
        w.tick += 1;
        w.links[0] = LinkState { dx: Vec3::new(0.1, 0.0, 0.0), dv: Vec3::ZERO };
        phase_transition(&mut w, &g, &ctl);
        assert_eq!(w.agents[0].phase, ControllerPhase::Follow);
        assert_eq!(w.links[0], LinkState::ZERO);
        w.links[2].dx = Vec3::new(0.2, 0.0, 0.0);
        disengage(&mut w);
        assert!(w.agents.iter().all(|a| a.phase == ControllerPhase::Idle));
        assert!(w.links.iter().all(|l| *l == LinkState::ZERO));
    }

    #[test]
    fn tracking_command_holds_matched_state() {
        let d =
            DroneState { position: Vec3::new(1.0, 0.0, 1.0), velocity: Vec3::new(0.3, 0.0, 0.0), ..Default::default() };
        let c = tracking_command(&d, d.position, d.velocity, Vec3::ZERO, 4.0, &PlantParams::default(), 0.01);
        assert!((c - d.velocity).norm() < 1e-12);
    }
}
