//! Impedance-coupled drone swarm simulator.
//!
//! Drones are tied to a virtual hand (and to each other) by critically
//! damped mass-spring-damper links that are advanced with an exact discrete
//! propagator. An artificial potential field brings drones to their
//! formation slots, and a vibrotactile codec turns contact events into
//! three-finger actuator schedules.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod apf;
pub mod bench;
pub mod haptic;
pub mod impedance;
pub mod sim;
pub mod topology;
pub mod trajectory;
pub mod vec3;

pub use vec3::Vec3;
