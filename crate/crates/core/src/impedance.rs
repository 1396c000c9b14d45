//! Virtual mass-spring-damper links.
//!
//! Each link obeys `M·Δẍ + D·Δẋ + K·Δx = F_ext` independently per Cartesian
//! axis. The continuous system `[Δẋ, Δẍ]ᵀ = A·[Δx, Δẋ]ᵀ + B·F` with
//! `A = [[0, 1], [b, a]]`, `B = [0, c]ᵀ` (`a = −D/M`, `b = −K/M`, `c = 1/M`)
//! is discretized exactly under a zero-order hold on `F`. Only the critically
//! damped case is supported: `A` then has the single repeated eigenvalue
//! `λ = a/2` and the matrix exponential collapses to
//!
//! ```text
//! e^{AT} = e^{λT}·(I + (A − λI)·T) = e^{λT}·[[1 − λT, T], [bT, 1 + (a − λ)T]]
//! B_d    = A⁻¹(e^{AT} − I)B         = (c/b)·[e^{λT}(1 − λT) − 1, bT·e^{λT}]ᵀ
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vec3::Vec3;

/// Tolerance on `|ζ − 1|` accepted by [`discretize`].
pub const CRITICAL_DAMPING_TOLERANCE: f64 = 1e-6;

/// Hand-velocity force scaling used when a configuration does not set one.
pub const DEFAULT_VELOCITY_GAIN: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ImpedanceError {
    #[error("virtual mass must be positive, got {0}")]
    NonPositiveMass(f64),
    #[error("spring stiffness must be positive, got {0}")]
    NonPositiveStiffness(f64),
    #[error("damping must be non-negative, got {0}")]
    NegativeDamping(f64),
    #[error("hand-velocity scaling must be non-negative, got {0}")]
    NegativeVelocityGain(f64),
    #[error("not critically damped: zeta = {zeta}")]
    NotCriticallyDamped { zeta: f64 },
    #[error("timestep must be non-negative, got {0}")]
    NegativeTimestep(f64),
    #[error("non-finite impedance parameter")]
    NonFinite,
}

/// `(M, D, K, K_v)` of one virtual link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpedanceParams {
    /// Virtual mass (kg).
    #[serde(rename = "M")]
    pub mass: f64,
    /// Damping coefficient (N·s/m).
    #[serde(rename = "D")]
    pub damping: f64,
    /// Spring stiffness (N/m).
    #[serde(rename = "K")]
    pub stiffness: f64,
    /// Hand-velocity force scaling (N·s/m).
    #[serde(rename = "K_v")]
    pub velocity_gain: f64,
}

impl ImpedanceParams {
    pub fn new(mass: f64, damping: f64, stiffness: f64, velocity_gain: f64) -> Result<Self, ImpedanceError> {
        let p = Self { mass, damping, stiffness, velocity_gain };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ImpedanceError> {
        let all = [self.mass, self.damping, self.stiffness, self.velocity_gain];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(ImpedanceError::NonFinite);
        }
        if self.mass <= 0.0 {
            return Err(ImpedanceError::NonPositiveMass(self.mass));
        }
        if self.stiffness <= 0.0 {
            return Err(ImpedanceError::NonPositiveStiffness(self.stiffness));
        }
        if self.damping < 0.0 {
            return Err(ImpedanceError::NegativeDamping(self.damping));
        }
        if self.velocity_gain < 0.0 {
            return Err(ImpedanceError::NegativeVelocityGain(self.velocity_gain));
        }
        Ok(())
    }

    /// Damping ratio `D / (2·sqrt(M·K))`.
    pub fn damping_ratio(&self) -> f64 {
        self.damping / (2.0 * (self.mass * self.stiffness).sqrt())
    }

    pub fn is_critically_damped(&self) -> bool {
        (self.damping_ratio() - 1.0).abs() <= CRITICAL_DAMPING_TOLERANCE
    }

    /// Same mass, stiffness and scaling with `D` recomputed for `ζ = 1`.
    pub fn with_critical_damping(&self) -> Result<Self, ImpedanceError> {
        critically_damped(self.mass, self.stiffness, self.velocity_gain)
    }
}

impl Default for ImpedanceParams {
    /// `M = 1.9`, `K = 20.88` with critical damping and the default `K_v`.
    fn default() -> Self {
        critically_damped(1.9, 20.88, DEFAULT_VELOCITY_GAIN).expect("default parameters are valid")
    }
}

/// Builds parameters with `D = 2·sqrt(M·K)`.
pub fn critically_damped(mass: f64, stiffness: f64, velocity_gain: f64) -> Result<ImpedanceParams, ImpedanceError> {
    if !mass.is_finite() || !stiffness.is_finite() {
        return Err(ImpedanceError::NonFinite);
    }
    if mass <= 0.0 {
        return Err(ImpedanceError::NonPositiveMass(mass));
    }
    if stiffness <= 0.0 {
        return Err(ImpedanceError::NonPositiveStiffness(stiffness));
    }
    ImpedanceParams::new(mass, 2.0 * (mass * stiffness).sqrt(), stiffness, velocity_gain)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedLinkConstants {
    /// `−D/M` (1/s).
    pub a: f64,
    /// `−K/M` (1/s²).
    pub b: f64,
    /// `1/M` (1/kg).
    pub c: f64,
    /// Repeated eigenvalue `a/2` of the system matrix (1/s).
    pub lambda: f64,
    /// `sqrt(K/M)` (rad/s).
    pub omega_n: f64,
    pub zeta: f64,
}

/// Computes the state-space constants of a link.
///
/// `lambda` is always reported as `a/2`, which is the repeated root of
/// `λ² − aλ − b = 0` when `ζ = 1`. Rejection of non-critical parameters
/// happens in [`discretize`], so this can be used to inspect near-critical
/// sets such as `(1.9, 12.6, 20.88)`.
pub fn derive_constants(p: &ImpedanceParams) -> Result<DerivedLinkConstants, ImpedanceError> {
    p.validate()?;
    Ok(DerivedLinkConstants {
        a: -p.damping / p.mass,
        b: -p.stiffness / p.mass,
        c: 1.0 / p.mass,
        lambda: -p.damping / (2.0 * p.mass),
        omega_n: (p.stiffness / p.mass).sqrt(),
        zeta: p.damping_ratio(),
    })
}

/// Exact zero-order-hold propagator of one link for a fixed timestep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteLink {
    pub params: ImpedanceParams,
    pub timestep: f64,
    pub a_d: [[f64; 2]; 2],
    pub b_d: [f64; 2],
    pub constants: DerivedLinkConstants,
}

pub fn discretize(p: &ImpedanceParams, timestep: f64) -> Result<DiscreteLink, ImpedanceError> {
    if !timestep.is_finite() {
        return Err(ImpedanceError::NonFinite);
    }
    if timestep < 0.0 {
        return Err(ImpedanceError::NegativeTimestep(timestep));
    }
    let k = derive_constants(p)?;
    if (k.zeta - 1.0).abs() > CRITICAL_DAMPING_TOLERANCE {
        return Err(ImpedanceError::NotCriticallyDamped { zeta: k.zeta });
    }
    Ok(DiscreteLink {
        params: *p,
        timestep,
        a_d: transition_matrix(&k, timestep),
        b_d: input_vector(&k, timestep),
        constants: k,
    })
}

fn transition_matrix(k: &DerivedLinkConstants, t: f64) -> [[f64; 2]; 2] {
    let e = (k.lambda * t).exp();
    [[e * (1.0 - k.lambda * t), e * t], [e * k.b * t, e * (1.0 + (k.a - k.lambda) * t)]]
}

fn input_vector(k: &DerivedLinkConstants, t: f64) -> [f64; 2] {
    let e = (k.lambda * t).exp();
    [(k.c / k.b) * (e * (1.0 - k.lambda * t) - 1.0), k.c * t * e]
}

/// Displacement state of a link along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AxisState {
    /// `Δx = x_c − x_d` (m).
    pub dx: f64,
    /// `Δẋ` (m/s).
    pub dv: f64,
}

impl AxisState {
    pub const fn new(dx: f64, dv: f64) -> Self {
        Self { dx, dv }
    }
}

/// Three independent axis states of one link.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LinkState {
    pub dx: Vec3,
    pub dv: Vec3,
}

impl LinkState {
    pub const ZERO: LinkState = LinkState { dx: Vec3::ZERO, dv: Vec3::ZERO };

    pub fn axis(&self, axis: usize) -> AxisState {
        AxisState::new(self.dx[axis], self.dv[axis])
    }

    pub fn set_axis(&mut self, axis: usize, s: AxisState) {
        self.dx[axis] = s.dx;
        self.dv[axis] = s.dv;
    }

    pub fn is_finite(&self) -> bool {
        self.dx.is_finite() && self.dv.is_finite()
    }
}

impl DiscreteLink {
    pub fn step_axis(&self, s: AxisState, force: f64) -> AxisState {
        let [[a00, a01], [a10, a11]] = self.a_d;
        AxisState {
            dx: a00 * s.dx + a01 * s.dv + self.b_d[0] * force,
            dv: a10 * s.dx + a11 * s.dv + self.b_d[1] * force,
        }
    }

    /// `Δẍ` implied by the continuous dynamics at state `s` under `force`.
    pub fn acceleration(&self, s: AxisState, force: f64) -> f64 {
        let p = &self.params;
        (force - p.damping * s.dv - p.stiffness * s.dx) / p.mass
    }

    /// Stored energy `½K·Δx² + ½M·Δẋ²` along one axis.
    pub fn energy(&self, s: AxisState) -> f64 {
        0.5 * self.params.stiffness * s.dx * s.dx + 0.5 * self.params.mass * s.dv * s.dv
    }
}

/// Advances a three-axis link state by one timestep with the force held
/// constant over the step.
pub fn step_link(link: &DiscreteLink, s: &LinkState, force: Vec3) -> LinkState {
    let mut out = LinkState::ZERO;
    for axis in 0..3 {
        out.set_axis(axis, link.step_axis(s.axis(axis), force[axis]));
    }
    out
}

/// Force exerted on a hand-coupled link: `K_v · v_hand`, per axis.
pub fn hand_force(velocity_gain: f64, hand_velocity: Vec3) -> Vec3 {
    hand_velocity * velocity_gain
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit() -> ImpedanceParams {
        ImpedanceParams::new(1.0, 2.0, 1.0, 10.0).unwrap()
    }

    #[test]
    fn critically_damped_values() {
        let p = critically_damped(1.9, 20.88, 10.0).unwrap();
        assert_relative_eq!(p.damping, 12.597, epsilon = 5e-4);
        assert!((p.damping_ratio() - 1.0).abs() < 1e-9);
        assert_eq!(critically_damped(1.0, 1.0, 0.0).unwrap().damping, 2.0);
        assert_eq!(critically_damped(4.0, 9.0, 0.0).unwrap().damping, 12.0);
    }

    #[test]
    fn critically_damped_rejects_bad_inputs() {
        assert!(matches!(critically_damped(0.0, 1.0, 1.0), Err(ImpedanceError::NonPositiveMass(_))));
        assert!(matches!(critically_damped(1.0, -2.0, 1.0), Err(ImpedanceError::NonPositiveStiffness(_))));
        assert!(matches!(ImpedanceParams::new(1.0, -1.0, 1.0, 0.0), Err(ImpedanceError::NegativeDamping(_))));
        assert!(matches!(ImpedanceParams::new(1.0, 2.0, 1.0, -1.0), Err(ImpedanceError::NegativeVelocityGain(_))));
    }

    #[test]
    fn derived_constants_for_reported_set() {
        let p = ImpedanceParams::new(1.9, 12.6, 20.88, 10.0).unwrap();
        let k = derive_constants(&p).unwrap();
        assert_relative_eq!(k.omega_n, 3.3151, epsilon = 1e-4);
        assert_relative_eq!(k.zeta, 1.00023, epsilon = 1e-5);
        assert_relative_eq!(k.lambda, -3.3158, epsilon = 1e-4);
        // still outside the propagator's tolerance
        assert!(matches!(discretize(&p, 0.01), Err(ImpedanceError::NotCriticallyDamped { .. })));
    }

    #[test]
    fn derived_constants_unit_and_scaled() {
        for p in [unit(), ImpedanceParams::new(2.0, 4.0, 2.0, 0.0).unwrap()] {
            let k = derive_constants(&p).unwrap();
            assert_relative_eq!(k.omega_n, 1.0);
            assert_relative_eq!(k.zeta, 1.0);
            assert_relative_eq!(k.lambda, -1.0);
        }
    }

    #[test]
    fn zero_timestep_is_identity() {
        let l = discretize(&ImpedanceParams::default(), 0.0).unwrap();
        assert_eq!(l.a_d, [[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(l.b_d[0], 0.0);
        assert_eq!(l.b_d[1], 0.0);
    }

    #[test]
    fn unit_link_closed_form() {
        let l = discretize(&unit(), 1.0).unwrap();
        let e = (-1.0f64).exp();
        assert_relative_eq!(l.a_d[0][0], 2.0 * e, epsilon = 1e-12);
        assert_relative_eq!(l.a_d[0][1], e, epsilon = 1e-12);
        assert_relative_eq!(l.a_d[1][0], -e, epsilon = 1e-12);
        assert_relative_eq!(l.a_d[1][1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn negative_timestep_rejected() {
        assert!(matches!(discretize(&unit(), -0.1), Err(ImpedanceError::NegativeTimestep(_))));
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        let l = discretize(&ImpedanceParams::default(), 0.01).unwrap();
        assert_eq!(step_link(&l, &LinkState::ZERO, Vec3::ZERO), LinkState::ZERO);
    }

    #[test]
    fn unit_link_decays_within_ten_seconds() {
        let l = discretize(&unit(), 0.01).unwrap();
        let mut s = AxisState::new(1.0, 0.0);
        for _ in 0..1000 {
            s = l.step_axis(s, 0.0);
        }
        assert!(s.dx.abs() < 1e-3);
        assert_relative_eq!(s.dx, (-10.0f64).exp() * 11.0, epsilon = 1e-9);
    }

    #[test]
    fn constant_force_settles_at_static_deflection() {
        let l = discretize(&ImpedanceParams::default(), 0.01).unwrap();
        let mut s = AxisState::default();
        for _ in 0..2000 {
            s = l.step_axis(s, 2.0);
        }
        assert_relative_eq!(s.dx, 2.0 / 20.88, epsilon = 1e-9);
    }

    #[test]
    fn hand_force_is_scaled_velocity() {
        assert_eq!(hand_force(10.0, Vec3::ZERO), Vec3::ZERO);
        assert_eq!(hand_force(10.0, Vec3::new(0.2, 0.0, 0.0)), Vec3::new(2.0, 0.0, 0.0));
        assert_eq!(hand_force(0.0, Vec3::new(5.0, -1.0, 3.0)), Vec3::ZERO);
    }

    #[test]
    fn params_serialize_with_symbol_names() {
        let p = ImpedanceParams::new(1.0, 2.0, 1.0, 3.0).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"M":1.0,"D":2.0,"K":1.0,"K_v":3.0}"#);
    }
}
