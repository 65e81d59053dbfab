//! Kinematic bicycle model with first-order longitudinal dynamics and a
//! rate- and magnitude-limited steering actuator, integrated by explicit
//! forward Euler.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajgen::wrap_angle;

#[derive(Debug, Error, PartialEq)]
pub enum VehicleError {
    #[error("state became non-finite: {0:?}")]
    NonFinite(VehicleState),
    #[error("curvature {kappa} 1/m needs {angle:.4} rad of steering, beyond the {limit:.4} rad limit")]
    Saturation { kappa: f64, angle: f64, limit: f64 },
}

/// Plant and actuator parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Wheelbase, m.
    pub wheelbase: f64,
    /// Steering angle limit, rad.
    pub delta_max: f64,
    /// Steering rate limit, rad/s.
    pub delta_rate_max: f64,
    /// Longitudinal velocity time constant, s.
    pub tau: f64,
    /// Longitudinal velocity gain, m/s per unit command.
    pub velocity_gain: f64,
    /// Proportional gain of the underlying steering-rate loop.
    pub steering_gain: f64,
    /// Integration step, s.
    pub dt: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            wheelbase: 0.17,
            delta_max: 20f64.to_radians(),
            delta_rate_max: 40f64.to_radians(),
            tau: 0.1,
            velocity_gain: 1.0,
            steering_gain: 2.0,
            dt: 0.05,
        }
    }
}

impl VehicleParams {
    pub fn is_valid(&self) -> bool {
        [
            self.wheelbase,
            self.delta_max,
            self.delta_rate_max,
            self.tau,
            self.velocity_gain,
            self.steering_gain,
            self.dt,
        ]
        .iter()
        .all(|p| *p > 0.0 && p.is_finite())
            && self.delta_max < std::f64::consts::FRAC_PI_2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub v: f64,
    pub delta: f64,
}

impl VehicleState {
    /// Yaw rate implied by the bicycle kinematics, `(v/L)·tan δ`.
    pub fn yaw_rate(&self, params: &VehicleParams) -> f64 {
        self.v / params.wheelbase * self.delta.tan()
    }

    /// Path curvature currently driven, `tan δ / L`.
    pub fn curvature(&self, params: &VehicleParams) -> f64 {
        self.delta.tan() / params.wheelbase
    }

    fn is_finite(&self) -> bool {
        [self.x, self.y, self.psi, self.v, self.delta]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Commands applied for one control period.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    /// Desired wheel angle (feedback plus feedforward), rad.
    pub u_delta: f64,
    /// Longitudinal velocity command, m/s.
    pub u_v: f64,
}

/// Advances the vehicle by one `params.dt`.
///
/// The actuator and speed updates and the pose update all read the pre-step
/// state. The steering command is clamped to `±delta_max` before the rate
/// loop, the rate to `±delta_rate_max`, and the integrated angle to
/// `±delta_max` again.
pub fn step(
    state: &VehicleState,
    input: &ControlInput,
    params: &VehicleParams,
) -> Result<VehicleState, VehicleError> {
    let dt = params.dt;
    let command = input.u_delta.clamp(-params.delta_max, params.delta_max);
    let rate = (params.steering_gain * (command - state.delta))
        .clamp(-params.delta_rate_max, params.delta_rate_max);
    let delta = (state.delta + dt * rate).clamp(-params.delta_max, params.delta_max);

    let v = state.v + dt / params.tau * (params.velocity_gain * input.u_v - state.v);

    let (sin, cos) = state.psi.sin_cos();
    let next = VehicleState {
        x: state.x + dt * state.v * cos,
        y: state.y + dt * state.v * sin,
        psi: wrap_angle(state.psi + dt * state.yaw_rate(params)),
        v,
        delta,
    };
    if next.is_finite() {
        Ok(next)
    } else {
        Err(VehicleError::NonFinite(next))
    }
}

/// Steering angle that holds curvature `kappa` in steady state, `arctan(κL)`.
pub fn steady_state_steering(kappa: f64, params: &VehicleParams) -> Result<f64, VehicleError> {
    let angle = (kappa * params.wheelbase).atan();
    if angle.abs() > params.delta_max {
        return Err(VehicleError::Saturation {
            kappa,
            angle,
            limit: params.delta_max,
        });
    }
    Ok(angle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params() -> VehicleParams {
        VehicleParams::default()
    }

    #[test]
    fn first_order_speed_step() {
        let s = step(
            &VehicleState::default(),
            &ControlInput { u_delta: 0.0, u_v: 1.0 },
            &params(),
        )
        .unwrap();
        assert!((s.v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_steering_is_a_fixed_point() {
        let start = VehicleState { psi: 0.7, v: 1.0, ..Default::default() };
        let s = step(&start, &ControlInput { u_delta: 0.0, u_v: 1.0 }, &params()).unwrap();
        assert_eq!(s.delta, 0.0);
        assert_eq!(s.psi, 0.7);
    }

    #[test]
    fn straight_line_position_update() {
        let start = VehicleState { v: 1.0, ..Default::default() };
        let s = step(&start, &ControlInput { u_delta: 0.0, u_v: 1.0 }, &params()).unwrap();
        assert!((s.x - 0.05).abs() < 1e-15);
        assert_eq!(s.y, 0.0);
    }

    #[test]
    fn steady_state_steering_values() {
        let p = params();
        assert_eq!(steady_state_steering(0.0, &p).unwrap(), 0.0);
        let a = steady_state_steering(1.08, &p).unwrap();
        assert!((a - 0.1836f64.atan()).abs() < 1e-15);
        assert!((a - 0.181_577_757_355_992).abs() < 1e-12);
        assert_eq!(
            steady_state_steering(-1.0, &p).unwrap(),
            -(0.17f64).atan()
        );
        assert!(matches!(
            steady_state_steering(5.0, &p),
            Err(VehicleError::Saturation { .. })
        ));
    }

    #[test]
    fn non_finite_input_is_reported() {
        let r = step(
            &VehicleState::default(),
            &ControlInput { u_delta: 0.0, u_v: f64::NAN },
            &params(),
        );
        assert!(matches!(r, Err(VehicleError::NonFinite(_))));
    }

    #[test]
    fn speed_converges_after_ten_time_constants() {
        let p = params();
        let input = ControlInput { u_delta: 0.0, u_v: 0.8 };
        let mut s = VehicleState::default();
        let mut prev_gap = f64::INFINITY;
        let steps = (10.0 * p.tau / p.dt).round() as usize;
        for _ in 0..steps {
            s = step(&s, &input, &p).unwrap();
            let gap = (s.v - 0.8).abs();
            assert!(gap <= prev_gap);
            prev_gap = gap;
        }
        assert!(prev_gap < 1e-3 * 0.8);
    }

    #[test]
    fn held_steering_traces_the_commanded_circle() {
        let p = params();
        let kappa = 1.2;
        let delta = steady_state_steering(kappa, &p).unwrap();
        let mut s = VehicleState { v: 0.6, delta, ..Default::default() };
        let input = ControlInput { u_delta: delta, u_v: 0.6 };
        let mut heading_change = 0.0;
        let mut dist = 0.0;
        for _ in 0..100 {
            let n = step(&s, &input, &p).unwrap();
            heading_change += wrap_angle(n.psi - s.psi);
            dist += (n.x - s.x).hypot(n.y - s.y);
            s = n;
        }
        let measured = heading_change / dist;
        assert!((measured - kappa).abs() / kappa < 1e-2);
    }

    proptest! {
        #[test]
        fn steering_limits_hold(
            delta in -0.349f64..0.349,
            u_delta in -3.0f64..3.0,
            v in 0.0f64..2.0,
            psi in -3.14f64..3.14,
        ) {
            let p = params();
            let s = VehicleState { delta, v, psi, ..Default::default() };
            let n = step(&s, &ControlInput { u_delta, u_v: v }, &p).unwrap();
            prop_assert!(n.delta.abs() <= p.delta_max);
            prop_assert!((n.delta - s.delta).abs() / p.dt <= p.delta_rate_max + 1e-12);
            prop_assert!(n.psi > -std::f64::consts::PI && n.psi <= std::f64::consts::PI);
        }

        #[test]
        fn step_is_deterministic(x in -5.0f64..5.0, d in -0.3f64..0.3, u in -1.0f64..1.0) {
            let p = params();
            let s = VehicleState { x, y: -x, psi: d * 3.0, v: 1.0, delta: d };
            let i = ControlInput { u_delta: u, u_v: 0.5 };
            let a = step(&s, &i, &p).unwrap();
            let b = step(&s, &i, &p).unwrap();
            prop_assert_eq!(
                [a.x, a.y, a.psi, a.v, a.delta].map(f64::to_bits),
                [b.x, b.y, b.psi, b.v, b.delta].map(f64::to_bits)
            );
        }
    }
}
