//! Moving-frame trajectory tracking: feedback steering and speed laws,
//! feedforward sources, closed-loop laps and the mean tracking error.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neuralff::{FrozenNet, MlpModel, Sample};
use crate::trajgen::{wrap_angle, Trajectory, TrajectorySample};
use crate::vehicle::{self, ControlInput, VehicleError, VehicleParams, VehicleState};

/// Lap aborts once either tracking error exceeds this, in meters.
pub const DIVERGENCE_LIMIT: f64 = 10.0;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("lap diverged at t = {t:.2} s (tracking error {error:.2} m)")]
    Diverged { t: f64, error: f64 },
    #[error("empty lap log")]
    EmptyLog,
    #[error(transparent)]
    Vehicle(#[from] VehicleError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Feedback gains. The steering-rate gain lives in
/// [`VehicleParams::steering_gain`] because that loop runs in the actuator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlGains {
    /// Lateral error.
    pub k1: f64,
    /// Orientation error.
    pub k2: f64,
    /// Yaw-rate error.
    pub k3: f64,
    /// Longitudinal error.
    pub k5: f64,
}

impl Default for ControlGains {
    fn default() -> Self {
        Self {
            k1: 0.2,
            k2: 0.4,
            k3: 0.05,
            k5: 1.0,
        }
    }
}

/// Position error expressed in the reference's moving frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrackingErrors {
    /// Along the reference heading.
    pub eps_x: f64,
    /// Perpendicular to it, positive to the left.
    pub eps_y: f64,
}

impl TrackingErrors {
    pub fn norm(&self) -> f64 {
        self.eps_x.hypot(self.eps_y)
    }
}

pub fn tracking_errors(desired: &TrajectorySample, actual: &VehicleState) -> TrackingErrors {
    let (sin, cos) = desired.psi_d.sin_cos();
    let (dx, dy) = (desired.x_d - actual.x, desired.y_d - actual.y);
    TrackingErrors {
        eps_x: cos * dx + sin * dy,
        eps_y: -sin * dx + cos * dy,
    }
}

/// `K1·ε_y + K2·wrap(ψ_d − ψ) + K3·(ψ̇_d − ψ̇)`.
pub fn fb_steering(
    errors: &TrackingErrors,
    desired: &TrajectorySample,
    actual: &VehicleState,
    actual_yaw_rate: f64,
    gains: &ControlGains,
) -> f64 {
    gains.k1 * errors.eps_y
        + gains.k2 * wrap_angle(desired.psi_d - actual.psi)
        + gains.k3 * (desired.psi_dot_d - actual_yaw_rate)
}

/// Velocity command: desired speed plus `K5·ε_x`.
pub fn fb_velocity(errors: &TrackingErrors, desired_v: f64, gains: &ControlGains) -> f64 {
    desired_v + gains.k5 * errors.eps_x
}

/// Model-inversion feedforward `arctan(κ_d·L)`; independent of speed.
pub fn analytic_ff(kappa_d: f64, _v_d: f64, params: &VehicleParams) -> f64 {
    (kappa_d * params.wheelbase).atan()
}

/// Where the feedforward steering term comes from.
#[derive(Clone, Copy)]
pub enum FeedforwardSource<'a> {
    None,
    Analytic,
    Neural(&'a MlpModel),
    /// Any other map `(κ_d, v_d) → u_δ^FF`.
    Custom(&'a (dyn Fn(f64, f64) -> f64 + Sync)),
}

impl std::fmt::Debug for FeedforwardSource<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::None => "None",
            Self::Analytic => "Analytic",
            Self::Neural(_) => "Neural",
            Self::Custom(_) => "Custom",
        })
    }
}

enum Prepared<'a> {
    None,
    Analytic(f64),
    Neural(FrozenNet),
    Custom(&'a (dyn Fn(f64, f64) -> f64 + Sync)),
}

impl Prepared<'_> {
    fn eval(&self, kappa: f64, v: f64) -> f64 {
        match self {
            Prepared::None => 0.0,
            Prepared::Analytic(l) => (kappa * l).atan(),
            Prepared::Neural(net) => net.eval(kappa, v),
            Prepared::Custom(f) => f(kappa, v),
        }
    }
}

/// One control period of a lap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LapRecord {
    pub t: f64,
    pub state: VehicleState,
    pub errors: TrackingErrors,
    pub u_delta: f64,
    pub u_v: f64,
    /// Driven curvature `tan δ / L`.
    pub kappa_a: f64,
}

impl LapRecord {
    /// The `(κ_a, v_a, δ_a)` training triple observed at this step.
    pub fn sample(&self) -> Sample {
        Sample {
            kappa: self.kappa_a,
            v: self.state.v,
            delta: self.state.delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LapLog {
    pub records: Vec<LapRecord>,
}

impl LapLog {
    pub fn samples(&self) -> Vec<Sample> {
        self.records.iter().map(LapRecord::sample).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ControlError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        let io = |e: csv::Error| ControlError::Io(e.into());
        w.write_record(LAP_HEADER).map_err(io)?;
        for r in &self.records {
            let s = &r.state;
            w.write_record(
                [
                    r.t, s.x, s.y, s.psi, s.v, s.delta, r.errors.eps_x, r.errors.eps_y, r.u_delta, r.u_v,
                    r.kappa_a,
                ]
                .map(|v| v.to_string()),
            )
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const LAP_HEADER: [&str; 11] = [
    "t", "x", "y", "psi", "v", "delta", "eps_x", "eps_y", "u_delta", "u_v", "kappa_a",
];

/// Drives one lap of `traj` under feedback plus the given feedforward.
///
/// The vehicle starts on the first sample with the desired speed and the
/// steady-state steering angle for the initial curvature. The reference is
/// time-indexed: step `k` is compared against sample `k`.
pub fn run_lap(
    traj: &Trajectory,
    ff: FeedforwardSource<'_>,
    gains: &ControlGains,
    params: &VehicleParams,
) -> Result<LapLog, ControlError> {
    let ff = match ff {
        FeedforwardSource::None => Prepared::None,
        FeedforwardSource::Analytic => Prepared::Analytic(params.wheelbase),
        FeedforwardSource::Neural(m) => Prepared::Neural(m.freeze()),
        FeedforwardSource::Custom(f) => Prepared::Custom(f),
    };
    let Some(first) = traj.samples.first() else {
        return Ok(LapLog::default());
    };
    let mut state = VehicleState {
        x: first.x_d,
        y: first.y_d,
        psi: first.psi_d,
        v: first.v_d,
        delta: (first.kappa_d * params.wheelbase)
            .atan()
            .clamp(-params.delta_max, params.delta_max),
    };
    let mut records = Vec::with_capacity(traj.samples.len());
    for desired in &traj.samples {
        let errors = tracking_errors(desired, &state);
        if errors.eps_x.abs().max(errors.eps_y.abs()) > DIVERGENCE_LIMIT {
            return Err(ControlError::Diverged {
                t: desired.t,
                error: errors.norm(),
            });
        }
        let u_fb = fb_steering(&errors, desired, &state, state.yaw_rate(params), gains);
        let u_delta = u_fb + ff.eval(desired.kappa_d, desired.v_d);
        let u_v = fb_velocity(&errors, desired.v_d, gains);
        records.push(LapRecord {
            t: desired.t,
            state,
            errors,
            u_delta,
            u_v,
            kappa_a: state.curvature(params),
        });
        state = vehicle::step(&state, &ControlInput { u_delta, u_v }, params)?;
    }
    Ok(LapLog { records })
}

/// Time-averaged planar tracking error over the lap (rectangle rule).
pub fn mean_tracking_error(log: &LapLog) -> Result<f64, ControlError> {
    if log.records.is_empty() {
        return Err(ControlError::EmptyLog);
    }
    let sum: f64 = log.records.iter().map(|r| r.errors.norm()).sum();
    Ok(sum / log.records.len() as f64)
}
