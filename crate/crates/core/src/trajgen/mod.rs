//! Reference trajectories for the twelve client tracks.
//!
//! A [`PathSpec`] describes a closed curve (a Fourier-perturbed circle or a
//! figure-eight), its turning orientation and a speed band. [`generate_path`]
//! reparametrizes the curve by arc length, assigns a curvature-dependent speed
//! profile and resamples it at the control period, so every sample carries the
//! full desired state `(x, y, ψ, ψ̇, κ, v)`.

mod curve;
mod io;
mod profile;
mod split;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use curve::{ArcLengthTable, ClosedCurve, CurvePoint};
pub use io::{default_specs, load_specs, read_trajectory_csv, write_trajectory_csv, TRAJECTORY_HEADER};
pub use profile::{raw_speed_profile, speed_profile, SMOOTHING_WINDOW};
pub use split::{split_schedule, Split, RUN_COUNT};

/// Control period used throughout the experiments, in seconds.
pub const DEFAULT_DT: f64 = 0.05;

// arc-length grid spacing for the speed profile
const PROFILE_DS: f64 = 0.002;
const ARC_TABLE_INTERVALS: usize = 4096;

#[derive(Debug, Error)]
pub enum TrajError {
    #[error("invalid path spec: {0}")]
    InvalidSpec(String),
    #[error("path {0} intersects itself")]
    NonSimpleCurve(ClientId),
    #[error("path {id} is too short: {length:.3} m for v_max {v_max} m/s")]
    DegenerateSpec { id: ClientId, length: f64, v_max: f64 },
    #[error("run index {0} is outside 1..=10")]
    OutOfRange(usize),
    #[error("unknown client id {0:?}")]
    UnknownClient(String),
    #[error("malformed trajectory file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Client identifier, `I` through `XII`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ClientId(u8);

const ROMAN: [&str; 12] = [
    "I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX", "X", "XI", "XII",
];

impl ClientId {
    pub fn new(number: u8) -> Option<Self> {
        (1..=12).contains(&number).then_some(Self(number))
    }

    pub fn number(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = ClientId> {
        (1..=12).map(ClientId)
    }

    pub fn roman(self) -> &'static str {
        ROMAN[usize::from(self.0) - 1]
    }
}

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.roman())
    }
}

impl FromStr for ClientId {
    type Err = TrajError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(i) = ROMAN.iter().position(|r| r.eq_ignore_ascii_case(s)) {
            return Ok(Self(i as u8 + 1));
        }
        s.parse::<u8>()
            .ok()
            .and_then(ClientId::new)
            .ok_or_else(|| TrajError::UnknownClient(s.to_string()))
    }
}

impl TryFrom<String> for ClientId {
    type Error = TrajError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ClientId> for String {
    fn from(id: ClientId) -> String {
        id.roman().to_string()
    }
}

/// Dominant turning direction of a track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    LeftDominant,
    /// Mirror image (`y → -y`) of the left-dominant curve.
    RightDominant,
}

/// One term `a_k·cos(kθ + φ_k)` of the radius perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub k: u32,
    pub amplitude: f64,
    pub phase: f64,
}

/// Figure-eight parameters; see [`Shape::Lemniscate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FigureEight {
    /// Lobe height over half-width.
    pub aspect: f64,
    /// Lobe imbalance; 0 gives equal lobes.
    pub skew: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Fourier { harmonics: Vec<Harmonic> },
    Lemniscate { aspect: f64, skew: f64 },
}

/// Summary statistics of a track, used both as tuning targets and as the
/// measured characteristics of a generated trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Characteristics {
    pub length: f64,
    pub max_abs_kappa: f64,
    pub v_max: f64,
    pub v_min: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    pub id: ClientId,
    #[serde(default)]
    pub name: String,
    pub base_radius: f64,
    #[serde(default)]
    pub fourier_coeffs: Vec<Harmonic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub figure_eight: Option<FigureEight>,
    pub orientation: Orientation,
    pub v_min: f64,
    pub v_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<Characteristics>,
}

impl PathSpec {
    /// Plain circle of the given radius driven at constant speed.
    pub fn circle(id: ClientId, radius: f64, speed: f64) -> Self {
        Self {
            id,
            name: "Circle".into(),
            base_radius: radius,
            fourier_coeffs: Vec::new(),
            figure_eight: None,
            orientation: Orientation::LeftDominant,
            v_min: speed,
            v_max: speed,
            targets: None,
        }
    }

    pub fn shape(&self) -> Shape {
        match self.figure_eight {
            Some(f) => Shape::Lemniscate {
                aspect: f.aspect,
                skew: f.skew,
            },
            None => Shape::Fourier {
                harmonics: self.fourier_coeffs.clone(),
            },
        }
    }

    pub fn validate(&self) -> Result<(), TrajError> {
        let bad = |msg: String| Err(TrajError::InvalidSpec(format!("{}: {msg}", self.id)));
        if !(self.base_radius > 0.0 && self.base_radius.is_finite()) {
            return bad(format!("base_radius {} must be positive", self.base_radius));
        }
        if let Some(h) = self
            .fourier_coeffs
            .iter()
            .find(|h| !(h.amplitude.abs() < 1.0) || !h.phase.is_finite() || h.k == 0)
        {
            return bad(format!("harmonic {h:?} out of range"));
        }
        if let Some(f) = self.figure_eight {
            if !(f.aspect > 0.0 && f.aspect.is_finite() && f.skew.abs() < 1.0) {
                return bad(format!("figure-eight {f:?} out of range"));
            }
        }
        if !(self.v_min > 0.0 && self.v_min <= self.v_max && self.v_max.is_finite()) {
            return bad(format!("speed band [{}, {}]", self.v_min, self.v_max));
        }
        Ok(())
    }
}

/// Desired state at one control instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub x_d: f64,
    pub y_d: f64,
    pub psi_d: f64,
    pub psi_dot_d: f64,
    pub kappa_d: f64,
    pub v_d: f64,
}

/// A closed reference trajectory sampled every `dt` seconds; the last sample
/// returns to the first position.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub dt: f64,
    pub total_length: f64,
    pub duration: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn characteristics(&self) -> Characteristics {
        let (mut k, mut lo, mut hi) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY);
        for s in &self.samples {
            k = k.max(s.kappa_d.abs());
            lo = lo.min(s.v_d);
            hi = hi.max(s.v_d);
        }
        Characteristics {
            length: self.total_length,
            max_abs_kappa: k,
            v_max: hi,
            v_min: lo,
            duration: self.duration,
        }
    }
}

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    if a > -PI && a <= PI {
        return a;
    }
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

/// Builds the sampled reference trajectory for `spec` at control period `dt`.
pub fn generate_path(spec: &PathSpec, dt: f64) -> Result<Trajectory, TrajError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(TrajError::InvalidSpec(format!("dt {dt} must be positive")));
    }
    spec.validate()?;

    let table = ArcLengthTable::new(
        ClosedCurve::new(spec.shape(), spec.base_radius),
        ARC_TABLE_INTERVALS,
    );
    let length = table.total_length();
    if length < 10.0 * dt * spec.v_max {
        return Err(TrajError::DegenerateSpec {
            id: spec.id,
            length,
            v_max: spec.v_max,
        });
    }

    // speed profile on a uniform arc-length grid, closing sample excluded
    let n = ((length / PROFILE_DS).ceil() as usize).max(64);
    let ds = length / n as f64;
    let kappa: Vec<f64> = (0..n)
        .map(|i| table.curve().eval(table.param_at(i as f64 * ds)).curvature())
        .collect();
    let mut speed = speed_profile(&kappa, ds, spec.v_min, spec.v_max);

    // travel time per grid segment with speed linear in arc length
    let seg_time = |v0: f64, v1: f64| -> f64 {
        if (v1 - v0).abs() < 1e-12 * v0 {
            ds / v0
        } else {
            ds * (v1 / v0).ln() / (v1 - v0)
        }
    };
    let lap_time = |speed: &[f64]| -> f64 { (0..n).map(|i| seg_time(speed[i], speed[(i + 1) % n])).sum() };
    let raw_time = lap_time(&speed);

    // Slow down just enough that the lap takes a whole number of control
    // periods. Speeds are pulled toward v_min, so they stay within
    // [v_min, v_max]; a constant-speed spec has no room and is scaled.
    let steps = ((raw_time / dt) - 1e-9).ceil().max(1.0) as usize;
    let duration = steps as f64 * dt;
    let floor = spec.v_min;
    if speed.iter().all(|&v| v - floor <= 1e-12 * floor) {
        let scale = raw_time / duration;
        speed.iter_mut().for_each(|v| *v *= scale);
    } else {
        let pulled = |c: f64| -> Vec<f64> { speed.iter().map(|&v| floor + c * (v - floor)).collect() };
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if lap_time(&pulled(mid)) > duration {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // the bisection leaves the lap a hair short of `duration`; the last
        // sample is pinned to the closing point anyway
        speed = pulled(hi);
    }
    let seg_times: Vec<f64> = (0..n).map(|i| seg_time(speed[i], speed[(i + 1) % n])).collect();

    let mirror = spec.orientation == Orientation::RightDominant;
    let mut samples = Vec::with_capacity(steps + 1);
    let (mut seg, mut seg_start) = (0usize, 0.0f64);
    for k in 0..=steps {
        let t = k as f64 * dt;
        let (s, v) = if k == steps {
            (length, speed[0])
        } else {
            while seg + 1 < n && seg_start + seg_times[seg] <= t {
                seg_start += seg_times[seg];
                seg += 1;
            }
            let (v0, v1) = (speed[seg], speed[(seg + 1) % n]);
            let g = (v1 - v0) / ds;
            let tau = t - seg_start;
            let x = if g.abs() < 1e-12 {
                v0 * tau
            } else {
                v0 * (g * tau).exp_m1() / g
            };
            let x = x.clamp(0.0, ds);
            (seg as f64 * ds + x, v0 + g * x)
        };
        let p = table.curve().eval(table.param_at(s));
        let (y, psi, kappa) = if mirror {
            (-p.y, -p.heading(), -p.curvature())
        } else {
            (p.y, p.heading(), p.curvature())
        };
        samples.push(TrajectorySample {
            t,
            x_d: p.x,
            y_d: y,
            psi_d: wrap_angle(psi),
            psi_dot_d: kappa * v,
            kappa_d: kappa,
            v_d: v,
        });
    }

    let allowed_crossings = if spec.figure_eight.is_some() { 1 } else { 0 };
    if count_self_crossings(&samples) > allowed_crossings {
        return Err(TrajError::NonSimpleCurve(spec.id));
    }

    Ok(Trajectory {
        samples,
        dt,
        total_length: length,
        duration,
    })
}

/// Counts proper crossings between non-adjacent segments of the closed polyline.
fn count_self_crossings(samples: &[TrajectorySample]) -> usize {
    let pts: Vec<(f64, f64)> = samples.iter().map(|s| (s.x_d, s.y_d)).collect();
    let m = pts.len().saturating_sub(1);
    let orient = |a: (f64, f64), b: (f64, f64), c: (f64, f64)| {
        (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
    };
    let mut count = 0;
    for i in 0..m {
        let (a, b) = (pts[i], pts[i + 1]);
        let (ax0, ax1) = (a.0.min(b.0), a.0.max(b.0));
        let (ay0, ay1) = (a.1.min(b.1), a.1.max(b.1));
        for j in (i + 2)..m {
            if i == 0 && j == m - 1 {
                continue;
            }
            let (c, d) = (pts[j], pts[j + 1]);
            if c.0.max(d.0) < ax0 || c.0.min(d.0) > ax1 || c.1.max(d.1) < ay0 || c.1.min(d.1) > ay1 {
                continue;
            }
            let (o1, o2) = (orient(a, b, c), orient(a, b, d));
            let (o3, o4) = (orient(c, d, a), orient(c, d, b));
            if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
                count += 1;
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(n: u8) -> ClientId {
        ClientId::new(n).unwrap()
    }

    #[test]
    fn roman_ids_roundtrip() {
        for c in ClientId::all() {
            assert_eq!(c.to_string().parse::<ClientId>().unwrap(), c);
        }
        assert_eq!("viii".parse::<ClientId>().unwrap(), id(8));
        assert_eq!("12".parse::<ClientId>().unwrap(), id(12));
        assert!("XIII".parse::<ClientId>().is_err());
    }

    #[test]
    fn wrap_angle_range() {
        use std::f64::consts::PI;
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_angle(0.1 + 4.0 * PI) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn unit_circle_at_unit_speed() {
        let traj = generate_path(&PathSpec::circle(id(1), 1.0, 1.0), DEFAULT_DT).unwrap();
        // the lap is rounded up to whole control periods
        let scale = 2.0 * std::f64::consts::PI / traj.duration;
        for s in &traj.samples {
            assert!((s.kappa_d - 1.0).abs() < 1e-6);
            assert!((s.psi_dot_d - scale).abs() < 1e-6);
            assert!((s.v_d - scale).abs() < 1e-12);
        }
        assert!(1.0 - scale < DEFAULT_DT / traj.duration);
    }

    #[test]
    fn mirrored_spec_flips_curvature() {
        let mut spec = PathSpec::circle(id(2), 1.5, 0.8);
        spec.fourier_coeffs.push(Harmonic { k: 2, amplitude: 0.1, phase: 0.0 });
        let left = generate_path(&spec, DEFAULT_DT).unwrap();
        spec.orientation = Orientation::RightDominant;
        let right = generate_path(&spec, DEFAULT_DT).unwrap();
        for (l, r) in left.samples.iter().zip(&right.samples) {
            assert_eq!(l.x_d, r.x_d);
            assert_eq!(l.y_d, -r.y_d);
            assert_eq!(l.kappa_d, -r.kappa_d);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = PathSpec::circle(id(3), 1.0, 1.0);
        spec.base_radius = 0.0;
        assert!(matches!(generate_path(&spec, 0.05), Err(TrajError::InvalidSpec(_))));
        let mut spec = PathSpec::circle(id(3), 1.0, 1.0);
        spec.fourier_coeffs.push(Harmonic { k: 2, amplitude: 1.0, phase: 0.0 });
        assert!(matches!(generate_path(&spec, 0.05), Err(TrajError::InvalidSpec(_))));
        let mut spec = PathSpec::circle(id(3), 1.0, 1.0);
        spec.v_min = 2.0;
        assert!(matches!(generate_path(&spec, 0.05), Err(TrajError::InvalidSpec(_))));
        assert!(generate_path(&PathSpec::circle(id(3), 1.0, 1.0), 0.0).is_err());
    }

    #[test]
    fn short_path_is_degenerate() {
        let spec = PathSpec::circle(id(4), 0.05, 2.0);
        assert!(matches!(
            generate_path(&spec, 0.05),
            Err(TrajError::DegenerateSpec { .. })
        ));
    }

    #[test]
    fn self_intersecting_polar_curve_is_rejected() {
        // large amplitudes in two harmonics fold the polar curve over itself
        let mut spec = PathSpec::circle(id(5), 2.0, 0.5);
        spec.fourier_coeffs = vec![
            Harmonic { k: 3, amplitude: 0.9, phase: 0.0 },
            Harmonic { k: 5, amplitude: 0.9, phase: 0.0 },
        ];
        assert!(matches!(
            generate_path(&spec, 0.05),
            Err(TrajError::NonSimpleCurve(_))
        ));
    }

    #[test]
    fn figure_eight_is_allowed_one_crossing() {
        let mut spec = PathSpec::circle(id(6), 3.0, 0.4);
        spec.figure_eight = Some(FigureEight { aspect: 1.0, skew: 0.0 });
        let traj = generate_path(&spec, 0.05).unwrap();
        assert_eq!(count_self_crossings(&traj.samples), 1);
    }
}
