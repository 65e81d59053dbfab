//! Closed parametric curves and their arc-length reparametrization.
//!
//! Every curve is parametrized over `t ∈ [0, 2π)` and exposes analytic first
//! and second derivatives, so heading and curvature never go through finite
//! differences.

use std::f64::consts::TAU;

use super::{Harmonic, Shape};

/// Position and its first two parameter derivatives at one parameter value.
#[derive(Debug, Clone, Copy)]
pub struct CurvePoint {
    pub x: f64,
    pub y: f64,
    pub dx: f64,
    pub dy: f64,
    pub ddx: f64,
    pub ddy: f64,
}

impl CurvePoint {
    /// Parametric speed `|r'(t)|`.
    pub fn speed(&self) -> f64 {
        self.dx.hypot(self.dy)
    }

    /// Tangent angle.
    pub fn heading(&self) -> f64 {
        self.dy.atan2(self.dx)
    }

    /// Signed curvature, positive for left (counter-clockwise) turns.
    pub fn curvature(&self) -> f64 {
        let s = self.speed();
        (self.dx * self.ddy - self.dy * self.ddx) / (s * s * s)
    }
}

/// A closed curve evaluated from a [`Shape`] and a scale.
#[derive(Debug, Clone)]
pub struct ClosedCurve {
    shape: Shape,
    scale: f64,
}

impl ClosedCurve {
    pub fn new(shape: Shape, scale: f64) -> Self {
        Self { shape, scale }
    }

    pub fn eval(&self, t: f64) -> CurvePoint {
        match &self.shape {
            Shape::Fourier { harmonics } => fourier_point(self.scale, harmonics, t),
            Shape::Lemniscate { aspect, skew } => lemniscate_point(self.scale, *aspect, *skew, t),
        }
    }
}

/// Fourier-perturbed circle in polar form, `r(θ) = r0·(1 + Σ a_k cos(kθ + φ_k))`.
fn fourier_point(r0: f64, harmonics: &[Harmonic], t: f64) -> CurvePoint {
    let (mut r, mut dr, mut ddr) = (1.0, 0.0, 0.0);
    for h in harmonics {
        let k = f64::from(h.k);
        let (s, c) = (k * t + h.phase).sin_cos();
        r += h.amplitude * c;
        dr -= h.amplitude * k * s;
        ddr -= h.amplitude * k * k * c;
    }
    let (r, dr, ddr) = (r0 * r, r0 * dr, r0 * ddr);
    let (s, c) = t.sin_cos();
    CurvePoint {
        x: r * c,
        y: r * s,
        dx: dr * c - r * s,
        dy: dr * s + r * c,
        ddx: ddr * c - 2.0 * dr * s - r * c,
        ddy: ddr * s + 2.0 * dr * c - r * s,
    }
}

/// Figure-eight of Gerono type with an optional lobe imbalance.
///
/// `x = a·cos t·g(t)`, `y = a·aspect·sin t·cos t·g(t)` with `g(t) = 1 + skew·cos t`.
/// `skew = 0` gives two mirror-symmetric lobes.
fn lemniscate_point(a: f64, aspect: f64, skew: f64, t: f64) -> CurvePoint {
    let (s, c) = t.sin_cos();
    let (s2, c2) = (2.0 * t).sin_cos();
    let g = 1.0 + skew * c;
    let dg = -skew * s;
    let ddg = -skew * c;
    let b = a * aspect;
    let h = 0.5 * s2;
    let dh = c2;
    let ddh = -2.0 * s2;
    CurvePoint {
        x: a * c * g,
        y: b * h * g,
        dx: a * (-s * g + c * dg),
        dy: b * (dh * g + h * dg),
        ddx: a * (-c * g - 2.0 * s * dg + c * ddg),
        ddy: b * (ddh * g + 2.0 * dh * dg + h * ddg),
    }
}

// 5-point Gauss-Legendre nodes and weights on [-1, 1].
const GL_NODES: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664_0,
    0.906_179_845_938_664_0,
];
const GL_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

/// Cumulative arc length tabulated on a uniform parameter grid.
#[derive(Debug, Clone)]
pub struct ArcLengthTable {
    curve: ClosedCurve,
    step: f64,
    cumulative: Vec<f64>,
}

impl ArcLengthTable {
    pub fn new(curve: ClosedCurve, intervals: usize) -> Self {
        let step = TAU / intervals as f64;
        let mut cumulative = Vec::with_capacity(intervals + 1);
        cumulative.push(0.0);
        let mut acc = 0.0;
        for i in 0..intervals {
            let t0 = i as f64 * step;
            acc += segment_length(&curve, t0, t0 + step);
            cumulative.push(acc);
        }
        Self {
            curve,
            step,
            cumulative,
        }
    }

    pub fn total_length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn curve(&self) -> &ClosedCurve {
        &self.curve
    }

    /// Parameter value at arc length `s`, solved by Newton on the
    /// bracketing grid interval.
    pub fn param_at(&self, s: f64) -> f64 {
        let total = self.total_length();
        if s <= 0.0 {
            return 0.0;
        }
        if s >= total {
            return TAU;
        }
        let idx = match self
            .cumulative
            .binary_search_by(|c| c.partial_cmp(&s).unwrap())
        {
            Ok(i) => return i as f64 * self.step,
            Err(i) => i - 1,
        };
        let t_lo = idx as f64 * self.step;
        let t_hi = t_lo + self.step;
        let s_lo = self.cumulative[idx];
        let s_hi = self.cumulative[idx + 1];
        let mut t = t_lo + self.step * (s - s_lo) / (s_hi - s_lo);
        for _ in 0..20 {
            let f = s_lo + segment_length(&self.curve, t_lo, t) - s;
            let d = self.curve.eval(t).speed();
            let next = (t - f / d).clamp(t_lo, t_hi);
            if (next - t).abs() < 1e-15 {
                t = next;
                break;
            }
            t = next;
        }
        t
    }
}

fn segment_length(curve: &ClosedCurve, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    GL_NODES
        .iter()
        .zip(GL_WEIGHTS.iter())
        .map(|(x, w)| w * curve.eval(mid + half * x).speed())
        .sum::<f64>()
        * half
}
