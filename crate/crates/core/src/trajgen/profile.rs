//! Curvature-driven desired speed along a closed path.

/// Width of the centered moving-average window, in seconds.
pub const SMOOTHING_WINDOW: f64 = 0.5;

/// Affine map from `|κ|` to speed: `v_max` on the straightest sample,
/// `v_min` on the tightest. A constant-curvature series maps to `v_max`.
pub fn raw_speed_profile(curvature: &[f64], v_min: f64, v_max: f64) -> Vec<f64> {
    let (lo, hi) = curvature
        .iter()
        .map(|k| k.abs())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), k| {
            (lo.min(k), hi.max(k))
        });
    if !(hi > lo) {
        return vec![v_max; curvature.len()];
    }
    let span = hi - lo;
    curvature
        .iter()
        .map(|k| {
            let f = (k.abs() - lo) / span;
            v_max * (1.0 - f) + v_min * f
        })
        .collect()
}

/// Desired speed for a closed path whose curvature is sampled every `ds`
/// meters (the series is periodic; the closing sample is not repeated).
///
/// The raw affine profile is smoothed by a centered moving average spanning
/// [`SMOOTHING_WINDOW`] seconds of travel, measured with the raw profile's own
/// timing and wrapping around the closure. Each neighbour is weighted by the
/// time it represents, so the result is the mean speed over the window.
pub fn speed_profile(curvature: &[f64], ds: f64, v_min: f64, v_max: f64) -> Vec<f64> {
    let raw = raw_speed_profile(curvature, v_min, v_max);
    let n = raw.len();
    if n < 3 || raw.iter().all(|&v| v == raw[0]) {
        return raw;
    }
    // time weight of each grid point and its timestamp along one lap
    let weights: Vec<f64> = raw.iter().map(|v| ds / v).collect();
    let lap_time: f64 = weights.iter().sum();
    let half = 0.5 * SMOOTHING_WINDOW;
    if half * 2.0 >= lap_time {
        let mean = n as f64 * ds / lap_time;
        return vec![mean.clamp(v_min, v_max); n];
    }
    let mut stamps = Vec::with_capacity(n);
    let mut acc = 0.0;
    for w in &weights {
        stamps.push(acc);
        acc += w;
    }
    // three unrolled laps so every window is contiguous
    let at = |j: usize| -> (f64, f64, f64) {
        let lap = (j / n) as f64 - 1.0;
        let i = j % n;
        (stamps[i] + lap * lap_time, weights[i], raw[i])
    };
    let mut out = Vec::with_capacity(n);
    let (mut lo, mut hi) = (n, n);
    let (mut wsum, mut vsum) = (0.0, 0.0);
    for i in 0..n {
        let center = stamps[i];
        while hi < 3 * n && at(hi).0 <= center + half {
            let (_, w, v) = at(hi);
            wsum += w;
            vsum += w * v;
            hi += 1;
        }
        while lo > 0 && at(lo - 1).0 >= center - half {
            lo -= 1;
            let (_, w, v) = at(lo);
            wsum += w;
            vsum += w * v;
        }
        while at(lo).0 < center - half {
            let (_, w, v) = at(lo);
            wsum -= w;
            vsum -= w * v;
            lo += 1;
        }
        out.push((vsum / wsum).clamp(v_min, v_max));
    }
    out
}
