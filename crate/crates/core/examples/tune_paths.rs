//! Offline tuner for the committed track shapes in `paths/`.
//!
//! For each spec the curve is rescaled so its length matches the target
//! exactly, and the shape coefficients are searched (Nelder-Mead with a few
//! restarts) so that peak curvature, speed band and lap time match the
//! targets while the analytic-feedforward lap stays accurate.
//!
//! `TUNE_MTE_BUDGET` (default 0.03), `TUNE_RESTARTS` and `TUNE_ITERS` adjust
//! the search.
//!
//! ```text
//! cargo run --release -p fedff-core --example tune_paths -- [paths-dir] [client ...]
//! ```

use std::f64::consts::PI;
use std::path::PathBuf;

use fedff_core::control::{mean_tracking_error, run_lap, ControlGains, FeedforwardSource};
use fedff_core::trajgen::{
    generate_path, load_specs, ArcLengthTable, ClosedCurve, Harmonic, PathSpec, DEFAULT_DT,
};
use fedff_core::vehicle::VehicleParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BASE_HARMONICS: [u32; 4] = [1, 2, 3, 4];

fn env_or<T: std::str::FromStr>(key: &str, default: T) -> T {
    std::env::var(key).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn mte_budget() -> f64 {
    env_or("TUNE_MTE_BUDGET", 0.03)
}

/// Harmonics searched for a spec: the low ones plus whatever it already uses.
fn harmonics(spec: &PathSpec) -> Vec<u32> {
    let mut ks: Vec<u32> = BASE_HARMONICS.to_vec();
    ks.extend(spec.fourier_coeffs.iter().map(|h| h.k));
    ks.sort_unstable();
    ks.dedup();
    ks
}

fn main() {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "paths".into()));
    let only: Vec<String> = args.collect();
    let specs = load_specs(&dir).expect("load specs");
    for spec in specs {
        if !only.is_empty() && !only.iter().any(|o| o.eq_ignore_ascii_case(spec.id.roman())) {
            continue;
        }
        let tuned = tune(&spec);
        let (score, report) = evaluate(&tuned);
        println!("{} score {score:.5} {report}", tuned.id);
        let path = dir.join(format!("{}.json", tuned.id));
        std::fs::write(path, serde_json::to_string_pretty(&tuned).unwrap() + "\n").unwrap();
    }
}

fn params_of(spec: &PathSpec) -> Vec<f64> {
    match spec.figure_eight {
        Some(f) => vec![f.aspect.ln(), atanh(f.skew / 0.8)],
        None => {
            let mut x = Vec::new();
            for (i, k) in harmonics(spec).iter().enumerate() {
                let h = spec.fourier_coeffs.iter().find(|h| h.k == *k);
                x.push(atanh(h.map_or(0.0, |h| h.amplitude) / 0.6));
                if i > 0 {
                    x.push(h.map_or(0.0, |h| h.phase));
                }
            }
            x
        }
    }
}

fn atanh(x: f64) -> f64 {
    0.5 * ((1.0 + x) / (1.0 - x)).ln()
}

fn apply(spec: &PathSpec, x: &[f64]) -> PathSpec {
    let mut s = spec.clone();
    match s.figure_eight.as_mut() {
        Some(f) => {
            f.aspect = x[0].exp();
            f.skew = 0.8 * x[1].tanh();
        }
        None => {
            let mut it = x.iter();
            s.fourier_coeffs = harmonics(spec)
                .iter()
                .enumerate()
                .map(|(i, &k)| {
                    let amplitude = 0.6 * it.next().unwrap().tanh();
                    let phase = if i > 0 { it.next().unwrap().rem_euclid(2.0 * PI) } else { 0.0 };
                    Harmonic { k, amplitude, phase }
                })
                .filter(|h| h.amplitude.abs() > 1e-6)
                .collect();
        }
    }
    // rescale to the target length
    let target = s.targets.unwrap().length;
    let unit = ArcLengthTable::new(ClosedCurve::new(s.shape(), 1.0), 2048).total_length();
    s.base_radius = target / unit;
    s
}

fn evaluate(spec: &PathSpec) -> (f64, String) {
    let Ok(traj) = generate_path(spec, DEFAULT_DT) else {
        return (1e6, "invalid".into());
    };
    let t = spec.targets.unwrap();
    let c = traj.characteristics();
    let rel = |a: f64, b: f64| (a - b) / b;
    let errs = [
        rel(c.length, t.length),
        rel(c.max_abs_kappa, t.max_abs_kappa),
        rel(c.v_max, t.v_max),
        rel(c.v_min, t.v_min),
        rel(c.duration, t.duration),
    ];
    let mte = run_lap(&traj, FeedforwardSource::Analytic, &ControlGains::default(), &VehicleParams::default())
        .ok()
        .and_then(|l| mean_tracking_error(&l).ok())
        .unwrap_or(1.0);
    // minimax: every characteristic within its band and the lap within the
    // MTE budget count alike, so a score below 0.15 satisfies everything
    let score = errs
        .iter()
        .map(|e| e.abs())
        .fold(0.15 * mte / mte_budget(), f64::max);
    let report = format!(
        "len {:+.3} kappa {:+.3} vmax {:+.3} vmin {:+.3} T {:+.3} mte {:.4}",
        errs[0], errs[1], errs[2], errs[3], errs[4], mte
    );
    (score, report)
}

fn tune(spec: &PathSpec) -> PathSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(u64::from(spec.id.number()));
    let f = |x: &[f64]| evaluate(&apply(spec, x)).0;
    let mut best_x = params_of(spec);
    let mut best = f(&best_x);
    let (restarts, iters) = (env_or("TUNE_RESTARTS", 3), env_or("TUNE_ITERS", 200));
    for restart in 0..restarts {
        let start: Vec<f64> = if restart == 0 {
            best_x.clone()
        } else {
            best_x.iter().map(|v| v + rng.gen_range(-0.8..0.8)).collect()
        };
        let (x, v) = nelder_mead(&f, &start, 0.4, iters);
        if v < best {
            best = v;
            best_x = x;
        }
        eprintln!("  {} restart {restart}: {best:.5}", spec.id);
        if best < 0.05 {
            break;
        }
    }
    apply(spec, &best_x)
}

fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], step: f64, iters: usize) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.to_vec(), f(x0))];
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let v = f(&x);
        simplex.push((x, v));
    }
    for _ in 0..iters {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|p| p.0[j]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&worst.0).map(|(c, w)| c + t * (c - w)).collect()
        };
        let xr = along(1.0);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = f(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let xc = along(-0.5);
            let fc = f(&xc);
            if fc < worst.1 {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for p in simplex.iter_mut().skip(1) {
                    p.0 = best.iter().zip(&p.0).map(|(b, x)| b + 0.5 * (x - b)).collect();
                    p.1 = f(&p.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    simplex.swap_remove(0)
}
