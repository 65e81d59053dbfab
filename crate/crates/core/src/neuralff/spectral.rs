//! Spectral normalization by power iteration.

/// Added to vector norms before dividing.
pub const NORM_EPS: f64 = 1e-12;

/// `σ = uᵀ W v` for a row-major `rows × cols` matrix.
pub fn sigma(weight: &[f64], rows: usize, cols: usize, u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(weight.len(), rows * cols);
    (0..rows)
        .map(|r| u[r] * dot(&weight[r * cols..(r + 1) * cols], v))
        .sum()
}

/// One power-iteration step in place: `v ← Wᵀu/‖Wᵀu‖`, `u ← Wv/‖Wv‖`.
/// Returns the refreshed estimate `σ = uᵀ W v`.
pub fn power_iteration(weight: &[f64], rows: usize, cols: usize, u: &mut [f64], v: &mut [f64]) -> f64 {
    for (c, vc) in v.iter_mut().enumerate() {
        *vc = (0..rows).map(|r| weight[r * cols + c] * u[r]).sum();
    }
    normalize(v);
    for (r, ur) in u.iter_mut().enumerate() {
        *ur = dot(&weight[r * cols..(r + 1) * cols], v);
    }
    normalize(u);
    sigma(weight, rows, cols, u, v)
}

/// Result of [`spectral_normalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub weight: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub sigma: f64,
}

/// Runs one power iteration from `(u, v)` and returns `W/σ` together with
/// the updated vectors and the estimate `σ`.
pub fn spectral_normalize(weight: &[f64], rows: usize, cols: usize, u: &[f64], v: &[f64]) -> Normalized {
    let (mut u, mut v) = (u.to_vec(), v.to_vec());
    let sigma = power_iteration(weight, rows, cols, &mut u, &mut v);
    Normalized {
        weight: scaled(weight, sigma),
        u,
        v,
        sigma,
    }
}

/// `W / σ`, leaving an all-zero (σ = 0) matrix at zero.
pub fn scaled(weight: &[f64], sigma: f64) -> Vec<f64> {
    let s = sigma.max(NORM_EPS);
    weight.iter().map(|w| w / s).collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn normalize(x: &mut [f64]) {
    let n = dot(x, x).sqrt() + NORM_EPS;
    for xi in x.iter_mut() {
        *xi /= n;
    }
}

/// Largest singular value by Jacobi eigen-decomposition of `WᵀW`.
/// Independent of the power iteration; used to check it.
pub fn top_singular_value(weight: &[f64], rows: usize, cols: usize) -> f64 {
    let mut a = vec![0.0; cols * cols];
    for i in 0..cols {
        for j in 0..cols {
            a[i * cols + j] = (0..rows).map(|r| weight[r * cols + i] * weight[r * cols + j]).sum();
        }
    }
    for _ in 0..100 {
        let off: f64 = (0..cols)
            .flat_map(|i| (0..cols).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * cols + j].powi(2))
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..cols {
            for q in (p + 1)..cols {
                let apq = a[p * cols + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * cols + q] - a[p * cols + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..cols {
                    let akp = a[k * cols + p];
                    let akq = a[k * cols + q];
                    a[k * cols + p] = c * akp - s * akq;
                    a[k * cols + q] = s * akp + c * akq;
                }
                for k in 0..cols {
                    let apk = a[p * cols + k];
                    let aqk = a[q * cols + k];
                    a[p * cols + k] = c * apk - s * aqk;
                    a[q * cols + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..cols)
        .map(|i| a[i * cols + i].max(0.0))
        .fold(0.0, f64::max)
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_fixture_converges_to_largest_entry() {
        let w = [2.0, 0.0, 0.0, 0.5];
        let (mut u, mut v) = (vec![0.6, 0.8], vec![0.8, 0.6]);
        let mut s = 0.0;
        for _ in 0..50 {
            s = power_iteration(&w, 2, 2, &mut u, &mut v);
        }
        assert!((s - 2.0).abs() < 1e-9);
        let n = spectral_normalize(&w, 2, 2, &u, &v);
        assert!((n.sigma - 2.0).abs() < 1e-9);
        for (got, want) in n.weight.iter().zip([1.0, 0.0, 0.0, 0.25]) {
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn identity_is_unchanged() {
        let w = [1.0, 0.0, 0.0, 1.0];
        let n = spectral_normalize(&w, 2, 2, &[1.0, 0.0], &[1.0, 0.0]);
        assert!((n.sigma - 1.0).abs() < 1e-10);
        for (a, b) in n.weight.iter().zip(w) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn rank_one_converges_in_one_step() {
        // W = 3·a bᵀ with unit a (3-dim) and b (2-dim)
        let a = [2.0 / 3.0, -1.0 / 3.0, 2.0 / 3.0];
        let b = [0.6, 0.8];
        let w: Vec<f64> = a.iter().flat_map(|ai| b.iter().map(move |bj| 3.0 * ai * bj)).collect();
        let n = spectral_normalize(&w, 3, 2, &[0.3, 0.1, -0.5], &[1.0, 0.0]);
        assert!((n.sigma - 3.0).abs() < 1e-10);
    }

    #[test]
    fn zero_matrix_stays_finite() {
        let n = spectral_normalize(&[0.0; 6], 2, 3, &[1.0, 0.0], &[0.0, 1.0, 0.0]);
        assert_eq!(n.sigma, 0.0);
        assert!(n.weight.iter().all(|w| *w == 0.0));
    }

    #[test]
    fn jacobi_oracle_matches_known_values() {
        assert!((top_singular_value(&[2.0, 0.0, 0.0, 0.5], 2, 2) - 2.0).abs() < 1e-12);
        // [[3, 0], [4, 5]] has singular values √45 and √5
        assert!((top_singular_value(&[3.0, 0.0, 4.0, 5.0], 2, 2) - 45f64.sqrt()).abs() < 1e-12);
        assert!((top_singular_value(&[1.0, 2.0, 2.0], 1, 3) - 3.0).abs() < 1e-12);
    }
}
