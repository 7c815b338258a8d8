//! Slow, independent solvers used only to verify the sieve's SMO solver.
//! Projected gradient descent on the same dual, with the projection onto
//! {0 ≤ β ≤ C, Σβ = 1} computed by bisection — no code shared with the
//! production path.

use super::{rbf_kernel, SieveError};

/// Euclidean projection of `v` onto the box-constrained simplex
/// {β : 0 ≤ βᵢ ≤ c, Σβᵢ = 1}. The projection is clamp(vᵢ − θ, 0, c) for
/// the shift θ that makes the sum hit 1; that sum is monotone in θ, so
/// bisection pins it down.
pub fn project_box_simplex(v: &[f64], c: f64) -> Vec<f64> {
    let sum_at = |theta: f64| -> f64 {
        v.iter().map(|&x| (x - theta).clamp(0.0, c)).sum::<f64>()
    };
    let mut lo = v.iter().cloned().fold(f64::INFINITY, f64::min) - c - 1.0;
    let mut hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sum_at(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let theta = 0.5 * (lo + hi);
    v.iter().map(|&x| (x - theta).clamp(0.0, c)).collect()
}

pub struct ReferenceSolution {
    pub betas: Vec<f64>,
    pub objective: f64,
    pub rho: f64,
}

/// Minimize ½βᵀQβ over the box-constrained simplex by projected gradient
/// descent with a Lipschitz step (1 / ‖Q‖∞ bound on the top eigenvalue).
pub fn solve_dual_reference(
    features: &[Vec<f64>],
    nu: f64,
    gamma: f64,
) -> Result<ReferenceSolution, SieveError> {
    if features.is_empty() {
        return Err(SieveError::EmptyTrainingSet);
    }
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(SieveError::BadNu(nu));
    }
    let l = features.len();
    let c = 1.0 / (nu * l as f64);
    let mut q = vec![0.0f64; l * l];
    for i in 0..l {
        for j in 0..l {
            q[i * l + j] = rbf_kernel(&features[i], &features[j], gamma)?;
        }
    }
    let lipschitz = (0..l)
        .map(|i| (0..l).map(|j| q[i * l + j].abs()).sum::<f64>())
        .fold(f64::MIN, f64::max)
        .max(1e-12);
    let step = 1.0 / lipschitz;

    let mut beta = vec![1.0 / l as f64; l];
    for _ in 0..200_000 {
        let grad: Vec<f64> = (0..l)
            .map(|i| (0..l).map(|j| q[i * l + j] * beta[j]).sum())
            .collect();
        let trial: Vec<f64> = beta.iter().zip(&grad).map(|(&b, &g)| b - step * g).collect();
        let next = project_box_simplex(&trial, c);
        let delta = beta
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        beta = next;
        if delta < 1e-14 {
            break;
        }
    }

    let grad: Vec<f64> = (0..l)
        .map(|i| (0..l).map(|j| q[i * l + j] * beta[j]).sum())
        .collect();
    let objective = 0.5 * beta.iter().zip(&grad).map(|(b, g)| b * g).sum::<f64>();
    Ok(ReferenceSolution { betas: beta.clone(), objective, rho: rho_reference(&beta, &grad, c) })
}

/// Independent ρ recovery: average the boundary condition over interior
/// coefficients; fall back to the midpoint of the KKT bracket.
fn rho_reference(beta: &[f64], grad: &[f64], c: f64) -> f64 {
    let interior: Vec<f64> = beta
        .iter()
        .zip(grad)
        .filter(|(&b, _)| b > 1e-8 && b < c - 1e-8)
        .map(|(_, &g)| g)
        .collect();
    if !interior.is_empty() {
        return interior.iter().sum::<f64>() / interior.len() as f64;
    }
    let at_cap = beta
        .iter()
        .zip(grad)
        .filter(|(&b, _)| b >= c - 1e-8)
        .map(|(_, &g)| g)
        .fold(f64::NEG_INFINITY, f64::max);
    let at_zero = beta
        .iter()
        .zip(grad)
        .filter(|(&b, _)| b <= 1e-8)
        .map(|(_, &g)| g)
        .fold(f64::INFINITY, f64::min);
    match (at_cap.is_finite(), at_zero.is_finite()) {
        (true, true) => 0.5 * (at_cap + at_zero),
        (true, false) => at_cap,
        (false, true) => at_zero,
        (false, false) => 0.0,
    }
}

/// Decision value recomputed from a reference solution over the full
/// training set (the production model keeps only β > 0 entries).
pub fn decision_reference(
    features: &[Vec<f64>],
    solution: &ReferenceSolution,
    gamma: f64,
    query: &[f64],
) -> Result<f64, SieveError> {
    let mut sum = 0.0;
    for (f, &b) in features.iter().zip(&solution.betas) {
        if b > 0.0 {
            sum += b * rbf_kernel(f, query, gamma)?;
        }
    }
    Ok(sum - solution.rho)
}
