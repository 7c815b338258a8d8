//! One-class SVM sieve: learns the support of the real preictal
//! distribution in feature space and keeps only synthetic samples that land
//! inside it.
//!
//! Training solves the dual: minimize ½ Σᵢⱼ βᵢβⱼK(xᵢ,xⱼ) subject to
//! 0 ≤ βᵢ ≤ 1/(νl) and Σβᵢ = 1, with an RBF kernel. The decision function
//! is Σ βᵢK(xᵢ,x) − ρ; nonnegative means "inside" (kept).

pub mod reference;

use crate::preprocess::Spectrogram;
use crate::wire::{self, WireError};
use std::fs;
use std::path::Path;
use thiserror::Error;

pub const FEATURE_SIDE: usize = 32;
pub const FEATURE_LEN: usize = FEATURE_SIDE * FEATURE_SIDE;
pub const DEFAULT_NU: f64 = 0.1;
pub const SOLVER_TOLERANCE: f64 = 1e-6;
pub const SOLVER_ITERATION_CAP: usize = 100_000;
/// Internal convergence target. Polishing well past the contractual
/// tolerance makes the fitted decision function reproducible (order
/// invariance to 1e-8) instead of merely feasible.
const SOLVER_POLISH: f64 = 1e-10;

const MAGIC: &[u8; 4] = b"PFSV";
const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum SieveError {
    #[error("feature vectors differ in length ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },
    #[error("gamma must be positive, got {0}")]
    BadGamma(f64),
    #[error("nu must lie in (0, 1], got {0}")]
    BadNu(f64),
    #[error("no training features")]
    EmptyTrainingSet,
    #[error("solver hit {iterations} iterations with KKT residual {residual:e} (tolerance {SOLVER_TOLERANCE:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("image size {size} cannot be average-pooled to {FEATURE_SIDE}×{FEATURE_SIDE}")]
    BadImageSize { size: usize },
    #[error("bad magic {0:?}, expected \"PFSV\"")]
    BadMagic(Vec<u8>),
    #[error("unsupported sieve model version {0} (reader supports {VERSION})")]
    Version(u16),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("sieve io: {0}")]
    Io(#[from] std::io::Error),
}

/// exp(−γ‖x−y‖²) ∈ (0, 1].
pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> Result<f64, SieveError> {
    if x.len() != y.len() {
        return Err(SieveError::LengthMismatch { a: x.len(), b: y.len() });
    }
    if !(gamma > 0.0) {
        return Err(SieveError::BadGamma(gamma));
    }
    let dist2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((-gamma * dist2).exp())
}

/// Average-pool channel 0 down to 32×32 and flatten: the fixed 1024-length
/// representation the sieve trains on. The image edge must be a multiple
/// of 32.
pub fn featurize(spec: &Spectrogram) -> Result<Vec<f64>, SieveError> {
    let size = spec.size();
    if size < FEATURE_SIDE || size % FEATURE_SIDE != 0 {
        return Err(SieveError::BadImageSize { size });
    }
    let factor = size / FEATURE_SIDE;
    let plane = spec.plane(0);
    let mut out = Vec::with_capacity(FEATURE_LEN);
    for by in 0..FEATURE_SIDE {
        for bx in 0..FEATURE_SIDE {
            let mut sum = 0.0f64;
            for dy in 0..factor {
                for dx in 0..factor {
                    sum += plane[(by * factor + dy) * size + (bx * factor + dx)] as f64;
                }
            }
            out.push(sum / (factor * factor) as f64);
        }
    }
    Ok(out)
}

/// The "scale" default: γ = 1 / (dim × variance of all feature values),
/// falling back to 1/dim for (near-)constant data.
pub fn scale_gamma(features: &[Vec<f64>]) -> f64 {
    let dim = features.first().map_or(1, |f| f.len()).max(1);
    let mut count = 0usize;
    let mut mean = 0.0f64;
    for f in features {
        for &v in f {
            count += 1;
            mean += v;
        }
    }
    if count == 0 {
        return 1.0 / dim as f64;
    }
    mean /= count as f64;
    let var = features
        .iter()
        .flat_map(|f| f.iter())
        .map(|&v| (v - mean) * (v - mean))
        .sum::<f64>()
        / count as f64;
    if var > 1e-12 {
        1.0 / (dim as f64 * var)
    } else {
        1.0 / dim as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcsvmModel {
    pub gamma: f64,
    pub nu: f64,
    pub rho: f64,
    /// Training points with β > 0, in training order.
    pub support_vectors: Vec<Vec<f64>>,
    /// Dual coefficients matching `support_vectors`.
    pub coefficients: Vec<f64>,
}

/// Solver byproducts kept for verification: the full dual vector (aligned
/// with the training set), the reached objective, and convergence info.
#[derive(Debug, Clone)]
pub struct TrainDiagnostics {
    pub betas: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// ½ βᵀQβ with Q_ij = K(x_i, x_j).
pub fn dual_objective(features: &[Vec<f64>], betas: &[f64], gamma: f64) -> f64 {
    let l = features.len();
    let mut acc = 0.0;
    for i in 0..l {
        for j in 0..l {
            acc += betas[i]
                * betas[j]
                * rbf_kernel(&features[i], &features[j], gamma).expect("validated lengths");
        }
    }
    0.5 * acc
}

pub fn train_ocsvm(
    features: &[Vec<f64>],
    nu: f64,
    gamma: f64,
) -> Result<(OcsvmModel, TrainDiagnostics), SieveError> {
    train_ocsvm_with(features, nu, gamma, SOLVER_ITERATION_CAP, SOLVER_TOLERANCE)
}

/// Two-coordinate (SMO-style) descent on the dual. Each step moves mass
/// from the coordinate with the largest gradient that can still shrink to
/// the one with the smallest gradient that can still grow, preserving
/// Σβ = 1 exactly; the optimal step has a closed form from the quadratic.
pub fn train_ocsvm_with(
    features: &[Vec<f64>],
    nu: f64,
    gamma: f64,
    iteration_cap: usize,
    tolerance: f64,
) -> Result<(OcsvmModel, TrainDiagnostics), SieveError> {
    if features.is_empty() {
        return Err(SieveError::EmptyTrainingSet);
    }
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(SieveError::BadNu(nu));
    }
    let l = features.len();
    let dim = features[0].len();
    for f in features {
        if f.len() != dim {
            return Err(SieveError::LengthMismatch { a: dim, b: f.len() });
        }
    }
    let c = 1.0 / (nu * l as f64);

    // Dense kernel matrix; the sieve's training sets are small (synthetic
    // pools and acceptance instances), so O(l²) storage is fine.
    let mut q = vec![0.0f64; l * l];
    for i in 0..l {
        for j in i..l {
            let k = rbf_kernel(&features[i], &features[j], gamma)?;
            q[i * l + j] = k;
            q[j * l + i] = k;
        }
    }

    let mut beta = vec![1.0 / l as f64; l];
    // Gradient of ½βᵀQβ is Qβ.
    let mut grad: Vec<f64> = (0..l)
        .map(|i| (0..l).map(|j| q[i * l + j] * beta[j]).sum())
        .collect();

    let bound_slack = 1e-12;
    let polish = tolerance.min(SOLVER_POLISH);
    let mut iterations = 0usize;
    let mut residual;
    loop {
        // Most-violating pair: grow where the gradient is smallest, shrink
        // where it is largest.
        let mut up: Option<usize> = None;
        let mut down: Option<usize> = None;
        for i in 0..l {
            if beta[i] < c - bound_slack && up.map_or(true, |u| grad[i] < grad[u]) {
                up = Some(i);
            }
            if beta[i] > bound_slack && down.map_or(true, |d| grad[i] > grad[d]) {
                down = Some(i);
            }
        }
        let (Some(u), Some(d)) = (up, down) else {
            residual = 0.0;
            break;
        };
        residual = grad[d] - grad[u];
        if residual <= polish || u == d {
            residual = residual.max(0.0);
            break;
        }
        if iterations >= iteration_cap {
            if residual <= tolerance {
                break;
            }
            return Err(SieveError::NonConvergence { iterations, residual });
        }

        let room = (c - beta[u]).min(beta[d]);
        let curvature = q[u * l + u] + q[d * l + d] - 2.0 * q[u * l + d];
        let step = if curvature > 1e-15 {
            (residual / curvature).min(room)
        } else {
            room
        };
        beta[u] += step;
        beta[d] -= step;
        for i in 0..l {
            grad[i] += step * (q[i * l + u] - q[i * l + d]);
        }
        iterations += 1;
    }

    // Snap to the feasible set exactly: clear dust, cap at the box, and
    // renormalize the simplex sum.
    for b in beta.iter_mut() {
        if *b < bound_slack {
            *b = 0.0;
        } else if *b > c {
            *b = c;
        }
    }
    let total: f64 = beta.iter().sum();
    for b in beta.iter_mut() {
        *b /= total;
    }
    let grad: Vec<f64> = (0..l)
        .map(|i| (0..l).map(|j| q[i * l + j] * beta[j]).sum())
        .collect();

    let rho = recover_rho(&beta, &grad, c);

    let mut support_vectors = Vec::new();
    let mut coefficients = Vec::new();
    for i in 0..l {
        if beta[i] > 0.0 {
            support_vectors.push(features[i].clone());
            coefficients.push(beta[i]);
        }
    }
    let objective = {
        let mut acc = 0.0;
        for i in 0..l {
            acc += beta[i] * grad[i];
        }
        0.5 * acc
    };
    Ok((
        OcsvmModel { gamma, nu, rho, support_vectors, coefficients },
        TrainDiagnostics { betas: beta, objective, iterations, residual },
    ))
}

/// ρ makes margin support vectors (0 < β < C) sit exactly on the boundary:
/// there, (Qβ)ᵢ = ρ. Without free vectors, KKT brackets ρ between the
/// bound groups; take the midpoint.
pub(crate) fn recover_rho(beta: &[f64], grad: &[f64], c: f64) -> f64 {
    let slack = 1e-10;
    let mut free_sum = 0.0;
    let mut free_count = 0usize;
    for i in 0..beta.len() {
        if beta[i] > slack && beta[i] < c - slack {
            free_sum += grad[i];
            free_count += 1;
        }
    }
    if free_count > 0 {
        return free_sum / free_count as f64;
    }
    let mut lower = f64::NEG_INFINITY; // max over β=C (must have grad ≤ ρ)
    let mut upper = f64::INFINITY; // min over β=0 (must have grad ≥ ρ)
    for i in 0..beta.len() {
        if beta[i] >= c - slack {
            lower = lower.max(grad[i]);
        } else if beta[i] <= slack {
            upper = upper.min(grad[i]);
        }
    }
    match (lower.is_finite(), upper.is_finite()) {
        (true, true) => (lower + upper) / 2.0,
        (true, false) => lower,
        (false, true) => upper,
        (false, false) => 0.0,
    }
}

/// Σ βᵢK(xᵢ, x) − ρ; the sign classifies (≥ 0 is inside).
pub fn decision_value(model: &OcsvmModel, feature: &[f64]) -> Result<f64, SieveError> {
    let mut sum = 0.0;
    for (sv, &b) in model.support_vectors.iter().zip(&model.coefficients) {
        sum += b * rbf_kernel(sv, feature, model.gamma)?;
    }
    Ok(sum - model.rho)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterReport {
    pub kept: usize,
    pub discarded: usize,
}

/// Keep the spectrograms the model scores nonnegative, preserving order.
pub fn filter_samples(
    model: &OcsvmModel,
    samples: &[Spectrogram],
) -> Result<(Vec<Spectrogram>, FilterReport), SieveError> {
    let mut kept = Vec::new();
    for s in samples {
        let f = featurize(s)?;
        if decision_value(model, &f)? >= 0.0 {
            kept.push(s.clone());
        }
    }
    let report = FilterReport {
        kept: kept.len(),
        discarded: samples.len() - kept.len(),
    };
    Ok((kept, report))
}

pub fn write_model(model: &OcsvmModel) -> Vec<u8> {
    let count = model.support_vectors.len();
    let dim = model.support_vectors.first().map_or(0, |v| v.len());
    let mut out = Vec::with_capacity(48 + count * (dim + 1) * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&model.gamma.to_le_bytes());
    out.extend_from_slice(&model.nu.to_le_bytes());
    out.extend_from_slice(&model.rho.to_le_bytes());
    out.extend_from_slice(&(count as u32).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for &b in &model.coefficients {
        out.extend_from_slice(&b.to_le_bytes());
    }
    for sv in &model.support_vectors {
        for &v in sv {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn read_model(bytes: &[u8]) -> Result<OcsvmModel, SieveError> {
    if bytes.len() < MAGIC.len() + 6 {
        return Err(WireError::Truncated("sieve model header").into());
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(SieveError::Checksum { stored, computed });
    }
    let mut cur = body;
    let magic = wire::take(&mut cur, 4, "magic")?;
    if magic != MAGIC {
        return Err(SieveError::BadMagic(magic.to_vec()));
    }
    let version = wire::read_u16(&mut cur, "version")?;
    if version != VERSION {
        return Err(SieveError::Version(version));
    }
    let gamma = wire::read_f64(&mut cur, "gamma")?;
    let nu = wire::read_f64(&mut cur, "nu")?;
    let rho = wire::read_f64(&mut cur, "rho")?;
    let count = wire::read_u32(&mut cur, "support vector count")? as usize;
    let dim = wire::read_u32(&mut cur, "feature dimension")? as usize;
    let mut coefficients = Vec::with_capacity(count);
    for _ in 0..count {
        coefficients.push(wire::read_f64(&mut cur, "coefficient")?);
    }
    let mut support_vectors = Vec::with_capacity(count);
    for _ in 0..count {
        let mut sv = Vec::with_capacity(dim);
        for _ in 0..dim {
            sv.push(wire::read_f64(&mut cur, "support vector value")?);
        }
        support_vectors.push(sv);
    }
    if !cur.is_empty() {
        return Err(WireError::Truncated("trailing bytes after payload").into());
    }
    Ok(OcsvmModel { gamma, nu, rho, support_vectors, coefficients })
}

pub fn save_model(model: &OcsvmModel, path: &Path) -> Result<(), SieveError> {
    Ok(fs::write(path, write_model(model))?)
}

pub fn load_model(path: &Path) -> Result<OcsvmModel, SieveError> {
    read_model(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Label, Provenance};
    use pf_numcore::Rng;

    #[test]
    fn rbf_kernel_basics() {
        let x = vec![0.3, -0.7, 1.1];
        assert!((rbf_kernel(&x, &x, 2.0).unwrap() - 1.0).abs() < 1e-15);
        let u = vec![0.0, 0.0];
        let v = vec![1.0, 0.0];
        assert!((rbf_kernel(&u, &v, 1.0).unwrap() - (-1.0f64).exp()).abs() < 1e-12);
        let mut rng = Rng::new(4);
        for _ in 0..20 {
            let a: Vec<f64> = (0..5).map(|_| rng.uniform() * 2.0 - 1.0).collect();
            let b: Vec<f64> = (0..5).map(|_| rng.uniform() * 2.0 - 1.0).collect();
            assert_eq!(rbf_kernel(&a, &b, 0.7).unwrap(), rbf_kernel(&b, &a, 0.7).unwrap());
        }
        assert!(matches!(
            rbf_kernel(&u, &x, 1.0),
            Err(SieveError::LengthMismatch { .. })
        ));
        assert!(matches!(rbf_kernel(&u, &u, 0.0), Err(SieveError::BadGamma(_))));
    }

    fn image(size: usize, f: impl Fn(usize, usize) -> f32) -> Spectrogram {
        let mut data = Vec::with_capacity(size * size * 3);
        for y in 0..size {
            for x in 0..size {
                let v = f(y, x);
                data.extend_from_slice(&[v, v, v]);
            }
        }
        Spectrogram::new(size, data, Label::Preictal, Provenance::Real, "img").unwrap()
    }

    #[test]
    fn featurize_pools_channel_zero_to_1024() {
        let constant = image(64, |_, _| 0.25);
        let f = featurize(&constant).unwrap();
        assert_eq!(f.len(), FEATURE_LEN);
        assert!(f.iter().all(|&v| (v - 0.25).abs() < 1e-7));

        // 64 → 32 pools 2×2 blocks; give each block a distinct constant.
        let blocked = image(64, |y, x| ((y / 2) * 32 + (x / 2)) as f32 / 1024.0 - 0.5);
        let f = featurize(&blocked).unwrap();
        for by in 0..32 {
            for bx in 0..32 {
                let expect = (by * 32 + bx) as f64 / 1024.0 - 0.5;
                let got = f[by * 32 + bx];
                assert!((got - expect).abs() < 1e-6, "block ({by},{bx}): {got} vs {expect}");
            }
        }

        let identity = featurize(&image(32, |y, x| ((y + x) % 3) as f32 * 0.1)).unwrap();
        assert_eq!(identity.len(), 1024);
        assert!(matches!(
            featurize(&image(16, |_, _| 0.0)),
            Err(SieveError::BadImageSize { size: 16 })
        ));
    }

    #[test]
    fn single_point_model_scores_its_own_point_on_the_boundary() {
        let features = vec![vec![0.4, -0.2]];
        let (model, diag) = train_ocsvm(&features, 0.5, 1.0).unwrap();
        assert_eq!(diag.betas, vec![1.0]);
        assert_eq!(model.support_vectors.len(), 1);
        let v = decision_value(&model, &features[0]).unwrap();
        assert!(v.abs() < 1e-12, "decision at the lone training point: {v}");
        assert!(v >= 0.0 || v.abs() < 1e-12);
    }

    fn random_features(l: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = Rng::new(seed);
        (0..l)
            .map(|_| (0..dim).map(|_| rng.uniform() * 4.0 - 2.0).collect())
            .collect()
    }

    #[test]
    fn margin_support_vectors_sit_on_the_boundary() {
        let features = random_features(12, 2, 99);
        let (model, diag) = train_ocsvm(&features, 0.5, 1.0).unwrap();
        let c = 1.0 / (0.5 * 12.0);
        let mut free_seen = 0;
        for (i, &b) in diag.betas.iter().enumerate() {
            if b > 1e-8 && b < c - 1e-8 {
                free_seen += 1;
                let v = decision_value(&model, &features[i]).unwrap();
                assert!(v.abs() <= 1e-5, "free vector {i} has decision {v}");
            }
        }
        assert!(free_seen > 0, "expected at least one margin support vector");
    }

    #[test]
    fn far_queries_score_minus_rho() {
        let features = random_features(8, 2, 5);
        let (model, _) = train_ocsvm(&features, 0.3, 1.0).unwrap();
        assert!(model.rho > 0.0);
        let far = vec![1e6, -1e6];
        let v = decision_value(&model, &far).unwrap();
        assert!((v + model.rho).abs() < 1e-12);
        assert!(v < 0.0);
    }

    #[test]
    fn nu_bounds_outliers_and_support_vectors() {
        for (seed, nu) in [(1u64, 0.2f64), (2, 0.5), (3, 0.8)] {
            let l = 20;
            let features = random_features(l, 2, seed);
            let (model, diag) = train_ocsvm(&features, nu, 0.8).unwrap();
            let negative = features
                .iter()
                .filter(|f| decision_value(&model, f).unwrap() < -1e-9)
                .count() as f64
                / l as f64;
            let svs = diag.betas.iter().filter(|&&b| b > 0.0).count() as f64 / l as f64;
            let slack = 1.0 / l as f64 + 1e-9;
            assert!(negative <= nu + slack, "nu={nu}: outlier fraction {negative}");
            assert!(svs >= nu - slack, "nu={nu}: sv fraction {svs}");
        }
    }

    #[test]
    fn training_is_order_invariant() {
        let features = random_features(10, 3, 17);
        let mut reversed = features.clone();
        reversed.reverse();
        let (a, _) = train_ocsvm(&features, 0.4, 1.3).unwrap();
        let (b, _) = train_ocsvm(&reversed, 0.4, 1.3).unwrap();
        let probes = random_features(25, 3, 18);
        for p in &probes {
            let va = decision_value(&a, p).unwrap();
            let vb = decision_value(&b, p).unwrap();
            assert!((va - vb).abs() < 1e-8, "{va} vs {vb}");
        }
    }

    #[test]
    fn iteration_cap_errors_with_residual() {
        let features = random_features(10, 2, 7);
        let err = train_ocsvm_with(&features, 0.5, 1.0, 1, 1e-12).unwrap_err();
        match err {
            SieveError::NonConvergence { iterations, residual } => {
                assert_eq!(iterations, 1);
                assert!(residual > 0.0);
            }
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn filtering_keeps_inliers_preserves_order_and_is_idempotent() {
        // Structured corpus: smooth gradients. Noise: speckle.
        let mut rng = Rng::new(41);
        let real: Vec<Spectrogram> = (0..12)
            .map(|i| {
                let phase = i as f32 * 0.05;
                image(32, move |y, x| {
                    ((y as f32 / 31.0 - 0.5) + (x as f32 / 31.0 - 0.5)) * 0.8 + phase * 0.1
                })
            })
            .collect();
        let features: Vec<Vec<f64>> = real.iter().map(|s| featurize(s).unwrap()).collect();
        let gamma = scale_gamma(&features);
        let (model, _) = train_ocsvm(&features, 0.25, gamma).unwrap();

        // The training corpus itself: at least (1−ν)l kept.
        let (kept, report) = filter_samples(&model, &real).unwrap();
        assert!(kept.len() as f64 >= (1.0 - 0.25) * real.len() as f64 - 1e-9);
        assert_eq!(report.kept + report.discarded, real.len());

        // Pure noise: mostly rejected.
        let noise: Vec<Spectrogram> = (0..12)
            .map(|_| {
                let vals: Vec<f32> =
                    (0..32 * 32).map(|_| (rng.uniform() * 2.0 - 1.0) as f32).collect();
                image(32, move |y, x| vals[y * 32 + x])
            })
            .collect();
        let (kept_noise, _) = filter_samples(&model, &noise).unwrap();
        assert!(
            kept_noise.len() * 2 < noise.len(),
            "{} of {} noise images kept",
            kept_noise.len(),
            noise.len()
        );

        // Idempotence and order.
        let (again, report2) = filter_samples(&model, &kept).unwrap();
        assert_eq!(again, kept);
        assert_eq!(report2.discarded, 0);
        let (empty, report3) = filter_samples(&model, &[]).unwrap();
        assert!(empty.is_empty());
        assert_eq!(report3, FilterReport { kept: 0, discarded: 0 });
    }

    #[test]
    fn decision_is_continuous_in_query_and_gamma() {
        let features = random_features(9, 2, 23);
        let (model, _) = train_ocsvm(&features, 0.4, 1.0).unwrap();
        let probe = vec![0.1, 0.2];
        let base = decision_value(&model, &probe).unwrap();
        let nudged = decision_value(&model, &[0.1 + 1e-7, 0.2]).unwrap();
        assert!((base - nudged).abs() < 1e-5);

        let (model_g, _) = train_ocsvm(&features, 0.4, 1.0 + 1e-7).unwrap();
        let shifted = decision_value(&model_g, &probe).unwrap();
        assert!((base - shifted).abs() < 1e-4);
    }

    #[test]
    fn model_file_round_trip_and_corruption() {
        let features = random_features(7, 3, 31);
        let (model, _) = train_ocsvm(&features, 0.3, 0.9).unwrap();
        let bytes = write_model(&model);
        let back = read_model(&bytes).unwrap();
        assert_eq!(model, back);
        assert_eq!(bytes, write_model(&back));

        let mut bad = bytes.clone();
        bad[10] ^= 0x01;
        assert!(matches!(read_model(&bad).unwrap_err(), SieveError::Checksum { .. }));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.pfsv");
        save_model(&model, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), model);
    }

    #[test]
    fn invalid_arguments_are_rejected() {
        assert!(matches!(
            train_ocsvm(&[], 0.5, 1.0),
            Err(SieveError::EmptyTrainingSet)
        ));
        let f = random_features(3, 2, 1);
        assert!(matches!(train_ocsvm(&f, 0.0, 1.0), Err(SieveError::BadNu(_))));
        assert!(matches!(train_ocsvm(&f, 1.5, 1.0), Err(SieveError::BadNu(_))));
        let mut ragged = f.clone();
        ragged[2] = vec![1.0];
        assert!(matches!(
            train_ocsvm(&ragged, 0.5, 1.0),
            Err(SieveError::LengthMismatch { .. })
        ));
    }
}
