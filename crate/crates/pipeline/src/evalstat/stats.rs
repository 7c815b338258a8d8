//! Significance statistics: random-predictor baseline and AUC comparison.

use super::EvalError;

/// Standard normal CDF.
///
/// Evaluates the Taylor expansion of Φ around 0,
/// Φ(x) = 1/2 + φ(x) · Σ_{k≥0} x^(2k+1) / (1·3·5···(2k+1)),
/// whose terms are all positive for x > 0, so the sum has no cancellation;
/// symmetry handles x < 0. Convergence is geometric once 2k+1 > x². For
/// |x| ≥ 8.3 the tail is below half an ulp of 1, so 1 (resp. 0) is already
/// the correctly rounded value and the series is skipped. Absolute error is
/// below 1e-13 across the real line (checked against an independent
/// erf-series/continued-fraction oracle).
pub fn normal_cdf(x: f64) -> f64 {
    if x < 0.0 {
        return 1.0 - normal_cdf(-x);
    }
    if x >= 8.3 {
        return 1.0;
    }
    let mut term = x;
    let mut sum = x;
    let mut denom = 1.0f64;
    while term.abs() > 1e-18 * sum.abs() {
        denom += 2.0;
        term *= x * x / denom;
        sum += term;
    }
    let phi = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    // Rounding can land a hair above 1 near the saturation cutoff.
    (0.5 + phi * sum).min(1.0)
}

/// Probability that an unspecific random predictor raises at least one alarm
/// inside one occurrence period: P = 1 − e^(−FPR·SOP).
pub fn random_alarm_probability(fpr_per_hour: f64, sop_hours: f64) -> Result<f64, EvalError> {
    if fpr_per_hour < 0.0 || !fpr_per_hour.is_finite() {
        return Err(EvalError::BadArgument {
            context: "random_alarm_probability",
            message: format!("FPR must be finite and nonnegative, got {fpr_per_hour}"),
        });
    }
    if sop_hours <= 0.0 {
        return Err(EvalError::BadArgument {
            context: "random_alarm_probability",
            message: format!("SOP must be positive, got {sop_hours} h"),
        });
    }
    Ok(-(-fpr_per_hour * sop_hours).exp_m1())
}

/// Chance probability of predicting at least `n` of `N` seizures at the
/// given false-alarm rate: the upper binomial tail
/// p = Σ_{k=n}^{N} C(N,k) P^k (1−P)^(N−k) with P = 1 − e^(−FPR·SOP).
pub fn schelter_p(
    fpr_per_hour: f64,
    sop_hours: f64,
    n: usize,
    n_total: usize,
) -> Result<f64, EvalError> {
    if n > n_total {
        return Err(EvalError::BadArgument {
            context: "schelter_p",
            message: format!("predicted {n} of {n_total} seizures"),
        });
    }
    let p = random_alarm_probability(fpr_per_hour, sop_hours)?;
    Ok(binomial_upper_tail(n_total, n, p))
}

/// Σ_{k=n}^{N} C(N,k) p^k (1−p)^(N−k), summed from the largest k down so the
/// (usually tiny) high-order terms accumulate before the dominant ones.
fn binomial_upper_tail(n_total: usize, n: usize, p: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    if p == 0.0 {
        return 0.0;
    }
    if p == 1.0 {
        return 1.0;
    }
    let mut sum = 0.0f64;
    for k in (n..=n_total).rev() {
        sum += binomial_coefficient(n_total, k)
            * p.powi(k as i32)
            * (1.0 - p).powi((n_total - k) as i32);
    }
    sum.min(1.0)
}

fn binomial_coefficient(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut c = 1.0f64;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

/// One-tailed comparison of two AUCs using the Hanley–McNeil standard error
/// SE(A)² = [A(1−A) + (n₊−1)(Q1−A²) + (n₋−1)(Q2−A²)] / (n₊·n₋),
/// Q1 = A/(2−A), Q2 = 2A²/(1+A); returns p = 1 − Φ(z) for
/// z = (A1−A2)/√(SE1²+SE2²). Equal AUCs give exactly 0.5.
pub fn hanley_mcneil_p(
    auc1: f64,
    n_pos1: usize,
    n_neg1: usize,
    auc2: f64,
    n_pos2: usize,
    n_neg2: usize,
) -> Result<f64, EvalError> {
    for (label, auc) in [("first", auc1), ("second", auc2)] {
        if !(auc > 0.0 && auc < 1.0) {
            return Err(EvalError::BadArgument {
                context: "hanley_mcneil_p",
                message: format!("{label} AUC must lie in (0,1), got {auc}"),
            });
        }
    }
    for (label, count) in [
        ("first positive", n_pos1),
        ("first negative", n_neg1),
        ("second positive", n_pos2),
        ("second negative", n_neg2),
    ] {
        if count < 2 {
            return Err(EvalError::BadArgument {
                context: "hanley_mcneil_p",
                message: format!("{label} count must be at least 2, got {count}"),
            });
        }
    }
    if auc1 == auc2 {
        return Ok(0.5);
    }
    let se1 = auc_standard_error(auc1, n_pos1, n_neg1);
    let se2 = auc_standard_error(auc2, n_pos2, n_neg2);
    let z = (auc1 - auc2) / (se1 * se1 + se2 * se2).sqrt();
    Ok(1.0 - normal_cdf(z))
}

fn auc_standard_error(a: f64, n_pos: usize, n_neg: usize) -> f64 {
    let q1 = a / (2.0 - a);
    let q2 = 2.0 * a * a / (1.0 + a);
    let var = (a * (1.0 - a)
        + (n_pos as f64 - 1.0) * (q1 - a * a)
        + (n_neg as f64 - 1.0) * (q2 - a * a))
        / (n_pos as f64 * n_neg as f64);
    var.sqrt()
}

/// Bonferroni-corrected significance: p < α / comparisons.
pub fn bonferroni_significant(p: f64, alpha: f64, comparisons: usize) -> bool {
    comparisons > 0 && p < alpha / comparisons as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_cdf_anchor_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        // Φ(1) to 16 digits.
        assert!((normal_cdf(1.0) - 0.8413447460685429).abs() < 1e-14);
        // Symmetry.
        assert!((normal_cdf(-1.0) - (1.0 - 0.8413447460685429)).abs() < 1e-14);
        // Deep tails saturate.
        assert_eq!(normal_cdf(13.0), 1.0);
        assert_eq!(normal_cdf(-13.0), 0.0);
        // Monotone on a coarse grid.
        let mut prev = 0.0;
        for i in -60..=60 {
            let v = normal_cdf(i as f64 / 5.0);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn alarm_probability_closed_forms() {
        // FPR=0.2/h over 0.5 h → 1 − e^(−0.1).
        let p = random_alarm_probability(0.2, 0.5).unwrap();
        assert!((p - 0.09516258196404048).abs() < 1e-15);
        assert_eq!(random_alarm_probability(0.0, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn schelter_boundary_cases() {
        // FPR=0 → no chance prediction, so p=0 for n≥1 and p=1 for n=0.
        assert_eq!(schelter_p(0.0, 0.5, 1, 3).unwrap(), 0.0);
        assert_eq!(schelter_p(0.0, 0.5, 0, 3).unwrap(), 1.0);
        assert!(schelter_p(1.0, 0.5, 4, 3).is_err());
    }

    #[test]
    fn binomial_tail_matches_hand_sum() {
        // N=3, n=2, P=0.1: 3·0.01·0.9 + 0.001 = 0.028.
        let p = binomial_upper_tail(3, 2, 0.1);
        assert!((p - 0.028).abs() < 1e-15, "{p}");
    }

    #[test]
    fn equal_aucs_give_exactly_half() {
        assert_eq!(hanley_mcneil_p(0.8, 50, 50, 0.8, 40, 60).unwrap(), 0.5);
    }

    #[test]
    fn higher_first_auc_gives_small_p() {
        let p = hanley_mcneil_p(0.9, 50, 50, 0.7, 50, 50).unwrap();
        assert!(p < 0.05, "{p}");
        // Swapping the arguments reflects the tail: p' = 1 − p.
        let q = hanley_mcneil_p(0.7, 50, 50, 0.9, 50, 50).unwrap();
        assert!((p + q - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(hanley_mcneil_p(1.0, 50, 50, 0.7, 50, 50).is_err());
        assert!(hanley_mcneil_p(0.9, 1, 50, 0.7, 50, 50).is_err());
    }

    #[test]
    fn bonferroni_uses_strict_inequality() {
        let threshold = 0.05 / 4.0;
        assert!(bonferroni_significant(0.0124, 0.05, 4));
        assert!(!bonferroni_significant(threshold, 0.05, 4));
        assert!(!bonferroni_significant(0.013, 0.05, 4));
    }
}
