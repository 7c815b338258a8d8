//! ROC curve and AUC.

use super::EvalError;

/// One operating point; `threshold` is the smallest probability still
/// classified positive at this point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

fn class_counts(labels: &[bool]) -> Result<(usize, usize), EvalError> {
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::SingleClass {
            positives,
            negatives,
        });
    }
    Ok((positives, negatives))
}

/// Area under the ROC curve via the rank-sum identity: AUC is the
/// probability a random positive outscores a random negative, ties counted
/// half. Average ranks over tied scores make this exact under ties.
pub fn roc_auc(labels: &[bool], probs: &[f64]) -> Result<f64, EvalError> {
    if labels.len() != probs.len() {
        return Err(EvalError::BadArgument {
            context: "roc_auc",
            message: format!("{} labels vs {} probabilities", labels.len(), probs.len()),
        });
    }
    for &p in probs {
        if !p.is_finite() {
            return Err(EvalError::BadProbability(p));
        }
    }
    let (positives, negatives) = class_counts(labels)?;

    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[a].partial_cmp(&probs[b]).expect("finite probs"));

    // Sum of average ranks (1-based) over the positive class.
    let mut positive_rank_sum = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && probs[order[j]] == probs[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0; // mean of ranks i+1 ..= j
        for &idx in &order[i..j] {
            if labels[idx] {
                positive_rank_sum += avg_rank;
            }
        }
        i = j;
    }

    let p = positives as f64;
    let n = negatives as f64;
    Ok((positive_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// ROC operating points swept from the strictest threshold to the loosest:
/// starts at (0,0) with an unreachable threshold and ends at (1,1) where
/// every sample is called positive.
pub fn roc_points(labels: &[bool], probs: &[f64]) -> Result<Vec<RocPoint>, EvalError> {
    if labels.len() != probs.len() {
        return Err(EvalError::BadArgument {
            context: "roc_points",
            message: format!("{} labels vs {} probabilities", labels.len(), probs.len()),
        });
    }
    let (positives, negatives) = class_counts(labels)?;

    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).expect("finite probs"));

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let threshold = probs[order[i]];
        while i < order.len() && probs[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / negatives as f64,
            tpr: tp as f64 / positives as f64,
            threshold,
        });
    }
    Ok(points)
}
