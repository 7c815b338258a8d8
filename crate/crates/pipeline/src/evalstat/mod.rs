//! Alarm-based evaluation: SPH/SOP scoring, segment metrics, ROC/AUC, a
//! random-predictor significance test, and AUC comparison.
//!
//! Time is in seconds unless a name says otherwise. An alarm raised at time
//! `t` predicts a seizure onset inside `(t + SPH, t + SPH + SOP]`: the
//! prediction horizon gives caregivers lead time, the occurrence period
//! bounds how long the warning stays valid.

mod alarms;
pub mod reference;
mod report;
mod roc;
mod stats;

pub use alarms::{raise_alarms, score_alarms, AlarmEvent, ScoreOutcome, SeizureOutcome};
pub use report::{aggregate_reports, compute_metrics, EvalReport, SummaryRow};
pub use roc::{roc_auc, roc_points, RocPoint};
pub use stats::{bonferroni_significant, hanley_mcneil_p, normal_cdf, schelter_p};

use thiserror::Error;

/// Default prediction horizon: 10 minutes.
pub const DEFAULT_SPH_S: f64 = 600.0;
/// Default occurrence period: 30 minutes.
pub const DEFAULT_SOP_S: f64 = 1800.0;
/// Comparisons corrected for when flagging significance (one per
/// train/test combination).
pub const BONFERRONI_COMPARISONS: usize = 4;

/// How alarms behave while a previous alarm is still "live".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefractoryPolicy {
    /// Suppress new alarms within SOP of the previous alarm.
    SuppressWithinSop,
    /// Raise an alarm for every supra-threshold segment.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub sph_s: f64,
    pub sop_s: f64,
    /// Alarm threshold on the predicted preictal probability.
    pub threshold: f64,
    pub refractory: RefractoryPolicy,
}

impl EvalConfig {
    pub fn new(threshold: f64) -> Self {
        EvalConfig {
            sph_s: DEFAULT_SPH_S,
            sop_s: DEFAULT_SOP_S,
            threshold,
            refractory: RefractoryPolicy::SuppressWithinSop,
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.sph_s > 0.0) || !(self.sop_s > 0.0) {
            return Err(EvalError::BadConfig("SPH and SOP must be positive"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(EvalError::BadConfig("threshold must lie in (0,1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid evaluation config: {0}")]
    BadConfig(&'static str),
    #[error("prediction records for patient {patient} are not time-ordered (index {index})")]
    UnorderedRecords { patient: String, index: usize },
    #[error("ROC requires both classes; got {positives} positive / {negatives} negative labels")]
    SingleClass { positives: usize, negatives: usize },
    #[error("interictal hours must be positive to compute a false-positive rate, got {0}")]
    NonPositiveHours(f64),
    #[error("probabilities must be finite, got {0}")]
    BadProbability(f64),
    #[error("{context}: {message}")]
    BadArgument {
        context: &'static str,
        message: String,
    },
    #[error("cannot aggregate an empty report list")]
    EmptyReports,
    #[error("malformed report row: {0}")]
    MalformedRow(String),
}
