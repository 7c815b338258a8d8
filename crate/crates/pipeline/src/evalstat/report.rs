//! Per-patient evaluation reports and their aggregation.

use super::alarms::ScoreOutcome;
use super::roc::roc_auc;
use super::{EvalConfig, EvalError};
use crate::types::{Label, PredictionRecord};

/// One patient's evaluation row. Percentages are 0–100; `fpr_per_hour`
/// counts false alarms per interictal hour.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub patient_id: String,
    pub sensitivity_pct: f64,
    pub fpr_per_hour: f64,
    pub specificity_pct: f64,
    pub accuracy_pct: f64,
    pub auc: f64,
    pub p_value: Option<f64>,
    pub n_seizures: usize,
    pub n_predicted: usize,
    pub false_alarms: usize,
    pub interictal_hours: f64,
}

/// Column means across patients (unweighted).
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub patients: usize,
    pub sensitivity_pct: f64,
    pub fpr_per_hour: f64,
    pub specificity_pct: f64,
    pub accuracy_pct: f64,
    pub auc: f64,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str =
        "patient,sensitivity_pct,fpr_per_hour,specificity_pct,accuracy_pct,auc,p_value,\
         n_seizures,n_predicted,false_alarms,interictal_hours";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.patient_id,
            self.sensitivity_pct,
            self.fpr_per_hour,
            self.specificity_pct,
            self.accuracy_pct,
            self.auc,
            self.p_value.map_or(String::from(""), |p| p.to_string()),
            self.n_seizures,
            self.n_predicted,
            self.false_alarms,
            self.interictal_hours,
        )
    }

    pub fn from_csv_row(row: &str) -> Result<Self, EvalError> {
        let fields: Vec<&str> = row.trim_end().split(',').collect();
        if fields.len() != 11 {
            return Err(EvalError::MalformedRow(format!(
                "expected 11 fields, got {}: {row:?}",
                fields.len()
            )));
        }
        let num = |i: usize| -> Result<f64, EvalError> {
            fields[i]
                .parse()
                .map_err(|_| EvalError::MalformedRow(format!("field {i} not numeric: {row:?}")))
        };
        let count = |i: usize| -> Result<usize, EvalError> {
            fields[i]
                .parse()
                .map_err(|_| EvalError::MalformedRow(format!("field {i} not a count: {row:?}")))
        };
        Ok(EvalReport {
            patient_id: fields[0].to_string(),
            sensitivity_pct: num(1)?,
            fpr_per_hour: num(2)?,
            specificity_pct: num(3)?,
            accuracy_pct: num(4)?,
            auc: num(5)?,
            p_value: if fields[6].is_empty() {
                None
            } else {
                Some(num(6)?)
            },
            n_seizures: count(7)?,
            n_predicted: count(8)?,
            false_alarms: count(9)?,
            interictal_hours: num(10)?,
        })
    }
}

/// Assemble the report for one patient from alarm scoring plus the
/// segment-level confusion at the same threshold the alarms used.
///
/// Sensitivity is n/N over merged leading seizures (0 when the patient has
/// none); FPR divides false alarms by interictal hours. Specificity and
/// accuracy come from per-segment classification, and AUC is threshold-free,
/// so a report carries alarm-level and segment-level views of the same run.
pub fn compute_metrics(
    patient_id: &str,
    outcome: &ScoreOutcome,
    interictal_hours: f64,
    records: &[PredictionRecord],
    config: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    config.validate()?;
    if !(interictal_hours > 0.0) {
        return Err(EvalError::NonPositiveHours(interictal_hours));
    }
    let n_seizures = outcome.seizure_count();
    let sensitivity_pct = if n_seizures == 0 {
        0.0
    } else {
        100.0 * outcome.true_predictions as f64 / n_seizures as f64
    };

    let mut tp = 0usize;
    let mut tn = 0usize;
    let mut fp = 0usize;
    let mut fnn = 0usize;
    for rec in records {
        let predicted_preictal = rec.prob >= config.threshold;
        match (rec.label, predicted_preictal) {
            (Label::Preictal, true) => tp += 1,
            (Label::Preictal, false) => fnn += 1,
            (Label::Interictal, true) => fp += 1,
            (Label::Interictal, false) => tn += 1,
        }
    }
    let negatives = tn + fp;
    let total = tp + tn + fp + fnn;
    let specificity_pct = if negatives == 0 {
        0.0
    } else {
        100.0 * tn as f64 / negatives as f64
    };
    let accuracy_pct = if total == 0 {
        0.0
    } else {
        100.0 * (tp + tn) as f64 / total as f64
    };

    let labels: Vec<bool> = records.iter().map(|r| r.label == Label::Preictal).collect();
    let probs: Vec<f64> = records.iter().map(|r| r.prob).collect();
    let auc = roc_auc(&labels, &probs)?;

    Ok(EvalReport {
        patient_id: patient_id.to_string(),
        sensitivity_pct,
        fpr_per_hour: outcome.false_alarms as f64 / interictal_hours,
        specificity_pct,
        accuracy_pct,
        auc,
        p_value: None,
        n_seizures,
        n_predicted: outcome.true_predictions,
        false_alarms: outcome.false_alarms,
        interictal_hours,
    })
}

/// Unweighted arithmetic mean of every metric column.
pub fn aggregate_reports(reports: &[EvalReport]) -> Result<SummaryRow, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::EmptyReports);
    }
    let k = reports.len() as f64;
    let mean = |f: fn(&EvalReport) -> f64| reports.iter().map(f).sum::<f64>() / k;
    Ok(SummaryRow {
        patients: reports.len(),
        sensitivity_pct: mean(|r| r.sensitivity_pct),
        fpr_per_hour: mean(|r| r.fpr_per_hour),
        specificity_pct: mean(|r| r.specificity_pct),
        accuracy_pct: mean(|r| r.accuracy_pct),
        auc: mean(|r| r.auc),
    })
}

#[cfg(test)]
mod tests {
    use super::super::alarms::SeizureOutcome;
    use super::*;

    fn outcome(n_predicted: usize, n_seizures: usize, false_alarms: usize) -> ScoreOutcome {
        ScoreOutcome {
            true_predictions: n_predicted,
            false_alarms,
            per_seizure: (0..n_seizures)
                .map(|i| SeizureOutcome {
                    onset_s: 1000.0 * i as f64,
                    credited_alarm_s: if i < n_predicted { Some(0.0) } else { None },
                })
                .collect(),
        }
    }

    fn rec(label: Label, prob: f64) -> PredictionRecord {
        PredictionRecord {
            patient_id: "p1".into(),
            segment_id: format!("s{prob}"),
            end_time_s: prob * 1e4,
            label,
            prob,
        }
    }

    fn base_records() -> Vec<PredictionRecord> {
        vec![
            rec(Label::Preictal, 0.9),
            rec(Label::Preictal, 0.4),
            rec(Label::Interictal, 0.6),
            rec(Label::Interictal, 0.2),
            rec(Label::Interictal, 0.1),
        ]
    }

    #[test]
    fn two_of_three_seizures_gives_two_thirds_sensitivity() {
        let report = compute_metrics(
            "p1",
            &outcome(2, 3, 0),
            10.0,
            &base_records(),
            &EvalConfig::new(0.5),
        )
        .unwrap();
        assert!((report.sensitivity_pct - 66.66666666666667).abs() < 1e-10);
    }

    #[test]
    fn three_false_alarms_over_ten_hours_is_point_three() {
        let report = compute_metrics(
            "p1",
            &outcome(0, 1, 3),
            10.0,
            &base_records(),
            &EvalConfig::new(0.5),
        )
        .unwrap();
        assert!((report.fpr_per_hour - 0.3).abs() < 1e-15);
    }

    #[test]
    fn confusion_counts_at_threshold() {
        // At θ=0.5: TP=1 (0.9), FN=1 (0.4), FP=1 (0.6), TN=2 (0.2, 0.1).
        let report = compute_metrics(
            "p1",
            &outcome(1, 1, 1),
            2.0,
            &base_records(),
            &EvalConfig::new(0.5),
        )
        .unwrap();
        assert!((report.specificity_pct - 100.0 * 2.0 / 3.0).abs() < 1e-10);
        assert!((report.accuracy_pct - 100.0 * 3.0 / 5.0).abs() < 1e-10);
        assert!(report.auc > 0.5 && report.auc < 1.0);
    }

    #[test]
    fn zero_hours_is_an_error() {
        let err = compute_metrics(
            "p1",
            &outcome(0, 0, 0),
            0.0,
            &base_records(),
            &EvalConfig::new(0.5),
        )
        .unwrap_err();
        assert!(matches!(err, EvalError::NonPositiveHours(_)));
    }

    fn report(id: &str, sen: f64, fpr: f64) -> EvalReport {
        EvalReport {
            patient_id: id.into(),
            sensitivity_pct: sen,
            fpr_per_hour: fpr,
            specificity_pct: 90.0,
            accuracy_pct: 85.0,
            auc: 0.9,
            p_value: Some(0.01),
            n_seizures: 3,
            n_predicted: 2,
            false_alarms: 1,
            interictal_hours: 8.0,
        }
    }

    #[test]
    fn single_report_aggregates_to_itself() {
        let r = report("p1", 80.0, 0.2);
        let s = aggregate_reports(std::slice::from_ref(&r)).unwrap();
        assert_eq!(s.sensitivity_pct, 80.0);
        assert_eq!(s.fpr_per_hour, 0.2);
        assert_eq!(s.patients, 1);
    }

    #[test]
    fn aggregate_is_the_unweighted_mean() {
        let s = aggregate_reports(&[report("a", 100.0, 0.2), report("b", 50.0, 0.4)]).unwrap();
        assert!((s.sensitivity_pct - 75.0).abs() < 1e-12);
        assert!((s.fpr_per_hour - 0.3).abs() < 1e-15);
    }

    #[test]
    fn empty_aggregation_errors() {
        assert!(matches!(
            aggregate_reports(&[]),
            Err(EvalError::EmptyReports)
        ));
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let mut r = report("chb07", 71.42857142857143, 0.13572468);
        r.p_value = Some(3.25e-4);
        let back = EvalReport::from_csv_row(&r.to_csv_row()).unwrap();
        assert_eq!(r, back);
        // None p-value round-trips too.
        r.p_value = None;
        let back = EvalReport::from_csv_row(&r.to_csv_row()).unwrap();
        assert_eq!(r, back);
    }

    #[test]
    fn malformed_rows_are_rejected() {
        assert!(EvalReport::from_csv_row("p1,1,2,3").is_err());
        assert!(EvalReport::from_csv_row("p1,x,0,0,0,0,,0,0,0,0").is_err());
    }
}
