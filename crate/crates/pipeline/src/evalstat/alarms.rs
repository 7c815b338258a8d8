//! Alarm generation and SPH/SOP crediting.

use super::{EvalConfig, EvalError, RefractoryPolicy};
use crate::types::PredictionRecord;

/// A raised alarm.
#[derive(Debug, Clone, PartialEq)]
pub struct AlarmEvent {
    pub patient_id: String,
    pub time_s: f64,
}

/// Per-seizure verdict after scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct SeizureOutcome {
    pub onset_s: f64,
    /// Time of the alarm credited with this seizure, if any.
    pub credited_alarm_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreOutcome {
    /// Seizures predicted (n).
    pub true_predictions: usize,
    pub false_alarms: usize,
    pub per_seizure: Vec<SeizureOutcome>,
}

impl ScoreOutcome {
    pub fn seizure_count(&self) -> usize {
        self.per_seizure.len()
    }
}

/// Raise alarms over one patient's time-ordered records: an alarm fires at a
/// segment's end when its preictal probability reaches the threshold, unless
/// a previous alarm within the last SOP suppresses it.
pub fn raise_alarms(
    records: &[PredictionRecord],
    config: &EvalConfig,
) -> Result<Vec<AlarmEvent>, EvalError> {
    config.validate()?;
    let mut alarms: Vec<AlarmEvent> = Vec::new();
    for (i, rec) in records.iter().enumerate() {
        if !rec.prob.is_finite() {
            return Err(EvalError::BadProbability(rec.prob));
        }
        if i > 0 {
            let prev = &records[i - 1];
            if prev.patient_id == rec.patient_id && rec.end_time_s < prev.end_time_s {
                return Err(EvalError::UnorderedRecords {
                    patient: rec.patient_id.clone(),
                    index: i,
                });
            }
        }
        if rec.prob < config.threshold {
            continue;
        }
        let suppressed = match config.refractory {
            RefractoryPolicy::None => false,
            RefractoryPolicy::SuppressWithinSop => alarms
                .iter()
                .rev()
                .take_while(|a| a.patient_id == rec.patient_id)
                .any(|a| rec.end_time_s - a.time_s < config.sop_s),
        };
        if !suppressed {
            alarms.push(AlarmEvent {
                patient_id: rec.patient_id.clone(),
                time_s: rec.end_time_s,
            });
        }
    }
    Ok(alarms)
}

/// True iff an alarm at `alarm_s` predicts an onset at `onset_s`: the onset
/// must fall strictly after the prediction horizon and within the occurrence
/// period, i.e. onset ∈ (alarm+SPH, alarm+SPH+SOP].
pub fn alarm_predicts(alarm_s: f64, onset_s: f64, config: &EvalConfig) -> bool {
    onset_s > alarm_s + config.sph_s && onset_s <= alarm_s + config.sph_s + config.sop_s
}

/// Score alarms against merged leading-seizure onsets.
///
/// Crediting is greedy in alarm order: each alarm claims the earliest
/// still-unclaimed onset inside its window, claims at most one, and every
/// alarm that claims nothing is false. A seizure inside an alarm's horizon
/// (onset ≤ alarm+SPH) neither credits nor excuses that alarm.
pub fn score_alarms(
    alarms: &[AlarmEvent],
    onsets_s: &[f64],
    config: &EvalConfig,
) -> Result<ScoreOutcome, EvalError> {
    config.validate()?;
    let mut credited_alarm: Vec<Option<f64>> = vec![None; onsets_s.len()];
    let mut false_alarms = 0usize;
    for alarm in alarms {
        let claim = onsets_s
            .iter()
            .enumerate()
            .filter(|(i, &onset)| {
                credited_alarm[*i].is_none() && alarm_predicts(alarm.time_s, onset, config)
            })
            .min_by(|a, b| a.1.partial_cmp(b.1).expect("finite onsets"));
        match claim {
            Some((i, _)) => credited_alarm[i] = Some(alarm.time_s),
            None => false_alarms += 1,
        }
    }
    let per_seizure: Vec<SeizureOutcome> = onsets_s
        .iter()
        .zip(&credited_alarm)
        .map(|(&onset_s, &credited)| SeizureOutcome {
            onset_s,
            credited_alarm_s: credited,
        })
        .collect();
    Ok(ScoreOutcome {
        true_predictions: per_seizure
            .iter()
            .filter(|o| o.credited_alarm_s.is_some())
            .count(),
        false_alarms,
        per_seizure,
    })
}
