//! The convolutional seizure predictor: a three-block CNN over
//! spectrograms with a two-sigmoid head, k-fold training, the four
//! real/synthetic train-test combinations, dataset augmentation, and
//! checkpoint fine-tuning.

use crate::evalstat::{
    compute_metrics, raise_alarms, roc_auc, score_alarms, EvalConfig, EvalError, EvalReport,
    ScoreOutcome,
};
use crate::preprocess::Spectrogram;
use crate::types::{Label, PredictionRecord, Provenance};
use pf_numcore::{
    Activation, AdamConfig, AdamState, Checkpoint, Graph, LayerSpec, NumError, Padding, Rng,
    Sequential, Tensor, WeightInit,
};
use rayon::prelude::*;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

pub const FULL_INPUT_SIZE: usize = 256;
pub const FULL_FILTERS: [usize; 3] = [126, 64, 64];
/// Toy mode keeps the block structure with filter counts scaled down 4×.
pub const TOY_FILTERS: [usize; 3] = [31, 16, 16];
pub const HIDDEN_DENSE: usize = 32;
pub const HEAD_DENSE: usize = 2;
pub const DEFAULT_FOLDS: usize = 10;
pub const DEFAULT_LEARNING_RATE: f64 = 1e-4;
pub const DEFAULT_EPOCHS: usize = 50;
pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const EARLY_STOP_PATIENCE: usize = 5;
pub const PREDICTION_CSV_HEADER: &str = "segment_id,patient,true_label,p_preictal,end_time_s";

#[derive(Debug, Error)]
pub enum CespError {
    #[error("input size {0} is not divisible by 8 (three 2× poolings)")]
    BadDims(usize),
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("training corpus contains only {0} samples")]
    SingleClass(Label),
    #[error("spectrogram edge {got} does not match the model input {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("invalid plan: {0}")]
    BadPlan(String),
    #[error("augmentation pool sample {0} is interictal; only preictal synthetics are usable")]
    InterictalInPool(usize),
    #[error("augmentation pool sample {0} is not synthetic")]
    RealInPool(usize),
    #[error("augmentation needs {needed} synthetic preictal samples, pool holds {available}")]
    PoolTooSmall { needed: usize, available: usize },
    #[error("protocol requires a nonempty {0} corpus")]
    MissingSide(&'static str),
    #[error("checkpoint is missing parameter {0}")]
    MissingParam(String),
    #[error("checkpoint parameter {name}: shape {got:?}, model expects {expected:?}")]
    ParamShape { name: String, expected: Vec<usize>, got: Vec<usize> },
    #[error("prediction csv line {line}: {message}")]
    CsvParse { line: usize, message: String },
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// A spectrogram joined with the segment metadata the evaluator needs.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusItem {
    pub spectrogram: Spectrogram,
    pub patient_id: String,
    pub end_time_s: f64,
}

pub struct CespModel {
    net: Sequential<f32>,
    input_size: usize,
}

fn cesp_specs(input_size: usize) -> Vec<LayerSpec> {
    let filters = if input_size >= FULL_INPUT_SIZE { FULL_FILTERS } else { TOY_FILTERS };
    let mut specs = Vec::new();
    for f in filters {
        specs.push(LayerSpec::Conv2d {
            filters: f,
            filter_size: (3, 3),
            stride: (1, 1),
            padding: Padding::Same,
        });
        specs.push(LayerSpec::Activation(Activation::Relu));
        specs.push(LayerSpec::MaxPool2d { window: (2, 2), stride: (2, 2) });
    }
    specs.push(LayerSpec::Flatten);
    specs.push(LayerSpec::Dense { output_dim: HIDDEN_DENSE });
    specs.push(LayerSpec::Activation(Activation::Sigmoid));
    specs.push(LayerSpec::Dense { output_dim: HEAD_DENSE });
    specs.push(LayerSpec::Activation(Activation::Sigmoid));
    specs
}

impl CespModel {
    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    pub fn net(&self) -> &Sequential<f32> {
        &self.net
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut cp = Checkpoint::new();
        cp.insert_scalar("meta.input_size", self.input_size as f64)
            .expect("fresh checkpoint");
        for p in self.net.params() {
            cp.insert(&p.name, p.value.clone()).expect("unique param names");
        }
        cp
    }

    pub fn from_checkpoint(cp: &Checkpoint) -> Result<Self, CespError> {
        let size = cp.scalar("meta.input_size")? as usize;
        let mut rng = Rng::new(0);
        let mut model = build_cesp(size, &mut rng)?;
        for p in model.net.params_mut() {
            let stored = cp
                .get(&p.name)
                .ok_or_else(|| CespError::MissingParam(p.name.clone()))?;
            if stored.shape() != p.value.shape() {
                return Err(CespError::ParamShape {
                    name: p.name.clone(),
                    expected: p.value.shape().to_vec(),
                    got: stored.shape().to_vec(),
                });
            }
            p.value = stored.clone();
        }
        Ok(model)
    }
}

/// Build the classifier for square inputs with `input_size` divisible by 8:
/// three (conv 3×3 stride 1 + ReLU + maxpool 2×2) blocks, flatten, and two
/// sigmoid dense layers of widths 32 and 2.
pub fn build_cesp(input_size: usize, rng: &mut Rng) -> Result<CespModel, CespError> {
    if input_size == 0 || input_size % 8 != 0 {
        return Err(CespError::BadDims(input_size));
    }
    let net = Sequential::new(
        "cesp",
        &[input_size, input_size, 3],
        cesp_specs(input_size),
        WeightInit::HeNormal,
        rng,
    )?;
    Ok(CespModel { net, input_size })
}

/// Stack selected items into a `[k, s, s, 3]` batch with `[k, 2]` one-hot
/// targets (column 1 = preictal).
fn stack_batch(items: &[CorpusItem], idx: &[usize]) -> (Tensor<f32>, Tensor<f32>) {
    let size = items[idx[0]].spectrogram.size();
    let mut pixels = Vec::with_capacity(idx.len() * size * size * 3);
    let mut targets = Vec::with_capacity(idx.len() * 2);
    for &i in idx {
        pixels.extend_from_slice(items[i].spectrogram.data());
        match items[i].spectrogram.label {
            Label::Interictal => targets.extend_from_slice(&[1.0, 0.0]),
            Label::Preictal => targets.extend_from_slice(&[0.0, 1.0]),
        }
    }
    (
        Tensor::from_vec(&[idx.len(), size, size, 3], pixels).expect("validated dims"),
        Tensor::from_vec(&[idx.len(), 2], targets).expect("two columns"),
    )
}

fn check_corpus(model_size: usize, items: &[CorpusItem]) -> Result<(), CespError> {
    for item in items {
        if item.spectrogram.size() != model_size {
            return Err(CespError::DimMismatch {
                expected: model_size,
                got: item.spectrogram.size(),
            });
        }
    }
    Ok(())
}

fn class_presence(items: &[CorpusItem], idx: &[usize]) -> Result<(), CespError> {
    if idx.is_empty() {
        return Err(CespError::EmptyCorpus);
    }
    let first = items[idx[0]].spectrogram.label;
    if idx.iter().all(|&i| items[i].spectrogram.label == first) {
        return Err(CespError::SingleClass(first));
    }
    Ok(())
}

/// Preictal probability from the two sigmoid heads: p₁ / (p₀ + p₁).
fn head_probability(p0: f32, p1: f32) -> f64 {
    let (p0, p1) = (p0 as f64, p1 as f64);
    p1 / (p0 + p1)
}

/// Deterministic inference: one record per item, in input order. Processes
/// fixed-size chunks; each sample's arithmetic is independent of its
/// batch-mates, so chunking never changes outputs.
pub fn predict_proba(
    model: &CespModel,
    items: &[CorpusItem],
) -> Result<Vec<PredictionRecord>, CespError> {
    check_corpus(model.input_size, items)?;
    let mut records = Vec::with_capacity(items.len());
    let all: Vec<usize> = (0..items.len()).collect();
    for chunk in all.chunks(DEFAULT_BATCH_SIZE) {
        let (batch, _) = stack_batch(items, chunk);
        let out = model.net.infer(&batch)?;
        for (row, &i) in chunk.iter().enumerate() {
            let p0 = out.data()[row * 2];
            let p1 = out.data()[row * 2 + 1];
            records.push(PredictionRecord {
                patient_id: items[i].patient_id.clone(),
                segment_id: items[i].spectrogram.source_id.clone(),
                end_time_s: items[i].end_time_s,
                label: items[i].spectrogram.label,
                prob: head_probability(p0, p1),
            });
        }
    }
    Ok(records)
}

/// Stratified fold assignment: per label, indices are shuffled and dealt
/// round-robin, so every fold's class mix matches the corpus within one
/// sample. Returns the fold index of each item.
pub fn stratified_folds(labels: &[Label], folds: usize, rng: &mut Rng) -> Vec<usize> {
    let mut assignment = vec![0usize; labels.len()];
    for class in [Label::Interictal, Label::Preictal] {
        let mut members: Vec<usize> =
            (0..labels.len()).filter(|&i| labels[i] == class).collect();
        rng.shuffle(&mut members);
        for (pos, &i) in members.iter().enumerate() {
            assignment[i] = pos % folds;
        }
    }
    assignment
}

struct FitSettings {
    learning_rate: f64,
    batch_size: usize,
    max_epochs: usize,
    /// Early-stop patience on validation loss; only applies with a
    /// validation set.
    patience: Option<usize>,
    /// Parameter indices allowed to move; `None` trains everything.
    trainable: Option<Vec<usize>>,
}

struct FitOutcome {
    /// Mean training loss per epoch.
    train_losses: Vec<f64>,
    /// Validation loss per epoch (empty without a validation set).
    val_losses: Vec<f64>,
}

/// Minibatch Adam training of the binary cross-entropy over the two-way
/// sigmoid head. With a validation set, keeps the parameters from the best
/// validation epoch and stops early once `patience` epochs pass without
/// improvement.
fn fit(
    model: &mut CespModel,
    items: &[CorpusItem],
    train_idx: &[usize],
    val_idx: Option<&[usize]>,
    settings: &FitSettings,
    rng: &mut Rng,
) -> Result<FitOutcome, CespError> {
    class_presence(items, train_idx)?;
    let trainable: Vec<usize> = match &settings.trainable {
        Some(t) => t.clone(),
        None => (0..model.net.params().len()).collect(),
    };
    let shapes: Vec<&[usize]> = trainable
        .iter()
        .map(|&i| model.net.params()[i].value.shape())
        .collect();
    let mut adam = AdamState::new(AdamConfig::standard(settings.learning_rate), &shapes);

    let mut order = train_idx.to_vec();
    let mut train_losses = Vec::new();
    let mut val_losses = Vec::new();
    let mut best: Option<(f64, Vec<Tensor<f32>>)> = None;
    let mut since_best = 0usize;

    for _epoch in 0..settings.max_epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(settings.batch_size) {
            let (batch, target) = stack_batch(items, chunk);
            let mut graph = Graph::new();
            let ids = model.net.insert_params(&mut graph, true);
            let input = graph.constant(batch);
            let out = model.net.forward_with(&mut graph, input, &ids)?;
            let target_id = graph.constant(target);
            let loss = graph.bce_loss(out, target_id)?;
            graph.backward(loss)?;
            let grads = model.net.collect_grads(&graph, &ids)?;
            epoch_loss += graph.value(loss).item() as f64;
            batches += 1;

            let grad_refs: Vec<&Tensor<f32>> = trainable.iter().map(|&i| &grads[i]).collect();
            let params = model.net.params_mut();
            // Split off mutable references to just the trainable tensors,
            // in index order.
            let mut param_refs: Vec<&mut Tensor<f32>> = Vec::with_capacity(trainable.len());
            let mut rest = &mut params[..];
            let mut consumed = 0usize;
            for &i in &trainable {
                let (skip, tail) = rest.split_at_mut(i - consumed);
                let (head, tail2) = tail.split_at_mut(1);
                let _ = skip;
                param_refs.push(&mut head[0].value);
                rest = tail2;
                consumed = i + 1;
            }
            if !param_refs.is_empty() {
                adam.step(&mut param_refs, &grad_refs)?;
            }
        }
        train_losses.push(epoch_loss / batches.max(1) as f64);

        if let Some(val) = val_idx {
            let val_loss = evaluate_loss(model, items, val)?;
            val_losses.push(val_loss);
            let improved = best.as_ref().map_or(true, |(b, _)| val_loss < *b);
            if improved {
                best = Some((
                    val_loss,
                    model.net.params().iter().map(|p| p.value.clone()).collect(),
                ));
                since_best = 0;
            } else {
                since_best += 1;
                if let Some(patience) = settings.patience {
                    if since_best >= patience {
                        break;
                    }
                }
            }
        }
    }

    if let Some((_, snapshot)) = best {
        for (p, v) in model.net.params_mut().iter_mut().zip(snapshot) {
            p.value = v;
        }
    }
    Ok(FitOutcome { train_losses, val_losses })
}

/// Mean binary cross-entropy of the model on the given items (inference
/// only).
fn evaluate_loss(
    model: &CespModel,
    items: &[CorpusItem],
    idx: &[usize],
) -> Result<f64, CespError> {
    let mut total = 0.0;
    let mut count = 0usize;
    for chunk in idx.chunks(DEFAULT_BATCH_SIZE) {
        let (batch, target) = stack_batch(items, chunk);
        let out = model.net.infer(&batch)?;
        total += pf_numcore::bce_value(&out, &target)?.item() as f64 * chunk.len() as f64;
        count += chunk.len();
    }
    Ok(total / count.max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combo {
    Trtr,
    Tstr,
    Trts,
    Tsts,
}

impl Combo {
    pub const ALL: [Combo; 4] = [Combo::Trtr, Combo::Tstr, Combo::Trts, Combo::Tsts];

    pub fn label(self) -> &'static str {
        match self {
            Combo::Trtr => "TRTR",
            Combo::Tstr => "TSTR",
            Combo::Trts => "TRTS",
            Combo::Tsts => "TSTS",
        }
    }

    pub fn index(self) -> usize {
        Combo::ALL.iter().position(|&c| c == self).expect("member of ALL")
    }

    /// Whether training data comes from the synthetic corpus.
    pub fn trains_on_synthetic(self) -> bool {
        matches!(self, Combo::Tstr | Combo::Tsts)
    }

    /// Whether test data comes from the synthetic corpus.
    pub fn tests_on_synthetic(self) -> bool {
        matches!(self, Combo::Trts | Combo::Tsts)
    }
}

impl std::fmt::Display for Combo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone)]
pub struct TrainPlan {
    pub combo: Combo,
    pub folds: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub augmentation_factor: usize,
}

impl TrainPlan {
    pub fn new(combo: Combo, seed: u64) -> Self {
        TrainPlan {
            combo,
            folds: DEFAULT_FOLDS,
            learning_rate: DEFAULT_LEARNING_RATE,
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            seed,
            augmentation_factor: 0,
        }
    }

    pub fn validate(&self) -> Result<(), CespError> {
        if self.folds < 2 {
            return Err(CespError::BadPlan(format!("folds = {}, need at least 2", self.folds)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(CespError::BadPlan("epochs and batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(CespError::BadPlan(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FoldMetric {
    pub fold: usize,
    pub val_size: usize,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub val_auc: f64,
    pub epochs_ran: usize,
}

pub struct CespTraining {
    pub model: CespModel,
    pub fold_metrics: Vec<FoldMetric>,
}

/// k-fold training: stratified fold assignment, one model per fold with
/// early stopping against its held-out fold, then a final model trained on
/// everything for the full epoch budget. Deterministic in `plan.seed`.
pub fn train_cesp(items: &[CorpusItem], plan: &TrainPlan) -> Result<CespTraining, CespError> {
    plan.validate()?;
    if items.is_empty() {
        return Err(CespError::EmptyCorpus);
    }
    let size = items[0].spectrogram.size();
    check_corpus(size, items)?;
    let all: Vec<usize> = (0..items.len()).collect();
    class_presence(items, &all)?;
    if items.len() < plan.folds {
        return Err(CespError::BadPlan(format!(
            "{} segments cannot fill {} folds",
            items.len(),
            plan.folds
        )));
    }

    let root = Rng::new(plan.seed);
    let labels: Vec<Label> = items.iter().map(|i| i.spectrogram.label).collect();
    let assignment = stratified_folds(&labels, plan.folds, &mut root.derive(0));

    let fold_metrics: Vec<FoldMetric> = (0..plan.folds)
        .into_par_iter()
        .map(|fold| -> Result<FoldMetric, CespError> {
            let train_idx: Vec<usize> =
                (0..items.len()).filter(|&i| assignment[i] != fold).collect();
            let val_idx: Vec<usize> =
                (0..items.len()).filter(|&i| assignment[i] == fold).collect();
            let mut model = build_cesp(size, &mut root.derive(10 + fold as u64))?;
            let outcome = fit(
                &mut model,
                items,
                &train_idx,
                Some(&val_idx),
                &FitSettings {
                    learning_rate: plan.learning_rate,
                    batch_size: plan.batch_size,
                    max_epochs: plan.epochs,
                    patience: Some(EARLY_STOP_PATIENCE),
                    trainable: None,
                },
                &mut root.derive(20 + fold as u64),
            )?;
            let val_items: Vec<CorpusItem> =
                val_idx.iter().map(|&i| items[i].clone()).collect();
            let records = predict_proba(&model, &val_items)?;
            let hits = records
                .iter()
                .filter(|r| (r.prob >= 0.5) == (r.label == Label::Preictal))
                .count();
            let bools: Vec<bool> = records.iter().map(|r| r.label == Label::Preictal).collect();
            let probs: Vec<f64> = records.iter().map(|r| r.prob).collect();
            let val_auc = if bools.iter().any(|&b| b) && bools.iter().any(|&b| !b) {
                roc_auc(&bools, &probs)?
            } else {
                f64::NAN
            };
            Ok(FoldMetric {
                fold,
                val_size: val_idx.len(),
                val_loss: *outcome.val_losses.last().unwrap_or(&f64::NAN),
                val_accuracy: hits as f64 / val_idx.len().max(1) as f64,
                val_auc,
                epochs_ran: outcome.train_losses.len(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut model = build_cesp(size, &mut root.derive(1))?;
    fit(
        &mut model,
        items,
        &all,
        None,
        &FitSettings {
            learning_rate: plan.learning_rate,
            batch_size: plan.batch_size,
            max_epochs: plan.epochs,
            patience: None,
            trainable: None,
        },
        &mut root.derive(2),
    )?;
    Ok(CespTraining { model, fold_metrics })
}

/// Grow the preictal class to (1 + factor)× its real size by appending
/// synthetic preictal samples from `pool` (in pool order); interictal
/// samples pass through untouched.
pub fn augment_dataset(
    real: &[CorpusItem],
    pool: &[CorpusItem],
    factor: usize,
) -> Result<Vec<CorpusItem>, CespError> {
    for (i, item) in pool.iter().enumerate() {
        if item.spectrogram.label == Label::Interictal {
            return Err(CespError::InterictalInPool(i));
        }
        if item.spectrogram.provenance == Provenance::Real {
            return Err(CespError::RealInPool(i));
        }
    }
    if factor == 0 {
        return Ok(real.to_vec());
    }
    let preictal = real
        .iter()
        .filter(|i| i.spectrogram.label == Label::Preictal)
        .count();
    let needed = preictal * factor;
    if pool.len() < needed {
        return Err(CespError::PoolTooSmall { needed, available: pool.len() });
    }
    let mut out = real.to_vec();
    out.extend(pool[..needed].iter().cloned());
    Ok(out)
}

/// One corpus side of the evaluation protocol: samples plus the timeline
/// facts the alarm scorer needs (merged seizure onsets and interictal hours
/// per patient).
#[derive(Debug, Clone)]
pub struct ProtocolCorpus {
    pub items: Vec<CorpusItem>,
    pub onsets: BTreeMap<String, Vec<f64>>,
    pub interictal_hours: BTreeMap<String, f64>,
}

pub struct ComboRun {
    pub combo: Combo,
    pub report: EvalReport,
    pub records: Vec<PredictionRecord>,
    pub train_size: usize,
    pub test_size: usize,
}

/// Split a corpus 50/50 within every (patient, label) cell; the same seed
/// yields the same split everywhere it is used.
fn split_half(items: &[CorpusItem], seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut cells: BTreeMap<(String, u8), Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        cells
            .entry((item.patient_id.clone(), item.spectrogram.label.code()))
            .or_default()
            .push(i);
    }
    let mut rng = Rng::new(seed).derive(100);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (_, mut members) in cells {
        rng.shuffle(&mut members);
        let take = members.len() - members.len() / 2; // ceil to the train side
        train.extend_from_slice(&members[..take]);
        test.extend_from_slice(&members[take..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

fn select(items: &[CorpusItem], idx: &[usize]) -> Vec<CorpusItem> {
    idx.iter().map(|&i| items[i].clone()).collect()
}

/// Pool per-patient alarm scoring over a test set and reduce it to a single
/// report: outcomes are merged across patients, interictal hours summed.
fn score_test_set(
    name: &str,
    records: &[PredictionRecord],
    corpus: &ProtocolCorpus,
    eval: &EvalConfig,
) -> Result<EvalReport, CespError> {
    let mut by_patient: BTreeMap<&str, Vec<PredictionRecord>> = BTreeMap::new();
    for r in records {
        by_patient.entry(r.patient_id.as_str()).or_default().push(r.clone());
    }
    let mut merged = ScoreOutcome { true_predictions: 0, false_alarms: 0, per_seizure: Vec::new() };
    let mut hours = 0.0;
    for (patient, recs) in &by_patient {
        let alarms = raise_alarms(recs, eval)?;
        let empty = Vec::new();
        let onsets = corpus.onsets.get(*patient).unwrap_or(&empty);
        let outcome = score_alarms(&alarms, onsets, eval)?;
        merged.true_predictions += outcome.true_predictions;
        merged.false_alarms += outcome.false_alarms;
        merged.per_seizure.extend(outcome.per_seizure);
        hours += corpus.interictal_hours.get(*patient).copied().unwrap_or(0.0);
    }
    Ok(compute_metrics(name, &merged, hours, records, eval)?)
}

/// Run the four train/test combinations (TRTR, TSTR, TRTS, TSTS) off one
/// shared 50/50 split, training a fresh model per combo with a seed derived
/// as plan seed + combo index, and score every test half with the same
/// alarm rules. Combos run concurrently.
pub fn run_protocol(
    real: &ProtocolCorpus,
    synthetic: &ProtocolCorpus,
    base: &TrainPlan,
    eval: &EvalConfig,
) -> Result<Vec<ComboRun>, CespError> {
    if real.items.is_empty() {
        return Err(CespError::MissingSide("real"));
    }
    if synthetic.items.is_empty() {
        return Err(CespError::MissingSide("synthetic"));
    }
    let size = real.items[0].spectrogram.size();
    check_corpus(size, &real.items)?;
    check_corpus(size, &synthetic.items)?;

    let (real_train, real_test) = split_half(&real.items, base.seed);
    let (syn_train, syn_test) = split_half(&synthetic.items, base.seed);

    // Leakage guard: a segment id must never sit on both sides of a split.
    for (items, train, test) in
        [(&real.items, &real_train, &real_test), (&synthetic.items, &syn_train, &syn_test)]
    {
        let train_ids: BTreeSet<&str> =
            train.iter().map(|&i| items[i].spectrogram.source_id.as_str()).collect();
        for &i in test.iter() {
            assert!(
                !train_ids.contains(items[i].spectrogram.source_id.as_str()),
                "segment {} appears in both train and test",
                items[i].spectrogram.source_id
            );
        }
    }

    Combo::ALL
        .into_par_iter()
        .map(|combo| -> Result<ComboRun, CespError> {
            let train_items = if combo.trains_on_synthetic() {
                select(&synthetic.items, &syn_train)
            } else {
                select(&real.items, &real_train)
            };
            let (test_corpus, test_idx) = if combo.tests_on_synthetic() {
                (synthetic, &syn_test)
            } else {
                (real, &real_test)
            };
            let mut test_items = select(&test_corpus.items, test_idx);
            test_items.sort_by(|a, b| {
                (a.patient_id.as_str(), a.end_time_s)
                    .partial_cmp(&(b.patient_id.as_str(), b.end_time_s))
                    .expect("finite end times")
            });

            let seed = base.seed + combo.index() as u64;
            let mut model = build_cesp(size, &mut Rng::new(seed).derive(1))?;
            let train_all: Vec<usize> = (0..train_items.len()).collect();
            fit(
                &mut model,
                &train_items,
                &train_all,
                None,
                &FitSettings {
                    learning_rate: base.learning_rate,
                    batch_size: base.batch_size,
                    max_epochs: base.epochs,
                    patience: None,
                    trainable: None,
                },
                &mut Rng::new(seed).derive(2),
            )?;

            let records = predict_proba(&model, &test_items)?;
            let report = score_test_set(combo.label(), &records, test_corpus, eval)?;
            Ok(ComboRun {
                combo,
                report,
                records,
                train_size: train_items.len(),
                test_size: test_items.len(),
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FineTunePlan {
    /// Number of leading layers whose parameters stay frozen.
    pub freeze_depth: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for FineTunePlan {
    fn default() -> Self {
        FineTunePlan {
            freeze_depth: 0,
            learning_rate: DEFAULT_LEARNING_RATE,
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            seed: 0,
        }
    }
}

/// Warm-start training from a checkpoint with the first `freeze_depth`
/// layers pinned. Returns the tuned checkpoint and the per-epoch training
/// losses. Freezing every layer returns the input parameters bit-identical.
pub fn fine_tune(
    checkpoint: &Checkpoint,
    items: &[CorpusItem],
    plan: &FineTunePlan,
) -> Result<(Checkpoint, Vec<f64>), CespError> {
    let mut model = CespModel::from_checkpoint(checkpoint)?;
    check_corpus(model.input_size, items)?;
    let frozen: BTreeSet<usize> =
        model.net.prefix_param_indices(plan.freeze_depth).into_iter().collect();
    let trainable: Vec<usize> =
        (0..model.net.params().len()).filter(|i| !frozen.contains(i)).collect();
    if trainable.is_empty() {
        return Ok((model.to_checkpoint(), Vec::new()));
    }
    let all: Vec<usize> = (0..items.len()).collect();
    let outcome = fit(
        &mut model,
        items,
        &all,
        None,
        &FitSettings {
            learning_rate: plan.learning_rate,
            batch_size: plan.batch_size,
            max_epochs: plan.epochs,
            patience: None,
            trainable: Some(trainable),
        },
        &mut Rng::new(plan.seed).derive(3),
    )?;
    Ok((model.to_checkpoint(), outcome.train_losses))
}

pub fn records_to_csv(records: &[PredictionRecord]) -> String {
    let mut out = String::from(PREDICTION_CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.segment_id,
            r.patient_id,
            r.label.code(),
            r.prob,
            r.end_time_s
        ));
    }
    out
}

pub fn parse_records_csv(text: &str) -> Result<Vec<PredictionRecord>, CespError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == PREDICTION_CSV_HEADER => {}
        other => {
            return Err(CespError::CsvParse {
                line: 1,
                message: format!("expected header {PREDICTION_CSV_HEADER:?}, got {other:?}"),
            })
        }
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let bad = |message: String| CespError::CsvParse { line: i + 1, message };
        if fields.len() != 5 {
            return Err(bad(format!("expected 5 fields, got {}", fields.len())));
        }
        let code: u8 =
            fields[2].parse().map_err(|e| bad(format!("label code: {e}")))?;
        let label = Label::from_code(code)
            .ok_or_else(|| bad(format!("label code {code} is not 0 or 1")))?;
        records.push(PredictionRecord {
            segment_id: fields[0].to_string(),
            patient_id: fields[1].to_string(),
            label,
            prob: fields[3].parse().map_err(|e| bad(format!("probability: {e}")))?,
            end_time_s: fields[4].parse().map_err(|e| bad(format!("end time: {e}")))?,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(size: usize, label: Label, id: &str, patient: &str, end: f64) -> CorpusItem {
        // Class signature: preictal bright in the top half, interictal in
        // the bottom half.
        let mut data = Vec::with_capacity(size * size * 3);
        for y in 0..size {
            for _x in 0..size {
                let top = y < size / 2;
                let bright = match label {
                    Label::Preictal => top,
                    Label::Interictal => !top,
                };
                let v = if bright { 0.8 } else { -0.8 };
                data.extend_from_slice(&[v, v, v]);
            }
        }
        CorpusItem {
            spectrogram: Spectrogram::new(size, data, label, Provenance::Real, id).unwrap(),
            patient_id: patient.to_string(),
            end_time_s: end,
        }
    }

    #[test]
    fn model_shapes_and_parameter_counts() {
        let mut rng = Rng::new(0);
        let full = build_cesp(256, &mut rng).unwrap();
        // conv1 3·3·3·126+126, conv2 3·3·126·64+64, conv3 3·3·64·64+64,
        // dense (32·32·64)→32, head 32→2.
        let conv1 = 3 * 3 * 3 * 126 + 126;
        assert_eq!(conv1, 3528);
        let conv2 = 3 * 3 * 126 * 64 + 64;
        let conv3 = 3 * 3 * 64 * 64 + 64;
        let dense1 = 32 * 32 * 64 * 32 + 32;
        let head = 32 * 2 + 2;
        assert_eq!(full.param_count(), conv1 + conv2 + conv3 + dense1 + head);
        assert_eq!(full.net().output_shape(), &[2]);

        let toy = build_cesp(32, &mut rng).unwrap();
        let t1 = 3 * 3 * 3 * 31 + 31;
        let t2 = 3 * 3 * 31 * 16 + 16;
        let t3 = 3 * 3 * 16 * 16 + 16;
        let td = 4 * 4 * 16 * 32 + 32;
        assert_eq!(toy.param_count(), t1 + t2 + t3 + td + head);

        assert!(matches!(build_cesp(0, &mut rng), Err(CespError::BadDims(0))));
        assert!(matches!(build_cesp(36, &mut rng), Err(CespError::BadDims(36))));
    }

    #[test]
    fn zero_weight_model_predicts_one_half() {
        let mut rng = Rng::new(1);
        let mut model = build_cesp(16, &mut rng).unwrap();
        for p in model.net.params_mut() {
            p.value = Tensor::zeros(p.value.shape());
        }
        let items = vec![item(16, Label::Preictal, "s1", "p1", 600.0)];
        let records = predict_proba(&model, &items).unwrap();
        assert_eq!(records[0].prob, 0.5);
        assert_eq!(records[0].segment_id, "s1");
        assert_eq!(records[0].patient_id, "p1");
        assert_eq!(records[0].end_time_s, 600.0);
    }

    #[test]
    fn probabilities_stay_in_unit_interval() {
        let mut rng = Rng::new(2);
        let model = build_cesp(16, &mut rng).unwrap();
        let items: Vec<CorpusItem> = (0..6)
            .map(|i| {
                let label = if i % 2 == 0 { Label::Preictal } else { Label::Interictal };
                item(16, label, &format!("s{i}"), "p1", 600.0 * i as f64)
            })
            .collect();
        for r in predict_proba(&model, &items).unwrap() {
            assert!((0.0..=1.0).contains(&r.prob), "prob {}", r.prob);
        }
    }

    #[test]
    fn prediction_is_invariant_under_batch_splitting() {
        let mut rng = Rng::new(3);
        let model = build_cesp(16, &mut rng).unwrap();
        let items: Vec<CorpusItem> = (0..DEFAULT_BATCH_SIZE + 5)
            .map(|i| {
                let label = if i % 3 == 0 { Label::Preictal } else { Label::Interictal };
                item(16, label, &format!("s{i}"), "p1", 600.0 * i as f64)
            })
            .collect();
        let whole = predict_proba(&model, &items).unwrap();
        let mut pieces = Vec::new();
        for chunk in items.chunks(7) {
            pieces.extend(predict_proba(&model, chunk).unwrap());
        }
        assert_eq!(whole, pieces);
    }

    #[test]
    fn dim_mismatch_is_reported() {
        let mut rng = Rng::new(4);
        let model = build_cesp(32, &mut rng).unwrap();
        let items = vec![item(16, Label::Preictal, "s1", "p1", 600.0)];
        assert!(matches!(
            predict_proba(&model, &items),
            Err(CespError::DimMismatch { expected: 32, got: 16 })
        ));
    }

    #[test]
    fn folds_partition_and_stratify() {
        let mut labels = Vec::new();
        for i in 0..100 {
            labels.push(if i < 30 { Label::Preictal } else { Label::Interictal });
        }
        let mut rng = Rng::new(9);
        let assignment = stratified_folds(&labels, 10, &mut rng);
        assert_eq!(assignment.len(), 100);
        let mut fold_sizes = [0usize; 10];
        let mut fold_preictal = [0usize; 10];
        for (i, &f) in assignment.iter().enumerate() {
            fold_sizes[f] += 1;
            if labels[i] == Label::Preictal {
                fold_preictal[f] += 1;
            }
        }
        // 100 segments, k=10: every fold validates on exactly 10 and the
        // class mix is exact (30% of 10 = 3).
        assert!(fold_sizes.iter().all(|&s| s == 10), "{fold_sizes:?}");
        assert!(fold_preictal.iter().all(|&p| p == 3), "{fold_preictal:?}");

        // Uneven corpus: stratification stays within one sample.
        let labels: Vec<Label> = (0..47)
            .map(|i| if i < 13 { Label::Preictal } else { Label::Interictal })
            .collect();
        let assignment = stratified_folds(&labels, 10, &mut rng);
        let global = 13.0 / 47.0;
        for f in 0..10 {
            let members: Vec<usize> =
                (0..47).filter(|&i| assignment[i] == f).collect();
            let pre = members.iter().filter(|&&i| labels[i] == Label::Preictal).count();
            let lo = (global * members.len() as f64 - 1.0).floor();
            let hi = (global * members.len() as f64 + 1.0).ceil();
            assert!(
                (lo..=hi).contains(&(pre as f64)),
                "fold {f}: {pre} preictal of {}",
                members.len()
            );
        }
    }

    fn toy_corpus(size: usize, per_class: usize, patient: &str) -> Vec<CorpusItem> {
        let mut items = Vec::new();
        for i in 0..per_class {
            items.push(item(
                size,
                Label::Preictal,
                &format!("{patient}-pre-{i}"),
                patient,
                600.0 * (i + 1) as f64,
            ));
            items.push(item(
                size,
                Label::Interictal,
                &format!("{patient}-int-{i}"),
                patient,
                600.0 * (per_class + i + 1) as f64,
            ));
        }
        items
    }

    #[test]
    fn training_rejects_degenerate_corpora() {
        let plan = TrainPlan::new(Combo::Trtr, 1);
        assert!(matches!(train_cesp(&[], &plan), Err(CespError::EmptyCorpus)));

        let single: Vec<CorpusItem> = (0..12)
            .map(|i| item(16, Label::Preictal, &format!("s{i}"), "p", i as f64))
            .collect();
        assert!(matches!(
            train_cesp(&single, &plan),
            Err(CespError::SingleClass(Label::Preictal))
        ));

        let mut bad_plan = TrainPlan::new(Combo::Trtr, 1);
        bad_plan.folds = 1;
        let corpus = toy_corpus(16, 6, "p");
        assert!(matches!(train_cesp(&corpus, &bad_plan), Err(CespError::BadPlan(_))));
    }

    #[test]
    fn same_seed_reproduces_training_bit_for_bit() {
        let corpus = toy_corpus(16, 5, "p");
        let mut plan = TrainPlan::new(Combo::Trtr, 42);
        plan.folds = 2;
        plan.epochs = 2;
        plan.learning_rate = 1e-3;
        let a = train_cesp(&corpus, &plan).unwrap();
        let b = train_cesp(&corpus, &plan).unwrap();
        for (pa, pb) in a.model.net().params().iter().zip(b.model.net().params()) {
            assert_eq!(pa.value.data(), pb.value.data(), "param {}", pa.name);
        }
        for (fa, fb) in a.fold_metrics.iter().zip(&b.fold_metrics) {
            assert_eq!(fa.val_loss.to_bits(), fb.val_loss.to_bits());
            assert_eq!(fa.epochs_ran, fb.epochs_ran);
        }
    }

    #[test]
    fn augmentation_grows_only_the_preictal_class() {
        let real = toy_corpus(16, 10, "p"); // 10 preictal + 10 interictal
        let pool: Vec<CorpusItem> = (0..60)
            .map(|i| {
                let mut it = item(16, Label::Preictal, &format!("syn-{i}"), "p", 0.0);
                it.spectrogram.provenance = Provenance::Synthetic;
                it
            })
            .collect();

        let grown = augment_dataset(&real, &pool, 5).unwrap();
        let pre = grown.iter().filter(|i| i.spectrogram.label == Label::Preictal).count();
        let inter = grown.iter().filter(|i| i.spectrogram.label == Label::Interictal).count();
        assert_eq!(pre, 60); // 10 real × (1 + 5)
        assert_eq!(inter, 10);

        let unchanged = augment_dataset(&real, &pool, 0).unwrap();
        assert_eq!(unchanged, real);

        assert!(matches!(
            augment_dataset(&real, &pool[..49], 5),
            Err(CespError::PoolTooSmall { needed: 50, available: 49 })
        ));

        let mut tainted = pool.clone();
        tainted[3].spectrogram.label = Label::Interictal;
        assert!(matches!(
            augment_dataset(&real, &tainted, 5),
            Err(CespError::InterictalInPool(3))
        ));

        let mut real_in_pool = pool.clone();
        real_in_pool[2].spectrogram.provenance = Provenance::Real;
        assert!(matches!(
            augment_dataset(&real, &real_in_pool, 5),
            Err(CespError::RealInPool(2))
        ));
    }

    #[test]
    fn half_split_is_disjoint_stratified_and_seed_stable() {
        let mut items = toy_corpus(16, 8, "alpha");
        items.extend(toy_corpus(16, 8, "beta"));
        let (train, test) = split_half(&items, 7);
        let (train2, test2) = split_half(&items, 7);
        assert_eq!(train, train2);
        assert_eq!(test, test2);
        assert_eq!(train.len() + test.len(), items.len());
        let train_set: BTreeSet<usize> = train.iter().copied().collect();
        assert!(test.iter().all(|i| !train_set.contains(i)));
        // Each (patient, label) cell of 8 splits 4/4.
        for patient in ["alpha", "beta"] {
            for label in [Label::Preictal, Label::Interictal] {
                let on_train = train
                    .iter()
                    .filter(|&&i| {
                        items[i].patient_id == patient && items[i].spectrogram.label == label
                    })
                    .count();
                assert_eq!(on_train, 4, "{patient}/{label}");
            }
        }
    }

    #[test]
    fn fine_tune_freeze_all_returns_identical_checkpoint() {
        let mut rng = Rng::new(11);
        let model = build_cesp(16, &mut rng).unwrap();
        let cp = model.to_checkpoint();
        let corpus = toy_corpus(16, 3, "p");
        let plan = FineTunePlan {
            freeze_depth: model.net().specs().len(),
            epochs: 3,
            batch_size: 4,
            ..FineTunePlan::default()
        };
        let (tuned, losses) = fine_tune(&cp, &corpus, &plan).unwrap();
        assert!(losses.is_empty());
        let mut before = Vec::new();
        cp.write_to(&mut before).unwrap();
        let mut after = Vec::new();
        tuned.write_to(&mut after).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn fine_tune_keeps_frozen_prefix_bit_identical() {
        let mut rng = Rng::new(12);
        let model = build_cesp(16, &mut rng).unwrap();
        let cp = model.to_checkpoint();
        let corpus = toy_corpus(16, 4, "p");
        // Freeze the first conv block: layers conv/relu/pool hold the first
        // two parameter tensors.
        let plan = FineTunePlan {
            freeze_depth: 3,
            learning_rate: 1e-3,
            epochs: 4,
            batch_size: 4,
            seed: 5,
        };
        let (tuned, losses) = fine_tune(&cp, &corpus, &plan).unwrap();
        assert_eq!(losses.len(), 4);
        let restored = CespModel::from_checkpoint(&tuned).unwrap();
        let frozen = model.net().prefix_param_indices(3);
        assert_eq!(frozen, vec![0, 1]);
        for i in 0..model.net().params().len() {
            let before = model.net().params()[i].value.data();
            let after = restored.net().params()[i].value.data();
            if frozen.contains(&i) {
                assert_eq!(before, after, "frozen param {i} moved");
            } else {
                assert_ne!(before, after, "trainable param {i} never moved");
            }
        }
    }

    #[test]
    fn fine_tune_rejects_mismatched_checkpoints() {
        let mut cp = Checkpoint::new();
        cp.insert_scalar("meta.input_size", 16.0).unwrap();
        let err = fine_tune(&cp, &toy_corpus(16, 2, "p"), &FineTunePlan::default()).unwrap_err();
        assert!(matches!(err, CespError::MissingParam(_)), "got {err}");
    }

    #[test]
    fn checkpoint_round_trip_preserves_predictions() {
        let mut rng = Rng::new(13);
        let model = build_cesp(16, &mut rng).unwrap();
        let restored = CespModel::from_checkpoint(&model.to_checkpoint()).unwrap();
        let items = toy_corpus(16, 3, "p");
        assert_eq!(
            predict_proba(&model, &items).unwrap(),
            predict_proba(&restored, &items).unwrap()
        );
    }

    #[test]
    fn record_csv_round_trips() {
        let records = vec![
            PredictionRecord {
                patient_id: "chb01".into(),
                segment_id: "chb01-r00-s0001".into(),
                end_time_s: 1200.0,
                label: Label::Preictal,
                prob: 0.8251953125,
            },
            PredictionRecord {
                patient_id: "chb02".into(),
                segment_id: "chb02-r01-s0002".into(),
                end_time_s: 1800.5,
                label: Label::Interictal,
                prob: 0.125,
            },
        ];
        let csv = records_to_csv(&records);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), PREDICTION_CSV_HEADER);
        assert_eq!(lines.next().unwrap(), "chb01-r00-s0001,chb01,1,0.8251953125,1200");
        assert_eq!(lines.next().unwrap(), "chb02-r01-s0002,chb02,0,0.125,1800.5");
        assert_eq!(parse_records_csv(&csv).unwrap(), records);

        let err = parse_records_csv("nope\n").unwrap_err();
        assert!(matches!(err, CespError::CsvParse { line: 1, .. }));
        let bad_label = format!("{PREDICTION_CSV_HEADER}\nseg,p,7,0.5,10\n");
        assert!(matches!(
            parse_records_csv(&bad_label).unwrap_err(),
            CespError::CsvParse { line: 2, .. }
        ));
    }

    #[test]
    fn trained_toy_model_separates_the_classes() {
        let corpus = toy_corpus(16, 8, "p");
        let mut plan = TrainPlan::new(Combo::Trtr, 3);
        plan.folds = 4;
        plan.epochs = 60;
        plan.learning_rate = 3e-3;
        plan.batch_size = 8;
        let trained = train_cesp(&corpus, &plan).unwrap();

        // Per-fold validation AUC on the held-out split.
        for m in &trained.fold_metrics {
            assert!(m.val_auc >= 0.95, "fold {} AUC {}", m.fold, m.val_auc);
        }

        // The final model is confident on its own exemplars' classes.
        let records = predict_proba(&trained.model, &corpus).unwrap();
        for r in &records {
            match r.label {
                Label::Preictal => assert!(r.prob > 0.9, "preictal prob {}", r.prob),
                Label::Interictal => assert!(r.prob < 0.1, "interictal prob {}", r.prob),
            }
        }
    }

    #[test]
    fn fine_tuning_with_frozen_block_still_learns() {
        let corpus = toy_corpus(16, 6, "p");
        let mut rng = Rng::new(21);
        let model = build_cesp(16, &mut rng).unwrap();
        let plan = FineTunePlan {
            freeze_depth: 3,
            learning_rate: 3e-3,
            epochs: 5,
            batch_size: 6,
            seed: 2,
        };
        let (_, losses) = fine_tune(&model.to_checkpoint(), &corpus, &plan).unwrap();
        assert_eq!(losses.len(), 5);
        let drop = (losses[0] - losses[4]) / losses[0];
        assert!(drop >= 0.2, "loss went {} → {} ({drop:.3} drop)", losses[0], losses[4]);
    }
}
