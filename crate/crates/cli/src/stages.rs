//! The pipeline stages behind the `pf` command. Each stage reads the
//! previous stage's artifacts from the output directory, writes its own
//! under `out/<stage>/`, and records an `inputs.txt` manifest of everything
//! it consumed (see [`crate::provenance`]).

use crate::config::PipelineConfig;
use crate::provenance::InputLog;
use crate::roc::emit_roc;
use anyhow::{anyhow, bail, Context, Result};
use pf_numcore::{Checkpoint, Rng, Tensor};
use pf_pipeline::cesp::{
    augment_dataset, parse_records_csv, records_to_csv, run_protocol, train_cesp, Combo,
    CorpusItem, ProtocolCorpus, TrainPlan,
};
use pf_pipeline::dcgan::{generate_samples, train_dcgan, GanModel, GanScale, GanTrainConfig};
use pf_pipeline::evalstat::{
    aggregate_reports, bonferroni_significant, compute_metrics, hanley_mcneil_p, raise_alarms,
    roc_auc, schelter_p, score_alarms, EvalConfig, EvalReport, RefractoryPolicy,
    BONFERRONI_COMPARISONS,
};
use pf_pipeline::ingest::{
    build_dataset, format_annotations, load_manifest, load_segment, merge_leading_seizures,
    parse_annotations, parse_edf, plan_segments, save_manifest, write_edf, LabelPolicy,
    RecordingInput,
};
use pf_pipeline::preprocess::{
    design_notch, load_spectrogram, save_spectrogram, segment_to_spectrogram, Spectrogram,
};
use pf_pipeline::sieve::{featurize, filter_samples, save_model, scale_gamma, train_ocsvm};
use pf_pipeline::toycorpus::{toy_protocol_corpus, toy_recording};
use pf_pipeline::types::{Label, PredictionRecord, Provenance};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub const STAGES: [&str; 9] = [
    "ingest",
    "preprocess",
    "gan-train",
    "gan-sample",
    "sieve",
    "train",
    "protocol",
    "eval",
    "report",
];

const ITEMS_CSV_HEADER: &str = "file,patient_id,label,provenance,end_time_s,segment_id";

pub struct StageContext {
    pub config: PipelineConfig,
    /// Generate inputs with the bundled toy corpus instead of reading
    /// configured datasets.
    pub toy: bool,
}

pub fn run_stage(stage: &str, ctx: &StageContext) -> Result<()> {
    match stage {
        "ingest" => stage_ingest(ctx),
        "preprocess" => stage_preprocess(ctx),
        "gan-train" => stage_gan_train(ctx),
        "gan-sample" => stage_gan_sample(ctx),
        "sieve" => stage_sieve(ctx),
        "train" => stage_train(ctx),
        "protocol" => stage_protocol(ctx),
        "eval" => stage_eval(ctx),
        "report" => stage_report(ctx),
        other => bail!("unknown stage {other:?}"),
    }
}

fn stage_dir(ctx: &StageContext, name: &str) -> Result<PathBuf> {
    let dir = ctx.config.out_dir.join(name);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn eval_config(cfg: &PipelineConfig) -> EvalConfig {
    EvalConfig {
        sph_s: cfg.eval.sph_s,
        sop_s: cfg.eval.sop_s,
        threshold: cfg.eval.threshold,
        refractory: RefractoryPolicy::SuppressWithinSop,
    }
}

// ---------------------------------------------------------------- ingest --

fn toy_inputs(seed: u64) -> Vec<RecordingInput> {
    let root = Rng::new(seed);
    ["toy-a", "toy-b"]
        .iter()
        .enumerate()
        .map(|(i, id)| toy_recording(id, &mut root.derive(i as u64 + 1)))
        .collect()
}

/// Decode the source recordings (toy mode first writes them out as real EDF
/// bytes, so the decoder is on the path either way), cut them into labeled
/// segment files, and record each patient's timeline facts.
fn stage_ingest(ctx: &StageContext) -> Result<()> {
    let cfg = &ctx.config;
    let dir = stage_dir(ctx, "ingest")?;
    let mut log = InputLog::new("ingest", cfg.seed);

    let mut sources: Vec<(String, PathBuf, PathBuf)> = Vec::new();
    if ctx.toy {
        let raw_dir = dir.join("raw");
        fs::create_dir_all(&raw_dir)?;
        for input in toy_inputs(cfg.seed) {
            let edf = raw_dir.join(format!("{}.edf", input.patient_id));
            let txt = raw_dir.join(format!("{}.txt", input.patient_id));
            fs::write(&edf, write_edf(&input.recording))?;
            fs::write(&txt, format_annotations(&input.annotations))?;
            sources.push((input.patient_id, edf, txt));
        }
    } else {
        if cfg.dataset.recordings.is_empty() {
            bail!("dataset.recordings is empty; configure EDF paths or pass --toy");
        }
        for (edf, txt) in cfg.dataset.recordings.iter().zip(&cfg.dataset.annotations) {
            let patient = edf
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| anyhow!("recording path {} has no file stem", edf.display()))?;
            sources.push((patient.to_string(), edf.clone(), txt.clone()));
        }
    }

    let mut inputs = Vec::new();
    for (patient, edf_path, txt_path) in &sources {
        log.file(&format!("raw/{patient}.edf"), edf_path)?;
        log.file(&format!("raw/{patient}.txt"), txt_path)?;
        let recording = parse_edf(&fs::read(edf_path)?)
            .with_context(|| format!("decoding {}", edf_path.display()))?;
        let annotations = parse_annotations(&fs::read_to_string(txt_path)?)
            .with_context(|| format!("parsing {}", txt_path.display()))?;
        inputs.push(RecordingInput { patient_id: patient.clone(), recording, annotations });
    }

    let policy = LabelPolicy::default();
    let seg_dir = dir.join("segments");
    let manifest = build_dataset(&inputs, &policy, &cfg.dataset.name, &seg_dir)?;
    save_manifest(&manifest, &seg_dir.join("manifest.txt"))?;

    // Timeline facts (merged onsets, interictal hours) for the patients that
    // survived eligibility; the alarm scorer needs them downstream.
    let eligible = manifest.patients();
    let mut onsets: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut hours: BTreeMap<String, f64> = BTreeMap::new();
    for input in inputs.iter().filter(|i| eligible.contains(&i.patient_id)) {
        let merged = merge_leading_seizures(&input.annotations)?;
        let plan = plan_segments(input.recording.duration_s(), &merged, &policy);
        onsets
            .entry(input.patient_id.clone())
            .or_default()
            .extend(merged.iter().map(|s| s.onset_s));
        *hours.entry(input.patient_id.clone()).or_default() += plan.interictal_region_s / 3600.0;
    }
    write_timeline(&dir, "", &onsets, &hours)?;

    log.write(&dir)?;
    println!(
        "ingest: {} segments from {} patients -> {}",
        manifest.entries.len(),
        eligible.len(),
        seg_dir.display()
    );
    Ok(())
}

fn write_timeline(
    dir: &Path,
    prefix: &str,
    onsets: &BTreeMap<String, Vec<f64>>,
    hours: &BTreeMap<String, f64>,
) -> Result<()> {
    let mut text = String::from("patient,onset_s\n");
    for (patient, list) in onsets {
        for onset in list {
            writeln!(text, "{patient},{onset}")?;
        }
    }
    fs::write(dir.join(format!("{prefix}onsets.csv")), text)?;

    let mut text = String::from("patient,interictal_hours\n");
    for (patient, h) in hours {
        writeln!(text, "{patient},{h}")?;
    }
    fs::write(dir.join(format!("{prefix}hours.csv")), text)?;
    Ok(())
}

#[allow(clippy::type_complexity)]
fn read_timeline(
    dir: &Path,
    prefix: &str,
    log: &mut InputLog,
) -> Result<(BTreeMap<String, Vec<f64>>, BTreeMap<String, f64>)> {
    let onsets_path = dir.join(format!("{prefix}onsets.csv"));
    let hours_path = dir.join(format!("{prefix}hours.csv"));
    log.file(&format!("{prefix}onsets.csv"), &onsets_path)?;
    log.file(&format!("{prefix}hours.csv"), &hours_path)?;

    let mut onsets: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for line in fs::read_to_string(&onsets_path)?.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let (patient, onset) = line
            .split_once(',')
            .ok_or_else(|| anyhow!("malformed onsets.csv line {line:?}"))?;
        onsets.entry(patient.to_string()).or_default().push(onset.parse()?);
    }
    let mut hours: BTreeMap<String, f64> = BTreeMap::new();
    for line in fs::read_to_string(&hours_path)?.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let (patient, h) =
            line.split_once(',').ok_or_else(|| anyhow!("malformed hours.csv line {line:?}"))?;
        hours.insert(patient.to_string(), h.parse()?);
    }
    Ok((onsets, hours))
}

// ------------------------------------------------------------ preprocess --

/// Notch-filter every segment and turn it into a spectrogram, producing a
/// self-contained corpus directory (spectra + items.csv + timeline facts).
fn stage_preprocess(ctx: &StageContext) -> Result<()> {
    let cfg = &ctx.config;
    let ingest_dir = cfg.out_dir.join("ingest");
    let seg_dir = ingest_dir.join("segments");
    let manifest_path = seg_dir.join("manifest.txt");
    let manifest = load_manifest(&manifest_path)
        .with_context(|| format!("loading {}; run `pf ingest` first", manifest_path.display()))?;

    let dir = stage_dir(ctx, "preprocess")?;
    fs::create_dir_all(dir.join("spectra"))?;
    let mut log = InputLog::new("preprocess", cfg.seed);
    log.file("segments/manifest.txt", &manifest_path)?;

    let mut items = String::from(ITEMS_CSV_HEADER);
    items.push('\n');
    for entry in &manifest.entries {
        let seg_path = seg_dir.join(&entry.path);
        log.file(&format!("segments/{}", entry.path), &seg_path)?;
        let segment = load_segment(&seg_path)?;
        let filter = design_notch(segment.sampling_rate_hz, cfg.line_freq_hz)?;
        let spec = segment_to_spectrogram(&segment, &filter, cfg.stft_window_s, cfg.image_size)?;
        let file = format!("spectra/{}.pfsp", entry.segment_id);
        save_spectrogram(&spec, &dir.join(&file))?;
        writeln!(
            items,
            "{file},{},{},{},{},{}",
            entry.patient_id,
            spec.label,
            spec.provenance,
            segment.start_time_s + segment.duration_s,
            entry.segment_id
        )?;
    }
    fs::write(dir.join("items.csv"), items)?;

    for name in ["onsets.csv", "hours.csv"] {
        let src = ingest_dir.join(name);
        log.file(name, &src)?;
        fs::copy(&src, dir.join(name))?;
    }
    log.write(&dir)?;
    println!(
        "preprocess: {} spectrograms -> {}",
        manifest.entries.len(),
        dir.join("spectra").display()
    );
    Ok(())
}

fn parse_label(s: &str) -> Result<Label> {
    match s {
        "interictal" => Ok(Label::Interictal),
        "preictal" => Ok(Label::Preictal),
        other => bail!("unknown label {other:?}"),
    }
}

fn parse_provenance(s: &str) -> Result<Provenance> {
    match s {
        "real" => Ok(Provenance::Real),
        "synthetic" => Ok(Provenance::Synthetic),
        other => bail!("unknown provenance {other:?}"),
    }
}

/// Load a corpus directory's `items.csv` and the spectrogram files it
/// references, hashing each into the input log under `prefix/`.
fn read_items(dir: &Path, prefix: &str, log: &mut InputLog) -> Result<Vec<CorpusItem>> {
    let items_path = dir.join("items.csv");
    let text = fs::read_to_string(&items_path)
        .with_context(|| format!("reading {}; run `pf preprocess` first", items_path.display()))?;
    log.file(&format!("{prefix}/items.csv"), &items_path)?;

    let mut lines = text.lines();
    if lines.next() != Some(ITEMS_CSV_HEADER) {
        bail!("{}: unexpected header (want {ITEMS_CSV_HEADER:?})", items_path.display());
    }
    let mut out = Vec::new();
    for (no, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            bail!("{} line {}: expected 6 fields, got {}", items_path.display(), no + 2, fields.len());
        }
        let file_path = dir.join(fields[0]);
        log.file(&format!("{prefix}/{}", fields[0]), &file_path)?;
        let spectrogram = load_spectrogram(&file_path)?;
        if spectrogram.label != parse_label(fields[2])?
            || spectrogram.provenance != parse_provenance(fields[3])?
        {
            bail!(
                "{} line {}: row disagrees with the payload of {}",
                items_path.display(),
                no + 2,
                fields[0]
            );
        }
        out.push(CorpusItem {
            spectrogram,
            patient_id: fields[1].to_string(),
            end_time_s: fields[4].parse().with_context(|| {
                format!("{} line {}: bad end_time_s", items_path.display(), no + 2)
            })?,
        });
    }
    Ok(out)
}

fn read_corpus_dir(dir: &Path, prefix: &str, log: &mut InputLog) -> Result<ProtocolCorpus> {
    let items = read_items(dir, prefix, log)?;
    let (onsets, interictal_hours) = read_timeline(dir, "", log)?;
    Ok(ProtocolCorpus { items, onsets, interictal_hours })
}

// ------------------------------------------------------------- gan-train --

fn real_preictal_images(items: &[CorpusItem]) -> Vec<Tensor<f32>> {
    items
        .iter()
        .filter(|i| {
            i.spectrogram.label == Label::Preictal && i.spectrogram.provenance == Provenance::Real
        })
        .map(|i| i.spectrogram.to_tensor())
        .collect()
}

fn stage_gan_train(ctx: &StageContext) -> Result<()> {
    let cfg = &ctx.config;
    let dir = stage_dir(ctx, "gan")?;
    let mut log = InputLog::new("gan-train", cfg.seed);
    let items = read_items(&cfg.out_dir.join("preprocess"), "preprocess", &mut log)?;
    let images = real_preictal_images(&items);
    if images.is_empty() {
        bail!("no real preictal spectrograms in {}", cfg.out_dir.join("preprocess").display());
    }

    let mut gan_cfg = GanTrainConfig::new(GanScale::from_image_size(cfg.image_size)?, cfg.seed);
    gan_cfg.batch_size = cfg.gan.batch_size;
    gan_cfg.patience = if cfg.gan.patience == 0 { usize::MAX } else { cfg.gan.patience };
    gan_cfg.learning_rate = cfg.gan.learning_rate;
    gan_cfg.max_epochs = cfg.gan.max_epochs;
    let outcome = train_dcgan(&images, &gan_cfg)?;

    outcome.model.to_checkpoint().save(dir.join("gan.ckpt"))?;
    fs::write(dir.join("trace.csv"), outcome.trace.to_csv())?;
    log.write(&dir)?;
    println!(
        "gan-train: {} images, {} batches over {} epochs (stopped early: {}) -> {}",
        images.len(),
        outcome.trace.len(),
        outcome.trace.epochs(),
        outcome.stopped_early,
        dir.join("gan.ckpt").display()
    );
    Ok(())
}

// ------------------------------------------------------------ gan-sample --

fn stage_gan_sample(ctx: &StageContext) -> Result<()> {
    let cfg = &ctx.config;
    let gan_dir = stage_dir(ctx, "gan")?;
    let ckpt_path = gan_dir.join("gan.ckpt");
    let mut log = InputLog::new("gan-sample", cfg.seed);
    log.file("gan.ckpt", &ckpt_path)
        .with_context(|| format!("{} missing; run `pf gan-train` first", ckpt_path.display()))?;

    let model = GanModel::from_checkpoint(&Checkpoint::load(&ckpt_path)?)?;
    let samples_dir = gan_dir.join("samples");
    fs::create_dir_all(&samples_dir)?;
    let mut rng = Rng::new(cfg.seed).derive(4);
    let samples = generate_samples(&model, cfg.gan.sample_count, &mut rng)?;
    for (i, sample) in samples.iter().enumerate() {
        save_spectrogram(sample, &samples_dir.join(format!("synth-{i:04}.pfsp")))?;
    }
    log.write(&samples_dir)?;
    println!("gan-sample: {} samples -> {}", samples.len(), samples_dir.display());
    Ok(())
}

fn sorted_files(dir: &Path, suffix: &str) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(suffix)))
        .collect();
    files.sort();
    Ok(files)
}

// ----------------------------------------------------------------- sieve --

/// Train a one-class model on the real preictal spectrograms and keep only
/// the generated samples it scores as inliers.
fn stage_sieve(ctx: &StageContext) -> Result<()> {
    let cfg = &ctx.config;
    let dir = stage_dir(ctx, "sieve")?;
    let mut log = InputLog::new("sieve", cfg.seed);
    let items = read_items(&cfg.out_dir.join("preprocess"), "preprocess", &mut log)?;
    let real: Vec<&Spectrogram> = items
        .iter()
        .filter(|i| {
            i.spectrogram.label == Label::Preictal && i.spectrogram.provenance == Provenance::Real
        })
        .map(|i| &i.spectrogram)
        .collect();
    if real.is_empty() {
        bail!("no real preictal spectrograms to train the sieve on");
    }
    let features: Vec<Vec<f64>> =
        real.iter().map(|s| featurize(s)).collect::<Result<_, _>>()?;
    let gamma = cfg.sieve.gamma.unwrap_or_else(|| scale_gamma(&features));
    let (model, diagnostics) = train_ocsvm(&features, cfg.sieve.nu, gamma)?;

    let samples_dir = cfg.out_dir.join("gan").join("samples");
    let candidate_paths = sorted_files(&samples_dir, ".pfsp")
        .with_context(|| format!("{} missing; run `pf gan-sample` first", samples_dir.display()))?;
    let mut candidates = Vec::new();
    for path in &candidate_paths {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        log.file(&format!("samples/{name}"), path)?;
        candidates.push(load_spectrogram(path)?);
    }
    let (kept, report) = filter_samples(&model, &candidates)?;

    let kept_dir = dir.join("kept");
    fs::create_dir_all(&kept_dir)?;
    for sample in &kept {
        save_spectrogram(sample, &kept_dir.join(format!("{}.pfsp", sample.source_id)))?;
    }
    save_model(&model, &dir.join("model.pfsv"))?;
    let mut summary = String::new();
    writeln!(summary, "training_set\t{}", features.len())?;
    writeln!(summary, "nu\t{}", cfg.sieve.nu)?;
    writeln!(summary, "gamma\t{gamma}")?;
    writeln!(summary, "rho\t{}", model.rho)?;
    writeln!(summary, "objective\t{}", diagnostics.objective)?;
    writeln!(summary, "iterations\t{}", diagnostics.iterations)?;
    writeln!(summary, "kept\t{}", report.kept)?;
    writeln!(summary, "discarded\t{}", report.discarded)?;
    fs::write(dir.join("report.txt"), summary)?;
    log.write(&dir)?;
    println!(
        "sieve: kept {}/{} candidates -> {}",
        report.kept,
        candidates.len(),
        kept_dir.display()
    );
    Ok(())
}

// ----------------------------------------------------------------- train --

fn stage_train(ctx: &StageContext) -> Result<()> {
    let cfg = &ctx.config;
    let dir = stage_dir(ctx, "train")?;
    let mut log = InputLog::new("train", cfg.seed);
    let real = read_items(&cfg.out_dir.join("preprocess"), "preprocess", &mut log)?;

    let items = if cfg.cesp.augmentation_factor > 0 {
        let kept_dir = cfg.out_dir.join("sieve").join("kept");
        let kept_paths = sorted_files(&kept_dir, ".pfsp")
            .with_context(|| format!("{} missing; run `pf sieve` first", kept_dir.display()))?;
        let mut pool = Vec::new();
        for path in &kept_paths {
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            log.file(&format!("kept/{name}"), path)?;
            pool.push(CorpusItem {
                spectrogram: load_spectrogram(path)?,
                patient_id: "synthetic".into(),
                end_time_s: 0.0,
            });
        }
        augment_dataset(&real, &pool, cfg.cesp.augmentation_factor)?
    } else {
        real
    };

    let plan = TrainPlan {
        combo: Combo::Trtr,
        folds: cfg.cesp.folds,
        learning_rate: cfg.cesp.learning_rate,
        epochs: cfg.cesp.epochs,
        batch_size: cfg.cesp.batch_size,
        seed: cfg.seed,
        augmentation_factor: cfg.cesp.augmentation_factor,
    };
    let training = train_cesp(&items, &plan)?;
    training.model.to_checkpoint().save(dir.join("cesp.ckpt"))?;

    let mut folds = String::from("fold,val_size,val_loss,val_accuracy,val_auc,epochs_ran\n");
    for m in &training.fold_metrics {
        writeln!(
            folds,
            "{},{},{},{},{},{}",
            m.fold, m.val_size, m.val_loss, m.val_accuracy, m.val_auc, m.epochs_ran
        )?;
    }
    fs::write(dir.join("folds.csv"), folds)?;
    log.write(&dir)?;
    println!(
        "train: {} items across {} folds -> {}",
        items.len(),
        cfg.cesp.folds,
        dir.join("cesp.ckpt").display()
    );
    Ok(())
}

// -------------------------------------------------------------- protocol --

fn stage_protocol(ctx: &StageContext) -> Result<()> {
    let cfg = &ctx.config;
    let dir = stage_dir(ctx, "protocol")?;
    let mut log = InputLog::new("protocol", cfg.seed);

    let (real, synthetic) = if ctx.toy {
        log.value("toy_real_seed", &cfg.seed.to_string());
        log.value("toy_synthetic_seed", &(cfg.seed + 1000).to_string());
        (
            toy_protocol_corpus(cfg.seed, Provenance::Real)?,
            toy_protocol_corpus(cfg.seed + 1000, Provenance::Synthetic)?,
        )
    } else {
        let real_dir = cfg.dataset.protocol_real.as_ref().ok_or_else(|| {
            anyhow!("dataset.protocol_real is not set; point it at a corpus directory or pass --toy")
        })?;
        let syn_dir = cfg.dataset.protocol_synthetic.as_ref().ok_or_else(|| {
            anyhow!("dataset.protocol_synthetic is not set; point it at a corpus directory or pass --toy")
        })?;
        (read_corpus_dir(real_dir, "real", &mut log)?, read_corpus_dir(syn_dir, "synthetic", &mut log)?)
    };

    let plan = TrainPlan {
        combo: Combo::Trtr,
        folds: cfg.cesp.folds,
        learning_rate: cfg.cesp.learning_rate,
        epochs: cfg.cesp.epochs,
        batch_size: cfg.cesp.batch_size,
        seed: cfg.seed,
        augmentation_factor: cfg.cesp.augmentation_factor,
    };
    let runs = run_protocol(&real, &synthetic, &plan, &eval_config(cfg))?;

    for run in &runs {
        let tag = run.combo.label().to_lowercase();
        let mut report = String::from(EvalReport::CSV_HEADER);
        report.push('\n');
        report.push_str(&run.report.to_csv_row());
        report.push('\n');
        fs::write(dir.join(format!("{tag}_report.csv")), report)?;
        fs::write(dir.join(format!("{tag}_records.csv")), records_to_csv(&run.records))?;
        // Each combo's records are scored against the corpus it tested on.
        let scored = if run.combo.tests_on_synthetic() { &synthetic } else { &real };
        write_timeline(&dir, &format!("{tag}_"), &scored.onsets, &scored.interictal_hours)?;
    }
    log.write(&dir)?;

    for run in &runs {
        println!(
            "protocol {}: train {} / test {}, sensitivity {:.1}%, FPR {:.3}/h, AUC {:.3}",
            run.combo,
            run.train_size,
            run.test_size,
            run.report.sensitivity_pct,
            run.report.fpr_per_hour,
            run.report.auc
        );
    }
    Ok(())
}

// ------------------------------------------------------------------ eval --

fn stage_eval(ctx: &StageContext) -> Result<()> {
    let cfg = &ctx.config;
    let proto_dir = cfg.out_dir.join("protocol");
    let dir = stage_dir(ctx, "eval")?;
    let mut log = InputLog::new("eval", cfg.seed);

    let records_files = sorted_files(&proto_dir, "_records.csv")
        .with_context(|| format!("{} missing; run `pf protocol` first", proto_dir.display()))?;
    if records_files.is_empty() {
        bail!("no *_records.csv in {}; run `pf protocol` first", proto_dir.display());
    }
    let eval = eval_config(cfg);

    for file in &records_files {
        let name = file.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        log.file(name, file)?;
        let records = parse_records_csv(&fs::read_to_string(file)?)
            .with_context(|| format!("parsing {}", file.display()))?;
        let source = name.strip_suffix("_records.csv").unwrap_or("records");
        let (onsets, hours) = read_timeline(&proto_dir, &format!("{source}_"), &mut log)?;

        let mut by_patient: BTreeMap<String, Vec<PredictionRecord>> = BTreeMap::new();
        for r in records {
            by_patient.entry(r.patient_id.clone()).or_default().push(r);
        }
        let mut csv = String::from(EvalReport::CSV_HEADER);
        csv.push('\n');
        for (patient, recs) in &by_patient {
            let alarms = raise_alarms(recs, &eval)?;
            let empty = Vec::new();
            let onset_list = onsets.get(patient).unwrap_or(&empty);
            let outcome = score_alarms(&alarms, onset_list, &eval)?;
            let h = hours.get(patient).copied().unwrap_or(0.0);
            let mut report = compute_metrics(patient, &outcome, h, recs, &eval)?;
            report.p_value = Some(schelter_p(
                report.fpr_per_hour,
                eval.sop_s / 3600.0,
                report.n_predicted,
                report.n_seizures,
            )?);
            csv.push_str(&report.to_csv_row());
            csv.push('\n');
        }
        fs::write(dir.join(format!("{source}_report.csv")), csv)?;
    }

    let curves = emit_roc(&proto_dir, &dir.join("roc"))?;
    log.write(&dir)?;
    println!(
        "eval: {} report files, {} roc curves -> {}",
        records_files.len(),
        curves.len(),
        dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- report --

fn stage_report(ctx: &StageContext) -> Result<()> {
    let cfg = &ctx.config;
    let eval_dir = cfg.out_dir.join("eval");
    let proto_dir = cfg.out_dir.join("protocol");
    let dir = stage_dir(ctx, "report")?;
    let mut log = InputLog::new("report", cfg.seed);

    let report_files = sorted_files(&eval_dir, "_report.csv")
        .with_context(|| format!("{} missing; run `pf eval` first", eval_dir.display()))?;
    if report_files.is_empty() {
        bail!("no *_report.csv in {}; run `pf eval` first", eval_dir.display());
    }

    let mut summary =
        String::from("source,patients,sensitivity_pct,fpr_per_hour,specificity_pct,accuracy_pct,auc\n");
    for file in &report_files {
        let name = file.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        log.file(name, file)?;
        let source = name.strip_suffix("_report.csv").unwrap_or("report");
        let text = fs::read_to_string(file)?;
        let reports: Vec<EvalReport> = text
            .lines()
            .skip(1)
            .filter(|l| !l.trim().is_empty())
            .map(EvalReport::from_csv_row)
            .collect::<Result<_, _>>()
            .with_context(|| format!("parsing {}", file.display()))?;
        let row = aggregate_reports(&reports)?;
        writeln!(
            summary,
            "{source},{},{},{},{},{},{}",
            row.patients,
            row.sensitivity_pct,
            row.fpr_per_hour,
            row.specificity_pct,
            row.accuracy_pct,
            row.auc
        )?;
    }
    fs::write(dir.join("summary.csv"), summary)?;

    // AUC comparison against the train-real/test-real baseline, pooled over
    // patients. Perfect separation has no sampling-variance model under
    // this test, so such pairs are reported as not computable ("-").
    let mut pooled: BTreeMap<String, (f64, usize, usize)> = BTreeMap::new();
    for file in sorted_files(&proto_dir, "_records.csv").unwrap_or_default() {
        let name = file.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        log.file(name, &file)?;
        let records = parse_records_csv(&fs::read_to_string(&file)?)?;
        let source = name.strip_suffix("_records.csv").unwrap_or("records").to_string();
        let labels: Vec<bool> = records.iter().map(|r| r.label == Label::Preictal).collect();
        let probs: Vec<f64> = records.iter().map(|r| r.prob).collect();
        let positives = labels.iter().filter(|&&l| l).count();
        let negatives = labels.len() - positives;
        if positives > 0 && negatives > 0 {
            pooled.insert(source, (roc_auc(&labels, &probs)?, positives, negatives));
        }
    }
    let mut sig =
        String::from("baseline,comparison,auc_baseline,auc_comparison,p,alpha,significant\n");
    let alpha = 0.05 / BONFERRONI_COMPARISONS as f64;
    if let Some(&(auc_base, pos_b, neg_b)) = pooled.get("trtr") {
        for (source, &(auc, pos, neg)) in pooled.iter().filter(|(s, _)| s.as_str() != "trtr") {
            match hanley_mcneil_p(auc_base, pos_b, neg_b, auc, pos, neg) {
                Ok(p) => {
                    let significant = bonferroni_significant(p, 0.05, BONFERRONI_COMPARISONS);
                    writeln!(sig, "trtr,{source},{auc_base},{auc},{p},{alpha},{significant}")?;
                }
                Err(_) => {
                    writeln!(sig, "trtr,{source},{auc_base},{auc},-,{alpha},-")?;
                }
            }
        }
    }
    fs::write(dir.join("significance.csv"), sig)?;
    log.write(&dir)?;
    println!(
        "report: {} summary rows -> {}",
        report_files.len(),
        dir.join("summary.csv").display()
    );
    Ok(())
}
