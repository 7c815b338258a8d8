//! Deep convolutional GAN over spectrogram images: a 100-dimensional latent
//! feeds a dense + transpose-convolution generator; a strided-convolution
//! discriminator scores real versus generated images. Training alternates
//! one discriminator and one generator Adam update per batch and stops early
//! once the discriminator's loss has exceeded the generator's for `patience`
//! consecutive batches (the adversary has stopped winning — equilibrium).

use crate::preprocess::{Spectrogram, IMAGE_CHANNELS};
use crate::types::{Label, Provenance};
use pf_numcore::{
    gaussian_sample, Activation, AdamConfig, AdamState, Checkpoint, Graph, LayerSpec, NumError,
    Padding, Rng, Sequential, Tensor, WeightInit, BCE_EPSILON,
};
use thiserror::Error;

pub const LATENT_DIM: usize = 100;
pub const FULL_IMAGE_SIZE: usize = 256;
pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_PATIENCE: usize = 15;
pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;
pub const DEFAULT_MAX_EPOCHS: usize = 3000;
/// DCGAN weight initialization: iid N(0, 0.02²).
pub const WEIGHT_STDDEV: f64 = 0.02;
const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Error)]
pub enum DcganError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("real and fake batches differ in size ({real} vs {fake})")]
    BatchSizeMismatch { real: usize, fake: usize },
    #[error("score {0} outside (0, 1)")]
    BadScore(f64),
    #[error("no training images supplied")]
    EmptyCorpus,
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error("image {index} has shape {got:?}, model expects {expected:?}")]
    ImageShape { index: usize, expected: Vec<usize>, got: Vec<usize> },
    #[error("non-finite loss at epoch {epoch}, batch {batch}; trace retained")]
    NonFiniteLoss { epoch: usize, batch: usize, trace: Box<LossTrace> },
    #[error("checkpoint is missing parameter {0}")]
    MissingParam(String),
    #[error("checkpoint parameter {name} has shape {got:?}, model expects {expected:?}")]
    ParamShape { name: String, expected: Vec<usize>, got: Vec<usize> },
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Preprocess(#[from] crate::preprocess::PreprocessError),
}

/// Image scale the networks are built for. `Full` is the 256×256 production
/// geometry; `Toy(s)` shrinks the spatial extent (s a power of two in
/// `8..=64`) while keeping the same structural rules, for fast tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GanScale {
    Full,
    Toy(usize),
}

impl GanScale {
    pub fn image_size(self) -> usize {
        match self {
            GanScale::Full => FULL_IMAGE_SIZE,
            GanScale::Toy(s) => s,
        }
    }

    pub fn from_image_size(size: usize) -> Result<Self, DcganError> {
        if size == FULL_IMAGE_SIZE {
            return Ok(GanScale::Full);
        }
        if size.is_power_of_two() && (8..=64).contains(&size) {
            return Ok(GanScale::Toy(size));
        }
        Err(DcganError::BadConfig(format!(
            "image size {size} is not 256 or a power of two in 8..=64"
        )))
    }

    /// Stride-2 layers needed to go between 4×4 and the image size.
    fn doublings(self) -> usize {
        (self.image_size() / 4).trailing_zeros() as usize
    }
}

fn tconv(filters: usize) -> LayerSpec {
    LayerSpec::Conv2dTranspose {
        filters,
        filter_size: (5, 5),
        stride: (2, 2),
        padding: Padding::Same,
    }
}

fn conv(filters: usize) -> LayerSpec {
    LayerSpec::Conv2d {
        filters,
        filter_size: (5, 5),
        stride: (2, 2),
        padding: Padding::Same,
    }
}

/// Generator chain: dense from the latent to a 4×4 seed volume, then
/// stride-2 transpose convolutions doubling the extent to the image size;
/// ReLU hidden activations, tanh output.
pub fn generator_specs(scale: GanScale) -> Vec<LayerSpec> {
    let (seed_filters, hidden_filters) = match scale {
        GanScale::Full => (256, 128),
        GanScale::Toy(_) => (16, 16),
    };
    let mut specs = vec![
        LayerSpec::Dense { output_dim: 4 * 4 * seed_filters },
        LayerSpec::Activation(Activation::Relu),
        LayerSpec::Reshape(vec![4, 4, seed_filters]),
    ];
    let steps = scale.doublings();
    for i in 0..steps {
        if i + 1 == steps {
            specs.push(tconv(IMAGE_CHANNELS));
            specs.push(LayerSpec::Activation(Activation::Tanh));
        } else {
            let filters = if i == 0 { seed_filters } else { hidden_filters };
            specs.push(tconv(filters));
            specs.push(LayerSpec::Activation(Activation::Relu));
        }
    }
    specs
}

/// Discriminator chain: stride-2 convolutions with descending filter counts
/// down to a 4×4 extent, LeakyReLU activations, then a sigmoid scalar head.
pub fn discriminator_specs(scale: GanScale) -> Vec<LayerSpec> {
    let filters: Vec<usize> = match scale {
        GanScale::Full => vec![256, 128, 64, 32],
        GanScale::Toy(_) => (0..scale.doublings()).map(|i| 8 << (scale.doublings() - 1 - i)).collect(),
    };
    let mut specs = Vec::new();
    for f in filters {
        specs.push(conv(f));
        specs.push(LayerSpec::Activation(Activation::LeakyRelu(LEAKY_SLOPE)));
    }
    specs.push(LayerSpec::Flatten);
    specs.push(LayerSpec::Dense { output_dim: 1 });
    specs.push(LayerSpec::Activation(Activation::Sigmoid));
    specs
}

#[derive(Debug, Clone)]
pub struct GanModel {
    pub scale: GanScale,
    pub generator: Sequential<f32>,
    pub discriminator: Sequential<f32>,
}

impl GanModel {
    pub fn build(scale: GanScale, rng: &mut Rng) -> Result<Self, DcganError> {
        let size = GanScale::from_image_size(scale.image_size())?.image_size();
        let init = WeightInit::Normal { stddev: WEIGHT_STDDEV };
        let generator =
            Sequential::new("g", &[LATENT_DIM], generator_specs(scale), init, rng)?;
        let discriminator = Sequential::new(
            "d",
            &[size, size, IMAGE_CHANNELS],
            discriminator_specs(scale),
            init,
            rng,
        )?;
        debug_assert_eq!(generator.output_shape(), &[size, size, IMAGE_CHANNELS]);
        debug_assert_eq!(discriminator.output_shape(), &[1]);
        Ok(GanModel { scale, generator, discriminator })
    }

    pub fn image_size(&self) -> usize {
        self.scale.image_size()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut cp = Checkpoint::new();
        cp.insert_scalar("meta.image_size", self.image_size() as f64)
            .expect("fresh checkpoint");
        for p in self.generator.params().iter().chain(self.discriminator.params()) {
            cp.insert(&p.name, p.value.clone()).expect("unique param names");
        }
        cp
    }

    pub fn from_checkpoint(cp: &Checkpoint) -> Result<Self, DcganError> {
        let size = cp.scalar("meta.image_size")? as usize;
        let scale = GanScale::from_image_size(size)?;
        let mut rng = Rng::new(0);
        let mut model = GanModel::build(scale, &mut rng)?;
        for seq in [&mut model.generator, &mut model.discriminator] {
            for p in seq.params_mut() {
                let stored = cp
                    .get(&p.name)
                    .ok_or_else(|| DcganError::MissingParam(p.name.clone()))?;
                if stored.shape() != p.value.shape() {
                    return Err(DcganError::ParamShape {
                        name: p.name.clone(),
                        expected: p.value.shape().to_vec(),
                        got: stored.shape().to_vec(),
                    });
                }
                p.value = stored.clone();
            }
        }
        Ok(model)
    }
}

/// Eq.-style discriminator objective in its ascent form:
/// mean over the batch of log D(x) + log(1 − D(G(z))), logs clamped.
/// 0 is a perfect discriminator; −2 ln 2 is the blind-guess equilibrium.
pub fn discriminator_loss(real_scores: &[f64], fake_scores: &[f64]) -> Result<f64, DcganError> {
    if real_scores.is_empty() || fake_scores.is_empty() {
        return Err(DcganError::EmptyBatch);
    }
    if real_scores.len() != fake_scores.len() {
        return Err(DcganError::BatchSizeMismatch {
            real: real_scores.len(),
            fake: fake_scores.len(),
        });
    }
    let mut sum = 0.0;
    for (&r, &f) in real_scores.iter().zip(fake_scores) {
        for s in [r, f] {
            if !(s > 0.0 && s < 1.0) {
                return Err(DcganError::BadScore(s));
            }
        }
        sum += clamped_ln(r) + clamped_ln(1.0 - f);
    }
    Ok(sum / real_scores.len() as f64)
}

/// Non-saturating generator objective, minimized:
/// −mean log D(G(z)); ln 2 at the blind-guess equilibrium.
pub fn generator_loss(fake_scores: &[f64]) -> Result<f64, DcganError> {
    if fake_scores.is_empty() {
        return Err(DcganError::EmptyBatch);
    }
    let mut sum = 0.0;
    for &f in fake_scores {
        if !(f > 0.0 && f < 1.0) {
            return Err(DcganError::BadScore(f));
        }
        sum -= clamped_ln(f);
    }
    Ok(sum / fake_scores.len() as f64)
}

fn clamped_ln(v: f64) -> f64 {
    v.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON).ln()
}

/// Per-batch minimized losses with epoch boundaries. The discriminator entry
/// is the descent form (negated ascent objective), so both columns are
/// directly comparable cross-entropies.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossTrace {
    d: Vec<f64>,
    g: Vec<f64>,
    epoch_starts: Vec<usize>,
}

impl LossTrace {
    pub fn new() -> Self {
        LossTrace::default()
    }

    pub fn start_epoch(&mut self) {
        self.epoch_starts.push(self.d.len());
    }

    pub fn push(&mut self, d_loss: f64, g_loss: f64) {
        if self.epoch_starts.is_empty() {
            self.epoch_starts.push(0);
        }
        self.d.push(d_loss);
        self.g.push(g_loss);
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// Number of epochs the trace spans (started epochs, including ones
    /// that recorded no batches).
    pub fn epochs(&self) -> usize {
        self.epoch_starts.len()
    }

    pub fn d_losses(&self) -> &[f64] {
        &self.d
    }

    pub fn g_losses(&self) -> &[f64] {
        &self.g
    }

    pub fn epoch_of(&self, batch_index: usize) -> usize {
        match self.epoch_starts.binary_search(&batch_index) {
            Ok(mut i) => {
                // Consecutive empty epochs share a start index; the batch
                // belongs to the last of them.
                while i + 1 < self.epoch_starts.len()
                    && self.epoch_starts[i + 1] == batch_index
                {
                    i += 1;
                }
                i
            }
            Err(i) => i - 1,
        }
    }

    /// One line per batch: "epoch,batch,D_loss,G_loss" with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,batch,D_loss,G_loss\n");
        for i in 0..self.d.len() {
            let epoch = self.epoch_of(i);
            let batch = i - self.epoch_starts[epoch];
            out.push_str(&format!("{epoch},{batch},{},{}\n", self.d[i], self.g[i]));
        }
        out
    }
}

/// True once the last `patience` batches all had the discriminator's
/// (minimized) loss strictly above the generator's. Pure in the trace suffix.
pub fn early_stop_check(trace: &LossTrace, patience: usize) -> bool {
    let n = trace.d.len();
    if patience == 0 || n < patience {
        return false;
    }
    (n - patience..n).all(|i| trace.d[i] > trace.g[i])
}

#[derive(Debug, Clone)]
pub struct GanTrainConfig {
    pub batch_size: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub scale: GanScale,
}

impl GanTrainConfig {
    pub fn new(scale: GanScale, seed: u64) -> Self {
        GanTrainConfig {
            batch_size: DEFAULT_BATCH_SIZE,
            patience: DEFAULT_PATIENCE,
            learning_rate: DEFAULT_LEARNING_RATE,
            beta1: 0.5,
            max_epochs: DEFAULT_MAX_EPOCHS,
            seed,
            scale,
        }
    }

    fn validate(&self) -> Result<(), DcganError> {
        if self.batch_size < 1 {
            return Err(DcganError::BadConfig("batch_size must be ≥ 1".into()));
        }
        if self.patience < 1 {
            return Err(DcganError::BadConfig("patience must be ≥ 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(DcganError::BadConfig("learning_rate must be positive".into()));
        }
        if self.max_epochs < 1 {
            return Err(DcganError::BadConfig("max_epochs must be ≥ 1".into()));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            ..AdamConfig::gan(self.learning_rate)
        }
    }
}

pub struct TrainOutcome {
    pub model: GanModel,
    pub trace: LossTrace,
    pub stopped_early: bool,
}

fn stack_images(images: &[Tensor<f32>], idx: &[usize], size: usize) -> Tensor<f32> {
    let per = size * size * IMAGE_CHANNELS;
    let mut data = Vec::with_capacity(idx.len() * per);
    for &i in idx {
        data.extend_from_slice(images[i].data());
    }
    Tensor::from_vec(&[idx.len(), size, size, IMAGE_CHANNELS], data)
        .expect("image shapes validated before batching")
}

fn adam_for(seq: &Sequential<f32>, config: AdamConfig) -> AdamState<f32> {
    let shapes: Vec<&[usize]> = seq.params().iter().map(|p| p.value.shape()).collect();
    AdamState::new(config, &shapes)
}

fn apply_step(
    seq: &mut Sequential<f32>,
    state: &mut AdamState<f32>,
    grads: &[Tensor<f32>],
) -> Result<(), DcganError> {
    let mut params: Vec<&mut Tensor<f32>> =
        seq.params_mut().iter_mut().map(|p| &mut p.value).collect();
    let grad_refs: Vec<&Tensor<f32>> = grads.iter().collect();
    state.step(&mut params, &grad_refs)?;
    Ok(())
}

/// One discriminator update on a real batch and a same-size fake batch drawn
/// from the current generator. Returns the minimized discriminator loss.
fn discriminator_step(
    model: &mut GanModel,
    state: &mut AdamState<f32>,
    real: &Tensor<f32>,
    latent: &Tensor<f32>,
) -> Result<f64, DcganError> {
    let fake = model.generator.infer(latent)?;
    let k = real.shape()[0];
    let mut graph = Graph::new();
    let d_ids = model.discriminator.insert_params(&mut graph, true);
    let real_in = graph.constant(real.clone());
    let fake_in = graph.constant(fake);
    let real_out = model.discriminator.forward_with(&mut graph, real_in, &d_ids)?;
    let fake_out = model.discriminator.forward_with(&mut graph, fake_in, &d_ids)?;
    let ones = graph.constant(Tensor::filled(&[k, 1], 1.0f32));
    let zeros = graph.constant(Tensor::zeros(&[k, 1]));
    let loss_real = graph.bce_loss(real_out, ones)?;
    let loss_fake = graph.bce_loss(fake_out, zeros)?;
    let loss = graph.add(loss_real, loss_fake)?;
    graph.backward(loss)?;
    let grads = model.discriminator.collect_grads(&graph, &d_ids)?;
    let value = graph.value(loss).item() as f64;
    apply_step(&mut model.discriminator, state, &grads)?;
    Ok(value)
}

/// One generator update through a frozen discriminator (non-saturating
/// objective: push D's score on fakes toward 1). Returns the minimized
/// generator loss.
fn generator_step(
    model: &mut GanModel,
    state: &mut AdamState<f32>,
    latent: &Tensor<f32>,
) -> Result<f64, DcganError> {
    let k = latent.shape()[0];
    let mut graph = Graph::new();
    let g_ids = model.generator.insert_params(&mut graph, true);
    let d_ids = model.discriminator.insert_params(&mut graph, false);
    let z = graph.constant(latent.clone());
    let fake = model.generator.forward_with(&mut graph, z, &g_ids)?;
    let score = model.discriminator.forward_with(&mut graph, fake, &d_ids)?;
    let ones = graph.constant(Tensor::filled(&[k, 1], 1.0f32));
    let loss = graph.bce_loss(score, ones)?;
    graph.backward(loss)?;
    let grads = model.generator.collect_grads(&graph, &g_ids)?;
    let value = graph.value(loss).item() as f64;
    apply_step(&mut model.generator, state, &grads)?;
    Ok(value)
}

/// Train on a corpus of image tensors (shape [s, s, 3] each). Alternates one
/// discriminator and one generator update per batch; epochs reshuffle;
/// training halts at `max_epochs` or as soon as `early_stop_check` fires.
/// Fully deterministic in `config.seed`, single-threaded.
pub fn train_dcgan(
    images: &[Tensor<f32>],
    config: &GanTrainConfig,
) -> Result<TrainOutcome, DcganError> {
    config.validate()?;
    if images.is_empty() {
        return Err(DcganError::EmptyCorpus);
    }
    let size = config.scale.image_size();
    let expected = [size, size, IMAGE_CHANNELS];
    for (index, img) in images.iter().enumerate() {
        if img.shape() != expected {
            return Err(DcganError::ImageShape {
                index,
                expected: expected.to_vec(),
                got: img.shape().to_vec(),
            });
        }
    }

    let root = Rng::new(config.seed);
    let mut init_rng = root.derive(1);
    let mut shuffle_rng = root.derive(2);
    let mut latent_rng = root.derive(3);

    let mut model = GanModel::build(config.scale, &mut init_rng)?;
    let mut d_state = adam_for(&model.discriminator, config.adam());
    let mut g_state = adam_for(&model.generator, config.adam());

    let mut trace = LossTrace::new();
    let mut order: Vec<usize> = (0..images.len()).collect();
    for epoch in 0..config.max_epochs {
        trace.start_epoch();
        shuffle_rng.shuffle(&mut order);
        for (batch_no, chunk) in order.chunks(config.batch_size).enumerate() {
            let real = stack_images(images, chunk, size);
            let z_d = gaussian_sample::<f32>(&mut latent_rng, &[chunk.len(), LATENT_DIM]);
            let d_loss = discriminator_step(&mut model, &mut d_state, &real, &z_d)?;
            let z_g = gaussian_sample::<f32>(&mut latent_rng, &[chunk.len(), LATENT_DIM]);
            let g_loss = generator_step(&mut model, &mut g_state, &z_g)?;
            if !d_loss.is_finite() || !g_loss.is_finite() {
                return Err(DcganError::NonFiniteLoss {
                    epoch,
                    batch: batch_no,
                    trace: Box::new(trace),
                });
            }
            trace.push(d_loss, g_loss);
            if early_stop_check(&trace, config.patience) {
                return Ok(TrainOutcome { model, trace, stopped_early: true });
            }
        }
    }
    Ok(TrainOutcome { model, trace, stopped_early: false })
}

/// Draw `count` synthetic preictal spectrograms from a trained generator.
/// Deterministic in the rng state; each call advances the rng.
pub fn generate_samples(
    model: &GanModel,
    count: usize,
    rng: &mut Rng,
) -> Result<Vec<Spectrogram>, DcganError> {
    if count == 0 {
        return Err(DcganError::EmptyBatch);
    }
    let size = model.image_size();
    let latent = gaussian_sample::<f32>(rng, &[count, LATENT_DIM]);
    let out = model.generator.infer(&latent)?;
    let per = size * size * IMAGE_CHANNELS;
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let data = out.data()[i * per..(i + 1) * per].to_vec();
        let tensor = Tensor::from_vec(&[size, size, IMAGE_CHANNELS], data)?;
        samples.push(Spectrogram::from_tensor(
            &tensor,
            Label::Preictal,
            Provenance::Synthetic,
            &format!("synth-{:016x}-{i:04}", rng.seed()),
        )?);
    }
    Ok(samples)
}

/// Real-vs-fake accuracy of the discriminator at threshold 0.5: real images
/// should score above it, generator output below. A well-matched adversary
/// pair hovers near 0.5 (chance); a collapsed one sits near 1.
pub fn discriminator_accuracy(
    model: &GanModel,
    real: &[Tensor<f32>],
    rng: &mut Rng,
) -> Result<f64, DcganError> {
    if real.is_empty() {
        return Err(DcganError::EmptyCorpus);
    }
    let size = model.image_size();
    let mut correct = 0usize;
    let all: Vec<usize> = (0..real.len()).collect();
    for chunk in all.chunks(DEFAULT_BATCH_SIZE) {
        let batch = stack_images(real, chunk, size);
        let scores = model.discriminator.infer(&batch)?;
        correct += scores.data().iter().filter(|&&s| s > 0.5).count();

        let latent = gaussian_sample::<f32>(rng, &[chunk.len(), LATENT_DIM]);
        let fake = model.generator.infer(&latent)?;
        let fake_scores = model.discriminator.infer(&fake)?;
        correct += fake_scores.data().iter().filter(|&&s| s <= 0.5).count();
    }
    Ok(correct as f64 / (2 * real.len()) as f64)
}
