//! The encoder (DCE), residual upsampler (DRN), their composition (RDAnet),
//! the scene classifier, the training loop, and the three ablation arms.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, EchoImagePair, LabeledImage};
use crate::nn::{
    mae_loss, scce_loss, Adam, LayerSpec, Mode, Network, NetworkSpec, NnError, ResidualScale, Shape,
    Tensor4,
};
use crate::numerics::{Prng, RealMatrix};

const SHUFFLE_STREAM: u64 = 0x5348_5546;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("architecture: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
}

/// Network sizes. `paper()` is the published architecture, `desk()` a
/// narrow variant that trains on one CPU core in minutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub echo_dims: (usize, usize),
    pub image_dims: (usize, usize),
    /// Eight encoder convolutions, grouped 1, 1, 2, 2, 2 into five pooled stages.
    pub dce_filters: Vec<usize>,
    pub fc_units: usize,
    pub spatial_dropout: f64,
    pub drn_blocks: usize,
    pub drn_filters: usize,
    pub skip_scale: ResidualScale,
    pub global_skip: bool,
    /// Start the upsampler's output convolution at zero weights.
    pub zero_init_output: bool,
    pub leaky_alpha: f64,
    pub classifier_filters: (usize, usize),
    pub classifier_dropout: f64,
}

const DCE_STAGES: [usize; 5] = [1, 1, 2, 2, 2];

impl Default for ArchConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ArchConfig {
    pub fn paper() -> Self {
        let image_dims = (38, 212);
        Self {
            echo_dims: (256, 256),
            image_dims,
            dce_filters: vec![64, 128, 256, 256, 512, 512, 512, 512],
            fc_units: (image_dims.0 / 2) * (image_dims.1 / 2),
            spatial_dropout: 0.5,
            drn_blocks: 16,
            drn_filters: 64,
            skip_scale: ResidualScale::Skip(1.0),
            global_skip: true,
            zero_init_output: true,
            leaky_alpha: 0.2,
            classifier_filters: (64, 128),
            classifier_dropout: 0.3,
        }
    }

    pub fn desk() -> Self {
        Self {
            echo_dims: (128, 128),
            image_dims: (32, 32),
            dce_filters: vec![8, 16, 32, 32, 64, 64, 64, 64],
            fc_units: 256,
            spatial_dropout: 0.1,
            drn_blocks: 4,
            drn_filters: 16,
            classifier_filters: (16, 32),
            ..Self::paper()
        }
    }

    /// Same architecture for other image sizes, keeping `fc_units` tied to
    /// the half-resolution pixel count.
    pub fn with_dims(mut self, echo: (usize, usize), image: (usize, usize)) -> Self {
        self.echo_dims = echo;
        self.image_dims = image;
        self.fc_units = (image.0 / 2) * (image.1 / 2);
        self
    }

    pub fn half_image(&self) -> Shape {
        Shape::new(self.image_dims.0 / 2, self.image_dims.1 / 2, 1)
    }

    pub fn image_shape(&self) -> Shape {
        Shape::new(self.image_dims.0, self.image_dims.1, 1)
    }

    pub fn echo_shape(&self) -> Shape {
        Shape::new(self.echo_dims.0, self.echo_dims.1, 2)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        let (hi, wi) = self.image_dims;
        if hi == 0 || wi == 0 || hi % 2 != 0 || wi % 2 != 0 {
            return bad(format!("image dims {hi}x{wi} must be even and nonzero"));
        }
        if self.fc_units != (hi / 2) * (wi / 2) {
            return bad(format!(
                "fc_units {} must equal the half-resolution pixel count {}",
                self.fc_units,
                (hi / 2) * (wi / 2)
            ));
        }
        let (he, we) = self.echo_dims;
        if he == 0 || we == 0 || he % 32 != 0 || we % 32 != 0 {
            return bad(format!("echo dims {he}x{we} must be divisible by 32"));
        }
        if self.dce_filters.len() != DCE_STAGES.iter().sum::<usize>() {
            return bad(format!("expected 8 encoder filter counts, got {}", self.dce_filters.len()));
        }
        if self.drn_blocks == 0 || self.drn_filters == 0 {
            return bad("residual network needs at least one block and filter".into());
        }
        Ok(())
    }

    pub fn dce_spec(&self, seed: u64) -> Result<NetworkSpec, ModelError> {
        self.validate()?;
        let act = LayerSpec::LeakyRelu {
            alpha: self.leaky_alpha,
        };
        let mut layers = Vec::new();
        let mut filters = self.dce_filters.iter();
        for &convs in &DCE_STAGES {
            for _ in 0..convs {
                layers.push(LayerSpec::conv(3, *filters.next().unwrap()));
                layers.push(act.clone());
            }
            layers.push(LayerSpec::max_pool());
        }
        layers.extend([
            LayerSpec::SpatialDropout2d {
                rate: self.spatial_dropout,
            },
            LayerSpec::Flatten,
            LayerSpec::Dense {
                units: self.fc_units,
            },
            act,
            LayerSpec::Dense {
                units: self.fc_units,
            },
            LayerSpec::Reshape {
                shape: self.half_image(),
            },
        ]);
        Ok(NetworkSpec {
            input: self.echo_shape(),
            layers,
            seed,
        })
    }

    pub fn drn_spec(&self, seed: u64) -> Result<NetworkSpec, ModelError> {
        self.validate()?;
        let f = self.drn_filters;
        let blocks: Vec<LayerSpec> = (0..self.drn_blocks)
            .map(|_| LayerSpec::ResidualBlock {
                filters: f,
                scale: self.skip_scale,
            })
            .collect();
        let mut layers = vec![LayerSpec::conv(3, f)];
        if self.global_skip {
            layers.push(LayerSpec::Residual {
                body: blocks,
                scale: ResidualScale::Skip(1.0),
            });
        } else {
            layers.extend(blocks);
        }
        layers.extend([
            LayerSpec::conv(3, 4 * f),
            LayerSpec::PixelShuffle { factor: 2 },
            LayerSpec::conv(3, 1),
        ]);
        Ok(NetworkSpec {
            input: self.half_image(),
            layers,
            seed,
        })
    }

    pub fn classifier_spec(&self, seed: u64) -> Result<NetworkSpec, ModelError> {
        self.validate()?;
        let act = LayerSpec::LeakyRelu {
            alpha: self.leaky_alpha,
        };
        let drop = LayerSpec::Dropout {
            rate: self.classifier_dropout,
        };
        Ok(NetworkSpec {
            input: self.image_shape(),
            layers: vec![
                LayerSpec::conv_strided(5, self.classifier_filters.0, 2),
                act.clone(),
                drop.clone(),
                LayerSpec::conv_strided(5, self.classifier_filters.1, 2),
                act,
                drop,
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 2 },
                LayerSpec::Softmax,
            ],
            seed,
        })
    }
}

fn instantiate(spec: NetworkSpec) -> Result<Network, ModelError> {
    Ok(Network::new(spec.input, spec.layers, spec.seed)?)
}

pub fn build_dce(cfg: &ArchConfig, seed: u64) -> Result<Network, ModelError> {
    instantiate(cfg.dce_spec(seed)?)
}

pub fn build_drn(cfg: &ArchConfig, seed: u64) -> Result<Network, ModelError> {
    let mut net = instantiate(cfg.drn_spec(seed)?)?;
    if cfg.zero_init_output {
        let n = net.param_count();
        let tail = 9 * cfg.drn_filters + 1;
        net.params_mut()[n - tail..].fill(0.0);
    }
    Ok(net)
}

/// Encoder followed by the upsampler, initialized exactly as the two
/// separately built networks with seeds `seed` and `seed + 1`.
pub fn build_rdanet(cfg: &ArchConfig, seed: u64) -> Result<Network, ModelError> {
    Ok(build_dce(cfg, seed)?.then(&build_drn(cfg, seed + 1)?)?)
}

/// Recovers the encoder and upsampler from a composed network.
pub fn split_rdanet(rdanet: &Network, cfg: &ArchConfig) -> Result<(Network, Network), ModelError> {
    let (dce, drn) = rdanet.split_at(cfg.dce_spec(0)?.layers.len())?;
    if dce.output_shape() != cfg.half_image() || drn.output_shape() != cfg.image_shape() {
        return Err(ModelError::Config("network does not match the architecture".into()));
    }
    Ok((dce, drn))
}

pub fn build_classifier(cfg: &ArchConfig, seed: u64) -> Result<Network, ModelError> {
    instantiate(cfg.classifier_spec(seed)?)
}

/// Echo in, focused image and class probabilities out.
#[derive(Debug, Clone)]
pub struct Integrated {
    pub rdanet: Network,
    pub classifier: Network,
}

impl Integrated {
    pub fn new(rdanet: Network, classifier: Network) -> Result<Self, ModelError> {
        if rdanet.output_shape() != classifier.input_shape() {
            return Err(ModelError::Config(format!(
                "image network emits {}, classifier expects {}",
                rdanet.output_shape(),
                classifier.input_shape()
            )));
        }
        Ok(Self { rdanet, classifier })
    }

    pub fn build(cfg: &ArchConfig, seed: u64) -> Result<Self, ModelError> {
        Self::new(build_rdanet(cfg, seed)?, build_classifier(cfg, seed + 2)?)
    }

    /// Inference-mode pass returning (images, probabilities).
    pub fn infer(&mut self, echoes: &Tensor4) -> Result<(Tensor4, Tensor4), ModelError> {
        self.rdanet.set_mode(Mode::Infer);
        self.classifier.set_mode(Mode::Infer);
        let images = self.rdanet.forward(echoes)?;
        let probs = self.classifier.forward(&images)?;
        Ok((images, probs))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mae,
    Scce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub minibatch: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            minibatch: 32,
            epochs: 30,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.minibatch == 0 {
            return Err(ModelError::Config("minibatch must be >= 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(ModelError::Config(format!("learning rate {} is invalid", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Images(Shape, Vec<Vec<f64>>),
    Labels(Vec<usize>),
}

/// Inputs with matching targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub input: Shape,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Targets,
}

impl Samples {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    fn loss_kind(&self) -> LossKind {
        match self.targets {
            Targets::Images(..) => LossKind::Mae,
            Targets::Labels(_) => LossKind::Scce,
        }
    }

    fn batch(&self, idx: &[usize]) -> Result<(Tensor4, BatchTargets), ModelError> {
        let x = Tensor4::stack(self.input, &idx.iter().map(|&i| &self.inputs[i]).collect::<Vec<_>>())?;
        let t = match &self.targets {
            Targets::Images(s, v) => {
                BatchTargets::Images(Tensor4::stack(*s, &idx.iter().map(|&i| &v[i]).collect::<Vec<_>>())?)
            }
            Targets::Labels(l) => BatchTargets::Labels(idx.iter().map(|&i| l[i]).collect()),
        };
        Ok((x, t))
    }

    fn check(&self) -> Result<(), ModelError> {
        let n = match &self.targets {
            Targets::Images(s, v) => {
                if v.iter().any(|t| t.len() != s.len()) {
                    return Err(ModelError::Data("target sizes disagree with their shape".into()));
                }
                v.len()
            }
            Targets::Labels(l) => l.len(),
        };
        if n != self.inputs.len() {
            return Err(ModelError::Data(format!("{} inputs but {n} targets", self.inputs.len())));
        }
        if self.inputs.iter().any(|x| x.len() != self.input.len()) {
            return Err(ModelError::Data("input sizes disagree with their shape".into()));
        }
        Ok(())
    }
}

enum BatchTargets {
    Images(Tensor4),
    Labels(Vec<usize>),
}

/// Mean 2x2 block average.
pub fn avg_pool2(img: &RealMatrix) -> RealMatrix {
    RealMatrix::from_fn(img.rows() / 2, img.cols() / 2, |i, j| {
        0.25 * (img.get(2 * i, 2 * j)
            + img.get(2 * i, 2 * j + 1)
            + img.get(2 * i + 1, 2 * j)
            + img.get(2 * i + 1, 2 * j + 1))
    })
}

/// Which image an echo is paired with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageTarget {
    Full,
    /// 2x2 block average, the encoder-only target.
    Half,
}

pub fn echo_image_samples(pairs: &[&EchoImagePair], target: ImageTarget) -> Result<Samples, ModelError> {
    let first = pairs
        .first()
        .ok_or_else(|| ModelError::Data("no pairs".into()))?;
    if pairs.iter().any(|p| !p.echo_normalized || !p.image_scaled) {
        return Err(ModelError::Data("pairs must be normalized and scaled before training".into()));
    }
    let input = Shape::new(first.echo.height, first.echo.width, 2);
    let (h, w) = first.image.dims();
    let (shape, images) = match target {
        ImageTarget::Full => (
            Shape::new(h, w, 1),
            pairs.iter().map(|p| p.image.data().to_vec()).collect(),
        ),
        ImageTarget::Half => (
            Shape::new(h / 2, w / 2, 1),
            pairs.iter().map(|p| avg_pool2(&p.image).into_vec()).collect(),
        ),
    };
    let s = Samples {
        input,
        inputs: pairs.iter().map(|p| p.echo.data.clone()).collect(),
        targets: Targets::Images(shape, images),
    };
    s.check()?;
    Ok(s)
}

/// Focused images of labelled pairs.
pub fn labeled_images(pairs: &[&EchoImagePair]) -> Result<Vec<LabeledImage>, ModelError> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let label = p
                .class_label
                .ok_or_else(|| ModelError::Data(format!("pair {i} has no class label")))?;
            Ok(LabeledImage {
                image: p.image.clone(),
                label,
            })
        })
        .collect()
}

pub fn image_label_samples(images: &[LabeledImage]) -> Result<Samples, ModelError> {
    let first = images
        .first()
        .ok_or_else(|| ModelError::Data("no images".into()))?;
    let (h, w) = first.image.dims();
    let s = Samples {
        input: Shape::new(h, w, 1),
        inputs: images.iter().map(|li| li.image.data().to_vec()).collect(),
        targets: Targets::Labels(images.iter().map(|li| li.label.index()).collect()),
    };
    s.check()?;
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochStats>,
}

impl History {
    /// `epoch,train_loss,val_loss` rows with round-trip float formatting.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss\n");
        for e in &self.epochs {
            writeln!(s, "{},{:?},{:?}", e.epoch, e.train_loss, e.val_loss).unwrap();
        }
        s
    }

    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }

    pub fn best_val(&self) -> Option<f64> {
        self.epochs.iter().map(|e| e.val_loss).reduce(f64::min)
    }
}

fn batch_loss(net: &mut Network, x: &Tensor4, t: &BatchTargets) -> Result<(f64, Tensor4), ModelError> {
    Ok(match t {
        BatchTargets::Images(t) => mae_loss(&net.forward(x)?, t)?,
        BatchTargets::Labels(l) => scce_loss(&net.forward_logits(x)?, l)?,
    })
}

/// Inference-mode loss averaged over all samples.
pub fn evaluate_loss(net: &mut Network, data: &Samples, batch: usize) -> Result<f64, ModelError> {
    data.check()?;
    let mode = net.mode();
    net.set_mode(Mode::Infer);
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(batch.max(1)) {
        let (x, t) = data.batch(chunk)?;
        total += batch_loss(net, &x, &t)?.0 * chunk.len() as f64;
    }
    net.set_mode(mode);
    Ok(total / data.len() as f64)
}

/// Minibatch Adam training. Each epoch shuffles with a stream derived from
/// the seed and the epoch index. The recorded training loss is the
/// sample-weighted mean of the train-mode minibatch losses; validation loss
/// is evaluated in inference mode after the epoch.
pub fn train(
    net: &mut Network,
    train_set: &Samples,
    val_set: &Samples,
    tc: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<History, ModelError> {
    tc.validate()?;
    train_set.check()?;
    val_set.check()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(ModelError::Data("training and validation sets must be nonempty".into()));
    }
    if train_set.loss_kind() != val_set.loss_kind() {
        return Err(ModelError::Data("training and validation targets differ in kind".into()));
    }
    let mut adam = Adam::new(tc.lr, net.param_count());
    let mut history = History::default();
    for epoch in 1..=tc.epochs {
        net.set_mode(Mode::Train);
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        Prng::with_stream(tc.seed ^ SHUFFLE_STREAM, epoch as u64).shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(tc.minibatch) {
            let (x, t) = train_set.batch(chunk)?;
            let (loss, grad) = batch_loss(net, &x, &t)?;
            if !loss.is_finite() {
                return Err(ModelError::Data(format!("non-finite loss at epoch {epoch}")));
            }
            net.zero_grads();
            net.backward(&grad)?;
            adam.step_network(net)?;
            total += loss * chunk.len() as f64;
        }
        let stats = EpochStats {
            epoch,
            train_loss: total / train_set.len() as f64,
            val_loss: evaluate_loss(net, val_set, tc.minibatch)?,
        };
        on_epoch(&stats);
        history.epochs.push(stats);
    }
    net.set_mode(Mode::Infer);
    Ok(history)
}

/// Bilinear resampling by an integer factor with corner-aligned grids: output
/// pixel `i` samples the input at `i * (n - 1) / (f * n - 1)`. Reproduces
/// affine images exactly.
pub fn bilinear_upsample(img: &RealMatrix, factor: usize) -> RealMatrix {
    let (h, w) = img.dims();
    let (oh, ow) = (h * factor, w * factor);
    let coord = |i: usize, n: usize, on: usize| -> (usize, usize, f64) {
        if on <= 1 || n <= 1 {
            return (0, 0, 0.0);
        }
        let s = i as f64 * (n - 1) as f64 / (on - 1) as f64;
        let i0 = (s.floor() as usize).min(n - 1);
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, s - i0 as f64)
    };
    RealMatrix::from_fn(oh, ow, |i, j| {
        let (y0, y1, fy) = coord(i, h, oh);
        let (x0, x1, fx) = coord(j, w, ow);
        let top = img.get(y0, x0) * (1.0 - fx) + img.get(y0, x1) * fx;
        let bottom = img.get(y1, x0) * (1.0 - fx) + img.get(y1, x1) * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

fn to_images(t: &Tensor4) -> Vec<RealMatrix> {
    let s = t.shape();
    (0..t.n())
        .map(|i| RealMatrix::from_vec(s.h, s.w, t.sample(i).to_vec()).expect("single-channel sample"))
        .collect()
}

/// A trained echo-to-image system.
#[derive(Debug, Clone)]
pub enum ImageSystem {
    /// Arm A: encoder alone, bilinearly upsampled.
    DceBilinear { dce: Network },
    /// Arm B: encoder and upsampler trained one after the other.
    Separate { dce: Network, drn: Network },
    /// Arm C: jointly trained RDAnet.
    Joint { rdanet: Network },
}

impl ImageSystem {
    /// Inference-mode images for a batch of echoes.
    pub fn predict(&mut self, echoes: &Tensor4) -> Result<Vec<RealMatrix>, ModelError> {
        Ok(match self {
            Self::DceBilinear { dce } => {
                dce.set_mode(Mode::Infer);
                to_images(&dce.forward(echoes)?)
                    .iter()
                    .map(|m| bilinear_upsample(m, 2))
                    .collect()
            }
            Self::Separate { dce, drn } => {
                dce.set_mode(Mode::Infer);
                drn.set_mode(Mode::Infer);
                to_images(&drn.forward(&dce.forward(echoes)?)?)
            }
            Self::Joint { rdanet } => {
                rdanet.set_mode(Mode::Infer);
                to_images(&rdanet.forward(echoes)?)
            }
        })
    }

    /// Predictions for many samples, batched.
    pub fn predict_all(&mut self, echoes: &[&[f64]], input: Shape, batch: usize) -> Result<Vec<RealMatrix>, ModelError> {
        let mut out = Vec::with_capacity(echoes.len());
        for chunk in echoes.chunks(batch.max(1)) {
            out.extend(self.predict(&Tensor4::stack(input, chunk)?)?);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct Ablation {
    pub arm_a: ImageSystem,
    pub arm_b: ImageSystem,
    pub arm_c: ImageSystem,
    pub history_a: History,
    pub history_b: History,
    pub history_c: History,
}

/// Arm A: the encoder trained on 2x2-averaged images.
pub fn train_arm_a(
    ds: &Dataset,
    arch: &ArchConfig,
    tc: &TrainConfig,
    on_epoch: impl FnMut(&EpochStats),
) -> Result<(Network, History), ModelError> {
    let tr = echo_image_samples(&ds.train(), ImageTarget::Half)?;
    let va = echo_image_samples(&ds.val(), ImageTarget::Half)?;
    let mut dce = build_dce(arch, tc.seed)?;
    let h = train(&mut dce, &tr, &va, tc, on_epoch)?;
    Ok((dce, h))
}

fn frozen_features(dce: &mut Network, set: &Samples, batch: usize) -> Result<Samples, ModelError> {
    dce.set_mode(Mode::Infer);
    let mut inputs = Vec::with_capacity(set.len());
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(batch.max(1)) {
        let (x, _) = set.batch(chunk)?;
        let y = dce.forward(&x)?;
        inputs.extend((0..y.n()).map(|i| y.sample(i).to_vec()));
    }
    Ok(Samples {
        input: dce.output_shape(),
        inputs,
        targets: set.targets.clone(),
    })
}

/// Arm B: the upsampler trained on the outputs of a frozen encoder.
pub fn train_arm_b(
    ds: &Dataset,
    arch: &ArchConfig,
    tc: &TrainConfig,
    dce: &mut Network,
    on_epoch: impl FnMut(&EpochStats),
) -> Result<(Network, History), ModelError> {
    if dce.output_shape() != arch.half_image() {
        return Err(ModelError::Config(format!(
            "encoder emits {}, upsampler expects {}",
            dce.output_shape(),
            arch.half_image()
        )));
    }
    let tr = frozen_features(dce, &echo_image_samples(&ds.train(), ImageTarget::Full)?, tc.minibatch)?;
    let va = frozen_features(dce, &echo_image_samples(&ds.val(), ImageTarget::Full)?, tc.minibatch)?;
    let mut drn = build_drn(arch, tc.seed + 1)?;
    let h = train(&mut drn, &tr, &va, tc, on_epoch)?;
    Ok((drn, h))
}

/// Arm C: RDAnet trained end to end.
pub fn train_arm_c(
    ds: &Dataset,
    arch: &ArchConfig,
    tc: &TrainConfig,
    on_epoch: impl FnMut(&EpochStats),
) -> Result<(Network, History), ModelError> {
    let tr = echo_image_samples(&ds.train(), ImageTarget::Full)?;
    let va = echo_image_samples(&ds.val(), ImageTarget::Full)?;
    let mut rdanet = build_rdanet(arch, tc.seed)?;
    let h = train(&mut rdanet, &tr, &va, tc, on_epoch)?;
    Ok((rdanet, h))
}

/// All three arms under one seed and epoch budget.
pub fn ablation_arms(
    ds: &Dataset,
    arch: &ArchConfig,
    tc: &TrainConfig,
    mut log: impl FnMut(&str, &EpochStats),
) -> Result<Ablation, ModelError> {
    let (mut dce, history_a) = train_arm_a(ds, arch, tc, |e| log("a", e))?;
    let (drn, history_b) = train_arm_b(ds, arch, tc, &mut dce, |e| log("b", e))?;
    let (rdanet, history_c) = train_arm_c(ds, arch, tc, |e| log("c", e))?;
    Ok(Ablation {
        arm_a: ImageSystem::DceBilinear { dce: dce.clone() },
        arm_b: ImageSystem::Separate { dce, drn },
        arm_c: ImageSystem::Joint { rdanet },
        history_a,
        history_b,
        history_c,
    })
}
