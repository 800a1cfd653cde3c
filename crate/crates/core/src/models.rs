//! The three beam predictors: vision-only, position-only, and fused
//! vision-position.
//!
//! The vision model is a small learned encoder over scene-level visual
//! features followed by a classifier head. The fusion model reuses the
//! trained (frozen) encoder: its T-dim output is concatenated with the
//! normalized position to form the (T+2)-dim classifier input.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, NormStats, Sample};
use crate::error::{Error, Result};
use crate::nn::{self, EpochStats, Init, Mlp, Mode, TrainConfig};
use crate::phy::argmax;
use crate::scalar::Real;

/// Fixed concatenation order recorded in checkpoints: encoder features
/// first, then `[lat, lon]` normalized.
pub const FUSION_ORDER: &str = "features_then_position";

/// Architecture knobs not covered by [`TrainConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Encoder output dimension T.
    pub feature_dim: usize,
    /// Hidden width of the vision encoder's first layer.
    pub vision_hidden: usize,
    /// Hidden width of the position and fusion classifier MLPs.
    pub classifier_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            feature_dim: 64,
            vision_hidden: 64,
            classifier_hidden: 256,
        }
    }
}

/// Softmax output with sorted top-k access. `predicted_index` breaks ties
/// toward the lowest index.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<F = f64> {
    pub probabilities: Vec<F>,
}

impl<F: Real> Prediction<F> {
    pub fn from_logits(logits: &[F]) -> Self {
        Self {
            probabilities: nn::softmax(logits),
        }
    }

    pub fn predicted_index(&self) -> usize {
        argmax(&self.probabilities)
    }

    /// The `k` beam indices with the highest probability, descending.
    /// Probability ties resolve to the lower index first.
    pub fn top_k_indices(&self, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.probabilities.len()).collect();
        idx.sort_by(|&a, &b| {
            self.probabilities[b]
                .partial_cmp(&self.probabilities[a])
                .unwrap()
                .then(a.cmp(&b))
        });
        idx.truncate(k);
        idx
    }
}

/// Encoder (`[in, hidden, T]` with ReLU) plus classifier head (`[T, M]`),
/// held as one MLP; the penultimate activation is the feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct VisionModel<F = f64> {
    pub net: Mlp<F>,
    pub feature_dim: usize,
    pub norm: NormStats<F>,
    pub num_beams: usize,
}

/// `[2, 256, 256, M]` MLP over normalized latitude/longitude.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionModel<F = f64> {
    pub net: Mlp<F>,
    pub norm: NormStats<F>,
    pub num_beams: usize,
}

/// Frozen vision encoder plus a `[T+2, 256, 256, M]` classifier over the
/// fused vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel<F = f64> {
    pub extractor: Mlp<F>,
    pub classifier: Mlp<F>,
    pub feature_dim: usize,
    pub norm: NormStats<F>,
    pub num_beams: usize,
    pub fusion_order: String,
}

fn require_norm<'a, F: Real>(dataset: &'a Dataset<F>) -> Result<&'a NormStats<F>> {
    dataset
        .normalization
        .as_ref()
        .ok_or_else(|| Error::MissingPrerequisite("dataset has no fitted normalization stats".into()))
}

fn vision_inputs<F: Real>(dataset: &Dataset<F>, norm: &NormStats<F>) -> Result<Vec<(Vec<F>, usize)>> {
    dataset
        .samples
        .iter()
        .map(|s| Ok((norm.normalize_features(&s.features)?, s.label)))
        .collect()
}

fn position_inputs<F: Real>(dataset: &Dataset<F>, norm: &NormStats<F>) -> Vec<(Vec<F>, usize)> {
    dataset
        .samples
        .iter()
        .map(|s| (norm.normalize_position(&s.position).to_vec(), s.label))
        .collect()
}

/// Trains encoder + head jointly on `(visual features -> label)`.
pub fn train_vision<F: Real>(
    train: &Dataset<F>,
    val: &Dataset<F>,
    config: &TrainConfig<F>,
    model_config: &ModelConfig,
) -> Result<(VisionModel<F>, Vec<EpochStats<F>>)> {
    let norm = require_norm(train)?;
    let feat_dim = train
        .samples
        .first()
        .ok_or_else(|| Error::Config("training set is empty".into()))?
        .features
        .len();
    let dims = [
        feat_dim,
        model_config.vision_hidden,
        model_config.feature_dim,
        train.codebook_size,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let net = Mlp::new(&dims, config.dropout_rate, Init::HeNormal, &mut rng)?;
    let train_io = vision_inputs(train, norm)?;
    let val_io = vision_inputs(val, norm)?;
    let (net, history) = nn::train(net, &train_io, config, &val_io)?;
    Ok((
        VisionModel {
            net,
            feature_dim: model_config.feature_dim,
            norm: norm.clone(),
            num_beams: train.codebook_size,
        },
        history,
    ))
}

/// Trains the `[2, 256, 256, M]` position classifier.
pub fn train_position<F: Real>(
    train: &Dataset<F>,
    val: &Dataset<F>,
    config: &TrainConfig<F>,
    model_config: &ModelConfig,
) -> Result<(PositionModel<F>, Vec<EpochStats<F>>)> {
    let norm = require_norm(train)?;
    let dims = [
        2,
        model_config.classifier_hidden,
        model_config.classifier_hidden,
        train.codebook_size,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let net = Mlp::new(&dims, config.dropout_rate, Init::HeNormal, &mut rng)?;
    let train_io = position_inputs(train, norm);
    let val_io = position_inputs(val, norm);
    let (net, history) = nn::train(net, &train_io, config, &val_io)?;
    Ok((
        PositionModel {
            net,
            norm: norm.clone(),
            num_beams: train.codebook_size,
        },
        history,
    ))
}

impl<F: Real> VisionModel<F> {
    /// Deterministic T-dim encoder output (the penultimate activation,
    /// eval mode) for already-normalized visual features.
    pub fn extract_features(&self, normalized_features: &[F]) -> Result<Vec<F>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cache = self.net.forward(normalized_features, Mode::Eval, &mut rng)?;
        let hidden = self.net.layers.len() - 2;
        Ok(cache.hidden_activation(hidden).to_vec())
    }
}

/// Concatenates `[features; lat_n; lon_n]`.
pub fn fuse<F: Real>(features: &[F], position_normalized: [F; 2]) -> Vec<F> {
    let mut out = Vec::with_capacity(features.len() + 2);
    out.extend_from_slice(features);
    out.extend_from_slice(&position_normalized);
    out
}

fn fused_inputs<F: Real>(
    dataset: &Dataset<F>,
    vision: &VisionModel<F>,
    norm: &NormStats<F>,
) -> Result<Vec<(Vec<F>, usize)>> {
    dataset
        .samples
        .iter()
        .map(|s| {
            let feats = vision.extract_features(&norm.normalize_features(&s.features)?)?;
            Ok((fuse(&feats, norm.normalize_position(&s.position)), s.label))
        })
        .collect()
}

/// Trains the fusion classifier on `(T+2)`-dim fused vectors; the vision
/// encoder stays frozen.
pub fn train_fusion<F: Real>(
    train: &Dataset<F>,
    val: &Dataset<F>,
    vision: &VisionModel<F>,
    config: &TrainConfig<F>,
    model_config: &ModelConfig,
) -> Result<(FusionModel<F>, Vec<EpochStats<F>>)> {
    let norm = require_norm(train)?;
    let dims = [
        vision.feature_dim + 2,
        model_config.classifier_hidden,
        model_config.classifier_hidden,
        train.codebook_size,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let net = Mlp::new(&dims, config.dropout_rate, Init::HeNormal, &mut rng)?;
    let train_io = fused_inputs(train, vision, norm)?;
    let val_io = fused_inputs(val, vision, norm)?;
    let (classifier, history) = nn::train(net, &train_io, config, &val_io)?;
    Ok((
        FusionModel {
            extractor: vision.net.clone(),
            classifier,
            feature_dim: vision.feature_dim,
            norm: norm.clone(),
            num_beams: train.codebook_size,
            fusion_order: FUSION_ORDER.into(),
        },
        history,
    ))
}

/// A trained predictor mapping a raw sample to a beam probability
/// distribution. Inputs are normalized internally with the stats stored at
/// training time.
pub trait BeamPredictor<F: Real> {
    fn predict(&self, sample: &Sample<F>) -> Result<Prediction<F>>;
    fn num_beams(&self) -> usize;
}

impl<F: Real> BeamPredictor<F> for VisionModel<F> {
    fn predict(&self, sample: &Sample<F>) -> Result<Prediction<F>> {
        let input = self.norm.normalize_features(&sample.features)?;
        Ok(Prediction::from_logits(&self.net.forward_eval(&input)?))
    }

    fn num_beams(&self) -> usize {
        self.num_beams
    }
}

impl<F: Real> BeamPredictor<F> for PositionModel<F> {
    fn predict(&self, sample: &Sample<F>) -> Result<Prediction<F>> {
        let input = self.norm.normalize_position(&sample.position);
        Ok(Prediction::from_logits(&self.net.forward_eval(&input)?))
    }

    fn num_beams(&self) -> usize {
        self.num_beams
    }
}

impl<F: Real> BeamPredictor<F> for FusionModel<F> {
    fn predict(&self, sample: &Sample<F>) -> Result<Prediction<F>> {
        let feats = self.norm.normalize_features(&sample.features)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cache = self.extractor.forward(&feats, Mode::Eval, &mut rng)?;
        let encoded = cache.hidden_activation(self.extractor.layers.len() - 2).to_vec();
        let fused = fuse(&encoded, self.norm.normalize_position(&sample.position));
        Ok(Prediction::from_logits(&self.classifier.forward_eval(&fused)?))
    }

    fn num_beams(&self) -> usize {
        self.num_beams
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Vision,
    Position,
    Fusion,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ModelKind::Vision => "vision",
            ModelKind::Position => "position",
            ModelKind::Fusion => "fusion",
        };
        write!(f, "{s}")
    }
}

/// On-disk checkpoint: layer dims and row-major flattened weights for each
/// network, plus the normalization stats used at training time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint<F = f64> {
    pub model_kind: ModelKind,
    pub feature_dim: usize,
    pub fusion_order: String,
    pub num_beams: usize,
    pub dropout_rate: F,
    pub norm_stats: NormStats<F>,
    pub networks: Vec<CheckpointNet<F>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointNet<F = f64> {
    pub dims: Vec<usize>,
    pub weights: Vec<Vec<F>>,
    pub biases: Vec<Vec<F>>,
}

fn net_to_checkpoint<F: Real>(net: &Mlp<F>) -> CheckpointNet<F> {
    CheckpointNet {
        dims: net.dims.clone(),
        weights: net.layers.iter().map(|l| l.weights.clone()).collect(),
        biases: net.layers.iter().map(|l| l.biases.clone()).collect(),
    }
}

fn net_from_checkpoint<F: Real>(net: CheckpointNet<F>, dropout_rate: F) -> Result<Mlp<F>> {
    if net.weights.len() + 1 != net.dims.len() || net.biases.len() != net.weights.len() {
        return Err(Error::Dimension("checkpoint layer count mismatch".into()));
    }
    let mut layers = Vec::with_capacity(net.weights.len());
    for (l, (w, b)) in net.weights.into_iter().zip(net.biases).enumerate() {
        let (in_dim, out_dim) = (net.dims[l], net.dims[l + 1]);
        if w.len() != in_dim * out_dim || b.len() != out_dim {
            return Err(Error::Dimension(format!(
                "checkpoint layer {l} has {} weights and {} biases, expected {}x{}",
                w.len(),
                b.len(),
                out_dim,
                in_dim
            )));
        }
        layers.push(crate::nn::DenseLayer {
            in_dim,
            out_dim,
            weights: w,
            biases: b,
        });
    }
    Ok(Mlp {
        dims: net.dims,
        layers,
        dropout_rate,
    })
}

impl<F: Real> VisionModel<F> {
    pub fn to_checkpoint(&self) -> Checkpoint<F> {
        Checkpoint {
            model_kind: ModelKind::Vision,
            feature_dim: self.feature_dim,
            fusion_order: FUSION_ORDER.into(),
            num_beams: self.num_beams,
            dropout_rate: self.net.dropout_rate,
            norm_stats: self.norm.clone(),
            networks: vec![net_to_checkpoint(&self.net)],
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint<F>) -> Result<Self> {
        expect_kind(&ckpt, ModelKind::Vision, 1)?;
        let dropout = ckpt.dropout_rate;
        let mut nets = ckpt.networks;
        Ok(Self {
            net: net_from_checkpoint(nets.remove(0), dropout)?,
            feature_dim: ckpt.feature_dim,
            norm: ckpt.norm_stats,
            num_beams: ckpt.num_beams,
        })
    }
}

impl<F: Real> PositionModel<F> {
    pub fn to_checkpoint(&self) -> Checkpoint<F> {
        Checkpoint {
            model_kind: ModelKind::Position,
            feature_dim: 0,
            fusion_order: FUSION_ORDER.into(),
            num_beams: self.num_beams,
            dropout_rate: self.net.dropout_rate,
            norm_stats: self.norm.clone(),
            networks: vec![net_to_checkpoint(&self.net)],
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint<F>) -> Result<Self> {
        expect_kind(&ckpt, ModelKind::Position, 1)?;
        let dropout = ckpt.dropout_rate;
        let mut nets = ckpt.networks;
        Ok(Self {
            net: net_from_checkpoint(nets.remove(0), dropout)?,
            norm: ckpt.norm_stats,
            num_beams: ckpt.num_beams,
        })
    }
}

impl<F: Real> FusionModel<F> {
    pub fn to_checkpoint(&self) -> Checkpoint<F> {
        Checkpoint {
            model_kind: ModelKind::Fusion,
            feature_dim: self.feature_dim,
            fusion_order: self.fusion_order.clone(),
            num_beams: self.num_beams,
            dropout_rate: self.classifier.dropout_rate,
            norm_stats: self.norm.clone(),
            networks: vec![net_to_checkpoint(&self.extractor), net_to_checkpoint(&self.classifier)],
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint<F>) -> Result<Self> {
        expect_kind(&ckpt, ModelKind::Fusion, 2)?;
        if ckpt.fusion_order != FUSION_ORDER {
            return Err(Error::Config(format!(
                "unsupported fusion order {:?}",
                ckpt.fusion_order
            )));
        }
        let dropout = ckpt.dropout_rate;
        let mut nets = ckpt.networks;
        let extractor = net_from_checkpoint(nets.remove(0), dropout)?;
        let classifier = net_from_checkpoint(nets.remove(0), dropout)?;
        if classifier.input_dim() != ckpt.feature_dim + 2 {
            return Err(Error::Dimension(format!(
                "fusion classifier expects {} inputs, feature_dim is {}",
                classifier.input_dim(),
                ckpt.feature_dim
            )));
        }
        Ok(Self {
            extractor,
            classifier,
            feature_dim: ckpt.feature_dim,
            norm: ckpt.norm_stats,
            num_beams: ckpt.num_beams,
            fusion_order: ckpt.fusion_order,
        })
    }
}

fn expect_kind<F: Real>(ckpt: &Checkpoint<F>, kind: ModelKind, nets: usize) -> Result<()> {
    if ckpt.model_kind != kind {
        return Err(Error::Config(format!(
            "checkpoint is a {} model, expected {kind}",
            ckpt.model_kind
        )));
    }
    if ckpt.networks.len() != nets {
        return Err(Error::Dimension(format!(
            "checkpoint holds {} networks, expected {nets}",
            ckpt.networks.len()
        )));
    }
    Ok(())
}

impl<F: Real> Checkpoint<F> {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        let out = BufWriter::new(File::create(path)?);
        serde_json::to_writer(out, self)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let input = BufReader::new(File::open(path)?);
        Ok(serde_json::from_reader(input)?)
    }
}
