//! Minimal feed-forward network with hand-derived gradients: dense layers,
//! ReLU, inverted dropout, softmax cross-entropy, Adam, and step
//! learning-rate decay.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy::argmax;
use crate::scalar::Real;

/// Weights are row-major `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer<F = f64> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<F>,
    pub biases: Vec<F>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Init {
    /// Zero-mean normal with std `sqrt(2 / fan_in)`.
    HeNormal,
    /// Zero-mean unit-variance normal.
    UnitNormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Feed-forward classifier: dense -> ReLU -> dropout on every hidden
/// layer, a plain dense output layer, softmax applied by the loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp<F = f64> {
    pub dims: Vec<usize>,
    pub layers: Vec<DenseLayer<F>>,
    pub dropout_rate: F,
}

impl<F: Real> Mlp<F> {
    pub fn new(dims: &[usize], dropout_rate: F, init: Init, rng: &mut impl Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config("an MLP needs at least input and output dims".into()));
        }
        if dropout_rate < F::zero() || dropout_rate >= F::one() {
            return Err(Error::Config("dropout_rate must be in [0, 1)".into()));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let std = match init {
                Init::HeNormal => (2.0 / fan_in as f64).sqrt(),
                Init::UnitNormal => 1.0,
            };
            let weights = (0..fan_in * fan_out)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    F::of(z * std)
                })
                .collect();
            layers.push(DenseLayer {
                in_dim: fan_in,
                out_dim: fan_out,
                weights,
                biases: vec![F::zero(); fan_out],
            });
        }
        Ok(Self {
            dims: dims.to_vec(),
            layers,
            dropout_rate,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    /// One forward pass. In train mode hidden activations are dropped with
    /// probability `dropout_rate` and survivors scaled by `1/(1-rate)`
    /// (inverted dropout); eval mode is deterministic.
    pub fn forward(&self, input: &[F], mode: Mode, rng: &mut impl Rng) -> Result<ForwardCache<F>> {
        if input.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input has {} elements, expected {}",
                input.len(),
                self.input_dim()
            )));
        }
        let n_layers = self.layers.len();
        let mut activations = Vec::with_capacity(n_layers + 1);
        activations.push(input.to_vec());
        let mut masks: Vec<Option<Vec<F>>> = Vec::with_capacity(n_layers);
        let keep_scale = F::one() / (F::one() - self.dropout_rate);
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = affine(layer, activations.last().unwrap());
            let last = l + 1 == n_layers;
            if last {
                masks.push(None);
            } else {
                for v in z.iter_mut() {
                    *v = v.max(F::zero());
                }
                if mode == Mode::Train && self.dropout_rate > F::zero() {
                    let mask: Vec<F> = z
                        .iter()
                        .map(|_| {
                            if F::of(rng.gen::<f64>()) < self.dropout_rate {
                                F::zero()
                            } else {
                                keep_scale
                            }
                        })
                        .collect();
                    for (v, m) in z.iter_mut().zip(&mask) {
                        *v = *v * *m;
                    }
                    masks.push(Some(mask));
                } else {
                    masks.push(None);
                }
            }
            activations.push(z);
        }
        Ok(ForwardCache { activations, masks })
    }

    /// Deterministic logits (eval mode, no dropout).
    pub fn forward_eval(&self, input: &[F]) -> Result<Vec<F>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(self.forward(input, Mode::Eval, &mut rng)?.into_logits())
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }
}

fn affine<F: Real>(layer: &DenseLayer<F>, input: &[F]) -> Vec<F> {
    let mut out = Vec::with_capacity(layer.out_dim);
    for o in 0..layer.out_dim {
        let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
        let mut acc = layer.biases[o];
        for (w, x) in row.iter().zip(input) {
            acc += *w * *x;
        }
        out.push(acc);
    }
    out
}

/// Activations and dropout masks from one forward pass.
/// `activations[0]` is the input; `activations[k]` the output of layer
/// `k-1` (post-ReLU/dropout for hidden layers, raw logits for the last).
#[derive(Debug, Clone)]
pub struct ForwardCache<F = f64> {
    pub activations: Vec<Vec<F>>,
    pub masks: Vec<Option<Vec<F>>>,
}

impl<F: Real> ForwardCache<F> {
    pub fn logits(&self) -> &[F] {
        self.activations.last().unwrap()
    }

    pub fn into_logits(mut self) -> Vec<F> {
        self.activations.pop().unwrap()
    }

    /// Post-activation output of hidden layer `idx` (0-based).
    pub fn hidden_activation(&self, idx: usize) -> &[F] {
        &self.activations[idx + 1]
    }
}

/// Numerically stable softmax: shifts by the max logit before
/// exponentiating.
pub fn softmax<F: Real>(logits: &[F]) -> Vec<F> {
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let exps: Vec<F> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: F = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-ln(p_label + 1e-12)`.
pub fn cross_entropy<F: Real>(probabilities: &[F], label: usize) -> Result<F> {
    if label >= probabilities.len() {
        return Err(Error::Dimension(format!(
            "label {label} out of range for {} classes",
            probabilities.len()
        )));
    }
    Ok(-(probabilities[label] + F::of(1e-12)).ln())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad<F = f64> {
    pub d_weights: Vec<F>,
    pub d_biases: Vec<F>,
}

pub type Gradients<F> = Vec<LayerGrad<F>>;

/// Analytic gradients of `cross_entropy(softmax(forward(x)), label)` with
/// respect to all weights and biases, replaying the cached dropout masks.
pub fn backward<F: Real>(mlp: &Mlp<F>, cache: &ForwardCache<F>, label: usize) -> Result<Gradients<F>> {
    let n_layers = mlp.layers.len();
    if cache.activations.len() != n_layers + 1 || cache.masks.len() != n_layers {
        return Err(Error::Dimension("forward cache does not match the model".into()));
    }
    if label >= mlp.output_dim() {
        return Err(Error::Dimension(format!("label {label} out of range")));
    }
    // softmax + cross-entropy collapse to p - onehot at the logits
    let mut delta = softmax(cache.logits());
    delta[label] -= F::one();

    let mut grads: Vec<LayerGrad<F>> = Vec::with_capacity(n_layers);
    for l in (0..n_layers).rev() {
        let layer = &mlp.layers[l];
        let input = &cache.activations[l];
        let mut dw = vec![F::zero(); layer.weights.len()];
        for o in 0..layer.out_dim {
            let d = delta[o];
            let row = &mut dw[o * layer.in_dim..(o + 1) * layer.in_dim];
            for (g, x) in row.iter_mut().zip(input) {
                *g = d * *x;
            }
        }
        let db = delta.clone();
        if l > 0 {
            // propagate through W^T, then the previous layer's
            // ReLU/dropout (post-activation > 0 iff pre-activation > 0)
            let mut prev = vec![F::zero(); layer.in_dim];
            for o in 0..layer.out_dim {
                let d = delta[o];
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * *w;
                }
            }
            let act = &cache.activations[l];
            for (p, a) in prev.iter_mut().zip(act) {
                if *a <= F::zero() {
                    *p = F::zero();
                }
            }
            if let Some(mask) = &cache.masks[l - 1] {
                for (p, m) in prev.iter_mut().zip(mask) {
                    *p = *p * *m;
                }
            }
            delta = prev;
        }
        grads.push(LayerGrad {
            d_weights: dw,
            d_biases: db,
        });
    }
    grads.reverse();
    Ok(grads)
}

fn zero_grads<F: Real>(mlp: &Mlp<F>) -> Gradients<F> {
    mlp.layers
        .iter()
        .map(|l| LayerGrad {
            d_weights: vec![F::zero(); l.weights.len()],
            d_biases: vec![F::zero(); l.biases.len()],
        })
        .collect()
}

fn accumulate<F: Real>(acc: &mut Gradients<F>, g: &Gradients<F>) {
    for (a, b) in acc.iter_mut().zip(g) {
        for (x, y) in a.d_weights.iter_mut().zip(&b.d_weights) {
            *x += *y;
        }
        for (x, y) in a.d_biases.iter_mut().zip(&b.d_biases) {
            *x += *y;
        }
    }
}

fn scale_grads<F: Real>(acc: &mut Gradients<F>, s: F) {
    for a in acc.iter_mut() {
        for x in a.d_weights.iter_mut() {
            *x *= s;
        }
        for x in a.d_biases.iter_mut() {
            *x *= s;
        }
    }
}

/// First/second moment estimates and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F = f64> {
    pub step: u64,
    pub m: Vec<LayerGrad<F>>,
    pub v: Vec<LayerGrad<F>>,
}

impl<F: Real> AdamState<F> {
    pub fn new(mlp: &Mlp<F>) -> Self {
        Self {
            step: 0,
            m: zero_grads(mlp),
            v: zero_grads(mlp),
        }
    }
}

/// Standard Adam update with bias correction.
pub fn adam_step<F: Real>(
    mlp: &mut Mlp<F>,
    grads: &Gradients<F>,
    state: &mut AdamState<F>,
    lr: F,
    beta1: F,
    beta2: F,
    epsilon: F,
) -> Result<()> {
    if grads.len() != mlp.layers.len() {
        return Err(Error::Dimension("gradient/model layer count mismatch".into()));
    }
    state.step += 1;
    let t = F::of(state.step as f64);
    let bc1 = F::one() - beta1.powf(t);
    let bc2 = F::one() - beta2.powf(t);
    for (l, layer) in mlp.layers.iter_mut().enumerate() {
        let g = &grads[l];
        if g.d_weights.len() != layer.weights.len() || g.d_biases.len() != layer.biases.len() {
            return Err(Error::Dimension("gradient/model shape mismatch".into()));
        }
        let update = |p: &mut [F], g: &[F], m: &mut [F], v: &mut [F]| {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (F::one() - beta1) * g[i];
                v[i] = beta2 * v[i] + (F::one() - beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        };
        update(
            &mut layer.weights,
            &g.d_weights,
            &mut state.m[l].d_weights,
            &mut state.v[l].d_weights,
        );
        update(
            &mut layer.biases,
            &g.d_biases,
            &mut state.m[l].d_biases,
            &mut state.v[l].d_biases,
        );
    }
    Ok(())
}

/// Training hyperparameters. Defaults: batch 32, lr 1e-2 decayed by 0.1
/// after epochs 20 and 40, dropout 0.3, 50 epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound(deserialize = "F: crate::scalar::Real"))]
pub struct TrainConfig<F = f64> {
    pub batch_size: usize,
    pub learning_rate: F,
    pub decay_epochs: Vec<usize>,
    pub decay_factor: F,
    pub dropout_rate: F,
    pub total_epochs: usize,
    pub adam_beta1: F,
    pub adam_beta2: F,
    pub adam_epsilon: F,
    pub rng_seed: u64,
}

impl<F: Real> Default for TrainConfig<F> {
    fn default() -> Self {
        Self {
            batch_size: 32,
            learning_rate: F::of(1e-2),
            decay_epochs: vec![20, 40],
            decay_factor: F::of(0.1),
            dropout_rate: F::of(0.3),
            total_epochs: 50,
            adam_beta1: F::of(0.9),
            adam_beta2: F::of(0.999),
            adam_epsilon: F::of(1e-8),
            rng_seed: 0,
        }
    }
}

impl<F: Real> TrainConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.decay_factor <= F::zero() || self.decay_factor > F::one() {
            return Err(Error::Config("decay_factor must be in (0, 1]".into()));
        }
        if self.dropout_rate < F::zero() || self.dropout_rate >= F::one() {
            return Err(Error::Config("dropout_rate must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Learning rate for a 1-indexed epoch: the base rate multiplied by
    /// `decay_factor` once for every configured boundary already passed
    /// (decay at epoch `k` takes effect from epoch `k+1` on).
    pub fn lr_at_epoch(&self, epoch: usize) -> F {
        let n = self.decay_epochs.iter().filter(|&&k| epoch > k).count();
        self.learning_rate * self.decay_factor.powi(n as i32)
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats<F = f64> {
    pub epoch: usize,
    pub learning_rate: F,
    pub train_loss: F,
    pub val_top1: F,
}

/// Mini-batch training with per-epoch seeded shuffling. Returns the
/// last-epoch model and the per-epoch history. Bit-deterministic given
/// `(config, dataset)`.
pub fn train<F: Real>(
    mut mlp: Mlp<F>,
    train_set: &[(Vec<F>, usize)],
    config: &TrainConfig<F>,
    val_set: &[(Vec<F>, usize)],
) -> Result<(Mlp<F>, Vec<EpochStats<F>>)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    mlp.dropout_rate = config.dropout_rate;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut state = AdamState::new(&mlp);
    let mut history = Vec::with_capacity(config.total_epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=config.total_epochs {
        let lr = config.lr_at_epoch(epoch);
        order.shuffle(&mut rng);
        let mut epoch_loss = F::zero();
        for batch in order.chunks(config.batch_size) {
            let mut grads = zero_grads(&mlp);
            let mut batch_loss = F::zero();
            for &i in batch {
                let (input, label) = &train_set[i];
                let cache = mlp.forward(input, Mode::Train, &mut rng)?;
                let probs = softmax(cache.logits());
                batch_loss += cross_entropy(&probs, *label)?;
                let g = backward(&mlp, &cache, *label)?;
                accumulate(&mut grads, &g);
            }
            let inv = F::one() / F::of(batch.len() as f64);
            scale_grads(&mut grads, inv);
            epoch_loss += batch_loss;
            adam_step(
                &mut mlp,
                &grads,
                &mut state,
                lr,
                config.adam_beta1,
                config.adam_beta2,
                config.adam_epsilon,
            )?;
        }
        let train_loss = epoch_loss / F::of(train_set.len() as f64);
        let val_top1 = if val_set.is_empty() {
            F::zero()
        } else {
            let mut hits = 0usize;
            for (input, label) in val_set {
                let logits = mlp.forward_eval(input)?;
                if argmax(&logits) == *label {
                    hits += 1;
                }
            }
            F::of(hits as f64 / val_set.len() as f64)
        };
        history.push(EpochStats {
            epoch,
            learning_rate: lr,
            train_loss,
            val_top1,
        });
    }
    Ok((mlp, history))
}
