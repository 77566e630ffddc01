//! Adam training with multi-step learning-rate decay, evaluation and the
//! ablation harness.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{extract_patch, Normalization, PatchTriple, Pixel, SampleSplit, Scene};
use crate::error::{invalid, Error, Result};
use crate::metrics::{ConfusionMatrix, Metrics};
use crate::model::{argmax, ModelConfig, ModuleSet, S2Fin};
use crate::params::ModelParams;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub lr_milestones: Vec<usize>,
    pub lr_gamma: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub embed_dim: usize,
    pub alpha: f64,
    pub window: usize,
    pub samples_per_class: usize,
    pub seed: u64,
    pub f_cutoff_init: f64,
    pub g_amp_init: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            weight_decay: 4e-4,
            lr_milestones: vec![160, 240],
            lr_gamma: 0.5,
            epochs: 320,
            batch_size: 64,
            embed_dim: 64,
            alpha: 0.2,
            window: 11,
            samples_per_class: 10,
            seed: 0,
            f_cutoff_init: 0.5,
            g_amp_init: 0.05,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !(self.lr_gamma > 0.0) || self.weight_decay < 0.0 {
            return Err(invalid("train config: learning rate and gamma must be positive"));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.samples_per_class == 0 || self.embed_dim == 0 {
            return Err(invalid("train config: epochs, batch size, samples and embed dim must be positive"));
        }
        if self.window % 2 == 0 {
            return Err(invalid(alloc::format!("train config: window {} must be odd", self.window)));
        }
        Ok(())
    }

    /// Model configuration for a scene with the given raster shape.
    pub fn model_config(&self, scene: &Scene) -> ModelConfig {
        let mut cfg = ModelConfig::new(
            scene.spectral_bands,
            scene.active_channels,
            scene.class_count,
            self.window,
        );
        cfg.embed_dim = self.embed_dim;
        cfg.alpha = self.alpha;
        cfg.f_cutoff_init = self.f_cutoff_init;
        cfg.g_amp_init = self.g_amp_init;
        cfg
    }
}

/// Step decay: `lr = base · γ^{#milestones ≤ epoch}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiStepLr {
    pub base: f64,
    pub milestones: Vec<usize>,
    pub gamma: f64,
}

impl MultiStepLr {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let passed = self.milestones.iter().filter(|&&m| m <= epoch).count();
        let mut lr = self.base;
        for _ in 0..passed {
            lr *= self.gamma;
        }
        lr
    }
}

/// Adam with L2 weight decay folded into the gradient.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &ModelParams, weight_decay: f64) -> Self {
        let zeros = |p: &ModelParams| p.leaves().iter().map(|l| vec![0.0; l.value.len()]).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: zeros(params),
            v: zeros(params),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients stored in `params`.
    pub fn step(&mut self, params: &mut ModelParams, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - libm::pow(self.beta1, t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, t as f64);
        for (i, leaf) in params.leaves_mut().iter_mut().enumerate() {
            if !leaf.trainable {
                continue;
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let grad = leaf.grad.data();
            let value = leaf.value.data_mut();
            for j in 0..value.len() {
                let g = grad[j] + self.weight_decay * value[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                let mh = m[j] / bc1;
                let vh = v[j] / bc2;
                value[j] -= lr * mh / (libm::sqrt(vh) + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

/// Mini-batch trainer over a fixed model.
pub struct Trainer<'m> {
    pub model: &'m S2Fin,
    pub optimizer: Adam,
    pub schedule: MultiStepLr,
    rng: ChaCha8Rng,
}

impl<'m> Trainer<'m> {
    pub fn new(model: &'m S2Fin, params: &ModelParams, config: &TrainConfig) -> Self {
        Self {
            model,
            optimizer: Adam::new(params, config.weight_decay),
            schedule: MultiStepLr {
                base: config.learning_rate,
                milestones: config.lr_milestones.clone(),
                gamma: config.lr_gamma,
            },
            rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0f5a_3e1e_u64),
        }
    }

    /// One optimizer step on the mean loss of `batch`. Returns the summed
    /// loss and the number of correct predictions.
    pub fn step(&mut self, params: &mut ModelParams, batch: &[&PatchTriple], lr: f64, epoch: usize) -> Result<(f64, usize)> {
        params.zero_grads();
        let scale = 1.0 / batch.len() as f64;
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for patch in batch {
            let (loss, logits, grads) = self.model.loss_and_grad(params, patch)?;
            if !loss.is_finite() {
                return Err(first_non_finite(params, &grads).unwrap_or(Error::NonFiniteLoss { epoch }));
            }
            if let Some(err) = first_non_finite(params, &grads) {
                return Err(err);
            }
            loss_sum += loss;
            if Some(argmax(&logits)) == patch.label {
                correct += 1;
            }
            params.accumulate_grads(&grads, scale);
        }
        self.optimizer.step(params, lr);
        self.model.project_params(params);
        Ok((loss_sum, correct))
    }

    pub fn run_epoch(&mut self, params: &mut ModelParams, train_set: &[PatchTriple], epoch: usize, batch_size: usize) -> Result<EpochRecord> {
        let lr = self.schedule.lr_at(epoch);
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut self.rng);
        let mut loss = 0.0;
        let mut correct = 0;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<&PatchTriple> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (l, c) = self.step(params, &batch, lr, epoch)?;
            loss += l;
            correct += c;
        }
        Ok(EpochRecord {
            epoch,
            loss: loss / train_set.len() as f64,
            train_accuracy: correct as f64 / train_set.len() as f64,
            learning_rate: lr,
        })
    }
}

fn first_non_finite(params: &ModelParams, grads: &[Vec<f64>]) -> Option<Error> {
    params
        .leaves()
        .iter()
        .zip(grads)
        .find(|(_, g)| g.iter().any(|v| !v.is_finite()))
        .map(|(leaf, _)| Error::NonFiniteGradient { path: leaf.path.clone() })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: S2Fin,
    pub params: ModelParams,
    pub history: History,
}

/// Initializes a model from `model_config` and trains it on `train_set`.
pub fn train(train_set: &[PatchTriple], model_config: ModelConfig, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(invalid("train: empty training set"));
    }
    let mut seen = vec![false; model_config.classes];
    for p in train_set {
        match p.label {
            Some(l) if l < model_config.classes => seen[l] = true,
            _ => return Err(invalid("train: every training patch needs a valid label")),
        }
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        return Err(Error::InsufficientSamples {
            class: (k + 1) as u16,
            available: 0,
            requested: 1,
        });
    }
    let (model, mut params) = S2Fin::new(model_config, config.seed)?;
    let mut history = History::default();
    {
        let mut trainer = Trainer::new(&model, &params, config);
        for epoch in 0..config.epochs {
            let record = trainer.run_epoch(&mut params, train_set, epoch, config.batch_size)?;
            history.epochs.push(record);
        }
    }
    Ok(TrainOutcome { model, params, history })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
}

/// Confusion matrix and metrics over labeled patches.
pub fn evaluate(model: &S2Fin, params: &ModelParams, eval_set: &[PatchTriple]) -> Result<Evaluation> {
    let mut confusion = ConfusionMatrix::new(model.config.classes);
    for patch in eval_set {
        let label = patch.label.ok_or_else(|| invalid("evaluate: unlabeled patch"))?;
        confusion.record(label, model.predict(params, patch)?);
    }
    finish(confusion)
}

/// Same as [`evaluate`] but extracts each patch from the scene on demand.
pub fn evaluate_pixels(model: &S2Fin, params: &ModelParams, scene: &Scene, pixels: &[Pixel]) -> Result<Evaluation> {
    let mut confusion = ConfusionMatrix::new(model.config.classes);
    for px in pixels {
        let patch = extract_patch(scene, px.row, px.col, model.config.window)?;
        confusion.record(px.class, model.predict(params, &patch)?);
    }
    finish(confusion)
}

fn finish(confusion: ConfusionMatrix) -> Result<Evaluation> {
    if confusion.total() == 0 {
        return Err(invalid("evaluate: empty evaluation set"));
    }
    let metrics = confusion.metrics();
    Ok(Evaluation { confusion, metrics })
}

#[derive(Debug, Clone)]
pub struct AblationResult {
    pub disabled: ModuleSet,
    pub parameter_count: usize,
    pub history: History,
    pub evaluation: Evaluation,
}

/// Standardizes the scene, then trains and evaluates a variant with the
/// `disabled` modules replaced by identity pass-through.
pub fn ablation_run(scene: &Scene, split: &SampleSplit, config: &TrainConfig, disabled: ModuleSet) -> Result<AblationResult> {
    let mut model_config = config.model_config(scene);
    model_config.disabled = disabled;
    let scene = Normalization::fit(scene).apply(scene)?;
    let train_set = crate::data::extract_patches(&scene, &split.train, config.window)?;
    let outcome = train(&train_set, model_config, config)?;
    let evaluation = evaluate_pixels(&outcome.model, &outcome.params, &scene, &split.eval)?;
    Ok(AblationResult {
        disabled,
        parameter_count: outcome.params.trainable_count(),
        history: outcome.history,
        evaluation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multistep_halves_at_each_milestone() {
        let s = MultiStepLr {
            base: 5e-4,
            milestones: vec![160, 240],
            gamma: 0.5,
        };
        assert_eq!(s.lr_at(0), 5e-4);
        assert_eq!(s.lr_at(159), 5e-4);
        assert_eq!(s.lr_at(160), 2.5e-4);
        assert_eq!(s.lr_at(239), 2.5e-4);
        assert_eq!(s.lr_at(240), 1.25e-4);
        assert_eq!(s.lr_at(319), 1.25e-4);
    }
}
