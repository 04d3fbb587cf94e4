use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{Checkpoint, TrainingMetadata};
use super::network::Model;
use crate::acquisition::{augment, AugmentParams, Sample, TsmiKind};
use crate::error::{domain, Result};
use crate::nn::{adam_step, mse_loss_with_grad, AdamConfig, AdamState, Mode, Tensor4};
use crate::subspace::SubspaceBasis;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// `None` disables augmentation.
    pub augment: Option<AugmentParams>,
    /// Anneal the learning rate per epoch along a half cosine to zero.
    pub cosine_decay: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 120,
            batch_size: 4,
            adam: AdamConfig {
                learning_rate: 3e-3,
                ..AdamConfig::default()
            },
            augment: Some(AugmentParams::default()),
            cosine_decay: true,
            seed: 0,
        }
    }
}

fn mix(a: u64, b: u64) -> u64 {
    let mut z = a
        .wrapping_add(b.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stacks compressed samples into network input, normalized targets and the
/// per-pixel loss mask.
pub fn batch_tensors(model: &Model, samples: &[&Sample]) -> Result<(Tensor4, Tensor4, Vec<bool>)> {
    let first = samples
        .first()
        .ok_or_else(|| crate::Error::Domain("empty batch".into()))?;
    let (h, w, c) = first.tsmi.dims();
    let n = samples.len();
    let scales = model.config.scales();
    let mut x = Tensor4::zeros(n, c, h, w);
    let mut y = Tensor4::zeros(n, 3, h, w);
    let mut mask = vec![false; n * h * w];
    for (b, s) in samples.iter().enumerate() {
        if s.tsmi.dims() != (h, w, c) || s.maps.dims() != (h, w) {
            return domain("all samples in a batch must share spatial size and channel count");
        }
        let plane = h * w;
        for i in 0..h {
            for j in 0..w {
                let p = i * w + j;
                for ch in 0..c {
                    x.data[(b * c + ch) * plane + p] = s.tsmi.data[(i, j, ch)];
                }
                if s.maps.mask[(i, j)] {
                    mask[b * plane + p] = true;
                    for (k, scale) in scales.iter().enumerate() {
                        y.data[(b * 3 + k) * plane + p] = s.maps.channel(k)[(i, j)] / scale;
                    }
                }
            }
        }
    }
    Ok((x, y, mask))
}

/// Stateful optimizer loop over a fixed basis.
pub struct Trainer<'a> {
    pub model: Model,
    pub optimizer: AdamState,
    basis: &'a SubspaceBasis,
    config: TrainConfig,
    step: u64,
}

impl<'a> Trainer<'a> {
    pub fn new(model: Model, basis: &'a SubspaceBasis, config: TrainConfig) -> Result<Self> {
        if basis.d1() != model.config.input_channels {
            return domain(format!(
                "basis has {} components but the model expects {} channels",
                basis.d1(),
                model.config.input_channels
            ));
        }
        if config.batch_size == 0 {
            return domain("batch size must be positive");
        }
        let sizes: Vec<usize> = model.params().iter().map(|p| p.values.len()).collect();
        let optimizer = AdamState::new(config.adam, &sizes);
        Ok(Self {
            model,
            optimizer,
            basis,
            config,
            step: 0,
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    fn check(&self, s: &Sample) -> Result<()> {
        if s.tsmi.kind != TsmiKind::Compressed || s.tsmi.frames() != self.basis.d1() {
            return domain(format!(
                "training samples must be TSMI compressed to {} coefficients with the checkpoint basis",
                self.basis.d1()
            ));
        }
        Ok(())
    }

    /// One Adam update on `batch`; returns the pre-update training loss.
    pub fn step(&mut self, batch: &[&Sample]) -> Result<f64> {
        for s in batch {
            self.check(s)?;
        }
        let step_seed = mix(self.config.seed, self.step);
        let augmented: Vec<Sample>;
        let batch: Vec<&Sample> = match &self.config.augment {
            Some(params) => {
                augmented = batch
                    .iter()
                    .enumerate()
                    .map(|(k, s)| augment(s, params, mix(step_seed, k as u64 + 1)))
                    .collect::<Result<_>>()?;
                augmented.iter().collect()
            }
            None => batch.to_vec(),
        };
        let (x, y, mask) = batch_tensors(&self.model, &batch)?;
        let (pred, cache) = self.model.forward_train(&x, Mode::Train, step_seed)?;
        let (loss, grad) = mse_loss_with_grad(&pred, &y, &mask)?;
        let (grads, _) = self.model.backward(&cache, &grad)?;
        let g: Vec<&[f64]> = grads.params().into_iter().map(|p| p.values).collect();
        adam_step(&mut self.model.params_mut(), &g, &mut self.optimizer)?;
        self.step += 1;
        Ok(loss)
    }
}

/// Mean eval-mode masked loss over `samples`.
pub fn evaluate_loss(model: &Model, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return domain("no samples to evaluate");
    }
    let mut total = 0.0;
    for s in samples {
        let (x, y, mask) = batch_tensors(model, &[s])?;
        let pred = model.predict(&x)?;
        total += mse_loss_with_grad(&pred, &y, &mask)?.0;
    }
    Ok(total / samples.len() as f64)
}

/// Trains on compressed samples with the basis held fixed. Each epoch visits
/// the training set once in a seeded random order.
pub fn train(
    model: Model,
    basis: &SubspaceBasis,
    train_set: &[Sample],
    validation: &[Sample],
    config: &TrainConfig,
) -> Result<Checkpoint> {
    if train_set.is_empty() {
        return domain("training set is empty");
    }
    let mut trainer = Trainer::new(model, basis, config.clone())?;
    for s in validation {
        trainer.check(s)?;
    }
    let mut train_loss = Vec::with_capacity(config.epochs);
    let mut val_loss = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..config.epochs {
        if config.cosine_decay {
            let progress = epoch as f64 / config.epochs as f64;
            trainer.optimizer.config.learning_rate =
                config.adam.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix(config.seed ^ 0x5EED, epoch as u64));
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train_set[i]).collect();
            sum += trainer.step(&batch)?;
            batches += 1;
        }
        train_loss.push(sum / batches as f64);
        val_loss.push(if validation.is_empty() {
            f64::NAN
        } else {
            evaluate_loss(&trainer.model, validation)?
        });
    }
    Ok(Checkpoint {
        model: trainer.model,
        basis: basis.clone(),
        metadata: TrainingMetadata {
            epochs: config.epochs,
            seed: config.seed,
            steps: trainer.step,
            train_loss,
            val_loss,
        },
        optimizer: Some(trainer.optimizer),
    })
}
