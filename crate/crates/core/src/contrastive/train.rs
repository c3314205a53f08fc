use serde::{Deserialize, Serialize};

use super::encoder::{forward, EncoderConfig, EncoderParams};
use super::graph::Graph;
use super::ops::LossReport;
use super::optim::{AdamConfig, AdamState};
use super::standardize::Standardizer;
use super::tensor::Tensor;
use crate::augment::AugmentationSpec;
use crate::context::{PairSampler, PairSpec, SectionStack};
use crate::error::{Error, Result};
use crate::signal::{stack_channels, ParameterMaps};

// keeps the validation pair stream disjoint from the training stream
const VALIDATION_SALT: u64 = 0x76a1_1d47_e5ee_d5a1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Upper bound on optimizer steps.
    pub steps: usize,
    /// Pairs per batch (`2N` crops).
    pub batch_pairs: usize,
    pub temperature: f64,
    pub optimizer: AdamConfig,
    /// Steps between validation evaluations.
    pub epoch_steps: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub validation_batches: usize,
    pub standardize_batches: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_pairs: 64,
            temperature: 0.5,
            optimizer: AdamConfig::default(),
            epoch_steps: 100,
            patience: 50,
            validation_batches: 2,
            standardize_batches: 1024,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::invalid("temperature must be positive"));
        }
        if self.batch_pairs == 0 || self.epoch_steps == 0 {
            return Err(Error::invalid("batch size and epoch length must be positive"));
        }
        Ok(())
    }
}

/// Everything needed to resume training or embed new sections.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub encoder: EncoderConfig,
    pub params: EncoderParams,
    pub adam: AdamState,
    pub standardizer: Standardizer,
    pub config: TrainConfig,
}

impl TrainState {
    pub fn new(encoder: &EncoderConfig, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let params = EncoderParams::init(encoder, config.seed)?;
        Ok(Self {
            adam: AdamState::new(&params.tensors),
            standardizer: Standardizer::new(encoder.in_channels, config.standardize_batches),
            encoder: encoder.clone(),
            params,
            config: config.clone(),
        })
    }

    pub fn step(&self) -> u64 {
        self.adam.step
    }

    /// Forward, loss, backward and one Adam update on an unstandardized batch.
    pub fn train_step(&mut self, x: &Tensor, pairs: &[(usize, usize)]) -> Result<LossReport> {
        let x = self.standardizer.standardize(x)?;
        let mut graph = Graph::new();
        let fw = forward(&mut graph, &self.encoder, &self.params, x)?;
        let (loss, report) = graph.info_nce(fw.projection, pairs, self.config.temperature)?;
        let grads = graph.backward(loss)?;
        let grads: Vec<Tensor> = fw.params.iter().map(|v| grads.get(*v).clone()).collect();
        self.adam
            .step(&self.config.optimizer, &mut self.params.tensors, &grads)?;
        Ok(report)
    }

    /// Loss with frozen statistics and parameters.
    pub fn evaluate(&self, x: &Tensor, pairs: &[(usize, usize)]) -> Result<LossReport> {
        let x = self.standardizer.apply(x)?;
        let mut graph = Graph::new();
        let fw = forward(&mut graph, &self.encoder, &self.params, x)?;
        Ok(graph.info_nce(fw.projection, pairs, self.config.temperature)?.1)
    }
}

/// `[N, 3, H, W]` encoder input from square crops.
pub fn crops_to_tensor(crops: &[ParameterMaps]) -> Result<Tensor> {
    let Some(first) = crops.first() else {
        return Err(Error::invalid("no crops"));
    };
    let (h, w) = first.dims();
    let mut data = Vec::with_capacity(crops.len() * 3 * h * w);
    for c in crops {
        if c.dims() != (h, w) {
            return Err(Error::shape(
                format!("{w}x{h}"),
                format!("{}x{}", c.width(), c.height()),
            ));
        }
        for ch in stack_channels(c) {
            data.extend_from_slice(ch.as_slice());
        }
    }
    Tensor::from_vec(&[crops.len(), 3, h, w], data)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub state: TrainState,
    /// Training loss per step.
    pub losses: Vec<f64>,
    /// `(step, loss)` after each epoch.
    pub validation: Vec<(u64, f64)>,
    pub stopped_early: bool,
}

/// Contrastive training with early stopping on a held-out pair stream.
pub fn train(
    stack: &SectionStack,
    pairs: &PairSpec,
    augmentation: &AugmentationSpec,
    encoder: &EncoderConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with_progress(stack, pairs, augmentation, encoder, config, |_, _| {})
}

pub fn train_with_progress(
    stack: &SectionStack,
    pairs: &PairSpec,
    augmentation: &AugmentationSpec,
    encoder: &EncoderConfig,
    config: &TrainConfig,
    mut progress: impl FnMut(u64, f64),
) -> Result<TrainOutcome> {
    let sampler = PairSampler::new(stack, pairs.clone(), augmentation.clone())?;
    let val_pairs = PairSpec {
        seed: pairs.seed ^ VALIDATION_SALT,
        ..pairs.clone()
    };
    let val_sampler = PairSampler::new(stack, val_pairs, augmentation.clone())?;
    let validation_set = (0..config.validation_batches as u64)
        .map(|b| {
            let batch = val_sampler.batch(b, config.batch_pairs)?;
            Ok((crops_to_tensor(&batch.crops)?, batch.pairs))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut state = TrainState::new(encoder, config)?;
    let mut losses = Vec::with_capacity(config.steps);
    let mut validation = Vec::new();
    let mut best = f64::INFINITY;
    let mut stale = 0usize;
    let mut stopped_early = false;
    for step in 0..config.steps as u64 {
        let batch = sampler.batch(step, config.batch_pairs)?;
        let x = crops_to_tensor(&batch.crops)?;
        let report = state.train_step(&x, &batch.pairs)?;
        if !report.loss.is_finite() {
            return Err(Error::invalid(format!("loss diverged at step {step}")));
        }
        losses.push(report.loss);
        progress(step, report.loss);
        if (step + 1) % config.epoch_steps as u64 == 0 && !validation_set.is_empty() {
            let mut total = 0.0;
            for (x, p) in &validation_set {
                total += state.evaluate(x, p)?.loss;
            }
            let v = total / validation_set.len() as f64;
            validation.push((step + 1, v));
            if v < best {
                best = v;
                stale = 0;
            } else {
                stale += 1;
                if stale > config.patience {
                    stopped_early = true;
                    break;
                }
            }
        }
    }
    Ok(TrainOutcome {
        state,
        losses,
        validation,
        stopped_early,
    })
}
