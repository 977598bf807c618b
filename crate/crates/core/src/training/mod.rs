//! Optimisation with random-length sampling and augmentation, plus the
//! subject-id protocol splits.

mod adam;
mod split;

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{evaluate, LengthMode};
use crate::model::FsaModel;
use crate::numerics::{Graph, Tensor};
use crate::skeleton::{augment, sample_length, AugmentConfig, BoneTopology, Corpus, SkeletonSequence};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use split::{split_cross_age, split_cross_subject, CrossAgeSplits, SplitSpec, ADULT_IDS, ELDERLY_IDS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Inclusive range the per-sample training length is drawn from.
    pub length_range: (usize, usize),
    pub augment: AugmentConfig,
    pub seed: u64,
    /// Rescale the batch gradient to at most this global L2 norm.
    pub clip_norm: Option<f64>,
    /// Evaluate on the split's test side after every epoch.
    pub eval_each_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 16,
            adam: AdamConfig::default(),
            length_range: (32, 128),
            augment: AugmentConfig::default(),
            seed: 0,
            clip_norm: Some(1.0),
            eval_each_epoch: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.length_range;
        if lo < 2 || lo > hi {
            return Err(Error::config(format!("length range must satisfy 2 <= {lo} <= {hi}")));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch size must be positive"));
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::config("clip norm must be positive"));
        }
        self.adam.validate()?;
        self.augment.validate()
    }
}

/// Uniform draw from the configured length range.
pub fn draw_length(cfg: &TrainConfig, rng: &mut impl Rng) -> usize {
    rng.random_range(cfg.length_range.0..=cfg.length_range.1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_acc: Option<f64>,
    pub wall_seconds: f64,
    pub skipped: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: FsaModel,
    pub history: Vec<EpochRecord>,
}

/// Tab-separated history, one row per epoch after the header.
pub fn format_history(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch\ttrain_loss\ttest_acc\twall_seconds\n");
    for r in history {
        let acc = r.test_acc.map_or_else(|| "-".to_string(), |a| format!("{a:.6}"));
        let _ = writeln!(out, "{}\t{:.6}\t{}\t{:.3}", r.epoch, r.train_loss, acc, r.wall_seconds);
    }
    out
}

/// Preconditions a training sample may legitimately fail.
pub(crate) fn is_length_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::BelowMinimumLength { .. }
            | Error::SequenceTooShort { .. }
            | Error::ShorterThanGap { .. }
            | Error::Degenerate(_)
    )
}

/// Loss and parameter gradients for one sample, or `None` when skipped.
pub fn sample_gradient(
    model: &FsaModel,
    seq: &SkeletonSequence,
    label: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Option<(f64, Vec<Tensor>)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let length = draw_length(cfg, &mut rng);
    let sampled = sample_length(seq, length, &mut rng)?;
    let aug_cfg = if seq.dims() == 3 {
        cfg.augment
    } else {
        AugmentConfig {
            rotation_deg: 0.0,
            ..cfg.augment
        }
    };
    let topo = BoneTopology::kinect_bodies(seq.bodies());
    let augmented = augment(&sampled, &aug_cfg, &topo, &mut rng)?;
    let input = match model.config.prepare(&augmented) {
        Ok(i) => i,
        Err(e) if is_length_failure(&e) => return Ok(None),
        Err(e) => return Err(e),
    };
    let mut g = Graph::new();
    let nodes = model.insert(&mut g);
    let out = model.forward_graph(&mut g, &nodes, &input)?;
    let loss = g.softmax_cross_entropy(out.logits, label)?;
    let grads = g.backward(loss)?;
    let per_param = nodes
        .ids()
        .into_iter()
        .zip(model.params())
        .map(|(id, p)| grads.get(id).cloned().unwrap_or_else(|| Tensor::zeros_like(p)))
        .collect();
    Ok(Some((g.value(loss).data()[0], per_param)))
}

/// Scales `grads` down so their joint L2 norm is at most `max_norm`.
pub fn clip_global_norm(grads: Vec<Tensor>, max_norm: f64) -> Vec<Tensor> {
    let norm = grads
        .iter()
        .flat_map(|g| g.data())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm <= max_norm || !norm.is_finite() {
        return grads;
    }
    let f = max_norm / norm;
    grads.into_iter().map(|g| g.map(|v| v * f)).collect()
}

/// Averages per-sample losses and gradients in sample order.
fn reduce(results: Vec<Option<(f64, Vec<Tensor>)>>, params: &[&Tensor]) -> Result<Option<(f64, Vec<Tensor>, usize)>> {
    let mut sums: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.len()]).collect();
    let mut loss = 0.0;
    let mut used = 0;
    for (l, grads) in results.into_iter().flatten() {
        loss += l;
        used += 1;
        for (acc, g) in sums.iter_mut().zip(&grads) {
            for (a, v) in acc.iter_mut().zip(g.data()) {
                *a += v;
            }
        }
    }
    if used == 0 {
        return Ok(None);
    }
    let n = used as f64;
    let grads = sums
        .into_iter()
        .zip(params)
        .map(|(s, p)| Tensor::new(p.shape().to_vec(), s.into_iter().map(|v| v / n).collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Some((loss / n, grads, used)))
}

/// Trains on the split's train subjects; `on_epoch` sees every record as it
/// is produced.
pub fn train_with(
    model: &FsaModel,
    corpus: &Corpus,
    split: &SplitSpec,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n_classes = model.config.n_classes;
    let samples: Vec<(&SkeletonSequence, usize)> = corpus
        .subset(&split.train)
        .map(|(e, s)| (s, e.action))
        .collect();
    if samples.is_empty() {
        return Err(Error::EmptyDataset("no training sequences in split".into()));
    }
    if let Some(&(_, label)) = samples.iter().find(|(_, l)| *l >= n_classes) {
        return Err(Error::LabelOutOfRange {
            label,
            classes: n_classes,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = model.clone();
    let mut state = AdamState::new(model.params());
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let start = Instant::now();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut used, mut skipped) = (0.0, 0usize, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let seeded: Vec<(usize, u64)> = batch.iter().map(|&i| (i, rng.random())).collect();
            let results = seeded
                .par_iter()
                .map(|&(i, seed)| sample_gradient(&model, samples[i].0, samples[i].1, cfg, seed))
                .collect::<Result<Vec<_>>>()?;
            skipped += results.iter().filter(|r| r.is_none()).count();
            let Some((loss, grads, n)) = reduce(results, &model.params())? else {
                continue;
            };
            let grads = match cfg.clip_norm {
                Some(c) => clip_global_norm(grads, c),
                None => grads,
            };
            let params: Vec<Tensor> = model.params().into_iter().cloned().collect();
            model = model.with_params(adam_step(&params, &grads, &mut state, &cfg.adam)?)?;
            loss_sum += loss * n as f64;
            used += n;
        }
        let test_acc = if cfg.eval_each_epoch {
            Some(evaluate(&model, corpus, &split.test, LengthMode::Native)?.accuracy)
        } else {
            None
        };
        let record = EpochRecord {
            epoch,
            train_loss: if used > 0 { loss_sum / used as f64 } else { f64::NAN },
            test_acc,
            wall_seconds: start.elapsed().as_secs_f64(),
            skipped,
        };
        on_epoch(&record);
        history.push(record);
    }
    Ok(TrainOutcome { model, history })
}

pub fn train(model: &FsaModel, corpus: &Corpus, split: &SplitSpec, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(model, corpus, split, cfg, |_| {})
}
