//! Minibatch Adam training of one shared-weight encoder under a siamese or
//! triplet meta-architecture.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use super::{
    margin_loss_var, siamese_energy_var, siamese_loss_var, triplet_energy_var, triplet_loss_var, EnergyConfig,
};
use crate::corpus::{Meeting, MeetingFeatures};
use crate::encoder::{Encoder, Pass};
use crate::error::{Error, Result};
use crate::nn::{adam_step, grad_check, AdamConfig, AdamState, GradCheckReport, ParamStore, Var};
use crate::sampling::{draw_examples, epoch_resample, Examples, SamplingPools, UtteranceRef, DEFAULT_EXAMPLES_PER_EPOCH};
use crate::seed;

/// Examples scored per tape when computing evaluation losses.
const EVAL_CHUNK: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub dropout: f64,
    /// Triplets per epoch, or pairs per class for the siamese network.
    pub examples_per_epoch: usize,
    /// Size of the fixed validation sample (pairs per class for siamese).
    pub validation_examples: usize,
    pub seed: u64,
    pub runs: usize,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            dropout: 0.5,
            examples_per_epoch: DEFAULT_EXAMPLES_PER_EPOCH,
            validation_examples: 2000,
            seed: 0,
            runs: 10,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.examples_per_epoch == 0 || self.validation_examples == 0 || self.runs == 0 {
            return Err(Error::Config(
                "batch_size, examples_per_epoch, validation_examples and runs must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} must lie in [0, 1)", self.dropout)));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.adam.lr)));
        }
        Ok(())
    }
}

/// Meetings of one partition with their precomputed token features.
#[derive(Clone, Copy, Debug)]
pub struct TrainingSet<'a> {
    pub meetings: &'a [Meeting],
    pub features: &'a [MeetingFeatures],
}

impl TrainingSet<'_> {
    fn check(&self) -> Result<()> {
        if self.meetings.len() != self.features.len() {
            return Err(Error::Config(format!(
                "{} meetings but {} feature sets",
                self.meetings.len(),
                self.features.len()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// One-based epoch number.
    pub epoch: usize,
    /// Mean training loss over the epoch's examples, dropout active.
    pub train_loss: f64,
    pub validation_loss: f64,
    pub checkpoint: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Dropout-free loss of the untrained encoder on the first epoch's sample.
    pub initial_train_loss: Option<f64>,
    pub initial_validation_loss: Option<f64>,
    pub history: Vec<EpochStats>,
}

impl TrainReport {
    /// Zero-based index into `history` of the lowest validation loss; the
    /// earliest epoch wins ties.
    pub fn best_epoch(&self) -> Result<usize> {
        self.history
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.validation_loss.total_cmp(&b.1.validation_loss).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i)
            .ok_or(Error::NoEpochs)
    }

    pub fn train_losses(&self) -> Vec<f64> {
        self.history.iter().map(|e| e.train_loss).collect()
    }

    pub fn validation_losses(&self) -> Vec<f64> {
        self.history.iter().map(|e| e.validation_loss).collect()
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub report: TrainReport,
    /// Parameters after the best epoch, or the initial ones if no epoch ran.
    pub best: ParamStore,
    pub last: ParamStore,
}

fn encode_ref<R: rand::Rng + ?Sized>(
    pass: &mut Pass<'_>,
    set: &TrainingSet<'_>,
    r: UtteranceRef,
    rng: &mut R,
) -> Result<Var> {
    pass.encode(r.meeting, &set.features[r.meeting], r.index, rng)
}

/// Mean loss of `examples[range]` on the pass's tape.
fn batch_loss<R: rand::Rng + ?Sized>(
    pass: &mut Pass<'_>,
    set: &TrainingSet<'_>,
    energy: &EnergyConfig,
    examples: &Examples,
    range: core::ops::Range<usize>,
    rng: &mut R,
) -> Result<Var> {
    let n = range.len() as f64;
    let mut terms = Vec::with_capacity(range.len());
    match examples {
        Examples::Pairs(pairs) => {
            for p in &pairs[range] {
                let gx = encode_ref(pass, set, p.x, rng)?;
                let gy = encode_ref(pass, set, p.y, rng)?;
                let e = siamese_energy_var(&mut pass.graph, gx, gy);
                terms.push(siamese_loss_var(&mut pass.graph, e, p.label.target()));
            }
        }
        Examples::Triplets(triplets) => {
            for t in &triplets[range] {
                let gp = encode_ref(pass, set, t.positive, rng)?;
                let ga = encode_ref(pass, set, t.anchor, rng)?;
                let gn = encode_ref(pass, set, t.negative, rng)?;
                let e_pa = triplet_energy_var(&mut pass.graph, gp, ga);
                let e_an = triplet_energy_var(&mut pass.graph, ga, gn);
                terms.push(match energy.margin {
                    Some(m) => margin_loss_var(&mut pass.graph, e_pa, e_an, m),
                    None => triplet_loss_var(&mut pass.graph, e_pa, e_an),
                });
            }
        }
    }
    let g = &mut pass.graph;
    let stacked = g.concat(&terms);
    let total = g.sum(stacked);
    Ok(g.scale(total, 1.0 / n))
}

/// Dropout-free mean loss over all `examples`.
pub fn evaluate_loss(
    encoder: &Encoder,
    store: &ParamStore,
    energy: &EnergyConfig,
    set: TrainingSet<'_>,
    examples: &Examples,
) -> Result<f64> {
    set.check()?;
    if examples.is_empty() {
        return Err(Error::Config("loss of an empty example set".into()));
    }
    let mut rng = seed::rng(0);
    let mut total = 0.0;
    let mut start = 0;
    while start < examples.len() {
        let end = (start + EVAL_CHUNK).min(examples.len());
        let mut pass = encoder.pass(store, 0.0, false)?;
        let loss = batch_loss(&mut pass, &set, energy, examples, start..end, &mut rng)?;
        total += pass.graph.scalar(loss) * (end - start) as f64;
        start = end;
    }
    Ok(total / examples.len() as f64)
}

/// Trains `store` in place of a fresh copy and returns the best and last
/// parameters. `on_epoch` sees every epoch's statistics with the parameters
/// after that epoch and may return a checkpoint reference to record.
pub fn train<F>(
    encoder: &Encoder,
    initial: ParamStore,
    energy: &EnergyConfig,
    config: &TrainConfig,
    train_set: TrainingSet<'_>,
    validation_set: TrainingSet<'_>,
    mut on_epoch: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&EpochStats, &ParamStore) -> Result<Option<String>>,
{
    config.validate()?;
    energy.validate()?;
    train_set.check()?;
    validation_set.check()?;
    let mut report = TrainReport::default();
    if config.epochs == 0 {
        return Ok(TrainOutcome {
            report,
            best: initial.clone(),
            last: initial,
        });
    }

    let train_pools = SamplingPools::build(train_set.meetings);
    let validation_pools = SamplingPools::build(validation_set.meetings);
    let sample_seed = seed::derive(config.seed, 1);
    let dropout_seed = seed::derive(config.seed, 3);
    let validation = draw_examples(
        &validation_pools,
        energy.meta,
        config.validation_examples,
        seed::derive(config.seed, 2),
    )?;

    let mut store = initial;
    let mut adam = AdamState::new(&store, config.adam);
    let mut best: Option<(f64, ParamStore)> = None;

    for epoch in 0..config.epochs {
        let examples = epoch_resample(epoch, sample_seed, &train_pools, energy.meta, config.examples_per_epoch)?;
        if epoch == 0 {
            report.initial_train_loss = Some(evaluate_loss(encoder, &store, energy, train_set, &examples)?);
            report.initial_validation_loss = Some(evaluate_loss(encoder, &store, energy, validation_set, &validation)?);
        }
        let mut rng = seed::derived_rng(dropout_seed, epoch as u64);
        let mut sum = 0.0;
        let mut start = 0;
        let mut batch = 0;
        while start < examples.len() {
            let end = (start + config.batch_size).min(examples.len());
            let snapshot = store.clone();
            let mut pass = encoder.pass(&snapshot, config.dropout, true)?;
            let loss = batch_loss(&mut pass, &train_set, energy, &examples, start..end, &mut rng)?;
            let graph = pass.into_graph();
            let value = graph.scalar(loss);
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: epoch + 1,
                    batch: batch + 1,
                });
            }
            let grads = graph.backward(loss);
            graph.accumulate(&grads, &mut store);
            adam_step(&mut store, &mut adam)?;
            sum += value * (end - start) as f64;
            start = end;
            batch += 1;
        }
        let train_loss = sum / examples.len() as f64;
        let validation_loss = evaluate_loss(encoder, &store, energy, validation_set, &validation)?;
        let mut stats = EpochStats {
            epoch: epoch + 1,
            train_loss,
            validation_loss,
            checkpoint: None,
        };
        stats.checkpoint = on_epoch(&stats, &store)?;
        info!(
            "epoch {}: train loss {train_loss:.6}, validation loss {validation_loss:.6}",
            epoch + 1
        );
        debug!("{batch} batches, {} Adam steps so far", adam.step());
        if best.as_ref().is_none_or(|(b, _)| validation_loss < *b) {
            best = Some((validation_loss, store.clone()));
        }
        report.history.push(stats);
    }
    let best = best.map(|(_, s)| s).unwrap_or_else(|| store.clone());
    Ok(TrainOutcome {
        report,
        best,
        last: store,
    })
}

/// Finite-difference check of the mean training loss of `examples` (no
/// dropout) with respect to every encoder parameter in `store`.
pub fn check_loss_gradients(
    encoder: &Encoder,
    store: &mut ParamStore,
    energy: &EnergyConfig,
    features: &[MeetingFeatures],
    examples: &Examples,
    eps: f64,
) -> Result<GradCheckReport> {
    energy.validate()?;
    if examples.is_empty() {
        return Err(Error::Config("gradient check needs at least one example".into()));
    }
    let set = TrainingSet { meetings: &[], features };
    grad_check(store, eps, |s| {
        let snapshot = s.clone();
        let mut pass = encoder.pass(&snapshot, 0.0, false)?;
        let mut rng = seed::rng(0);
        let loss = batch_loss(&mut pass, &set, energy, examples, 0..examples.len(), &mut rng)?;
        let graph = pass.into_graph();
        let grads = graph.backward(loss);
        graph.accumulate(&grads, s);
        Ok(graph.scalar(loss))
    })
}
