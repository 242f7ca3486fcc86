use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{metric_eps, LabGatr, ModelError, Prediction, PreparedSample};
use crate::autodiff::{save_checkpoint, AdamConfig, ParameterStore, Tape};
use crate::mesh::Target;

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Evaluate samples one after another on the calling thread and write
    /// zero wall-clock times to the log, so that logs are reproducible.
    pub serial: bool,
    /// Best-validation checkpoint path.
    pub checkpoint: Option<PathBuf>,
    /// CSV training log path.
    pub log: Option<PathBuf>,
    /// Per-epoch wall-clock times, written in serial mode instead of the log.
    pub timings: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub wall_seconds: f64,
}

pub struct TrainOutcome {
    pub log: Vec<EpochRecord>,
    pub best_val: f64,
    pub best_epoch: usize,
    pub best: ParameterStore,
    pub last: ParameterStore,
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn map_samples<T, F>(serial: bool, items: &[&PreparedSample], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&PreparedSample) -> T + Sync,
{
    if serial {
        items.iter().map(|x| f(x)).collect()
    } else {
        items.par_iter().map(|x| f(x)).collect()
    }
}

fn mean_loss(model: &LabGatr, store: &ParameterStore, set: &[PreparedSample], serial: bool) -> Result<f64, ModelError> {
    let refs: Vec<&PreparedSample> = set.iter().collect();
    let losses = map_samples(serial, &refs, |x| -> Result<f64, ModelError> {
        let mut tape = Tape::new();
        let l = model.loss(&mut tape, store, x)?;
        Ok(tape.value(l).item())
    });
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / set.len() as f64)
}

/// Minibatch Adam on the mean per-sample L1 loss with per-epoch shuffling
/// and learning-rate decay. The parameters with the lowest validation loss
/// are returned and, if requested, checkpointed.
pub fn train(
    model: &LabGatr,
    mut store: ParameterStore,
    train_set: &[PreparedSample],
    val_set: &[PreparedSample],
    opts: &TrainOptions,
) -> Result<TrainOutcome, ModelError> {
    if train_set.is_empty() {
        return Err(ModelError::EmptyDataset("training split".into()));
    }
    let val_set = if val_set.is_empty() { train_set } else { val_set };
    let cfg = &model.config;
    let adam = AdamConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log_file = match &opts.log {
        Some(p) => {
            let mut f = std::fs::File::create(p)?;
            writeln!(f, "epoch,lr,train_loss,val_loss,wall_seconds")?;
            Some(f)
        }
        None => None,
    };
    let mut timing_file = match (&opts.timings, opts.serial) {
        (Some(p), true) => {
            let mut f = std::fs::File::create(p)?;
            writeln!(f, "epoch,wall_seconds")?;
            Some(f)
        }
        _ => None,
    };
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best = (f64::INFINITY, 0usize, store.clone());
    let started = Instant::now();
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut train_total = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let items: Vec<&PreparedSample> = batch.iter().map(|&i| &train_set[i]).collect();
            let results = map_samples(opts.serial, &items, |x| model.loss_and_grads(&store, x));
            store.zero_grad();
            let inv = 1.0 / batch.len() as f64;
            for r in results {
                let (loss, mut grads) = r?;
                if !loss.is_finite() {
                    return Err(ModelError::NonFinite { epoch, batch: b, detail: format!("loss = {loss}") });
                }
                train_total += loss;
                grads.values_mut().for_each(|g| g.iter_mut().for_each(|v| *v *= inv));
                store.accumulate(&grads)?;
            }
            if let Some((name, _)) = store.iter().find(|(_, p)| p.grad.iter().any(|g| !g.is_finite())) {
                return Err(ModelError::NonFinite { epoch, batch: b, detail: format!("gradient of {name}") });
            }
            store.adam_step(&adam, lr);
        }
        let train_loss = train_total / train_set.len() as f64;
        let val_loss = mean_loss(model, &store, val_set, opts.serial)?;
        if !val_loss.is_finite() {
            return Err(ModelError::NonFinite { epoch, batch: 0, detail: format!("validation loss = {val_loss}") });
        }
        let elapsed = started.elapsed().as_secs_f64();
        let rec =
            EpochRecord { epoch, lr, train_loss, val_loss, wall_seconds: if opts.serial { 0.0 } else { elapsed } };
        if let Some(f) = log_file.as_mut() {
            writeln!(
                f,
                "{},{},{},{},{}",
                rec.epoch,
                fmt17(rec.lr),
                fmt17(rec.train_loss),
                fmt17(rec.val_loss),
                fmt17(rec.wall_seconds)
            )?;
        }
        if let Some(f) = timing_file.as_mut() {
            writeln!(f, "{epoch},{}", fmt17(elapsed))?;
        }
        if val_loss < best.0 {
            best = (val_loss, epoch, store.clone());
            if let Some(path) = &opts.checkpoint {
                save_checkpoint(&best.2, &adam, lr, path)?;
            }
        }
        log.push(rec);
    }
    Ok(TrainOutcome { log, best_val: best.0, best_epoch: best.1, best: best.2, last: store })
}

/// Per-sample evaluation result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub index: usize,
    /// `ε` in percent for vertex vector fields.
    pub eps: Option<f64>,
    pub prediction: Option<f64>,
    pub target: Option<f64>,
    pub l1: f64,
}

pub fn evaluate(
    model: &LabGatr,
    store: &ParameterStore,
    set: &[PreparedSample],
    serial: bool,
) -> Result<Vec<SampleScore>, ModelError> {
    let refs: Vec<&PreparedSample> = set.iter().collect();
    let scores = map_samples(serial, &refs, |x| -> Result<(Prediction, f64), ModelError> {
        let mut tape = Tape::new();
        let l = model.loss(&mut tape, store, x)?;
        Ok((model.predict(store, x)?, tape.value(l).item()))
    });
    scores
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            let (pred, l1) = r?;
            let mut s = SampleScore { index, eps: None, prediction: None, target: None, l1 };
            match (&pred, &set[index].sample.target) {
                (Prediction::VertexVectors(p), Target::VertexVectors(t)) => s.eps = Some(metric_eps(p, t)?),
                (Prediction::MeshScalar(p), Target::MeshScalar(t)) => {
                    s.prediction = Some(*p);
                    s.target = Some(*t);
                }
                (Prediction::Classes(p), Target::MeshScalar(t)) => {
                    let arg = p
                        .iter()
                        .enumerate()
                        .fold((0, f64::NEG_INFINITY), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
                    s.prediction = Some(arg.0 as f64);
                    s.target = Some(*t);
                }
                _ => {}
            }
            Ok(s)
        })
        .collect()
}
