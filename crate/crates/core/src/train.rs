//! Autoregressive rollout training.
//!
//! Each sample is a window of `R + 1` consecutive snapshots. The model is
//! rolled `R` steps from the first one and the MSE against the following `R`
//! reference states is backpropagated through the whole rollout.

use std::fmt::Write as _;
use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::field_errors;
use crate::model::{save_checkpoint, PeSaNet};
use crate::pde::{Field, SystemKind, Trajectory};
use crate::tensor::{adam_step, AdamState, LrSchedule, Tape};

/// Arithmetic precision of parameters and rolled-out states.
///
/// `F32` keeps parameters and states representable in single precision by
/// rounding them after every update and every step; intermediate arithmetic
/// stays in double precision.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(Error::Config(format!("unknown precision {other:?}, expected f32 or f64"))),
        }
    }
}

/// What the learning-rate schedule counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedUnit {
    #[default]
    Step,
    Epoch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub base_lr: f64,
    pub sched_interval: u64,
    pub sched_gamma: f64,
    pub sched_unit: SchedUnit,
    /// Autoregressive steps per training window.
    pub rollout_len: usize,
    pub seed: u64,
    pub precision: Precision,
    /// Validate, checkpoint and flush history every this many epochs.
    pub checkpoint_every: usize,
    /// Consecutive non-finite windows tolerated before giving up.
    pub max_consecutive_blowups: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::for_system(SystemKind::Burgers)
    }
}

impl TrainConfig {
    /// Batch size, epochs and schedule used for each benchmark system.
    pub fn for_system(kind: SystemKind) -> Self {
        let (batch_size, epochs, base_lr, sched_interval, sched_gamma) = match kind {
            SystemKind::Burgers => (8, 5000, 1e-4, 20, 0.985),
            SystemKind::Gs => (8, 5000, 5e-4, 200, 0.985),
            SystemKind::Fn => (32, 8000, 5e-4, 50, 0.98),
        };
        TrainConfig {
            batch_size,
            epochs,
            base_lr,
            sched_interval,
            sched_gamma,
            sched_unit: SchedUnit::Step,
            rollout_len: 2,
            seed: 0,
            precision: Precision::F64,
            checkpoint_every: 100,
            max_consecutive_blowups: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.rollout_len == 0 || self.max_consecutive_blowups == 0 {
            return Err(Error::Config(format!(
                "batch_size, rollout_len and max_consecutive_blowups must be >= 1, got {}, {}, {}",
                self.batch_size, self.rollout_len, self.max_consecutive_blowups
            )));
        }
        self.schedule().map(|_| ())
    }

    pub fn schedule(&self) -> Result<LrSchedule> {
        LrSchedule::new(self.base_lr, self.sched_interval, self.sched_gamma)
    }
}

/// Reference trajectories sharing one snapshot spacing.
#[derive(Clone, Debug)]
pub struct Dataset {
    dt: f64,
    trajectories: Vec<Vec<Field>>,
}

impl Dataset {
    pub fn new(dt: f64, trajectories: Vec<Vec<Field>>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Config(format!("snapshot spacing must be positive, got {dt}")));
        }
        let Some(first) = trajectories.first().and_then(|t| t.first()) else {
            return Err(Error::InvalidArgument("dataset has no snapshots".into()));
        };
        let shape = first.shape();
        for (i, t) in trajectories.iter().enumerate() {
            if t.is_empty() {
                return Err(Error::InvalidArgument(format!("trajectory {i} is empty")));
            }
            if let Some(f) = t.iter().find(|f| f.shape() != shape) {
                return Err(Error::InvalidArgument(format!(
                    "trajectory {i} mixes snapshot shapes {shape:?} and {:?}",
                    f.shape()
                )));
            }
            if let Some(k) = t.iter().position(|f| !f.is_finite()) {
                return Err(Error::InvalidArgument(format!("trajectory {i} snapshot {k} is not finite")));
            }
        }
        Ok(Dataset { dt, trajectories })
    }

    pub fn from_trajectories(trajs: &[Trajectory]) -> Result<Self> {
        let Some(first) = trajs.first() else {
            return Err(Error::InvalidArgument("no trajectories given".into()));
        };
        let dt = first.snapshot_dt();
        if let Some(t) = trajs.iter().find(|t| !close(t.snapshot_dt(), dt)) {
            return Err(Error::InvalidArgument(format!(
                "trajectories disagree on snapshot spacing: {dt} vs {}",
                t.snapshot_dt()
            )));
        }
        Self::new(dt, trajs.iter().map(Trajectory::fields).collect())
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn trajectories(&self) -> &[Vec<Field>] {
        &self.trajectories
    }

    pub fn shape(&self) -> [usize; 3] {
        self.trajectories[0][0].shape()
    }

    /// `(trajectory, start)` of every window of `len` consecutive snapshots.
    pub fn windows(&self, len: usize) -> Vec<(usize, usize)> {
        self.trajectories
            .iter()
            .enumerate()
            .flat_map(|(i, t)| (0..(t.len() + 1).saturating_sub(len)).map(move |s| (i, s)))
            .collect()
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub step: u64,
    /// Learning rate of the epoch's last optimizer step.
    pub lr: f64,
    /// Mean window loss, `None` if every window blew up.
    pub train_loss: Option<f64>,
    pub skipped: usize,
    pub val_rmse: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    /// One JSON object per line, one line per epoch.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            writeln!(out, "{}", serde_json::to_string(r)?).expect("writing to a String");
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<_, _>>()?;
        Ok(TrainHistory { records })
    }
}

/// Where training writes its artifacts; everything is optional.
#[derive(Clone, Copy, Debug, Default)]
pub struct TrainOutputs<'a> {
    pub validation: Option<&'a Dataset>,
    pub checkpoint_dir: Option<&'a Path>,
    pub history_path: Option<&'a Path>,
}

/// `[ic, step(ic), step²(ic), ...]` of length `steps + 1`.
pub fn rollout(model: &PeSaNet, ic: &Field, steps: usize, precision: Precision) -> Result<Vec<Field>> {
    let mut state = ic.clone();
    if precision == Precision::F32 {
        state.round_to_f32();
    }
    let mut out = Vec::with_capacity(steps + 1);
    out.push(state);
    for k in 1..=steps {
        let mut next = model.step(&out[k - 1]).map_err(|e| match e {
            Error::BlowUp { .. } | Error::NonFinite(_) => Error::BlowUp { step: k },
            other => other,
        })?;
        if precision == Precision::F32 {
            next.round_to_f32();
        }
        out.push(next);
    }
    Ok(out)
}

/// Mean squared error over every time, channel and grid entry.
pub fn mse_loss(pred: &[Field], truth: &[Field]) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::InvalidArgument("mse_loss: empty segment".into()));
    }
    let s = field_errors(pred, truth)?;
    Ok(s.sum_sq / s.count as f64)
}

/// Full-horizon rollout RMSE from the first snapshot of every trajectory,
/// over the predicted states; `None` if any rollout blows up.
pub fn validation_rmse(model: &PeSaNet, data: &Dataset, precision: Precision) -> Result<Option<f64>> {
    let mut total = crate::metrics::ErrorSums::default();
    for t in data.trajectories() {
        match rollout(model, &t[0], t.len() - 1, precision) {
            Ok(pred) => total.merge(&field_errors(&pred[1..], &t[1..])?),
            Err(Error::BlowUp { .. }) => return Ok(None),
            Err(e) => return Err(e),
        }
    }
    Ok((total.count > 0).then(|| total.rmse()))
}

/// Loss and parameter gradients for one window.
fn window_gradients(model: &PeSaNet, window: &[Field]) -> Result<(f64, Vec<Option<crate::Tensor>>)> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let mut state = tape.constant(window[0].to_tensor());
    let mut total = None;
    for truth in &window[1..] {
        state = model.step_on(&mut tape, &bound, state)?;
        let target = tape.constant(truth.to_tensor());
        let l = tape.mse(state, target)?;
        total = Some(match total {
            Some(t) => tape.add(t, l)?,
            None => l,
        });
    }
    let loss = tape.scale(total.expect("window has at least two snapshots"), 1.0 / (window.len() - 1) as f64);
    let value = tape.value(loss).item();
    if !value.is_finite() {
        return Err(Error::NonFinite("training loss"));
    }
    tape.backward(loss)?;
    let grads = tape.param_grads(model.params());
    if grads.iter().flatten().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("training gradient"));
    }
    Ok((value, grads))
}

fn check_compatible(model: &PeSaNet, data: &Dataset) -> Result<()> {
    let c = model.config();
    let expect = [c.state_channels, c.height, c.width];
    if data.shape() != expect {
        return Err(Error::InvalidArgument(format!(
            "data snapshots are {:?}, model expects {expect:?}",
            data.shape()
        )));
    }
    if !close(data.dt(), c.dt) {
        return Err(Error::InvalidArgument(format!(
            "data snapshots are {} apart but the model steps by {}",
            data.dt(),
            c.dt
        )));
    }
    Ok(())
}

/// Train `model` in place.
pub fn train(model: &mut PeSaNet, data: &Dataset, cfg: &TrainConfig, out: TrainOutputs<'_>) -> Result<TrainHistory> {
    cfg.validate()?;
    check_compatible(model, data)?;
    if let Some(v) = out.validation {
        check_compatible(model, v)?;
    }
    let windows = data.windows(cfg.rollout_len + 1);
    if windows.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no trajectory is long enough for a window of {} snapshots",
            cfg.rollout_len + 1
        )));
    }
    if let Some(dir) = out.checkpoint_dir {
        std::fs::create_dir_all(dir)?;
    }
    let schedule = cfg.schedule()?;
    if cfg.precision == Precision::F32 {
        model.params_mut().round_to_f32();
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(model.params());
    let mut history = TrainHistory::default();
    let mut step: u64 = 0;
    let mut consecutive = 0;
    let mut order = windows;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut used, mut skipped) = (0.0, 0usize, 0usize);
        let mut lr = schedule.lr_at(match cfg.sched_unit {
            SchedUnit::Step => step,
            SchedUnit::Epoch => epoch as u64 - 1,
        });
        for batch in order.chunks(cfg.batch_size) {
            model.params_mut().zero_grad();
            let mut in_batch = 0;
            for &(t, s) in batch {
                let window = &data.trajectories()[t][s..s + cfg.rollout_len + 1];
                match window_gradients(model, window) {
                    Ok((loss, grads)) => {
                        model.params_mut().accumulate(&grads)?;
                        loss_sum += loss;
                        in_batch += 1;
                        consecutive = 0;
                    }
                    Err(Error::BlowUp { .. } | Error::NonFinite(_)) => {
                        skipped += 1;
                        consecutive += 1;
                        warn!("epoch {epoch}: window ({t}, {s}) blew up, skipping");
                        if consecutive >= cfg.max_consecutive_blowups {
                            return Err(Error::Diverged { consecutive, epoch });
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
            if in_batch == 0 {
                continue;
            }
            used += in_batch;
            model.params_mut().scale_grads(1.0 / in_batch as f64);
            lr = schedule.lr_at(match cfg.sched_unit {
                SchedUnit::Step => step,
                SchedUnit::Epoch => epoch as u64 - 1,
            });
            adam_step(model.params_mut(), &mut adam, lr)?;
            if cfg.precision == Precision::F32 {
                model.params_mut().round_to_f32();
            }
            step += 1;
        }

        let checkpoint_now = cfg.checkpoint_every > 0 && (epoch % cfg.checkpoint_every == 0 || epoch == cfg.epochs);
        let val_rmse = match (checkpoint_now, out.validation) {
            (true, Some(v)) => validation_rmse(model, v, cfg.precision)?,
            _ => None,
        };
        let record = EpochRecord {
            epoch,
            step,
            lr,
            train_loss: (used > 0).then(|| loss_sum / used as f64),
            skipped,
            val_rmse,
        };
        info!(
            "epoch {epoch}: loss {:?}, lr {lr:.3e}, skipped {skipped}, val {val_rmse:?}",
            record.train_loss
        );
        history.records.push(record);

        if checkpoint_now {
            if let Some(dir) = out.checkpoint_dir {
                save_checkpoint(model, dir.join(format!("epoch_{epoch:06}.psck")))?;
            }
            if let Some(path) = out.history_path {
                crate::pde::write_atomic(path, history.to_jsonl()?.as_bytes())?;
            }
        }
    }
    if let Some(dir) = out.checkpoint_dir {
        save_checkpoint(model, dir.join("final.psck"))?;
    }
    if let Some(path) = out.history_path {
        crate::pde::write_atomic(path, history.to_jsonl()?.as_bytes())?;
    }
    Ok(history)
}
