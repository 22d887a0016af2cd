//! One-step (teacher-forced) training, learning-rate schedule and
//! autoregressive rollout.

mod optim;

use std::path::Path;
use std::rc::Rc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::losses::{adaptive_noise, combined_loss_graph, LossConfig};
use crate::operator::{hfp_extract_with, save_checkpoint, LogloModel};
use crate::spectra::RadialSpec;
use crate::tensor_fft::Field;

pub use optim::{clip_grad_norm, Optimizer, OptimizerConfig, OptimizerKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: OptimizerConfig,
    pub lr: f64,
    /// The learning rate is multiplied by `gamma` every `step_epochs` epochs.
    pub step_epochs: usize,
    pub gamma: f64,
    pub clip_max_norm: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: LossConfig,
    /// Adds adaptive noise (scale `loss.noise_alpha`) to the model inputs.
    pub noise: bool,
    pub seed: u64,
    pub shuffle: bool,
    /// Save a checkpoint every this many epochs (0 disables periodic saves).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::default(),
            lr: 1e-3,
            step_epochs: 33,
            gamma: 0.5,
            clip_max_norm: 1.0,
            epochs: 100,
            batch_size: 16,
            loss: LossConfig::default(),
            noise: false,
            seed: 0,
            shuffle: true,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("lr must be finite and >= 0, got {}", self.lr)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if !(self.clip_max_norm > 0.0) {
            return Err(Error::config(format!("clip_max_norm must be > 0, got {}", self.clip_max_norm)));
        }
        if self.step_epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("step_epochs and batch_size must be positive"));
        }
        let o = &self.optimizer;
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || !(o.eps > 0.0) {
            return Err(Error::config("optimizer needs 0 <= beta < 1 and eps > 0"));
        }
        if o.weight_decay.is_some_and(|w| !(w >= 0.0)) {
            return Err(Error::config("weight_decay must be >= 0"));
        }
        self.loss.validate()
    }
}

/// `lr * gamma^floor(epoch / step_epochs)`, epochs counted from 0.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.lr * cfg.gamma.powi((epoch / cfg.step_epochs) as i32)
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    /// Mean over batches of the total loss.
    pub train_loss: f64,
    pub mse_part: f64,
    /// Frequency loss before multiplication by lambda.
    pub freq_part: f64,
    pub wall_ms: u64,
}

/// Appends `EpochStats` rows to a CSV file, writing the header once.
pub struct TrainLog {
    writer: csv::Writer<std::fs::File>,
    path: std::path::PathBuf,
}

impl TrainLog {
    pub fn create(path: &Path) -> Result<Self> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = csv::Writer::from_writer(file);
        writer
            .write_record(["epoch", "lr", "train_loss", "mse_part", "freq_part", "wall_ms"])
            .map_err(|e| Error::format(path, e.to_string()))?;
        Ok(Self {
            writer,
            path: path.to_path_buf(),
        })
    }

    pub fn append(&mut self, s: &EpochStats) -> Result<()> {
        let fmt = |e: csv::Error| Error::format(&self.path, e.to_string());
        self.writer
            .serialize((s.epoch, s.lr, s.train_loss, s.mse_part, s.freq_part, s.wall_ms))
            .map_err(fmt)?;
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Model, optimizer state and configuration of a training run.
pub struct Trainer {
    model: LogloModel,
    opt: Optimizer,
    cfg: TrainConfig,
    epoch: usize,
}

struct BatchResult {
    grads: Vec<Vec<f64>>,
    loss: f64,
    mse: f64,
    freq: f64,
}

impl Trainer {
    pub fn new(model: LogloModel, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            model,
            opt: Optimizer::new(cfg.optimizer.clone()),
            cfg,
            epoch: 0,
        })
    }

    pub fn model(&self) -> &LogloModel {
        &self.model
    }

    pub fn into_model(self) -> LogloModel {
        self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Epochs completed so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    fn noise_for(&self, x: &Field, seed: u64) -> Result<Option<Field>> {
        if !self.cfg.noise {
            return Ok(None);
        }
        let m = self.model.config();
        let xh = hfp_extract_with(x, m.hfp_pool, m.hfp_pool, m.hfp_interp)?;
        Ok(Some(adaptive_noise(&xh, self.cfg.loss.noise_alpha, seed)?))
    }

    /// Forward on a fresh tape; returns the tape so the caller can run the
    /// reverse pass.
    fn sample_tape(&self, x: &Field, noise: Option<&Field>, trainable: bool) -> Result<(Tape, Vec<Var>, Var)> {
        let mut t = Tape::new();
        let vars = self.model.place(&mut t, trainable);
        let out = self.model.forward_graph_noisy(&mut t, &vars, x, noise)?;
        Ok((t, vars, out))
    }

    fn batch_grads(&self, x: &Field, y: &Field, spec: &Rc<RadialSpec>, noise_seeds: &[u64]) -> Result<BatchResult> {
        let b = x.batch();
        let samples: Vec<Field> = (0..b).map(|i| x.batch_range(i, i + 1)).collect::<Result<_>>()?;
        let noise: Vec<Option<Field>> = samples
            .iter()
            .zip(noise_seeds)
            .map(|(s, &seed)| self.noise_for(s, seed))
            .collect::<Result<_>>()?;

        // With one thread, tapes are kept between the forward and reverse
        // passes. Otherwise tapes (which are not Send) are rebuilt inside the
        // worker that runs the reverse pass.
        let parallel = rayon::current_num_threads() > 1 && b > 1;
        let mut kept = Vec::new();
        let preds: Vec<Vec<f64>> = if parallel {
            (0..b)
                .into_par_iter()
                .map(|i| {
                    let (t, _, out) = self.sample_tape(&samples[i], noise[i].as_ref(), false)?;
                    Ok(t.value(out).data.clone())
                })
                .collect::<Result<_>>()?
        } else {
            let mut preds = Vec::with_capacity(b);
            for i in 0..b {
                let (t, vars, out) = self.sample_tape(&samples[i], noise[i].as_ref(), true)?;
                preds.push(t.value(out).data.clone());
                kept.push((t, vars, out));
            }
            preds
        };

        let per = preds[0].len();
        let mut lt = Tape::new();
        let p = lt.param(Tensor::new(preds.concat(), y.shape().to_vec())?);
        let yt = lt.constant(Tensor::new(y.data().to_vec(), y.shape().to_vec())?);
        let lv = combined_loss_graph(&mut lt, p, yt, spec, y.lengths(), &self.cfg.loss)?;
        let loss = lt.scalar(lv.total);
        let mse = lt.scalar(lv.mse);
        let freq = lv.freq.map_or(0.0, |f| lt.scalar(f.loss));
        if !loss.is_finite() {
            return Ok(BatchResult {
                grads: Vec::new(),
                loss,
                mse,
                freq,
            });
        }
        let dpred = lt.backward(lv.total)?.take(p).unwrap_or_else(|| vec![0.0; per * b]);

        let per_sample = |t: &Tape, vars: &[Var], out, i: usize| -> Result<Vec<Vec<f64>>> {
            let mut g = t.backward_with_seed(out, dpred[i * per..(i + 1) * per].to_vec())?;
            Ok(vars
                .iter()
                .zip(self.model.params())
                .map(|(&v, p)| g.take(v).unwrap_or_else(|| vec![0.0; p.tensor.numel()]))
                .collect())
        };
        let sample_grads: Vec<Vec<Vec<f64>>> = if parallel {
            (0..b)
                .into_par_iter()
                .map(|i| {
                    let (t, vars, out) = self.sample_tape(&samples[i], noise[i].as_ref(), true)?;
                    per_sample(&t, &vars, out, i)
                })
                .collect::<Result<_>>()?
        } else {
            kept.iter()
                .enumerate()
                .map(|(i, (t, vars, out))| per_sample(t, vars, *out, i))
                .collect::<Result<_>>()?
        };
        let mut grads = sample_grads[0].clone();
        for sg in &sample_grads[1..] {
            for (acc, g) in grads.iter_mut().zip(sg) {
                acc.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
        }
        Ok(BatchResult { grads, loss, mse, freq })
    }

    /// One pass over the `(input, target)` pairs with per-batch updates. A
    /// non-finite loss or gradient aborts with [`Error::Divergence`] before
    /// any parameter of that batch is touched.
    pub fn train_epoch(&mut self, inputs: &Field, targets: &Field, spec: &RadialSpec) -> Result<EpochStats> {
        if inputs.batch() != targets.batch() || inputs.batch() == 0 {
            return Err(Error::shape(format!(
                "{} inputs vs {} targets",
                inputs.batch(),
                targets.batch()
            )));
        }
        let start = Instant::now();
        let epoch = self.epoch;
        let lr = lr_at(epoch, &self.cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(epoch as u64 + 1);
        let mut order: Vec<usize> = (0..inputs.batch()).collect();
        if self.cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let spec = Rc::new(spec.clone());
        let (mut sl, mut sm, mut sf, mut nb) = (0.0, 0.0, 0.0, 0usize);
        for (bi, chunk) in order.chunks(self.cfg.batch_size).enumerate() {
            let x = gather(inputs, chunk)?;
            let y = gather(targets, chunk)?;
            let seeds: Vec<u64> = chunk.iter().map(|_| rng.random()).collect();
            let mut r = self.batch_grads(&x, &y, &spec, &seeds)?;
            if !r.loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: bi,
                    loss: r.loss,
                });
            }
            let norm = clip_grad_norm(&mut r.grads, self.cfg.clip_max_norm);
            if !norm.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: bi,
                    loss: norm,
                });
            }
            self.opt.step(self.model.params_mut(), &r.grads, lr);
            sl += r.loss;
            sm += r.mse;
            sf += r.freq;
            nb += 1;
        }
        self.epoch += 1;
        let n = nb.max(1) as f64;
        Ok(EpochStats {
            epoch,
            lr,
            train_loss: sl / n,
            mse_part: sm / n,
            freq_part: sf / n,
            wall_ms: start.elapsed().as_millis() as u64,
        })
    }

    /// Runs the remaining epochs. With `out`, writes `train_log.csv`, the
    /// initial checkpoint, periodic checkpoints, and a final checkpoint.
    pub fn fit(&mut self, inputs: &Field, targets: &Field, spec: &RadialSpec, out: Option<&Path>) -> Result<Vec<EpochStats>> {
        let mut log = match out {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                save_checkpoint(&self.model, dir, self.epoch)?;
                Some(TrainLog::create(&dir.join("train_log.csv"))?)
            }
            None => None,
        };
        let mut stats = Vec::new();
        while self.epoch < self.cfg.epochs {
            let s = self.train_epoch(inputs, targets, spec)?;
            if let Some(log) = &mut log {
                log.append(&s)?;
            }
            stats.push(s);
            if let Some(dir) = out {
                let k = self.cfg.checkpoint_every;
                if (k > 0 && self.epoch % k == 0) || self.epoch == self.cfg.epochs {
                    save_checkpoint(&self.model, dir, self.epoch)?;
                }
            }
        }
        Ok(stats)
    }
}

fn gather(f: &Field, idx: &[usize]) -> Result<Field> {
    let parts: Vec<Field> = idx.iter().map(|&i| f.batch_range(i, i + 1)).collect::<Result<_>>()?;
    Field::concat_batch(&parts)
}

/// Autoregressive trajectory. `frames[k]` is the prediction after `k + 1`
/// steps; `blow_up` is the first step whose prediction was non-finite (that
/// frame and everything after it are dropped).
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub frames: Vec<Field>,
    pub blow_up: Option<usize>,
}

pub fn rollout(model: &LogloModel, u0: &Field, n_steps: usize) -> Result<Rollout> {
    if n_steps == 0 {
        return Err(Error::config("rollout needs at least one step"));
    }
    let c = model.config();
    if c.in_channels != c.out_channels {
        return Err(Error::config("rollout needs equal input and output channels"));
    }
    let mut frames = Vec::with_capacity(n_steps);
    let mut u = u0.clone();
    for step in 0..n_steps {
        let (data, shape) = model.forward_values(&u)?;
        if data.iter().any(|v| !v.is_finite()) {
            return Ok(Rollout {
                frames,
                blow_up: Some(step),
            });
        }
        let (lx, ly) = u0.lengths();
        let next = Field::new(data, shape)?.with_lengths(lx, ly);
        frames.push(next.clone());
        u = next;
    }
    Ok(Rollout { frames, blow_up: None })
}
