//! Supervised training against SSIM targets.

mod data;
mod optim;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use data::{load_scenes, sample_batch, Batch, LoadedRecord, LoadedScene, Provenance, TrainData};
pub use optim::AdamW;

use crate::error::{Error, Result};
use crate::image::ScoreMap;
use crate::model::{
    load_checkpoint, save_checkpoint, CrossRefModel, ModelConfig, ParamSet, RngState,
};
use crate::parallel::par_map;

pub const LOSS_LOG: &str = "loss_log.csv";
pub const LATEST: &str = "latest";
pub const FINAL: &str = "final";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub crop_size: usize,
    pub n_ref: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub total_steps: u64,
    pub seed: u64,
    pub checkpoint_every: u64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            crop_size: 140,
            n_ref: 5,
            batch_size: 4,
            learning_rate: 5e-4,
            weight_decay: 1e-2,
            total_steps: 1000,
            seed: 0,
            checkpoint_every: 250,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let p = self.model.patch_size;
        if self.crop_size == 0 || self.crop_size % p != 0 {
            return Err(Error::Validation(format!(
                "train.crop_size {} is not a positive multiple of the patch size {p}",
                self.crop_size
            )));
        }
        if self.crop_size > self.model.max_side() {
            return Err(Error::Validation(format!(
                "train.crop_size {} exceeds the model limit {} (max_grid · patch_size)",
                self.crop_size,
                self.model.max_side()
            )));
        }
        if self.n_ref == 0 || self.n_ref != self.model.n_ref {
            return Err(Error::Validation(format!(
                "train.n_ref {} must be at least 1 and equal model.n_ref {}",
                self.n_ref, self.model.n_ref
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("train.batch_size must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Validation("train.learning_rate must be positive".into()));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Validation("train.weight_decay must be non-negative".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::Validation("train.checkpoint_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Mean absolute difference over every pixel of every map.
pub fn l1_loss(pred: &[ScoreMap], target: &[ScoreMap]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "l1_loss needs equal non-empty batches, got {} and {}",
            pred.len(),
            target.len()
        )));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, t) in pred.iter().zip(target) {
        if (p.height(), p.width()) != (t.height(), t.width()) {
            return Err(Error::Shape(format!(
                "l1_loss map sizes differ: {}x{} vs {}x{}",
                p.height(),
                p.width(),
                t.height(),
                t.width()
            )));
        }
        sum += p
            .data()
            .iter()
            .zip(t.data())
            .map(|(a, b)| (*a as f64 - *b as f64).abs())
            .sum::<f64>();
        n += p.data().len();
    }
    Ok(sum / n as f64)
}

/// One gradient update on `batch`. Returns the batch loss measured before
/// the update. A non-finite loss aborts without touching the parameters.
pub fn train_step(
    model: &mut CrossRefModel<f32>,
    batch: &Batch,
    opt: &mut AdamW,
    step: u64,
    workers: usize,
) -> Result<f64> {
    let items: Vec<usize> = (0..batch.len()).collect();
    let total: usize = batch.targets.iter().map(|t| t.data().len()).sum();
    let scale = 1.0 / total as f32;
    let m: &CrossRefModel<f32> = model;
    let parts = par_map(&items, workers, |&i| -> Result<(f64, ParamSet<f32>)> {
        let (pred, cache) = m.forward_train(&batch.queries[i], &batch.refs[i])?;
        let t = &batch.targets[i];
        if pred.dim() != (t.height(), t.width()) {
            return Err(Error::Shape("prediction and target sizes differ".into()));
        }
        let target = Array2::from_shape_vec(pred.dim(), t.data().to_vec()).expect("target shape");
        let mut abs = 0.0f64;
        let dmap = ndarray::Zip::from(&pred).and(&target).map_collect(|&p, &y| {
            let d = p - y;
            abs += (d as f64).abs();
            if d > 0.0 {
                scale
            } else if d < 0.0 {
                -scale
            } else {
                0.0
            }
        });
        let mut g = m.params().zeros_like();
        if abs.is_finite() {
            m.backward(&cache, &dmap, &mut g);
        }
        Ok((abs, g))
    });
    let mut loss = 0.0;
    let mut grads: Option<ParamSet<f32>> = None;
    for part in parts {
        let (abs, g) = part?;
        loss += abs;
        match grads.as_mut() {
            None => grads = Some(g),
            Some(acc) => {
                for (a, b) in acc.values_mut().iter_mut().zip(g.values()) {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += *y);
                }
            }
        }
    }
    let loss = loss / total as f64;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            step,
            records: batch.record_ids(),
        });
    }
    opt.step(model.params_mut(), &grads.expect("non-empty batch"));
    Ok(loss)
}

/// Fresh optimiser for `model`, freezing the encoder when it is not trainable.
pub fn new_optimizer(model: &CrossRefModel<f32>, cfg: &TrainConfig) -> AdamW {
    let mut opt = AdamW::new(model.params(), cfg.learning_rate, cfg.weight_decay);
    if !model.encoder_trainable() {
        opt.freeze_prefix(model.params(), "encoder.");
    }
    opt
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    pub workers: usize,
    /// Continue from `out_dir/latest` when it exists.
    pub resume: bool,
    /// Stop (with a checkpoint) once this many steps have completed.
    pub stop_after: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub steps_completed: u64,
    pub final_loss: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct LogRow {
    step: u64,
    loss: f64,
    lr: f64,
    wall_ms: u64,
}

/// Keeps only log rows for steps before `next_step`.
fn truncate_log(path: &Path, next_step: u64) -> Result<Vec<LogRow>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut rd = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for row in rd.deserialize::<LogRow>() {
        let row = row?;
        if row.step < next_step {
            rows.push(row);
        }
    }
    Ok(rows)
}

fn format_row(r: &LogRow) -> String {
    format!("{},{},{},{}\n", r.step, r.loss, r.lr, r.wall_ms)
}

fn write_log(path: &Path, rows: &[LogRow]) -> Result<()> {
    let mut text = String::from("step,loss,lr,wall_ms\n");
    for r in rows {
        text.push_str(&format_row(r));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs the training loop, writing `loss_log.csv`, `latest/` at every
/// checkpoint interval and `final/` plus `latest/` at completion.
pub fn train(
    data: &TrainData,
    cfg: &TrainConfig,
    out_dir: impl AsRef<Path>,
    opts: &TrainOptions,
) -> Result<TrainSummary> {
    cfg.validate()?;
    let out = out_dir.as_ref();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let cfg_json = serde_json::to_value(cfg).expect("config serialises");
    let latest = out.join(LATEST);
    let log_path = out.join(LOSS_LOG);

    let (mut model, mut opt, start) = if opts.resume && latest.join("manifest.json").exists() {
        let ck = load_checkpoint(&latest)?;
        if ck.model.config() != &cfg.model || ck.rng.seed != cfg.seed {
            return Err(Error::Checkpoint(format!(
                "{} was written with a different model config or seed",
                latest.display()
            )));
        }
        let mut opt = new_optimizer(&ck.model, cfg);
        if let Some(state) = ck.optim {
            opt = opt.with_state(state);
        }
        log::info!("resuming from {} at step {}", latest.display(), ck.rng.next_step);
        (ck.model, opt, ck.rng.next_step)
    } else {
        let model = CrossRefModel::<f32>::new(cfg.model.clone(), cfg.seed)?;
        let opt = new_optimizer(&model, cfg);
        (model, opt, 0)
    };
    let mut rows = truncate_log(&log_path, start)?;
    write_log(&log_path, &rows)?;
    let mut log = fs::OpenOptions::new()
        .append(true)
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;

    let end = opts
        .stop_after
        .map_or(cfg.total_steps, |s| s.min(cfg.total_steps));
    let workers = opts.workers.max(1);
    let t0 = Instant::now();
    let mut last = None;
    let checkpoint = |model: &CrossRefModel<f32>, opt: &AdamW, next: u64, dir: &Path| {
        save_checkpoint(
            dir,
            model,
            Some(&opt.state),
            next,
            RngState {
                seed: cfg.seed,
                next_step: next,
            },
            Some(&cfg_json),
        )
    };
    for step in start..end {
        let batch = sample_batch(data, cfg.batch_size, cfg.n_ref, cfg.crop_size, cfg.seed, step)?;
        let loss = train_step(&mut model, &batch, &mut opt, step, workers)?;
        let row = LogRow {
            step,
            loss,
            lr: cfg.learning_rate,
            wall_ms: t0.elapsed().as_millis() as u64,
        };
        log.write_all(format_row(&row).as_bytes())
            .map_err(|e| Error::io(&log_path, e))?;
        rows.push(row);
        last = Some(loss);
        if step % 50 == 0 {
            log::info!("step {step} loss {loss:.5}");
        }
        let done = step + 1;
        if done % cfg.checkpoint_every == 0 && done < end {
            log.flush().map_err(|e| Error::io(&log_path, e))?;
            checkpoint(&model, &opt, done, &latest)?;
        }
    }
    log.flush().map_err(|e| Error::io(&log_path, e))?;
    let done = end.max(start);
    checkpoint(&model, &opt, done, &latest)?;
    let final_dir = if done >= cfg.total_steps {
        let f = out.join(FINAL);
        checkpoint(&model, &opt, done, &f)?;
        f
    } else {
        latest
    };
    Ok(TrainSummary {
        checkpoint: final_dir,
        steps_completed: done,
        final_loss: last,
    })
}

/// Reads a loss log; `strip_wall` drops the timing column so logs from two
/// runs can be compared byte for byte.
pub fn read_loss_log(path: impl AsRef<Path>, strip_wall: bool) -> Result<String> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if !strip_wall {
        return Ok(text);
    }
    Ok(text
        .lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n"))
}

/// Losses from a log, in step order.
pub fn loss_values(path: impl AsRef<Path>) -> Result<Vec<(u64, f64)>> {
    let mut rd = csv::Reader::from_path(path.as_ref())?;
    rd.deserialize::<LogRow>()
        .map(|r| r.map(|r| (r.step, r.loss)).map_err(Error::from))
        .collect()
}
