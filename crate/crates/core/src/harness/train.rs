use std::fs::OpenOptions;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use smis_tensor::optim::Adam;
use smis_tensor::{Float, Mode, ParamStore, Tensor};

use crate::error::{Result, SmisError};
use crate::harness::checkpoint::{self, CheckpointMeta, Loaded, Optimizers, FORMAT};
use crate::harness::config::{lr_factor, Precision, RunConfig};
use crate::harness::grid::{sample_grid, save_grid};
use crate::metrics::FeatureExtractor;
use crate::networks::{build_variant, Networks, StyleCode};
use crate::objectives::{discriminator_objective, generator_objective, Batch, LossReport};
use crate::toydata::{load, scene_seed, LabelMap, Sample};

const STEP_STREAM: u64 = 0x7374_6570;
const SHUFFLE_STREAM: u64 = 0x7368_7566;
const INIT_STREAM: u64 = 0x696e_6974;
const SAMPLE_STREAM: u64 = 0x6772_6964;

/// One line of the training log.
#[derive(Clone, Debug, Serialize)]
pub struct LogLine {
    pub epoch: usize,
    pub step: u64,
    pub gan_g: f64,
    pub gan_d: f64,
    pub fm: f64,
    pub perceptual: f64,
    pub kl: f64,
    pub total_g: f64,
    pub lr_g: f64,
    pub lr_d: f64,
    pub wall_time_s: f64,
}

/// Training state: networks, optimizers, data and counters.
pub struct Trainer<T: Float> {
    pub cfg: RunConfig,
    pub nets: Networks<T>,
    pub optim: Optimizers<T>,
    extractor: FeatureExtractor<T>,
    data: Vec<Sample>,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed steps.
    pub step: u64,
    sample_masks: Vec<LabelMap>,
    sample_codes: Tensor<f64>,
}

pub fn batch_from<T: Float>(samples: &[&Sample], nets: &Networks<T>) -> Result<Batch<T>> {
    let images: Vec<Tensor<T>> = samples
        .iter()
        .map(|s| {
            let img = s.image::<T>();
            let shape = img.shape().to_vec();
            img.reshape(&[1, shape[0], shape[1], shape[2]])
        })
        .collect::<std::result::Result<_, _>>()?;
    let masks: Vec<LabelMap> = samples.iter().map(|s| s.mask.clone()).collect();
    Ok(Batch {
        images: Tensor::stack(&images)?,
        onehot: nets.label_tensor(&masks)?,
    })
}

fn param_norms<T: Float>(store: &ParamStore<T>) -> Vec<(String, f64)> {
    let mut norms: Vec<(String, f64)> = store
        .params()
        .iter()
        .map(|p| {
            let v = p.var().value();
            (p.name().to_string(), v.data().iter().map(|x| x.to_f64c().powi(2)).sum::<f64>().sqrt())
        })
        .collect();
    norms.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Less));
    norms.truncate(8);
    norms
}

impl<T: Float> Trainer<T> {
    /// Fresh networks initialized from the training seed.
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        cfg.check_paths()?;
        let mut rng = ChaCha8Rng::seed_from_u64(scene_seed(cfg.train.seed, INIT_STREAM));
        let nets = build_variant::<T>(&cfg.model, &mut rng)?;
        Self::assemble(cfg, nets, 0, 0)
    }

    /// Continue from a checkpoint written by `train`.
    pub fn resume(cfg: RunConfig, ckpt: &Loaded) -> Result<Self> {
        cfg.validate()?;
        cfg.check_paths()?;
        if ckpt.meta.model != cfg.model {
            return Err(SmisError::config("checkpoint model differs from the run configuration"));
        }
        let nets = ckpt.networks::<T>()?;
        let mut t = Self::assemble(cfg, nets, ckpt.meta.epoch, ckpt.meta.step)?;
        ckpt.optimizers(&t.nets, &mut t.optim)?;
        Ok(t)
    }

    fn assemble(cfg: RunConfig, nets: Networks<T>, epoch: usize, step: u64) -> Result<Self> {
        let mut data = load(&cfg.data.train_manifest, cfg.model.classes)?;
        if let Some(limit) = cfg.data.limit {
            data.truncate(limit);
        }
        if data.is_empty() {
            return Err(SmisError::data(&cfg.data.train_manifest, "no training scenes"));
        }
        if let Some(s) = data.iter().find(|s| s.mask.height() != cfg.model.image_size) {
            return Err(SmisError::data(
                &cfg.data.train_manifest,
                format!("scene size {} but model expects {}", s.mask.height(), cfg.model.image_size),
            ));
        }
        let optim = Optimizers {
            gen: Adam::new(&nets.gen_store.params(), cfg.optim.adam(cfg.optim.lr_g)),
            disc: Adam::new(&nets.disc_store.params(), cfg.optim.adam(cfg.optim.lr_d)),
        };
        let extractor = FeatureExtractor::new(&cfg.extractor)?;
        let sample_masks: Vec<LabelMap> = data.iter().take(4).map(|s| s.mask.clone()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(scene_seed(cfg.train.seed, SAMPLE_STREAM));
        let sample_codes = StyleCode::<f64>::sample(
            sample_masks.len(),
            cfg.model.classes,
            cfg.model.z_dim,
            cfg.model.z_size,
            &mut rng,
        )
        .into_tensor();
        Ok(Trainer {
            cfg,
            nets,
            optim,
            extractor,
            data,
            epoch,
            step,
            sample_masks,
            sample_codes,
        })
    }

    pub fn steps_per_epoch(&self) -> usize {
        (self.data.len() / self.cfg.train.batch_size).max(1)
    }

    fn meta(&self) -> Result<CheckpointMeta> {
        Ok(CheckpointMeta {
            format: FORMAT.to_string(),
            model: self.cfg.model.clone(),
            precision: self.cfg.train.precision,
            epoch: self.epoch,
            step: self.step,
            param_counts: self.nets.param_counts(),
            config_hash: Some(self.cfg.hash()?),
            run: Some(self.cfg.clone()),
        })
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, &self.nets, Some(&self.optim), &self.meta()?)
    }

    /// Scene order of `epoch`.
    fn order(&self, epoch: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.data.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(scene_seed(self.cfg.train.seed ^ SHUFFLE_STREAM, epoch as u64));
        idx.shuffle(&mut rng);
        idx
    }

    fn set_lr(&mut self, epoch: usize) {
        let f = lr_factor(epoch, self.cfg.train.decay_start, self.cfg.train.epochs);
        self.optim.gen.set_lr(self.cfg.optim.lr_g * f);
        self.optim.disc.set_lr(self.cfg.optim.lr_d * f);
    }

    fn non_finite(&self, report: &LossReport, phase: &str) -> SmisError {
        let detail = serde_json::json!({
            "phase": phase,
            "report": report,
            "generator_norms": param_norms(&self.nets.gen_store),
            "discriminator_norms": param_norms(&self.nets.disc_store),
        });
        let dump = self.cfg.output_dir.join("nonfinite.json");
        let _ = std::fs::write(&dump, serde_json::to_string_pretty(&detail).unwrap_or_default());
        SmisError::NonFinite {
            step: self.step,
            detail: detail.to_string(),
        }
    }

    /// One discriminator update followed by one generator update.
    pub fn train_step(&mut self, batch: &Batch<T>) -> Result<(LossReport, LossReport)> {
        let mut rng = ChaCha8Rng::seed_from_u64(scene_seed(self.cfg.train.seed ^ STEP_STREAM, self.step));
        let nets = &self.nets;

        nets.gen_store.zero_grad();
        nets.disc_store.zero_grad();
        let (loss_d, rep_d) = discriminator_objective(batch, nets, Mode::TRAIN, &mut rng)?;
        if !rep_d.is_finite() {
            return Err(self.non_finite(&rep_d, "discriminator"));
        }
        loss_d.backward()?;
        drop(loss_d);
        self.optim.disc.step(&nets.disc_store.params())?;

        nets.disc_store.zero_grad();
        nets.disc_store.set_requires_grad(false);
        let result = generator_objective(batch, nets, &self.cfg.loss, &self.extractor, Mode::TRAIN, &mut rng)
            .and_then(|(loss_g, rep_g)| {
                if rep_g.is_finite() {
                    loss_g.backward()?;
                }
                Ok(rep_g)
            });
        nets.disc_store.set_requires_grad(true);
        let rep_g = result?;
        if !rep_g.is_finite() {
            return Err(self.non_finite(&rep_g, "generator"));
        }
        self.optim.gen.step(&nets.gen_store.params())?;
        nets.gen_store.zero_grad();
        self.step += 1;
        Ok((rep_d, rep_g))
    }

    /// Run one epoch, appending a line per step to `log`.
    pub fn train_epoch(&mut self, log: &mut dyn Write, started: Instant) -> Result<()> {
        let epoch = self.epoch;
        self.set_lr(epoch);
        let order = self.order(epoch);
        let bs = self.cfg.train.batch_size.min(self.data.len());
        for chunk in order.chunks(bs).take(self.steps_per_epoch()) {
            let samples: Vec<&Sample> = chunk.iter().map(|&i| &self.data[i]).collect();
            let batch = batch_from(&samples, &self.nets)?;
            let (d, g) = self.train_step(&batch)?;
            let line = LogLine {
                epoch,
                step: self.step,
                gan_g: g.gan_g,
                gan_d: d.gan_d,
                fm: g.fm,
                perceptual: g.perceptual,
                kl: g.kl,
                total_g: g.total,
                lr_g: self.optim.gen.config.lr,
                lr_d: self.optim.disc.config.lr,
                wall_time_s: started.elapsed().as_secs_f64(),
            };
            writeln!(log, "{}", serde_json::to_string(&line)?).map_err(|e| SmisError::io("train log", e))?;
            if self.cfg.train.sample_every > 0 && self.step % self.cfg.train.sample_every as u64 == 0 {
                self.write_samples()?;
            }
        }
        log.flush().map_err(|e| SmisError::io("train log", e))?;
        self.epoch += 1;
        Ok(())
    }

    fn write_samples(&self) -> Result<()> {
        use crate::metrics::SynthesisModel;
        let images = self.nets.generate(&self.sample_codes, &self.sample_masks)?;
        let dir = self.cfg.output_dir.join("samples");
        std::fs::create_dir_all(&dir).map_err(|e| SmisError::io(&dir, e))?;
        let grid = sample_grid(&images, &self.sample_masks)?;
        save_grid(&grid, &dir.join(format!("step_{:07}.png", self.step)))
    }
}

/// Paths written by a training run.
#[derive(Clone, Debug, Serialize)]
pub struct TrainOutputs {
    pub config: PathBuf,
    pub log: PathBuf,
    pub init_checkpoint: Option<PathBuf>,
    pub final_checkpoint: PathBuf,
    pub epochs: usize,
    pub steps: u64,
}

fn run<T: Float>(mut trainer: Trainer<T>, stop_after: Option<usize>) -> Result<TrainOutputs> {
    let out = trainer.cfg.output_dir.clone();
    std::fs::create_dir_all(&out).map_err(|e| SmisError::io(&out, e))?;
    let config_path = out.join("config.toml");
    std::fs::write(&config_path, trainer.cfg.to_toml()?).map_err(|e| SmisError::io(&config_path, e))?;
    let init_checkpoint = if trainer.step == 0 {
        let p = out.join("init.ckpt");
        trainer.save_checkpoint(&p)?;
        Some(p)
    } else {
        None
    };
    let log_path = out.join("train_log.jsonl");
    let file = OpenOptions::new()
        .create(true)
        .append(trainer.step > 0)
        .write(true)
        .truncate(trainer.step == 0)
        .open(&log_path)
        .map_err(|e| SmisError::io(&log_path, e))?;
    let mut log = BufWriter::new(file);
    let started = Instant::now();
    let total = trainer.cfg.train.epochs;
    let last = stop_after.map(|n| (trainer.epoch + n).min(total)).unwrap_or(total);
    let every = trainer.cfg.train.checkpoint_every;
    while trainer.epoch < last {
        trainer.train_epoch(&mut log, started)?;
        if every > 0 && trainer.epoch % every == 0 {
            trainer.save_checkpoint(&out.join(format!("epoch_{:04}.ckpt", trainer.epoch)))?;
        }
    }
    let final_checkpoint = out.join("final.ckpt");
    trainer.save_checkpoint(&final_checkpoint)?;
    Ok(TrainOutputs {
        config: config_path,
        log: log_path,
        init_checkpoint,
        final_checkpoint,
        epochs: trainer.epoch,
        steps: trainer.step,
    })
}

/// Train from scratch or resume. `stop_after` limits the number of epochs run now.
pub fn train(cfg: RunConfig, resume: Option<&Path>, stop_after: Option<usize>) -> Result<TrainOutputs> {
    let loaded = resume.map(Loaded::read).transpose()?;
    match cfg.train.precision {
        Precision::F32 => run(
            match &loaded {
                Some(l) => Trainer::<f32>::resume(cfg, l)?,
                None => Trainer::<f32>::new(cfg)?,
            },
            stop_after,
        ),
        Precision::F64 => run(
            match &loaded {
                Some(l) => Trainer::<f64>::resume(cfg, l)?,
                None => Trainer::<f64>::new(cfg)?,
            },
            stop_after,
        ),
    }
}

/// Read a JSON-lines training log.
pub fn read_log(path: &Path) -> Result<Vec<serde_json::Value>> {
    let text = std::fs::read_to_string(path).map_err(|e| SmisError::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(SmisError::from))
        .collect()
}

