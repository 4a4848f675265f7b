//! Checkpoint evaluation: FID, per-class diversity and overall diversity.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use smis_tensor::Tensor;

use crate::error::{Result, SmisError};
use crate::harness::apps::batch;
use crate::harness::checkpoint::Loaded;
use crate::harness::config::{Precision, RunConfig};
use crate::metrics::{
    diversity_report, fid, normal_tensor, overall_diversity, ClassDiversity, ExtractorConfig, FeatureExtractor,
    MetricsConfig, SynthesisModel,
};
use crate::toydata::{load, scene_seed, LabelMap, Sample};

const FID_STREAM: u64 = 0x6669_6421;
const OVERALL_STREAM: u64 = 0x616c_6c21;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub checkpoint: Option<PathBuf>,
    pub variant: String,
    pub config_hash: Option<String>,
    pub seed: u64,
    pub epoch: usize,
    pub step: u64,
    pub metrics: MetricsConfig,
    pub extractor: ExtractorConfig,
    pub eval_scenes: usize,
    pub fid: f64,
    pub mcsd: f64,
    pub mocd: f64,
    pub overall_lpips: f64,
    pub per_class: Vec<ClassDiversity>,
}

/// Scores of one model on a set of evaluation scenes.
#[derive(Clone, Debug, PartialEq)]
pub struct Scores {
    pub fid: f64,
    pub mcsd: f64,
    pub mocd: f64,
    pub overall_lpips: f64,
    pub per_class: Vec<ClassDiversity>,
}

/// Load the networks of a checkpoint in their stored precision.
pub fn load_model(ckpt: &Loaded) -> Result<Box<dyn SynthesisModel>> {
    Ok(match ckpt.meta.precision {
        Precision::F32 => Box::new(ckpt.networks::<f32>()?),
        Precision::F64 => Box::new(ckpt.networks::<f64>()?),
    })
}

fn stack_images(samples: &[Sample]) -> Result<Tensor<f64>> {
    let imgs: Vec<Tensor<f64>> = samples.iter().map(|s| s.image::<f64>()).collect();
    batch(&imgs)
}

/// FID between the first `fid_samples` real scenes and generations for their
/// masks with seeded codes.
pub fn fid_score(
    model: &dyn SynthesisModel,
    samples: &[Sample],
    cfg: &MetricsConfig,
    ex: &FeatureExtractor<f64>,
) -> Result<f64> {
    let used = &samples[..cfg.fid_samples.min(samples.len())];
    let (zd, zs) = model.latent_shape();
    let shape = [model.classes() * zd, zs, zs];
    let mut real = Vec::with_capacity(used.len());
    let mut fake = Vec::with_capacity(used.len());
    for (b, chunk) in used.chunks(cfg.batch_size.max(1)).enumerate() {
        real.extend(ex.pooled(&stack_images(chunk)?)?);
        let codes: Vec<Tensor<f64>> = (0..chunk.len())
            .map(|i| normal_tensor(&shape, scene_seed(cfg.seed ^ FID_STREAM, (b * cfg.batch_size + i) as u64)))
            .collect();
        let masks: Vec<LabelMap> = chunk.iter().map(|s| s.mask.clone()).collect();
        fake.extend(ex.pooled(&model.generate(&batch(&codes)?, &masks)?)?);
    }
    fid(&real, &fake)
}

pub fn score(
    model: &dyn SynthesisModel,
    samples: &[Sample],
    cfg: &MetricsConfig,
    ex_cfg: &ExtractorConfig,
) -> Result<Scores> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(SmisError::invalid("no evaluation scenes"));
    }
    let ex = FeatureExtractor::<f64>::new(ex_cfg)?;
    let fid = fid_score(model, samples, cfg, &ex)?;
    let masks: Vec<LabelMap> = samples.iter().take(cfg.masks).map(|s| s.mask.clone()).collect();
    let div = diversity_report(model, &masks, cfg, &ex)?;
    let overall = overall_diversity(model, &masks, cfg.overall_pairs, &ex, cfg.batch_size, cfg.seed ^ OVERALL_STREAM)?;
    Ok(Scores {
        fid,
        mcsd: div.mcsd,
        mocd: div.mocd,
        overall_lpips: overall,
        per_class: div.per_class,
    })
}

/// Evaluate a checkpoint on the scenes listed in `manifest`. When `expected`
/// is given its model must match the checkpoint's.
pub fn evaluate(
    checkpoint: &Path,
    manifest: &Path,
    metrics: &MetricsConfig,
    extractor: &ExtractorConfig,
    expected: Option<&RunConfig>,
) -> Result<MetricsReport> {
    let ckpt = Loaded::read(checkpoint)?;
    let config_hash = match expected {
        Some(cfg) => {
            if cfg.model != ckpt.meta.model {
                return Err(SmisError::config(format!(
                    "checkpoint holds variant {:?} but the config describes {:?}",
                    ckpt.meta.model.variant, cfg.model.variant
                )));
            }
            Some(cfg.hash()?)
        }
        None => ckpt.meta.config_hash.clone(),
    };
    let model = load_model(&ckpt)?;
    let samples = load(manifest, ckpt.meta.model.classes)?;
    let s = score(model.as_ref(), &samples, metrics, extractor)?;
    Ok(MetricsReport {
        checkpoint: Some(checkpoint.to_path_buf()),
        variant: ckpt.meta.model.variant.name().to_string(),
        config_hash,
        seed: metrics.seed,
        epoch: ckpt.meta.epoch,
        step: ckpt.meta.step,
        metrics: metrics.clone(),
        extractor: extractor.clone(),
        eval_scenes: samples.len(),
        fid: s.fid,
        mcsd: s.mcsd,
        mocd: s.mocd,
        overall_lpips: s.overall_lpips,
        per_class: s.per_class,
    })
}
