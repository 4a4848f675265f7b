#![allow(dead_code)]

use std::path::{Path, PathBuf};

use smis::harness::{DataConfig, OptimConfig, Precision, RunConfig, TrainConfig};
use smis::metrics::{ExtractorConfig, MetricsConfig};
use smis::networks::{ModelConfig, VariantKind};
use smis::objectives::LossWeights;
use smis::toydata;

pub const SIZE: usize = 16;

/// GroupDNet-shaped network for 16x16 scenes.
pub fn small_model(variant: VariantKind) -> ModelConfig {
    let mut m = ModelConfig::micro(variant, 8);
    m.image_size = SIZE;
    m.encoder_channels = vec![16; 3];
    m.decoder_channels = vec![16];
    m.decoder_groups = match variant {
        VariantKind::GroupDNet => vec![8, 4, 2, 1],
        VariantKind::GroupNet | VariantKind::MulNet | VariantKind::GroupDec => vec![8; 4],
        VariantKind::GroupEnc | VariantKind::VSpade => vec![1; 4],
    };
    if variant == VariantKind::GroupDec {
        m.decoder_groups = vec![8, 4, 2, 1];
    }
    m
}

pub fn small_metrics(seed: u64) -> MetricsConfig {
    MetricsConfig {
        n: 6,
        m: 4,
        seed,
        batch_size: 8,
        masks: 2,
        overall_pairs: 2,
        fid_samples: 16,
    }
}

pub fn small_extractor() -> ExtractorConfig {
    ExtractorConfig {
        channels: vec![8, 8],
        ..ExtractorConfig::default()
    }
}

/// Render `count` scenes under `dir/data`.
pub fn dataset(dir: &Path, count: usize, seed: u64) -> PathBuf {
    toydata::generate(count, seed, SIZE, &dir.join("data")).unwrap()
}

pub fn small_run(manifest: &Path, out: &Path, epochs: usize, precision: Precision) -> RunConfig {
    RunConfig {
        model: small_model(VariantKind::GroupDNet),
        loss: LossWeights::default(),
        optim: OptimConfig::default(),
        train: TrainConfig {
            epochs,
            decay_start: epochs - 1,
            batch_size: 16,
            seed: 5,
            precision,
            checkpoint_every: 1,
            sample_every: 0,
        },
        data: DataConfig {
            train_manifest: manifest.to_path_buf(),
            eval_manifest: None,
            limit: None,
        },
        extractor: small_extractor(),
        metrics: small_metrics(3),
        output_dir: out.to_path_buf(),
    }
}
