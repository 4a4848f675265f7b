use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use smis_tensor::Tensor;

use crate::error::{Result, SmisError};
use crate::metrics::extractor::{FeatureExtractor, Features};
use crate::metrics::lpips::{lpips_distance, masked_lpips, Region};
use crate::metrics::model::SynthesisModel;
use crate::toydata::{scene_seed, LabelMap};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    /// Samples per class.
    #[serde(default = "default_n")]
    pub n: usize,
    /// Pairs per class, drawn from the `n` samples without replacement.
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Masks used for the per-class diversity protocol.
    #[serde(default = "default_masks")]
    pub masks: usize,
    /// Full-resample pairs per mask for the overall diversity.
    #[serde(default = "default_pairs")]
    pub overall_pairs: usize,
    /// Real and generated images fed to FID.
    #[serde(default = "default_fid")]
    pub fid_samples: usize,
}

fn default_n() -> usize {
    100
}
fn default_m() -> usize {
    19
}
fn default_batch() -> usize {
    16
}
fn default_masks() -> usize {
    8
}
fn default_pairs() -> usize {
    8
}
fn default_fid() -> usize {
    500
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            n: default_n(),
            m: default_m(),
            seed: 0,
            batch_size: default_batch(),
            masks: default_masks(),
            overall_pairs: default_pairs(),
            fid_samples: default_fid(),
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.m == 0 || self.m > self.n * (self.n - 1) / 2 || self.batch_size == 0 {
            return Err(SmisError::config(format!(
                "metrics needs n >= 2, batch_size > 0 and 0 < m <= n(n-1)/2, got n={} m={}",
                self.n, self.m
            )));
        }
        Ok(())
    }
}

/// Class-specific (`L_c`) and other-classes (`L_≠c`) diversity of one class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassDiversity {
    pub class: usize,
    /// Masks in which the class was present.
    pub masks: usize,
    pub class_specific: f64,
    /// `None` when the class covered every pixel of every mask.
    pub other_classes: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub mcsd: f64,
    pub mocd: f64,
    pub per_class: Vec<ClassDiversity>,
}

/// Standard normal tensor drawn from `seed`.
pub fn normal_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| StandardNormal.sample(&mut rng))
}

/// Decode `codes` in batches and embed the results.
fn generate_features(
    model: &dyn SynthesisModel,
    ex: &FeatureExtractor<f64>,
    codes: &[Tensor<f64>],
    mask: &LabelMap,
    batch: usize,
) -> Result<Vec<Features>> {
    let mut out = Vec::with_capacity(codes.len());
    for chunk in codes.chunks(batch) {
        let z = Tensor::stack(chunk)?;
        let masks = vec![mask.clone(); chunk.len()];
        out.extend(ex.embed(&model.generate(&z, &masks)?)?);
    }
    Ok(out)
}

/// The `k`-th unordered pair `(i, j)` with `i < j` of `0..n`.
fn pair_at(mut k: usize, n: usize) -> (usize, usize) {
    let mut i = 0;
    while k >= n - 1 - i {
        k -= n - 1 - i;
        i += 1;
    }
    (i, i + 1 + k)
}

/// Per-class diversity on one mask: for every present class `c` the other
/// blocks stay at a fixed code while `Z_c` is resampled. Only the samples
/// that take part in one of the `m` pairs are generated.
pub fn mcsd_mocd(
    model: &dyn SynthesisModel,
    mask: &LabelMap,
    cfg: &MetricsConfig,
    ex: &FeatureExtractor<f64>,
    seed: u64,
) -> Result<Vec<ClassDiversity>> {
    cfg.validate()?;
    let present = mask.present_classes();
    if present.is_empty() {
        return Err(SmisError::invalid("mask has no classes"));
    }
    let classes = model.classes();
    let (zd, zs) = model.latent_shape();
    let base = normal_tensor(&[classes * zd, zs, zs], seed);
    let block_len = zd * zs * zs;
    let mut out = Vec::new();
    for &c in &present {
        let class_seed = scene_seed(seed, 1 + c as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(class_seed);
        let total = cfg.n * (cfg.n - 1) / 2;
        let pairs: Vec<(usize, usize)> = sample(&mut rng, total, cfg.m).iter().map(|k| pair_at(k, cfg.n)).collect();
        let mut needed: Vec<usize> = pairs.iter().flat_map(|&(i, j)| [i, j]).collect();
        needed.sort_unstable();
        needed.dedup();
        let codes: Vec<Tensor<f64>> = needed
            .iter()
            .map(|&i| {
                let mut z = base.clone();
                let fresh = normal_tensor(&[block_len], scene_seed(class_seed, i as u64));
                z.data_mut()[c * block_len..(c + 1) * block_len].copy_from_slice(fresh.data());
                z.reshape(&[1, classes * zd, zs, zs])
            })
            .collect::<std::result::Result<_, _>>()?;
        let feats = generate_features(model, ex, &codes, mask, cfg.batch_size)?;
        let at = |i: usize| &feats[needed.binary_search(&i).unwrap_or(0)];
        let region = Region::new(mask.height(), mask.width(), mask.region(c));
        let rest = region.complement();
        let mean_over = |r: &Region| -> Option<f64> {
            let vals: Vec<f64> = pairs.iter().filter_map(|&(i, j)| masked_lpips(at(i), at(j), r)).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        };
        out.push(ClassDiversity {
            class: c,
            masks: 1,
            class_specific: mean_over(&region).unwrap_or(0.0),
            other_classes: mean_over(&rest),
        });
    }
    Ok(out)
}

/// Per-class diversity averaged over masks, then over classes.
pub fn diversity_report(
    model: &dyn SynthesisModel,
    masks: &[LabelMap],
    cfg: &MetricsConfig,
    ex: &FeatureExtractor<f64>,
) -> Result<DiversityReport> {
    let classes = model.classes();
    let mut cs = vec![(0.0, 0usize); classes];
    let mut oc = vec![(0.0, 0usize); classes];
    for (k, mask) in masks.iter().enumerate() {
        for d in mcsd_mocd(model, mask, cfg, ex, scene_seed(cfg.seed, k as u64))? {
            cs[d.class].0 += d.class_specific;
            cs[d.class].1 += 1;
            if let Some(o) = d.other_classes {
                oc[d.class].0 += o;
                oc[d.class].1 += 1;
            }
        }
    }
    let per_class: Vec<ClassDiversity> = (0..classes)
        .filter(|&c| cs[c].1 > 0)
        .map(|c| ClassDiversity {
            class: c,
            masks: cs[c].1,
            class_specific: cs[c].0 / cs[c].1 as f64,
            other_classes: (oc[c].1 > 0).then(|| oc[c].0 / oc[c].1 as f64),
        })
        .collect();
    if per_class.is_empty() {
        return Err(SmisError::invalid("no class present in any evaluation mask"));
    }
    let mcsd = per_class.iter().map(|d| d.class_specific).sum::<f64>() / per_class.len() as f64;
    let others: Vec<f64> = per_class.iter().filter_map(|d| d.other_classes).collect();
    let mocd = if others.is_empty() { 0.0 } else { others.iter().sum::<f64>() / others.len() as f64 };
    Ok(DiversityReport { mcsd, mocd, per_class })
}

/// Mean LPIPS between pairs of images whose whole code is resampled.
pub fn overall_diversity(
    model: &dyn SynthesisModel,
    masks: &[LabelMap],
    pairs: usize,
    ex: &FeatureExtractor<f64>,
    batch: usize,
    seed: u64,
) -> Result<f64> {
    let (zd, zs) = model.latent_shape();
    let shape = [1, model.classes() * zd, zs, zs];
    let mut total = 0.0;
    let mut count = 0;
    for (k, mask) in masks.iter().enumerate() {
        let mask_seed = scene_seed(seed, k as u64);
        let codes: Vec<Tensor<f64>> = (0..2 * pairs).map(|i| normal_tensor(&shape, scene_seed(mask_seed, i as u64))).collect();
        let feats = generate_features(model, ex, &codes, mask, batch.max(1))?;
        for p in 0..pairs {
            total += lpips_distance(&feats[2 * p], &feats[2 * p + 1]);
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}
