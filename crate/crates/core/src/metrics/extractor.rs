//! Frozen random convolutional feature pyramid.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use smis_tensor::init::glorot_uniform;
use smis_tensor::ops::conv::{conv2d, ConvSpec};
use smis_tensor::ops::{avg_pool, spatial_mean};
use smis_tensor::{Float, NoGradGuard, Tensor, Var};

use crate::error::{Result, SmisError};

const SLOPE: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractorConfig {
    pub seed: u64,
    /// Output width of each level.
    #[serde(default = "default_channels")]
    pub channels: Vec<usize>,
    #[serde(default = "default_kernel")]
    pub kernel: usize,
    /// Halve the resolution between levels.
    #[serde(default = "yes")]
    pub pool: bool,
    /// Unit-normalize feature channels before distances.
    #[serde(default = "yes")]
    pub normalize: bool,
}

fn default_channels() -> Vec<usize> {
    vec![16, 32, 64, 64]
}
fn default_kernel() -> usize {
    3
}
fn yes() -> bool {
    true
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        ExtractorConfig {
            seed: 1234,
            channels: default_channels(),
            kernel: default_kernel(),
            pool: true,
            normalize: true,
        }
    }
}

impl ExtractorConfig {
    /// Every feature depends on a single input pixel.
    pub fn pointwise(seed: u64) -> Self {
        ExtractorConfig {
            seed,
            channels: default_channels(),
            kernel: 1,
            pool: false,
            normalize: true,
        }
    }
}

/// A fixed embedding of `[N, 3, H, W]` images into a list of feature maps.
///
/// Weights are constants drawn from the seed, so the same configuration
/// gives the same extractor in every precision.
pub struct FeatureExtractor<T: Float> {
    config: ExtractorConfig,
    weights: Vec<Var<T>>,
    biases: Vec<Var<T>>,
}

impl<T: Float> FeatureExtractor<T> {
    pub fn new(config: &ExtractorConfig) -> Result<Self> {
        if config.channels.is_empty() || config.kernel % 2 == 0 {
            return Err(SmisError::config("extractor needs at least one level and an odd kernel"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut din = 3;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for &dout in &config.channels {
            let w: Tensor<f64> = glorot_uniform(&[dout, din, config.kernel, config.kernel], 1, &mut rng);
            let b = Tensor::from_fn(&[dout], |_| rand::Rng::random_range(&mut rng, -0.1..0.1));
            weights.push(Var::constant(w.cast()));
            biases.push(Var::constant(b.cast()));
            din = dout;
        }
        Ok(FeatureExtractor {
            config: config.clone(),
            weights,
            biases,
        })
    }

    pub fn config(&self) -> &ExtractorConfig {
        &self.config
    }

    pub fn levels(&self) -> usize {
        self.weights.len()
    }

    /// Raw (unnormalized) features; differentiable with respect to `x`.
    pub fn forward(&self, x: &Var<T>) -> Result<Vec<Var<T>>> {
        let spec = ConvSpec::new(1, self.config.kernel / 2, 1);
        let mut h = x.clone();
        let mut out = Vec::with_capacity(self.levels());
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            if i > 0 && self.config.pool {
                let (_, _, hh, ww) = h.value().dims4()?;
                if hh >= 2 && ww >= 2 {
                    h = avg_pool(&h, 2)?;
                }
            }
            h = conv2d(&h, w, Some(b), spec)?.leaky_relu(SLOPE);
            out.push(h.clone());
        }
        Ok(out)
    }

    /// Per-image feature maps in f64, channel-normalized when configured.
    pub fn embed(&self, images: &Tensor<T>) -> Result<Vec<Features>> {
        let _guard = NoGradGuard::new();
        let feats = self.forward(&Var::constant(images.clone()))?;
        let n = images.shape()[0];
        let mut out: Vec<Features> = (0..n).map(|_| Features { layers: Vec::new() }).collect();
        for f in &feats {
            let t = f.value();
            let (_, c, h, w) = t.dims4()?;
            for (i, item) in out.iter_mut().enumerate() {
                let mut data: Vec<f64> = t.data()[i * c * h * w..(i + 1) * c * h * w].iter().map(|v| v.to_f64c()).collect();
                if self.config.normalize {
                    unit_normalize(&mut data, c, h * w);
                }
                item.layers.push(FeatureMap { channels: c, height: h, width: w, data });
            }
        }
        Ok(out)
    }

    /// Concatenated spatial means of every level, one vector per image.
    pub fn pooled(&self, images: &Tensor<T>) -> Result<Vec<Vec<f64>>> {
        let _guard = NoGradGuard::new();
        let feats = self.forward(&Var::constant(images.clone()))?;
        let n = images.shape()[0];
        let mut out = vec![Vec::new(); n];
        for f in &feats {
            let m = spatial_mean(f)?;
            let t = m.value();
            let c = t.shape()[1];
            for (i, row) in out.iter_mut().enumerate() {
                row.extend(t.data()[i * c..(i + 1) * c].iter().map(|v| v.to_f64c()));
            }
        }
        Ok(out)
    }
}

/// Divide each pixel's channel vector by its L2 norm.
fn unit_normalize(data: &mut [f64], channels: usize, pixels: usize) {
    for p in 0..pixels {
        let norm = (0..channels).map(|c| data[c * pixels + p].powi(2)).sum::<f64>().sqrt() + 1e-10;
        for c in 0..channels {
            data[c * pixels + p] /= norm;
        }
    }
}

#[derive(Clone, Debug)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// `[channels, height, width]`.
    pub data: Vec<f64>,
}

impl FeatureMap {
    /// Per-pixel squared distance summed over channels.
    pub fn sq_distance(&self, other: &FeatureMap) -> Vec<f64> {
        let px = self.height * self.width;
        let mut out = vec![0.0; px];
        for c in 0..self.channels {
            let (a, b) = (&self.data[c * px..(c + 1) * px], &other.data[c * px..(c + 1) * px]);
            for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
                *o += (x - y).powi(2);
            }
        }
        out
    }
}

/// Embedded image: one map per extractor level.
#[derive(Clone, Debug)]
pub struct Features {
    pub layers: Vec<FeatureMap>,
}
